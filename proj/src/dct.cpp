#include "smr/dct.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "smr/errors.hpp"

namespace smr {
namespace {

constexpr double kPi = 3.14159265358979323846;

/// Orthonormal DCT-II matrix: C(k,j) = a_k cos(pi (2j+1) k / 2n),
/// a_0 = sqrt(1/n), a_k = sqrt(2/n). Its transpose is its inverse.
Eigen::MatrixXd dct_matrix(int n) {
    Eigen::MatrixXd c(n, n);
    double s0 = std::sqrt(1.0 / n), s = std::sqrt(2.0 / n);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            c(k, j) = (k == 0 ? s0 : s) * std::cos(kPi * (2.0 * j + 1.0) * k / (2.0 * n));
    return c;
}

/// One GEMM per axis: x-lines are contiguous columns, y-lines live in per-z
/// slabs, z-lines span the (x*y, z) view. Ping-pongs through one temp buffer.
void transform3(std::vector<double>& data, Dims3 d, bool inverse) {
    if (d.x <= 0 || d.y <= 0 || d.z <= 0) throw ConfigError("dct3: non-positive dims");
    if (std::int64_t(data.size()) != d.product())
        throw DataError("dct3: data length does not match dims");

    using Mat = Eigen::MatrixXd;
    Mat cx = dct_matrix(d.x), cy = dct_matrix(d.y), cz = dct_matrix(d.z);
    std::vector<double> buf(data.size());
    std::int64_t slab = std::int64_t(d.x) * d.y;

    {
        Eigen::Map<Mat> src(data.data(), d.x, std::int64_t(d.y) * d.z);
        Eigen::Map<Mat> dst(buf.data(), d.x, std::int64_t(d.y) * d.z);
        if (inverse)
            dst.noalias() = cx.transpose() * src;
        else
            dst.noalias() = cx * src;
    }
    for (int z = 0; z < d.z; ++z) {
        Eigen::Map<Mat> src(buf.data() + z * slab, d.x, d.y);
        Eigen::Map<Mat> dst(data.data() + z * slab, d.x, d.y);
        if (inverse)
            dst.noalias() = src * cy;
        else
            dst.noalias() = src * cy.transpose();
    }
    {
        Eigen::Map<Mat> src(data.data(), slab, d.z);
        Eigen::Map<Mat> dst(buf.data(), slab, d.z);
        if (inverse)
            dst.noalias() = src * cz;
        else
            dst.noalias() = src * cz.transpose();
    }
    data.swap(buf);
}

ComplexVolume transform_complex(const ComplexVolume& v, bool inverse) {
    std::vector<double> re(v.data.size()), im(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        re[i] = v.data[i].real();
        im[i] = v.data[i].imag();
    }
    transform3(re, v.dims, inverse);
    transform3(im, v.dims, inverse);
    ComplexVolume out = ComplexVolume::zeros(v.dims);
    out.voxel_spacing = v.voxel_spacing;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = {re[i], im[i]};
    return out;
}

} // namespace

void dct3(std::vector<double>& data, Dims3 dims) { transform3(data, dims, false); }
void idct3(std::vector<double>& data, Dims3 dims) { transform3(data, dims, true); }

ComplexVolume dct3(const ComplexVolume& v) { return transform_complex(v, false); }
ComplexVolume idct3(const ComplexVolume& v) { return transform_complex(v, true); }

} // namespace smr
