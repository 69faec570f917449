#include "smr/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "smr/errors.hpp"

namespace smr {

namespace {

void check_positive_dims(Dims3 d, const char* what) {
    if (d.x <= 0 || d.y <= 0 || d.z <= 0)
        throw DataError(std::string(what) + ": dims must be positive, got " + std::to_string(d.x) +
                        "x" + std::to_string(d.y) + "x" + std::to_string(d.z));
}

} // namespace

ComplexVolume::ComplexVolume(Dims3 d, std::vector<cplx> values) : dims(d), data(std::move(values)) {
    validate();
}

ComplexVolume ComplexVolume::zeros(Dims3 d) {
    check_positive_dims(d, "ComplexVolume");
    ComplexVolume v;
    v.dims = d;
    v.data.assign(std::size_t(d.product()), cplx(0.0, 0.0));
    return v;
}

double ComplexVolume::max_abs() const {
    double m = 0.0;
    for (const cplx& c : data) m = std::max(m, std::abs(c));
    return m;
}

void ComplexVolume::validate() const {
    check_positive_dims(dims, "ComplexVolume");
    if (std::int64_t(data.size()) != dims.product())
        throw DataError("ComplexVolume: data length " + std::to_string(data.size()) +
                        " does not match dims product " + std::to_string(dims.product()));
    for (const cplx& c : data)
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
            throw DataError("ComplexVolume: non-finite value");
}

void SystemMatrix::validate() const {
    const std::size_t k = components.size();
    if (frequencies.size() != k || snr.size() != k)
        throw DataError("SystemMatrix: components/frequencies/snr lengths differ (" +
                        std::to_string(k) + "/" + std::to_string(frequencies.size()) + "/" +
                        std::to_string(snr.size()) + ")");
    for (const auto& c : components) {
        c.validate();
        if (!(c.dims == dims()))
            throw DataError("SystemMatrix: components do not share one grid");
    }
    for (double s : snr)
        if (std::isnan(s) || s < 0.0) throw DataError("SystemMatrix: snr must be >= 0");
}

void Measurement::validate() const {
    if (u_hat.size() != frequencies.size())
        throw DataError("Measurement: u_hat and frequencies lengths differ");
    for (const cplx& c : u_hat)
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
            throw DataError("Measurement: non-finite value");
}

ConcentrationImage::ConcentrationImage(Dims3 d, std::vector<double> vals)
    : dims(d), values(std::move(vals)) {
    validate();
}

ConcentrationImage ConcentrationImage::zeros(Dims3 d) {
    check_positive_dims(d, "ConcentrationImage");
    ConcentrationImage img;
    img.dims = d;
    img.values.assign(std::size_t(d.product()), 0.0);
    return img;
}

void ConcentrationImage::validate() const {
    check_positive_dims(dims, "ConcentrationImage");
    if (std::int64_t(values.size()) != dims.product())
        throw DataError("ConcentrationImage: values length does not match dims");
    for (double v : values)
        if (!std::isfinite(v)) throw DataError("ConcentrationImage: non-finite value");
}

ComplexVolume zero_pad(const ComplexVolume& v, Idx3 before, Idx3 after) {
    if (before.x < 0 || before.y < 0 || before.z < 0 || after.x < 0 || after.y < 0 || after.z < 0)
        throw DataError("zero_pad: pad widths must be non-negative");
    Dims3 out_dims{v.dims.x + before.x + after.x, v.dims.y + before.y + after.y,
                   v.dims.z + before.z + after.z};
    ComplexVolume out = ComplexVolume::zeros(out_dims);
    out.voxel_spacing = v.voxel_spacing;
    for (int z = 0; z < v.dims.z; ++z)
        for (int y = 0; y < v.dims.y; ++y) {
            const cplx* src = &v.data[std::size_t(v.index(0, y, z))];
            cplx* dst = &out.data[std::size_t(out.index(before.x, y + before.y, z + before.z))];
            std::copy(src, src + v.dims.x, dst);
        }
    return out;
}

ComplexVolume crop(const ComplexVolume& v, Idx3 offset, Dims3 dims) {
    if (offset.x < 0 || offset.y < 0 || offset.z < 0)
        throw DataError("crop: offset must be non-negative");
    if (offset.x + dims.x > v.dims.x || offset.y + dims.y > v.dims.y ||
        offset.z + dims.z > v.dims.z)
        throw DataError("crop: requested block leaves the input volume");
    ComplexVolume out = ComplexVolume::zeros(dims);
    out.voxel_spacing = v.voxel_spacing;
    for (int z = 0; z < dims.z; ++z)
        for (int y = 0; y < dims.y; ++y) {
            const cplx* src = &v.data[std::size_t(v.index(offset.x, y + offset.y, z + offset.z))];
            std::copy(src, src + dims.x, &out.data[std::size_t(out.index(0, y, z))]);
        }
    return out;
}

SystemMatrix snr_filter(const SystemMatrix& sm, double threshold) {
    if (threshold < 0.0) throw ConfigError("snr_filter: threshold must be >= 0");
    SystemMatrix out;
    out.meta = sm.meta;
    for (std::size_t k = 0; k < sm.components.size(); ++k) {
        if (sm.snr[k] >= threshold) {
            out.components.push_back(sm.components[k]);
            out.frequencies.push_back(sm.frequencies[k]);
            out.snr.push_back(sm.snr[k]);
        }
    }
    out.meta["snr_threshold"] = std::to_string(threshold);
    return out;
}

SystemMatrix keep_top_snr(const SystemMatrix& sm, std::size_t max_k) {
    if (sm.components.size() <= max_k) return sm;
    std::vector<std::size_t> order(sm.components.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sm.snr[a] > sm.snr[b]; });
    order.resize(max_k);
    std::sort(order.begin(), order.end()); // original frequency order
    SystemMatrix out;
    out.meta = sm.meta;
    out.meta["k_cap"] = std::to_string(max_k);
    for (std::size_t k : order) {
        out.components.push_back(sm.components[k]);
        out.frequencies.push_back(sm.frequencies[k]);
        out.snr.push_back(sm.snr[k]);
    }
    return out;
}

double estimate_snr_from_background(const ComplexVolume& v, int corner_block) {
    const int b = std::max(1, corner_block);
    double sig = 0.0;
    for (const cplx& c : v.data) sig += std::norm(c);
    sig = std::sqrt(sig / double(v.voxel_count()));

    double bg = 0.0;
    std::int64_t n_bg = 0;
    const int bx = std::min(b, v.dims.x), by = std::min(b, v.dims.y), bz = std::min(b, v.dims.z);
    for (int cz = 0; cz < 2; ++cz)
        for (int cy = 0; cy < 2; ++cy)
            for (int cx = 0; cx < 2; ++cx)
                for (int z = 0; z < bz; ++z)
                    for (int y = 0; y < by; ++y)
                        for (int x = 0; x < bx; ++x) {
                            const int px = cx ? v.dims.x - 1 - x : x;
                            const int py = cy ? v.dims.y - 1 - y : y;
                            const int pz = cz ? v.dims.z - 1 - z : z;
                            bg += std::norm(v.at(px, py, pz));
                            ++n_bg;
                        }
    bg = std::sqrt(bg / double(n_bg));
    if (bg == 0.0) return sig == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return sig / bg;
}

} // namespace smr
