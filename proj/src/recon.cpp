#include "smr/recon.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "smr/errors.hpp"

namespace smr {

void ReconParams::validate() const {
    if (lambda_rel < 0.0) throw ConfigError("ReconParams: lambda_rel must be >= 0");
    if (iterations < 1) throw ConfigError("ReconParams: iterations must be >= 1");
    if (snr_threshold < 0.0) throw ConfigError("ReconParams: snr_threshold must be >= 0");
}

LinearSystem assemble(const SystemMatrix& sm, const Measurement& m, double snr_threshold) {
    sm.validate();
    m.validate();
    if (m.u_hat.size() != sm.component_count())
        throw DataError("assemble: measurement length does not match component count");
    for (std::size_t k = 0; k < sm.frequencies.size(); ++k) {
        double a = sm.frequencies[k], b = m.frequencies[k];
        if (std::abs(a - b) > 1e-9 * std::max({std::abs(a), std::abs(b), 1.0}))
            throw DataError("assemble: frequency axes of system matrix and measurement differ");
    }

    LinearSystem sys;
    sys.image_dims = sm.dims();
    sys.cols = std::size_t(sys.image_dims.product());
    for (std::size_t k = 0; k < sm.component_count(); ++k) {
        if (sm.snr[k] < snr_threshold) continue;
        sys.a.insert(sys.a.end(), sm.components[k].data.begin(), sm.components[k].data.end());
        sys.rhs.push_back(m.u_hat[k]);
        ++sys.rows;
    }
    return sys;
}

ConcentrationImage kaczmarz(const LinearSystem& sys, const ReconParams& rp) {
    rp.validate();
    if (sys.rows == 0 || sys.cols == 0) throw DataError("kaczmarz: empty system");
    if (sys.a.size() != sys.rows * sys.cols || sys.rhs.size() != sys.rows)
        throw DataError("kaczmarz: inconsistent system buffers");

    std::vector<double> row_norm2(sys.rows, 0.0);
    double total = 0.0;
    std::size_t zero_rows = 0;
    for (std::size_t k = 0; k < sys.rows; ++k) {
        const cplx* row = sys.row(k);
        for (std::size_t i = 0; i < sys.cols; ++i) row_norm2[k] += std::norm(row[i]);
        total += row_norm2[k];
        if (row_norm2[k] == 0.0) ++zero_rows;
    }
    if (zero_rows > 0)
        std::cerr << "kaczmarz: skipping " << zero_rows << " zero-norm row(s)\n";

    double lambda_eff = rp.lambda_rel * total / double(sys.rows);
    double sqrt_lambda = std::sqrt(lambda_eff);

    std::vector<cplx> c(sys.cols, cplx(0.0, 0.0));
    std::vector<cplx> v(sys.rows, cplx(0.0, 0.0)); // slack for the regularized rows

    std::vector<std::size_t> order(sys.rows);
    std::iota(order.begin(), order.end(), 0);
    for (int sweep = 0; sweep < rp.iterations; ++sweep) {
        if (rp.shuffle_seed != 0) {
            std::mt19937_64 rng(rp.shuffle_seed + std::uint64_t(sweep) * 0x9e3779b97f4a7c15ull);
            std::shuffle(order.begin(), order.end(), rng);
        }
        for (std::size_t k : order) {
            if (row_norm2[k] == 0.0) continue;
            const cplx* row = sys.row(k);
            cplx dot(0.0, 0.0);
            for (std::size_t i = 0; i < sys.cols; ++i) dot += row[i] * c[i];
            cplx beta = (sys.rhs[k] - dot - sqrt_lambda * v[k]) / (row_norm2[k] + lambda_eff);
            for (std::size_t i = 0; i < sys.cols; ++i) c[i] += beta * std::conj(row[i]);
            v[k] += beta * sqrt_lambda;
        }
    }

    ConcentrationImage img = ConcentrationImage::zeros(sys.image_dims);
    for (std::size_t i = 0; i < sys.cols; ++i) {
        double val = c[i].real();
        img.values[i] = rp.enforce_real_nonneg ? std::max(0.0, val) : val;
    }
    return img;
}

ConcentrationImage reconstruct_phantom(const SystemMatrix& sm, const Measurement& m,
                                       const ReconParams& rp) {
    LinearSystem sys = assemble(sm, m, rp.snr_threshold);
    ConcentrationImage img = kaczmarz(sys, rp);
    auto it = sm.meta.find("variant");
    img.meta["sm_variant"] = it != sm.meta.end() ? it->second : "unlabeled";
    img.meta["lambda_rel"] = std::to_string(rp.lambda_rel);
    img.meta["iterations"] = std::to_string(rp.iterations);
    img.meta["snr_threshold"] = std::to_string(rp.snr_threshold);
    return img;
}

} // namespace smr
