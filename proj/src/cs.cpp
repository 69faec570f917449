#include "smr/cs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "smr/dct.hpp"
#include "smr/errors.hpp"
#include "smr/metrics.hpp"

namespace smr {

void CsParams::validate() const {
    if (!(mu > 0.0)) throw ConfigError("CsParams: mu must be positive");
    if (outer_iters < 1) throw ConfigError("CsParams: outer_iters must be >= 1");
    if (inner_iters < 1) throw ConfigError("CsParams: inner_iters must be >= 1");
    if (!(shrink_weight > 0.0)) throw ConfigError("CsParams: shrink_weight must be positive");
    if (!(tol > 0.0)) throw ConfigError("CsParams: tol must be positive");
}

std::pair<std::vector<cplx>, double> normalize_measurement(const std::vector<cplx>& y) {
    if (y.empty()) throw DataError("normalize_measurement: empty measurement");
    double scale = 0.0;
    for (const cplx& v : y) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return {y, 1.0};
    std::vector<cplx> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] / scale;
    return {std::move(out), scale};
}

ComplexVolume split_bregman(const std::vector<cplx>& y, const SamplingPattern& p,
                            const CsParams& cp, CsSolveInfo* info) {
    cp.validate();
    p.validate();
    if (y.size() != p.count())
        throw DataError("split_bregman: measurement length does not match pattern count");

    CsSolveInfo local;
    CsSolveInfo& out_info = info ? *info : local;
    out_info = CsSolveInfo{};

    std::size_t n = std::size_t(p.hr_dims.product());
    double y_norm2 = 0.0;
    for (const cplx& v : y) y_norm2 += std::norm(v);
    if (y_norm2 == 0.0) {
        out_info.zero_input = true;
        return ComplexVolume::zeros(p.hr_dims);
    }
    double y_norm = std::sqrt(y_norm2);

    std::vector<std::uint8_t> mask(n, 0);
    ComplexVolume f = ComplexVolume::zeros(p.hr_dims);
    for (std::size_t j = 0; j < p.indices.size(); ++j) {
        mask[std::size_t(p.indices[j])] = 1;
        f.data[std::size_t(p.indices[j])] = y[j];
    }

    double mu = cp.mu, lambda = cp.shrink_weight, thresh = 1.0 / lambda;
    ComplexVolume s = ComplexVolume::zeros(p.hr_dims);
    ComplexVolume d = ComplexVolume::zeros(p.hr_dims); // dct3 coefficient domain
    ComplexVolume b = ComplexVolume::zeros(p.hr_dims);
    ComplexVolume work = ComplexVolume::zeros(p.hr_dims);

    for (int outer = 0; outer < cp.outer_iters; ++outer) {
        for (int inner = 0; inner < cp.inner_iters; ++inner) {
            // Exact quadratic s-update: the normal operator mu*P'P + lambda*I
            // is diagonal in voxel space.
            for (std::size_t i = 0; i < n; ++i) work.data[i] = d.data[i] - b.data[i];
            ComplexVolume w = idct3(work);
            for (std::size_t i = 0; i < n; ++i) {
                double diag = mu * mask[i] + lambda;
                s.data[i] = (mu * double(mask[i]) * f.data[i] + lambda * w.data[i]) / diag;
            }
            // Magnitude shrinkage of dct3(s) + b, phase preserved.
            ComplexVolume t = dct3(s);
            for (std::size_t i = 0; i < n; ++i) {
                cplx ti = t.data[i] + b.data[i];
                double mag = std::abs(ti);
                d.data[i] = mag > thresh ? ti * ((mag - thresh) / mag) : cplx(0.0, 0.0);
                b.data[i] = ti - d.data[i];
            }
        }
        double res2 = 0.0;
        for (std::size_t j = 0; j < p.indices.size(); ++j)
            res2 += std::norm(y[j] - s.data[std::size_t(p.indices[j])]);
        double rel = std::sqrt(res2) / y_norm;
        out_info.residual_history.push_back(rel);
        out_info.outer_used = outer + 1;
        out_info.rel_residual = rel;
        if (rel <= cp.tol) break;
        // Bregman feedback: add the constraint residual back onto the data.
        for (std::size_t j = 0; j < p.indices.size(); ++j) {
            std::size_t i = std::size_t(p.indices[j]);
            f.data[i] += y[j] - s.data[i];
        }
    }
    return s;
}

SystemMatrix cs_recover_matrix(const SystemMatrix& sm, const SamplingPattern& p,
                               const CsParams& cp, int jobs) {
    sm.validate();
    if (sm.components.empty()) throw DataError("cs_recover_matrix: empty system matrix");
    if (!(sm.dims() == p.hr_dims))
        throw DataError("cs_recover_matrix: pattern dims do not match matrix dims");

    SystemMatrix out = sm;
    std::atomic<int> zero_components{0};
    int threads = jobs > 0 ? jobs : 0;
#ifdef _OPENMP
    if (threads == 0) threads = omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
    for (std::int64_t k = 0; k < std::int64_t(sm.components.size()); ++k) {
        std::vector<cplx> y = apply_pattern(sm.components[std::size_t(k)], p);
        auto [yn, scale] = normalize_measurement(y);
        CsSolveInfo inf;
        ComplexVolume rec = split_bregman(yn, p, cp, &inf);
        if (inf.zero_input) ++zero_components;
        for (cplx& v : rec.data) v *= scale;
        rec.voxel_spacing = sm.components[std::size_t(k)].voxel_spacing;
        out.components[std::size_t(k)] = std::move(rec);
    }
    if (zero_components > 0)
        std::cerr << "cs_recover_matrix: " << zero_components
                  << " all-zero component(s) passed through as zero volumes\n";
    out.meta["recovery"] = "split-bregman";
    return out;
}

CsSweepResult cs_param_sweep(const SystemMatrix& subset, const SamplingPattern& pattern,
                             const std::vector<CsParams>& grid, int jobs) {
    if (grid.empty()) throw ConfigError("cs_param_sweep: empty parameter grid");
    CsSweepResult result;
    result.table.reserve(grid.size());
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        SystemMatrix rec = cs_recover_matrix(subset, pattern, grid[g], jobs);
        double mean = mean_component_nrmse(rec, subset);
        result.table.push_back({grid[g], mean});
        if (mean < result.table[best].mean_nrmse) best = g;
    }
    result.best = result.table[best].params;
    return result;
}

} // namespace smr
