#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smr/volume.hpp"

namespace smr {

struct ReconParams {
    double lambda_rel = 0.01;  // regularization relative to the mean squared row norm
    int iterations = 3;        // full sweeps over all rows
    double snr_threshold = 3.0;
    bool enforce_real_nonneg = true;
    std::uint64_t shuffle_seed = 0; // 0 = sequential row order; else seeded shuffle per sweep
    void validate() const;
};

/// Dense row-major linear system: rows are the SNR-filtered frequency
/// components flattened x-fastest, rhs the matching measurement entries.
struct LinearSystem {
    std::size_t rows = 0, cols = 0;
    std::vector<cplx> a;   // rows * cols, row-major
    std::vector<cplx> rhs; // rows
    Dims3 image_dims{};

    const cplx* row(std::size_t k) const { return a.data() + k * cols; }
};

/// Keeps components with snr >= threshold and their measurement entries.
/// Frequency axes must align entrywise.
LinearSystem assemble(const SystemMatrix& sm, const Measurement& m, double snr_threshold);

/// Regularized Kaczmarz with the auxiliary residual variable: each row update
/// also advances a per-row slack v_k so the iteration converges to the
/// Tikhonov solution (S^H S + lambda_eff I) c = S^H u with
/// lambda_eff = lambda_rel * mean squared row norm. Zero-norm rows are
/// skipped with a log line. Real part + non-negativity clamp are applied once
/// after the last sweep when enforce_real_nonneg is set.
ConcentrationImage kaczmarz(const LinearSystem& sys, const ReconParams& rp);

/// assemble + kaczmarz; meta records which system matrix produced the image
/// via `sm_variant` (caller-supplied label in sm.meta, default "unlabeled").
ConcentrationImage reconstruct_phantom(const SystemMatrix& sm, const Measurement& m,
                                       const ReconParams& rp);

} // namespace smr
