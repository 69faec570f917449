#pragma once

#include <utility>
#include <vector>

#include "smr/sampling.hpp"
#include "smr/volume.hpp"

namespace smr {

/// Split Bregman solver knobs for min ||dct3(s)||_1 s.t. samples(s) = y.
struct CsParams {
    double mu = 10.0;         // quadratic weight on the sampling constraint
    int outer_iters = 30;     // Bregman (constraint feedback) iterations
    int inner_iters = 5;      // alternating s/d updates per outer iteration
    double shrink_weight = 1.0; // split weight on d = dct3(s); threshold is its inverse
    double tol = 1e-6;        // relative constraint residual stop

    void validate() const;
};

struct CsSolveInfo {
    int outer_used = 0;
    double rel_residual = 0.0;
    bool zero_input = false;
    std::vector<double> residual_history; // relative residual per outer iteration
};

/// Divides by the max magnitude and returns (normalized, scale); an all-zero
/// vector is returned unchanged with scale 1.
std::pair<std::vector<cplx>, double> normalize_measurement(const std::vector<cplx>& y);

/// L1-in-DCT recovery of one component from its sampled voxels. The L1 term
/// uses complex magnitude shrinkage (phase preserved); the quadratic
/// subproblem is solved exactly per voxel because the sampling operator is a
/// voxel mask and the transform is orthonormal. An all-zero y returns a zero
/// volume with info->zero_input set.
ComplexVolume split_bregman(const std::vector<cplx>& y, const SamplingPattern& p,
                            const CsParams& cp, CsSolveInfo* info = nullptr);

/// Recovers every component of `sm` from its pattern samples (normalize,
/// solve, rescale), parallel across components. jobs <= 0 uses all cores.
SystemMatrix cs_recover_matrix(const SystemMatrix& sm, const SamplingPattern& p,
                               const CsParams& cp, int jobs = 0);

struct CsSweepRow {
    CsParams params;
    double mean_nrmse = 0.0;
};

struct CsSweepResult {
    CsParams best;
    std::vector<CsSweepRow> table;
};

/// Evaluates mean component NRMSE for every parameter point on a (small)
/// matrix subset; returns the argmin and the full table. Ties keep the
/// earliest grid point.
CsSweepResult cs_param_sweep(const SystemMatrix& subset, const SamplingPattern& pattern,
                             const std::vector<CsParams>& grid, int jobs = 0);

} // namespace smr
