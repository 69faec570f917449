#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smr/volume.hpp"

namespace smr {

/// Subset of voxels retained when measuring a calibration volume. `indices`
/// are linear x-fastest indices into the HR grid, strictly increasing.
struct SamplingPattern {
    enum class Kind { regular, poisson };

    Kind kind = Kind::regular;
    Dims3 hr_dims{};
    std::vector<std::int64_t> indices;

    // regular kind
    int stride = 1;
    Idx3 offset{0, 0, 0};

    // poisson kind
    double radius = 0.0;
    std::uint64_t seed = 0;
    /// Indices without the min-distance guarantee: augmented points and
    /// enforced FOV corners.
    std::vector<std::int64_t> adjusted;

    std::size_t count() const { return indices.size(); }

    /// Throws DataError/ConfigError on violated invariants (ordering, range,
    /// regular-count consistency).
    void validate() const;
};

/// Per-axis sample count for stride/offset decimation of `hr` (ceil division
/// of the in-bounds range).
Dims3 regular_lr_dims(Dims3 hr, int stride, Idx3 offset);

/// Keeps voxels at offset + stride*j per axis. Offsets must be inside
/// [0, stride); stride must not exceed any axis.
SamplingPattern regular_pattern(Dims3 hr_dims, int stride, Idx3 offset = {0, 0, 0});

/// Poisson-disc pattern over the voxel lattice: dart throwing in a seeded
/// shuffled order with a min-pairwise-distance ball check, radius found by
/// bisection to land within 2% of target_count, then trimmed/augmented to the
/// exact count. The 8 FOV corner voxels are always included, replacing the
/// nearest accepted point when absent; corners and augmented points carry no
/// distance guarantee and are listed in `adjusted`. Deterministic in `seed`.
SamplingPattern poisson_pattern(Dims3 hr_dims, std::int64_t target_count, std::uint64_t seed);

/// Measured values y: output j = v.data[p.indices[j]]. Dims must match.
std::vector<cplx> apply_pattern(const ComplexVolume& v, const SamplingPattern& p);

/// Inverse placement: sample j lands at p.indices[j], every other voxel is
/// zero (the zero-filled baseline).
ComplexVolume scatter_pattern(const std::vector<cplx>& samples, const SamplingPattern& p);

/// Reshapes a regular pattern's samples into a dense LR volume of the
/// per-axis sample counts. Errors on non-regular patterns.
ComplexVolume gather_lr_volume(const ComplexVolume& v, const SamplingPattern& p);

/// Standard trilinear interpolation (real and imaginary parts independently)
/// with centers aligned across scales and edge clamping.
ComplexVolume trilinear_upsample(const ComplexVolume& lr, Dims3 hr_dims);

/// Trilinear interpolation aligned with a stride/offset decimation: LR sample
/// j sits at HR voxel offset + stride*j, interpolation in between, clamped
/// outside. The fair dense baseline against learned recovery of such grids.
ComplexVolume trilinear_upsample(const ComplexVolume& lr, Dims3 hr_dims, int stride,
                                 Idx3 offset);

/// JSON round trip. The index list is optional on serialization (patterns
/// regenerate from their parameters); deserialization regenerates it when
/// absent.
std::string pattern_to_json(const SamplingPattern& p, bool include_indices = false);
SamplingPattern pattern_from_json(const std::string& text);

} // namespace smr
