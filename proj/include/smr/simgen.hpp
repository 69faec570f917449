#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "smr/volume.hpp"

namespace smr {

/// Idealized single-receive-channel MPI scanner: linear selection-field
/// gradient plus a 3D sinusoidal drive field, superparamagnetic particles in
/// thermal equilibrium, instantaneous relaxation.
///
/// Drive frequencies must be integer multiples of base_frequency so one base
/// period covers the whole Lissajous trajectory; odd multiples give the
/// mirror symmetry real scanners show.
struct ScannerConfig {
    std::array<double, 3> gradient = {2.0, 2.0, 2.0};            // T/m
    std::array<double, 3> drive_amplitudes = {0.012, 0.012, 0.012}; // T
    double base_frequency = 781.25;                              // Hz
    std::array<double, 3> drive_frequencies = {31 * 781.25, 33 * 781.25, 35 * 781.25};
    int sample_points = 1024; // time samples per base period (even)
    double particle_diameter = 30e-9;          // m
    double temperature = 300.0;                // K
    double saturation_magnetization = 474e3;   // A/m (magnetite)

    void validate() const;

    /// Voxel pitch covering the drive-limited FOV: 2A/(G*dims) per axis, in
    /// meters.
    std::array<double, 3> fov_spacing(Dims3 dims) const;
};

/// coth(xi) - 1/xi, series xi/3 - xi^3/45 below |xi| = 1e-4.
double langevin(double xi);

/// Simulates the calibration scan: for every grid position, the particle
/// magnetization over one base period, its time-derivative spectrum at
/// harmonics k = 1..sample_points/2 of base_frequency, plus complex white
/// noise of the given RMS. SNR per component = clean RMS amplitude over the
/// grid / noise_rms (+inf at noise 0). Deterministic in seed independent of
/// thread count; jobs <= 0 uses all cores.
SystemMatrix simulate_system_matrix(const ScannerConfig& sc, Dims3 dims, double noise_rms,
                                    std::uint64_t seed, int jobs = 0);

/// Adds complex white noise to a clean matrix and stamps snr = clean RMS /
/// noise_rms (+inf at 0). Must be applied to a noise-free matrix; uses the
/// same per-position streams as the simulator, so simulating at noise 0 and
/// calling this matches simulating with noise directly.
void add_system_noise(SystemMatrix& sm, double noise_rms, std::uint64_t seed);

/// u_hat = S c + complex white noise.
Measurement simulate_measurement(const SystemMatrix& sm, const ConcentrationImage& phantom,
                                 double noise_rms, std::uint64_t seed);

enum class PhantomKind { shape, resolution, concentration };

PhantomKind phantom_kind_from_string(const std::string& name);

/// Deterministic non-negative test subjects: a filled ellipsoid (shape),
/// point pairs at spacings 4/3/2 voxels (resolution), three blocks at
/// concentration ratios 1 : 1/2 : 1/4 (concentration). Requires dims >= 8
/// per axis.
ConcentrationImage make_phantom(PhantomKind kind, Dims3 dims);

} // namespace smr
