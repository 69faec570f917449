#include "smr/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <fftw3.h>

#include "smr/errors.hpp"

namespace smr {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBoltzmann = 1.380649e-23; // J/K

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Per-position noise stream, decorrelated from neighbors and independent of
/// the parallel schedule.
std::uint64_t position_seed(std::uint64_t seed, std::int64_t n) {
    return splitmix64(seed ^ splitmix64(std::uint64_t(n) + 1));
}

} // namespace

void ScannerConfig::validate() const {
    for (double g : gradient)
        if (!(g > 0.0)) throw ConfigError("ScannerConfig: gradient must be positive");
    for (double a : drive_amplitudes)
        if (!(a > 0.0)) throw ConfigError("ScannerConfig: drive amplitude must be positive");
    if (!(base_frequency > 0.0))
        throw ConfigError("ScannerConfig: base_frequency must be positive");
    int max_cycles = 0;
    for (double f : drive_frequencies) {
        if (!(f > 0.0)) throw ConfigError("ScannerConfig: drive frequency must be positive");
        double cycles = f / base_frequency;
        double rounded = std::round(cycles);
        if (rounded < 1.0 || std::abs(cycles - rounded) > 1e-9 * cycles)
            throw ConfigError("ScannerConfig: drive frequencies must be integer multiples "
                              "of base_frequency");
        max_cycles = std::max(max_cycles, int(rounded));
    }
    if (drive_frequencies[0] == drive_frequencies[1] ||
        drive_frequencies[1] == drive_frequencies[2] ||
        drive_frequencies[0] == drive_frequencies[2])
        throw ConfigError("ScannerConfig: drive frequencies must be distinct");
    if (sample_points < 4 || sample_points % 2 != 0)
        throw ConfigError("ScannerConfig: sample_points must be even and >= 4");
    if (2 * max_cycles >= sample_points)
        throw ConfigError("ScannerConfig: sample_points too small for the drive harmonics");
    if (!(particle_diameter > 0.0))
        throw ConfigError("ScannerConfig: particle_diameter must be positive");
    if (!(temperature > 0.0)) throw ConfigError("ScannerConfig: temperature must be positive");
    if (!(saturation_magnetization > 0.0))
        throw ConfigError("ScannerConfig: saturation_magnetization must be positive");
}

std::array<double, 3> ScannerConfig::fov_spacing(Dims3 dims) const {
    return {2.0 * drive_amplitudes[0] / (gradient[0] * dims.x),
            2.0 * drive_amplitudes[1] / (gradient[1] * dims.y),
            2.0 * drive_amplitudes[2] / (gradient[2] * dims.z)};
}

double langevin(double xi) {
    if (std::abs(xi) < 1e-4) return xi / 3.0 - xi * xi * xi / 45.0;
    return 1.0 / std::tanh(xi) - 1.0 / xi;
}

void add_system_noise(SystemMatrix& sm, double noise_rms, std::uint64_t seed) {
    if (noise_rms < 0.0) throw ConfigError("add_system_noise: negative noise_rms");
    const std::size_t K = sm.component_count();
    const std::int64_t N = sm.dims().product();
    for (std::size_t k = 0; k < K; ++k) {
        double s2 = 0.0;
        for (const cplx& v : sm.components[k].data) s2 += std::norm(v);
        double clean_rms = std::sqrt(s2 / double(N));
        sm.snr[k] = noise_rms > 0.0 ? clean_rms / noise_rms
                                    : std::numeric_limits<double>::infinity();
    }
    if (noise_rms > 0.0) {
        for (std::int64_t n = 0; n < N; ++n) {
            std::mt19937_64 rng(position_seed(seed, n));
            std::normal_distribution<double> nd(0.0, noise_rms / std::sqrt(2.0));
            for (std::size_t k = 0; k < K; ++k) {
                double re = nd(rng), im = nd(rng);
                sm.components[k].data[std::size_t(n)] += cplx(re, im);
            }
        }
    }
    sm.meta["noise_rms"] = std::to_string(noise_rms);
}

SystemMatrix simulate_system_matrix(const ScannerConfig& sc, Dims3 dims, double noise_rms,
                                    std::uint64_t seed, int jobs) {
    sc.validate();
    if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0)
        throw ConfigError("simulate_system_matrix: non-positive dims");
    if (noise_rms < 0.0) throw ConfigError("simulate_system_matrix: negative noise_rms");

    int J = sc.sample_points;
    int K = J / 2;
    std::int64_t N = dims.product();
    std::array<double, 3> spacing = sc.fov_spacing(dims);
    double period = 1.0 / sc.base_frequency;
    double volume = kPi / 6.0 * std::pow(sc.particle_diameter, 3);
    double moment = sc.saturation_magnetization * volume; // A*m^2 per particle
    double xi_per_tesla = moment / (kBoltzmann * sc.temperature);

    SystemMatrix sm;
    sm.components.assign(std::size_t(K), ComplexVolume());
    sm.frequencies.resize(std::size_t(K));
    sm.snr.assign(std::size_t(K), 0.0);
    std::array<double, 3> spacing_mm = {spacing[0] * 1e3, spacing[1] * 1e3, spacing[2] * 1e3};
    for (int k = 0; k < K; ++k) {
        sm.components[std::size_t(k)] = ComplexVolume::zeros(dims);
        sm.components[std::size_t(k)].voxel_spacing = spacing_mm;
        sm.frequencies[std::size_t(k)] = double(k + 1) * sc.base_frequency;
    }

    // One plan reused by all threads; FFTW_UNALIGNED so any buffer is legal
    // for the new-array execute call.
    std::vector<double> plan_in(std::size_t(J), 0.0);
    std::vector<std::complex<double>> plan_out(std::size_t(J / 2 + 1));
    fftw_plan plan = fftw_plan_dft_r2c_1d(
        J, plan_in.data(), reinterpret_cast<fftw_complex*>(plan_out.data()),
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan) throw NumericError("simulate_system_matrix: fftw plan failed");

    int threads = jobs > 0 ? jobs : 0;
#ifdef _OPENMP
    if (threads == 0) threads = omp_get_max_threads();
#pragma omp parallel num_threads(threads)
#endif
    {
        std::vector<double> signal(static_cast<std::size_t>(J));
        std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(J / 2 + 1));
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
        for (std::int64_t n = 0; n < N; ++n) {
            int x = int(n % dims.x);
            int y = int((n / dims.x) % dims.y);
            int z = int(n / (std::int64_t(dims.x) * dims.y));
            double rx = (x - 0.5 * (dims.x - 1)) * spacing[0];
            double ry = (y - 0.5 * (dims.y - 1)) * spacing[1];
            double rz = (z - 0.5 * (dims.z - 1)) * spacing[2];

            for (int j = 0; j < J; ++j) {
                double t = double(j) * period / J;
                double bx = sc.gradient[0] * rx +
                            sc.drive_amplitudes[0] * std::sin(2.0 * kPi * sc.drive_frequencies[0] * t);
                double by = sc.gradient[1] * ry +
                            sc.drive_amplitudes[1] * std::sin(2.0 * kPi * sc.drive_frequencies[1] * t);
                double bz = sc.gradient[2] * rz +
                            sc.drive_amplitudes[2] * std::sin(2.0 * kPi * sc.drive_frequencies[2] * t);
                double mag = std::sqrt(bx * bx + by * by + bz * bz);
                // Equilibrium moment along the field; receive coil sums all
                // three Cartesian components.
                signal[std::size_t(j)] =
                    mag > 0.0 ? moment * langevin(xi_per_tesla * mag) * (bx + by + bz) / mag
                              : 0.0;
            }
            fftw_execute_dft_r2c(plan, signal.data(),
                                 reinterpret_cast<fftw_complex*>(spectrum.data()));
            for (int k = 1; k <= K; ++k) {
                std::complex<double> m_hat = spectrum[std::size_t(k)] / double(J);
                double f_k = double(k) * sc.base_frequency;
                // Voltage is the time derivative, a rotation and scale per bin.
                sm.components[std::size_t(k - 1)].data[std::size_t(n)] =
                    std::complex<double>(0.0, 2.0 * kPi * f_k) * m_hat;
            }
        }
    }
    fftw_destroy_plan(plan);

    add_system_noise(sm, noise_rms, seed);

    sm.meta["source_format"] = "simulated";
    sm.meta["seed"] = std::to_string(seed);
    sm.meta["noise_rms"] = std::to_string(noise_rms);
    sm.meta["base_frequency"] = std::to_string(sc.base_frequency);
    sm.validate();
    return sm;
}

Measurement simulate_measurement(const SystemMatrix& sm, const ConcentrationImage& phantom,
                                 double noise_rms, std::uint64_t seed) {
    sm.validate();
    phantom.validate();
    if (!(sm.dims() == phantom.dims))
        throw DataError("simulate_measurement: phantom dims do not match system matrix");
    if (noise_rms < 0.0) throw ConfigError("simulate_measurement: negative noise_rms");

    Measurement m;
    m.frequencies = sm.frequencies;
    m.u_hat.resize(sm.component_count());
    std::mt19937_64 rng(splitmix64(seed ^ 0x6d6561737572656dull));
    std::normal_distribution<double> nd(0.0, noise_rms / std::sqrt(2.0));
    for (std::size_t k = 0; k < sm.component_count(); ++k) {
        cplx acc(0.0, 0.0);
        const std::vector<cplx>& row = sm.components[k].data;
        for (std::size_t i = 0; i < row.size(); ++i) acc += row[i] * phantom.values[i];
        if (noise_rms > 0.0) {
            double re = nd(rng), im = nd(rng);
            acc += cplx(re, im);
        }
        m.u_hat[k] = acc;
    }
    m.validate();
    return m;
}

PhantomKind phantom_kind_from_string(const std::string& name) {
    if (name == "shape") return PhantomKind::shape;
    if (name == "resolution") return PhantomKind::resolution;
    if (name == "concentration") return PhantomKind::concentration;
    throw ConfigError("unknown phantom kind '" + name +
                      "' (expected shape, resolution, or concentration)");
}

ConcentrationImage make_phantom(PhantomKind kind, Dims3 dims) {
    if (dims.x < 8 || dims.y < 8 || dims.z < 8)
        throw ConfigError("make_phantom: dims must be >= 8 per axis");
    ConcentrationImage img = ConcentrationImage::zeros(dims);

    if (kind == PhantomKind::shape) {
        double cx = 0.5 * (dims.x - 1), cy = 0.5 * (dims.y - 1), cz = 0.5 * (dims.z - 1);
        double ax = 0.35 * dims.x, ay = 0.3 * dims.y, az = 0.25 * dims.z;
        for (int z = 0; z < dims.z; ++z)
            for (int y = 0; y < dims.y; ++y)
                for (int x = 0; x < dims.x; ++x) {
                    double dx = (x - cx) / ax, dy = (y - cy) / ay, dz = (z - cz) / az;
                    if (dx * dx + dy * dy + dz * dz <= 1.0) img.at(x, y, z) = 1.0;
                }
        img.meta["phantom"] = "shape";
        return img;
    }

    if (kind == PhantomKind::resolution) {
        int z = dims.z / 2;
        int spacings[3] = {4, 3, 2};
        for (int p = 0; p < 3; ++p) {
            int y = (p + 1) * dims.y / 4;
            int gap = spacings[p];
            int xa = dims.x / 2 - (gap + 1) / 2;
            int xb = xa + gap;
            xa = std::clamp(xa, 1, dims.x - 2);
            xb = std::clamp(xb, 1, dims.x - 2);
            img.at(xa, y, z) = 1.0;
            img.at(xb, y, z) = 1.0;
        }
        img.meta["phantom"] = "resolution";
        return img;
    }

    int side = std::max(2, dims.x / 8);
    double values[3] = {1.0, 0.5, 0.25};
    int y0 = dims.y / 2 - side / 2, z0 = dims.z / 2 - side / 2;
    for (int b = 0; b < 3; ++b) {
        int x0 = (b + 1) * dims.x / 4 - side / 2;
        for (int z = z0; z < z0 + side && z < dims.z; ++z)
            for (int y = y0; y < y0 + side && y < dims.y; ++y)
                for (int x = std::max(0, x0); x < x0 + side && x < dims.x; ++x)
                    img.at(x, y, z) = values[b];
    }
    img.meta["phantom"] = "concentration";
    return img;
}

} // namespace smr
