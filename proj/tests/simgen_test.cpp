#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <set>
#include <vector>

#include "doctest.h"
#include "smr/errors.hpp"
#include "smr/simgen.hpp"

using namespace smr;

namespace {

constexpr double kPi = 3.14159265358979323846;

ScannerConfig small_scanner() {
    ScannerConfig sc;
    sc.sample_points = 128;
    return sc;
}

/// Time-domain scanner model restated from first principles: Langevin
/// magnetization along the local field, all three Cartesian components summed
/// by the receive coil, direct DFT, derivative as a per-bin rotation.
cplx oracle_component(const ScannerConfig& sc, Dims3 dims, int x, int y, int z, int k) {
    const double kB = 1.380649e-23;
    double volume = kPi / 6.0 * std::pow(sc.particle_diameter, 3);
    double moment = sc.saturation_magnetization * volume;
    double xi_per_tesla = moment / (kB * sc.temperature);
    auto spacing = sc.fov_spacing(dims);
    double rx = (x - 0.5 * (dims.x - 1)) * spacing[0];
    double ry = (y - 0.5 * (dims.y - 1)) * spacing[1];
    double rz = (z - 0.5 * (dims.z - 1)) * spacing[2];
    int J = sc.sample_points;
    double period = 1.0 / sc.base_frequency;

    cplx acc(0.0, 0.0);
    for (int j = 0; j < J; ++j) {
        double t = double(j) * period / J;
        double bx = sc.gradient[0] * rx +
                    sc.drive_amplitudes[0] * std::sin(2.0 * kPi * sc.drive_frequencies[0] * t);
        double by = sc.gradient[1] * ry +
                    sc.drive_amplitudes[1] * std::sin(2.0 * kPi * sc.drive_frequencies[1] * t);
        double bz = sc.gradient[2] * rz +
                    sc.drive_amplitudes[2] * std::sin(2.0 * kPi * sc.drive_frequencies[2] * t);
        double mag = std::sqrt(bx * bx + by * by + bz * bz);
        double lam = mag > 0.0 ? (1.0 / std::tanh(xi_per_tesla * mag) - 1.0 / (xi_per_tesla * mag))
                               : 0.0;
        double s = mag > 0.0 ? moment * lam * (bx + by + bz) / mag : 0.0;
        double ang = -2.0 * kPi * double(j) * double(k) / double(J);
        acc += s * cplx(std::cos(ang), std::sin(ang));
    }
    acc /= double(J);
    double f_k = double(k) * sc.base_frequency;
    return cplx(0.0, 2.0 * kPi * f_k) * acc;
}

} // namespace

TEST_CASE("langevin function values and limits") {
    CHECK(langevin(1.0) == doctest::Approx(0.3130352854993313).epsilon(1e-14));
    CHECK(langevin(0.0) == 0.0);
    CHECK(langevin(-2.5) == doctest::Approx(-langevin(2.5)).epsilon(1e-14));
    CHECK(langevin(1e3) == doctest::Approx(1.0 - 1e-3).epsilon(1e-9)); // coth -> 1
    // both branches agree with the series around the switch point
    auto series = [](double xi) { return xi / 3.0 - xi * xi * xi / 45.0; };
    double below = langevin(0.99e-4), above = langevin(1.01e-4);
    CHECK(below == doctest::Approx(series(0.99e-4)).epsilon(1e-12));
    // the closed form cancels two ~1/xi terms, so expect ~1e-8 there
    CHECK(above == doctest::Approx(series(1.01e-4)).epsilon(1e-6));
    // weak-field slope is 1/3
    CHECK(langevin(1e-6) == doctest::Approx(1e-6 / 3.0).epsilon(1e-9));
}

TEST_CASE("scanner config validation and fov spacing") {
    ScannerConfig sc = small_scanner();
    CHECK_NOTHROW(sc.validate());

    auto sp = sc.fov_spacing(Dims3{12, 12, 12});
    CHECK(sp[0] == doctest::Approx(2.0 * 0.012 / (2.0 * 12)).epsilon(1e-12));

    sc.drive_frequencies[0] = 1.5 * sc.base_frequency; // not an integer multiple
    CHECK_THROWS_AS(sc.validate(), ConfigError);
    sc = small_scanner();
    sc.drive_frequencies[1] = sc.drive_frequencies[0];
    CHECK_THROWS_AS(sc.validate(), ConfigError);
    sc = small_scanner();
    sc.sample_points = 127;
    CHECK_THROWS_AS(sc.validate(), ConfigError);
    sc = small_scanner();
    sc.sample_points = 64; // 2 * 35 >= 64: aliased harmonics
    CHECK_THROWS_AS(sc.validate(), ConfigError);
    sc = small_scanner();
    sc.particle_diameter = 0.0;
    CHECK_THROWS_AS(sc.validate(), ConfigError);
}

TEST_CASE("spectra match a direct time-domain evaluation") {
    ScannerConfig sc = small_scanner();
    Dims3 d{4, 3, 2};
    SystemMatrix sm = simulate_system_matrix(sc, d, 0.0, 1, 1);
    REQUIRE(sm.component_count() == std::size_t(sc.sample_points / 2));
    CHECK(sm.dims() == d);

    double peak = 0.0;
    for (const auto& c : sm.components) peak = std::max(peak, c.max_abs());
    for (int k : {1, 2, 31, 35, 64}) {
        const ComplexVolume& comp = sm.components[std::size_t(k - 1)];
        CHECK(sm.frequencies[std::size_t(k - 1)] ==
              doctest::Approx(k * sc.base_frequency).epsilon(1e-12));
        for (auto [x, y, z] : {std::array<int, 3>{0, 0, 0}, {3, 1, 1}, {2, 2, 0}}) {
            cplx want = oracle_component(sc, d, x, y, z, k);
            CHECK(std::abs(comp.at(x, y, z) - want) <= 1e-9 * peak);
        }
    }

    // voxel spacing is recorded in millimeters
    auto vs = sm.components[0].voxel_spacing;
    REQUIRE(vs.has_value());
    CHECK((*vs)[0] == doctest::Approx(sc.fov_spacing(d)[0] * 1e3).epsilon(1e-12));
}

TEST_CASE("mirror symmetry alternates with harmonic parity") {
    ScannerConfig sc = small_scanner(); // odd drive multiples 31, 33, 35
    Dims3 d{5, 4, 3};
    SystemMatrix sm = simulate_system_matrix(sc, d, 0.0, 1, 1);

    double peak = 0.0;
    for (const auto& c : sm.components) peak = std::max(peak, c.max_abs());
    for (int k : {1, 2, 3, 31, 32, 33, 50}) {
        const ComplexVolume& comp = sm.components[std::size_t(k - 1)];
        double sign = (k % 2 == 1) ? 1.0 : -1.0;
        for (int z = 0; z < d.z; ++z)
            for (int y = 0; y < d.y; ++y)
                for (int x = 0; x < d.x; ++x) {
                    cplx mirrored = comp.at(d.x - 1 - x, d.y - 1 - y, d.z - 1 - z);
                    CHECK(std::abs(mirrored - sign * comp.at(x, y, z)) <= 1e-9 * peak);
                }
    }

    // an even drive multiple breaks the half-period antisymmetry
    ScannerConfig even = sc;
    even.drive_frequencies[0] = 32 * even.base_frequency;
    SystemMatrix sme = simulate_system_matrix(even, d, 0.0, 1, 1);
    double worst = 0.0;
    const ComplexVolume& c1 = sme.components[0];
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x)
                worst = std::max(worst, std::abs(c1.at(d.x - 1 - x, d.y - 1 - y, d.z - 1 - z) -
                                                 c1.at(x, y, z)));
    CHECK(worst > 1e-6 * peak);
}

TEST_CASE("noise layering matches simulating with noise directly") {
    ScannerConfig sc = small_scanner();
    Dims3 d{4, 4, 2};
    double noise = 1e-7;

    SystemMatrix noisy = simulate_system_matrix(sc, d, noise, 42, 1);
    SystemMatrix clean = simulate_system_matrix(sc, d, 0.0, 42, 1);
    for (double s : clean.snr) CHECK(std::isinf(s));

    SystemMatrix layered = clean;
    add_system_noise(layered, noise, 42);
    REQUIRE(layered.component_count() == noisy.component_count());
    for (std::size_t k = 0; k < noisy.component_count(); ++k) {
        CHECK(layered.components[k].data == noisy.components[k].data);
        CHECK(layered.snr[k] == noisy.snr[k]);
        // stamped snr is the clean RMS over the noise RMS
        double s2 = 0.0;
        for (const cplx& v : clean.components[k].data) s2 += std::norm(v);
        double want = std::sqrt(s2 / double(d.product())) / noise;
        CHECK(layered.snr[k] == doctest::Approx(want).epsilon(1e-12));
    }

    // different seed, different noise; same clean signal underneath
    SystemMatrix other = simulate_system_matrix(sc, d, noise, 43, 1);
    CHECK(other.components[0].data != noisy.components[0].data);

    CHECK_THROWS_AS(add_system_noise(layered, -1.0, 1), ConfigError);
}

TEST_CASE("simulation is deterministic across job counts") {
    ScannerConfig sc = small_scanner();
    Dims3 d{4, 3, 3};
    SystemMatrix a = simulate_system_matrix(sc, d, 1e-7, 7, 1);
    SystemMatrix b = simulate_system_matrix(sc, d, 1e-7, 7, 2);
    for (std::size_t k = 0; k < a.component_count(); ++k)
        CHECK(a.components[k].data == b.components[k].data);
}

TEST_CASE("measurements are the matrix applied to the phantom") {
    ScannerConfig sc = small_scanner();
    Dims3 d{8, 8, 8};
    SystemMatrix sm = simulate_system_matrix(sc, d, 0.0, 1, 0);
    ConcentrationImage ph = make_phantom(PhantomKind::shape, d);

    Measurement m = simulate_measurement(sm, ph, 0.0, 9);
    REQUIRE(m.u_hat.size() == sm.component_count());
    CHECK(m.frequencies == sm.frequencies);
    for (std::size_t k = 0; k < sm.component_count(); k += 17) {
        cplx want(0.0, 0.0);
        for (std::size_t i = 0; i < ph.values.size(); ++i)
            want += sm.components[k].data[i] * ph.values[i];
        CHECK(std::abs(m.u_hat[k] - want) <= 1e-12 * (1.0 + std::abs(want)));
    }

    Measurement noisy = simulate_measurement(sm, ph, 1e-9, 9);
    CHECK(noisy.u_hat != m.u_hat);
    Measurement same = simulate_measurement(sm, ph, 1e-9, 9);
    CHECK(same.u_hat == noisy.u_hat);

    ConcentrationImage wrong = ConcentrationImage::zeros(Dims3{8, 8, 9});
    CHECK_THROWS_AS(simulate_measurement(sm, wrong, 0.0, 1), DataError);
}

TEST_CASE("phantoms are deterministic non-negative test subjects") {
    Dims3 d{16, 16, 16};

    ConcentrationImage shape = make_phantom(PhantomKind::shape, d);
    double total = 0.0;
    for (double v : shape.values) {
        CHECK(v >= 0.0);
        total += v;
    }
    CHECK(total > 0.0);
    CHECK(shape.at(8, 8, 8) == 1.0); // center of the ellipsoid
    CHECK(shape.at(0, 0, 0) == 0.0); // corner outside
    CHECK(shape.meta.at("phantom") == "shape");

    ConcentrationImage reso = make_phantom(PhantomKind::resolution, d);
    double sum = 0.0;
    for (double v : reso.values) sum += v;
    CHECK(sum == 6.0); // three point pairs

    ConcentrationImage conc = make_phantom(PhantomKind::concentration, d);
    std::set<double> levels(conc.values.begin(), conc.values.end());
    CHECK(levels == std::set<double>{0.0, 0.25, 0.5, 1.0});

    CHECK(phantom_kind_from_string("resolution") == PhantomKind::resolution);
    CHECK_THROWS_AS(phantom_kind_from_string("donut"), ConfigError);
    CHECK_THROWS_AS(make_phantom(PhantomKind::shape, Dims3{7, 8, 8}), ConfigError);
}
