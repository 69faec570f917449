#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "smr/cs.hpp"
#include "smr/dct.hpp"
#include "smr/errors.hpp"

using namespace smr;

namespace {

/// Ground-truth volume that is exactly k-sparse in the DCT basis.
ComplexVolume sparse_in_dct(Dims3 d, int k, std::uint64_t seed) {
    ComplexVolume coef = ComplexVolume::zeros(d);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> pick(0, coef.voxel_count() - 1);
    std::uniform_real_distribution<double> mag(0.5, 2.0);
    std::uniform_real_distribution<double> ph(-M_PI, M_PI);
    int placed = 0;
    while (placed < k) {
        std::int64_t at = pick(rng);
        if (coef.data[std::size_t(at)] != cplx(0.0, 0.0)) continue;
        coef.data[std::size_t(at)] = std::polar(mag(rng), ph(rng));
        ++placed;
    }
    return idct3(coef);
}

double nrmse(const ComplexVolume& got, const ComplexVolume& truth) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < truth.data.size(); ++i) {
        num += std::norm(got.data[i] - truth.data[i]);
        den += std::norm(truth.data[i]);
    }
    return std::sqrt(num / den);
}

} // namespace

TEST_CASE("measurement normalization is peak-magnitude based") {
    std::vector<cplx> y = {cplx(3.0, 4.0), cplx(0.0, -1.0), cplx(2.0, 0.0)};
    auto [n, scale] = normalize_measurement(y);
    CHECK(scale == 5.0);
    CHECK(std::abs(n[0]) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(std::abs(n[i] * scale - y[i]) < 1e-12);

    auto [z, zscale] = normalize_measurement(std::vector<cplx>(4, cplx(0.0, 0.0)));
    CHECK(zscale == 1.0);
    for (const auto& c : z) CHECK(c == cplx(0.0, 0.0));
}

TEST_CASE("cs params validation") {
    CsParams cp;
    CHECK_NOTHROW(cp.validate());
    cp.mu = 0.0;
    CHECK_THROWS_AS(cp.validate(), ConfigError);
    cp = CsParams{};
    cp.outer_iters = 0;
    CHECK_THROWS_AS(cp.validate(), ConfigError);
    cp = CsParams{};
    cp.shrink_weight = -1.0;
    CHECK_THROWS_AS(cp.validate(), ConfigError);
    cp = CsParams{};
    cp.tol = 0.0;
    CHECK_THROWS_AS(cp.validate(), ConfigError);
}

TEST_CASE("full sampling reproduces the input") {
    Dims3 d{6, 6, 6};
    ComplexVolume truth = sparse_in_dct(d, 10, 3);
    SamplingPattern full = regular_pattern(d, 1);
    std::vector<cplx> y = apply_pattern(truth, full);
    CsSolveInfo info;
    ComplexVolume rec = split_bregman(y, full, CsParams{}, &info);
    CHECK(nrmse(rec, truth) < 1e-6);
    CHECK(info.rel_residual <= 1e-6);
    CHECK(info.outer_used >= 1);
    CHECK(std::size_t(info.outer_used) == info.residual_history.size());
}

TEST_CASE("sparse volumes are recovered from half the voxels") {
    Dims3 d{8, 8, 8};
    int hits = 0;
    const int trials = 10;
    for (int t = 0; t < trials; ++t) {
        ComplexVolume truth = sparse_in_dct(d, 3, 100 + std::uint64_t(t));
        SamplingPattern p = poisson_pattern(d, 256, 200 + std::uint64_t(t));
        std::vector<cplx> y = apply_pattern(truth, p);
        ComplexVolume rec = split_bregman(y, p, CsParams{});
        if (nrmse(rec, truth) <= 1e-3) ++hits;
    }
    CHECK(hits >= 9);
}

TEST_CASE("zero measurements short-circuit to a zero volume") {
    Dims3 d{4, 4, 4};
    SamplingPattern p = poisson_pattern(d, 32, 7);
    CsSolveInfo info;
    ComplexVolume rec = split_bregman(std::vector<cplx>(p.count(), cplx(0.0, 0.0)), p,
                                      CsParams{}, &info);
    CHECK(info.zero_input);
    for (const auto& c : rec.data) CHECK(c == cplx(0.0, 0.0));

    CHECK_THROWS_AS(split_bregman(std::vector<cplx>(3, cplx(1.0, 0.0)), p, CsParams{}),
                    DataError);
}

TEST_CASE("matrix recovery is deterministic across job counts") {
    Dims3 d{6, 6, 6};
    SystemMatrix sm;
    for (int k = 0; k < 4; ++k) {
        sm.components.push_back(sparse_in_dct(d, 4, 50 + std::uint64_t(k)));
        sm.frequencies.push_back(1000.0 * (k + 1));
        sm.snr.push_back(8.0);
    }
    SamplingPattern p = poisson_pattern(d, 108, 11);

    SystemMatrix r1 = cs_recover_matrix(sm, p, CsParams{}, 1);
    SystemMatrix r2 = cs_recover_matrix(sm, p, CsParams{}, 2);
    REQUIRE(r1.component_count() == 4);
    CHECK(r1.frequencies == sm.frequencies);
    CHECK(r1.snr == sm.snr);
    CHECK(r1.meta.at("recovery") == "split-bregman");
    for (int k = 0; k < 4; ++k)
        CHECK(r1.components[std::size_t(k)].data == r2.components[std::size_t(k)].data);

    // measurement scale is restored: recovered peak tracks the input peak
    double in_peak = sm.components[0].max_abs();
    double out_peak = r1.components[0].max_abs();
    CHECK(out_peak == doctest::Approx(in_peak).epsilon(1e-2));
}

TEST_CASE("parameter sweep returns the argmin and keeps the earliest tie") {
    Dims3 d{6, 6, 6};
    SystemMatrix sm;
    for (int k = 0; k < 2; ++k) {
        sm.components.push_back(sparse_in_dct(d, 3, 70 + std::uint64_t(k)));
        sm.frequencies.push_back(500.0 * (k + 1));
        sm.snr.push_back(4.0);
    }
    SamplingPattern p = poisson_pattern(d, 108, 13);

    CsParams strong; // defaults converge
    CsParams weak;   // starved solver: one outer iteration cannot converge
    weak.outer_iters = 1;
    weak.inner_iters = 1;
    CsParams roomy = strong; // extra headroom after the tol stop changes nothing
    roomy.outer_iters = strong.outer_iters + 20;

    CsSweepResult sw = cs_param_sweep(sm, p, {weak, strong, roomy}, 1);
    REQUIRE(sw.table.size() == 3);
    CHECK(sw.table[0].mean_nrmse > sw.table[1].mean_nrmse);
    CHECK(sw.table[1].mean_nrmse == sw.table[2].mean_nrmse);
    // argmin is the second entry, not the tied later one
    CHECK(sw.best.outer_iters == strong.outer_iters);
    CHECK(sw.best.mu == strong.mu);
    double best_seen = sw.table[1].mean_nrmse;
    for (const auto& row : sw.table) CHECK(row.mean_nrmse >= best_seen);

    CHECK_THROWS_AS(cs_param_sweep(sm, p, {}, 1), ConfigError);
}
