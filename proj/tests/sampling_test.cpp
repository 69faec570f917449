#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "smr/errors.hpp"
#include "smr/sampling.hpp"

using namespace smr;

namespace {

Idx3 unravel(std::int64_t idx, Dims3 d) {
    Idx3 p;
    p.x = int(idx % d.x);
    p.y = int((idx / d.x) % d.y);
    p.z = int(idx / (std::int64_t(d.x) * d.y));
    return p;
}

ComplexVolume counting_volume(Dims3 d) {
    ComplexVolume v = ComplexVolume::zeros(d);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = cplx(double(i) + 1.0, -0.5 * double(i) - 2.0);
    return v;
}

} // namespace

TEST_CASE("regular pattern counts at the canonical reduction rates") {
    Dims3 d{40, 40, 40};
    CHECK(regular_pattern(d, 2).count() == 20u * 20 * 20); //  8x
    CHECK(regular_pattern(d, 3).count() == 14u * 14 * 14); // ~27x, ceil(40/3)
    CHECK(regular_pattern(d, 4).count() == 10u * 10 * 10); // 64x

    CHECK(regular_lr_dims(d, 3, Idx3{0, 0, 0}) == Dims3{14, 14, 14});
    CHECK(regular_lr_dims(d, 3, Idx3{1, 1, 1}) == Dims3{13, 13, 13});
    CHECK(regular_lr_dims(Dims3{9, 9, 9}, 2, Idx3{1, 1, 1}) == Dims3{4, 4, 4});
}

TEST_CASE("regular pattern indices follow offset + stride * j") {
    SamplingPattern p = regular_pattern(Dims3{40, 40, 40}, 3, Idx3{1, 1, 1});
    CHECK_NOTHROW(p.validate());
    CHECK(p.count() == 13u * 13 * 13);
    std::set<int> coords;
    for (std::int64_t idx : p.indices) {
        Idx3 q = unravel(idx, p.hr_dims);
        CHECK((q.x - 1) % 3 == 0);
        CHECK((q.y - 1) % 3 == 0);
        CHECK((q.z - 1) % 3 == 0);
        coords.insert(q.x);
    }
    // per-axis sites are 1, 4, ..., 37
    std::set<int> expect;
    for (int x = 1; x < 40; x += 3) expect.insert(x);
    CHECK(coords == expect);
    CHECK(std::is_sorted(p.indices.begin(), p.indices.end()));

    CHECK_THROWS_AS(regular_pattern(Dims3{8, 8, 8}, 2, Idx3{2, 0, 0}), ConfigError);
    CHECK_THROWS_AS(regular_pattern(Dims3{8, 8, 8}, 9), ConfigError);
    CHECK_THROWS_AS(regular_pattern(Dims3{8, 8, 8}, 0), ConfigError);
}

TEST_CASE("apply, scatter and gather agree on a counting volume") {
    Dims3 d{6, 5, 4};
    ComplexVolume v = counting_volume(d);
    SamplingPattern p = regular_pattern(d, 2);

    std::vector<cplx> y = apply_pattern(v, p);
    REQUIRE(y.size() == p.count());
    for (std::size_t j = 0; j < y.size(); ++j)
        CHECK(y[j] == v.data[std::size_t(p.indices[j])]);

    ComplexVolume zf = scatter_pattern(y, p);
    CHECK(zf.dims == d);
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < zf.data.size(); ++i)
        if (zf.data[i] != cplx(0.0, 0.0)) {
            ++nonzero;
            CHECK(zf.data[i] == v.data[i]);
        }
    CHECK(nonzero == p.count());

    ComplexVolume lr = gather_lr_volume(v, p);
    CHECK(lr.dims == Dims3{3, 3, 2});
    for (int z = 0; z < 2; ++z)
        for (int yy = 0; yy < 3; ++yy)
            for (int x = 0; x < 3; ++x)
                CHECK(lr.at(x, yy, z) == v.at(2 * x, 2 * yy, 2 * z));

    SamplingPattern pois = poisson_pattern(d, 30, 1);
    CHECK_THROWS_AS(gather_lr_volume(v, pois), ConfigError);

    ComplexVolume wrong = counting_volume(Dims3{6, 5, 5});
    CHECK_THROWS_AS(apply_pattern(wrong, p), DataError);
}

TEST_CASE("poisson pattern hits the count with corners and spacing") {
    Dims3 d{16, 16, 16};
    const std::int64_t target = 300;
    SamplingPattern p = poisson_pattern(d, target, 99);
    CHECK_NOTHROW(p.validate());
    CHECK(p.kind == SamplingPattern::Kind::poisson);
    CHECK(std::int64_t(p.count()) == target);
    CHECK(p.radius > 0.0);

    // the 8 field-of-view corners are always sampled
    for (int cz : {0, 15})
        for (int cy : {0, 15})
            for (int cx : {0, 15}) {
                std::int64_t idx = (std::int64_t(cz) * 16 + cy) * 16 + cx;
                CHECK(std::binary_search(p.indices.begin(), p.indices.end(), idx));
            }

    // brute-force min distance among non-adjusted points
    std::set<std::int64_t> adj(p.adjusted.begin(), p.adjusted.end());
    for (std::int64_t a : p.adjusted)
        CHECK(std::binary_search(p.indices.begin(), p.indices.end(), a));
    std::vector<Idx3> pts;
    for (std::int64_t idx : p.indices)
        if (!adj.count(idx)) pts.push_back(unravel(idx, d));
    double min_d2 = 1e30;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            double dx = pts[i].x - pts[j].x, dy = pts[i].y - pts[j].y,
                   dz = pts[i].z - pts[j].z;
            min_d2 = std::min(min_d2, dx * dx + dy * dy + dz * dz);
        }
    CHECK(min_d2 >= p.radius * p.radius - 1e-9);

    SamplingPattern p2 = poisson_pattern(d, target, 99);
    CHECK(p2.indices == p.indices); // deterministic in the seed
    SamplingPattern p3 = poisson_pattern(d, target, 100);
    CHECK(p3.indices != p.indices);

    // below 8 the corner rule is waived but the count still holds
    CHECK(poisson_pattern(d, 7, 1).count() == 7);
    CHECK_THROWS_AS(poisson_pattern(d, 0, 1), ConfigError);
    CHECK_THROWS_AS(poisson_pattern(d, 5000, 1), ConfigError); // above voxel count
}

TEST_CASE("trilinear upsampling reproduces linear fields") {
    // a trilinear interpolant is exact on f(x,y,z) = a + bx + cy + dz (+ cross
    // terms) wherever the query sits inside the sample hull
    Dims3 ld{4, 4, 4}, hd{8, 8, 8};
    ComplexVolume lr = ComplexVolume::zeros(ld);
    auto f = [](double x, double y, double z) {
        return cplx(1.0 + 2.0 * x - 0.5 * y + 0.25 * z + 0.1 * x * y,
                    -3.0 + 0.75 * z + 0.2 * x * z);
    };

    SUBCASE("stride-aligned variant is exact on the aligned lattice") {
        int stride = 2;
        Idx3 off{0, 0, 0};
        for (int z = 0; z < ld.z; ++z)
            for (int y = 0; y < ld.y; ++y)
                for (int x = 0; x < ld.x; ++x)
                    lr.at(x, y, z) = f(off.x + stride * x, off.y + stride * y,
                                       off.z + stride * z);
        ComplexVolume up = trilinear_upsample(lr, hd, stride, off);
        CHECK(up.dims == hd);
        // inside the hull [0, 6]^3 the interpolation is exact; beyond it the
        // edge clamp holds the last value
        for (int z = 0; z < hd.z; ++z)
            for (int y = 0; y < hd.y; ++y)
                for (int x = 0; x < hd.x; ++x) {
                    double qx = std::min(double(x), 6.0), qy = std::min(double(y), 6.0),
                           qz = std::min(double(z), 6.0);
                    CHECK(std::abs(up.at(x, y, z) - f(qx, qy, qz)) < 1e-12);
                }

        // samples themselves are reproduced exactly
        for (int z = 0; z < ld.z; ++z)
            for (int y = 0; y < ld.y; ++y)
                for (int x = 0; x < ld.x; ++x)
                    CHECK(up.at(2 * x, 2 * y, 2 * z) == lr.at(x, y, z));
    }

    SUBCASE("offset variant lands samples on offset + stride * j") {
        int stride = 3;
        Idx3 off{1, 1, 1};
        Dims3 hd2{9, 9, 9};
        ComplexVolume lr2 = ComplexVolume::zeros(Dims3{3, 3, 3});
        for (int z = 0; z < 3; ++z)
            for (int y = 0; y < 3; ++y)
                for (int x = 0; x < 3; ++x)
                    lr2.at(x, y, z) = f(1 + 3 * x, 1 + 3 * y, 1 + 3 * z);
        ComplexVolume up = trilinear_upsample(lr2, hd2, stride, off);
        for (int z = 0; z < 3; ++z)
            for (int y = 0; y < 3; ++y)
                for (int x = 0; x < 3; ++x)
                    CHECK(std::abs(up.at(1 + 3 * x, 1 + 3 * y, 1 + 3 * z) -
                                   lr2.at(x, y, z)) < 1e-12);
    }

    SUBCASE("center-aligned variant matches a hand oracle in 1-D") {
        // 2 samples stretched to 4: centers align at x_lr = (x_hr+0.5)/2-0.5
        ComplexVolume line = ComplexVolume::zeros(Dims3{2, 1, 1});
        line.at(0, 0, 0) = cplx(1.0, 0.0);
        line.at(1, 0, 0) = cplx(3.0, 0.0);
        ComplexVolume up = trilinear_upsample(line, Dims3{4, 1, 1});
        CHECK(std::abs(up.at(0, 0, 0) - cplx(1.0, 0.0)) < 1e-12);  // clamped
        CHECK(std::abs(up.at(1, 0, 0) - cplx(1.5, 0.0)) < 1e-12);  // x_lr = 0.25
        CHECK(std::abs(up.at(2, 0, 0) - cplx(2.5, 0.0)) < 1e-12);  // x_lr = 0.75
        CHECK(std::abs(up.at(3, 0, 0) - cplx(3.0, 0.0)) < 1e-12);  // clamped
    }
}

TEST_CASE("pattern json roundtrips with and without indices") {
    SUBCASE("regular, parameters only") {
        SamplingPattern p = regular_pattern(Dims3{12, 10, 8}, 2, Idx3{1, 0, 1});
        std::string js = pattern_to_json(p);
        CHECK(js.find("\"indices\"") == std::string::npos);
        SamplingPattern q = pattern_from_json(js);
        CHECK(q.kind == p.kind);
        CHECK(q.hr_dims == p.hr_dims);
        CHECK(q.stride == p.stride);
        CHECK(q.offset == p.offset);
        CHECK(q.indices == p.indices); // regenerated
    }

    SUBCASE("poisson, parameters only regenerates the same draw") {
        SamplingPattern p = poisson_pattern(Dims3{10, 10, 10}, 80, 5);
        SamplingPattern q = pattern_from_json(pattern_to_json(p));
        CHECK(q.indices == p.indices);
        CHECK(q.adjusted == p.adjusted);
        CHECK(q.radius == doctest::Approx(p.radius).epsilon(1e-12));
    }

    SUBCASE("explicit indices win over regeneration") {
        SamplingPattern p = poisson_pattern(Dims3{10, 10, 10}, 80, 5);
        std::string js = pattern_to_json(p, true);
        CHECK(js.find("\"indices\"") != std::string::npos);
        SamplingPattern q = pattern_from_json(js);
        CHECK(q.indices == p.indices);
    }

    CHECK_THROWS_AS(pattern_from_json("{\"kind\":\"hexagonal\"}"), DataError);
    CHECK_THROWS_AS(pattern_from_json("not json"), DataError);
}

TEST_CASE("pattern validation catches broken invariants") {
    SamplingPattern p = regular_pattern(Dims3{8, 8, 8}, 2);

    SamplingPattern bad = p;
    std::swap(bad.indices[0], bad.indices[1]); // not increasing
    CHECK_THROWS_AS(bad.validate(), DataError);

    bad = p;
    bad.indices.back() = 8 * 8 * 8; // out of range
    CHECK_THROWS_AS(bad.validate(), DataError);

    bad = p;
    bad.indices.pop_back(); // regular count mismatch
    CHECK_THROWS_AS(bad.validate(), DataError);

    bad = p;
    bad.stride = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
