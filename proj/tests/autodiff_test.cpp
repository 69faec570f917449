#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "smr/autodiff.hpp"
#include "smr/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace smr;

namespace {

Tensor5 randn(Shape5 s, std::uint64_t seed, double stddev = 1.0) {
    std::mt19937_64 rng(seed);
    return Tensor5::randn(s, stddev, rng);
}

/// Builds a fresh graph over copies of `inputs` and returns the scalar loss.
using Builder = std::function<int(Graph&, const std::vector<int>&)>;

double eval_loss(const Builder& build, const std::vector<Tensor5>& inputs) {
    Graph g;
    std::vector<int> ids;
    for (const auto& t : inputs) ids.push_back(g.leaf(t, true));
    return g.value(build(g, ids)).data[0];
}

/// Central-difference check of every element of every input's gradient.
void fd_check(const Builder& build, std::vector<Tensor5> inputs, double tol = 1e-4,
              double h = 1e-5) {
    Graph g;
    std::vector<int> ids;
    for (const auto& t : inputs) ids.push_back(g.leaf(t, true));
    g.backward(build(g, ids));

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor5& an = g.grad(ids[k]);
        for (std::size_t i = 0; i < inputs[k].data.size(); ++i) {
            double keep = inputs[k].data[i];
            inputs[k].data[i] = keep + h;
            double up = eval_loss(build, inputs);
            inputs[k].data[i] = keep - h;
            double dn = eval_loss(build, inputs);
            inputs[k].data[i] = keep;
            double fd = (up - dn) / (2.0 * h);
            double scale = std::max({1.0, std::fabs(fd), std::fabs(an.data[i])});
            CHECK(std::fabs(fd - an.data[i]) / scale <= tol);
        }
    }
}

Builder mse_of(const std::function<int(Graph&, const std::vector<int>&)>& op) {
    return [op](Graph& g, const std::vector<int>& ids) {
        int out = op(g, ids);
        Tensor5 target(g.value(out).shape);
        for (std::size_t i = 0; i < target.data.size(); ++i)
            target.data[i] = 0.1 * double(i % 7) - 0.3;
        return g.mse_loss(out, g.leaf(target, false));
    };
}

/// Independent same-padded cross-correlation, straight from the definition.
Tensor5 naive_conv3d(const Tensor5& x, const Tensor5& w, const Tensor5& b) {
    int pz = (w.shape.z - 1) / 2, py = (w.shape.y - 1) / 2, px = (w.shape.x - 1) / 2;
    Tensor5 out(Shape5{x.shape.n, w.shape.n, x.shape.z, x.shape.y, x.shape.x});
    for (int n = 0; n < x.shape.n; ++n)
        for (int co = 0; co < w.shape.n; ++co)
            for (int oz = 0; oz < x.shape.z; ++oz)
                for (int oy = 0; oy < x.shape.y; ++oy)
                    for (int ox = 0; ox < x.shape.x; ++ox) {
                        double acc = b.data[std::size_t(co)];
                        for (int ci = 0; ci < x.shape.c; ++ci)
                            for (int dz = 0; dz < w.shape.z; ++dz)
                                for (int dy = 0; dy < w.shape.y; ++dy)
                                    for (int dx = 0; dx < w.shape.x; ++dx) {
                                        int iz = oz + dz - pz, iy = oy + dy - py,
                                            ix = ox + dx - px;
                                        if (iz < 0 || iz >= x.shape.z || iy < 0 ||
                                            iy >= x.shape.y || ix < 0 || ix >= x.shape.x)
                                            continue;
                                        acc += w.at(co, ci, dz, dy, dx) *
                                               x.at(n, ci, iz, iy, ix);
                                    }
                        out.at(n, co, oz, oy, ox) = acc;
                    }
    return out;
}

} // namespace

TEST_CASE("conv3d matches the naive definition") {
    struct Case {
        Shape5 xs, ws;
    };
    for (const Case& c : {Case{{2, 3, 4, 3, 2}, {4, 3, 3, 3, 3}},
                          Case{{1, 2, 2, 2, 2}, {2, 2, 1, 1, 1}},
                          Case{{1, 1, 1, 5, 4}, {3, 1, 1, 3, 3}},
                          Case{{1, 4, 4, 4, 4}, {2, 4, 3, 3, 3}},
                          Case{{2, 2, 3, 1, 6}, {2, 2, 3, 1, 5}}}) {
        Tensor5 x = randn(c.xs, 11);
        Tensor5 w = randn(c.ws, 12, 0.5);
        Tensor5 b = randn(Shape5{1, c.ws.n, 1, 1, 1}, 13);
        Tensor5 ref = naive_conv3d(x, w, b);
        Graph g;
        const Tensor5& got =
            g.value(g.conv3d(g.leaf(x, false), g.leaf(w, false), g.leaf(b, false)));
        REQUIRE(got.shape == ref.shape);
        for (std::size_t i = 0; i < ref.data.size(); ++i)
            CHECK(got.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv3d hand case along one axis") {
    Tensor5 x(Shape5{1, 1, 1, 1, 3});
    x.data = {1.0, 2.0, 3.0};
    Tensor5 w(Shape5{1, 1, 1, 1, 3});
    w.data = {0.5, 1.0, -1.0};
    Tensor5 b(Shape5{1, 1, 1, 1, 1});
    b.data = {0.25};
    Graph g;
    const Tensor5& out =
        g.value(g.conv3d(g.leaf(x, false), g.leaf(w, false), g.leaf(b, false)));
    CHECK(out.data[0] == doctest::Approx(-0.75));
    CHECK(out.data[1] == doctest::Approx(-0.25));
    CHECK(out.data[2] == doctest::Approx(4.25));
}

TEST_CASE("conv3d gradients pass finite differences") {
    auto conv = [](Graph& g, const std::vector<int>& ids) {
        return g.conv3d(ids[0], ids[1], ids[2]);
    };
    SUBCASE("cubic 3x3x3 kernel") {
        fd_check(mse_of(conv), {randn(Shape5{2, 2, 3, 3, 3}, 21),
                                randn(Shape5{3, 2, 3, 3, 3}, 22, 0.5),
                                randn(Shape5{1, 3, 1, 1, 1}, 23)});
    }
    SUBCASE("non-cubic volume, mixed kernel") {
        fd_check(mse_of(conv), {randn(Shape5{1, 3, 2, 4, 3}, 24),
                                randn(Shape5{2, 3, 1, 3, 3}, 25, 0.5),
                                randn(Shape5{1, 2, 1, 1, 1}, 26)});
    }
    SUBCASE("1x1x1 kernel") {
        fd_check(mse_of(conv), {randn(Shape5{2, 3, 2, 2, 2}, 27),
                                randn(Shape5{2, 3, 1, 1, 1}, 28, 0.5),
                                randn(Shape5{1, 2, 1, 1, 1}, 29)});
    }
}

TEST_CASE("elementwise op gradients pass finite differences") {
    SUBCASE("leaky_relu away from the kink") {
        Tensor5 x = randn(Shape5{2, 2, 2, 2, 2}, 31);
        for (auto& v : x.data) v += (v >= 0.0 ? 0.5 : -0.5); // keep |x| > h
        fd_check(mse_of([](Graph& g, const std::vector<int>& ids) {
                     return g.leaky_relu(ids[0], 0.2);
                 }),
                 {x});
    }
    SUBCASE("add") {
        fd_check(mse_of([](Graph& g, const std::vector<int>& ids) {
                     return g.add(ids[0], ids[1]);
                 }),
                 {randn(Shape5{1, 2, 2, 2, 2}, 32), randn(Shape5{1, 2, 2, 2, 2}, 33)});
    }
    SUBCASE("scale") {
        fd_check(mse_of([](Graph& g, const std::vector<int>& ids) {
                     return g.scale(ids[0], -0.7);
                 }),
                 {randn(Shape5{1, 2, 2, 2, 2}, 34)});
    }
    SUBCASE("concat_channels") {
        fd_check(mse_of([](Graph& g, const std::vector<int>& ids) {
                     return g.concat_channels({ids[0], ids[1], ids[2]});
                 }),
                 {randn(Shape5{2, 1, 2, 2, 2}, 35), randn(Shape5{2, 3, 2, 2, 2}, 36),
                  randn(Shape5{2, 2, 2, 2, 2}, 37)});
    }
    SUBCASE("mse_loss both arguments") {
        fd_check(
            [](Graph& g, const std::vector<int>& ids) {
                return g.mse_loss(ids[0], ids[1]);
            },
            {randn(Shape5{1, 2, 3, 2, 2}, 38), randn(Shape5{1, 2, 3, 2, 2}, 39)});
    }
}

TEST_CASE("nn_upsample gradients and values") {
    SUBCASE("factor 2 value layout") {
        Tensor5 x(Shape5{1, 1, 1, 2, 2});
        x.data = {1.0, 2.0, 3.0, 4.0};
        Graph g;
        const Tensor5& out = g.value(g.nn_upsample(g.leaf(x, false), 2));
        REQUIRE(out.shape == Shape5{1, 1, 2, 4, 4});
        // Every source voxel becomes a 2x2x2 block.
        for (int z = 0; z < 2; ++z)
            for (int y = 0; y < 4; ++y)
                for (int x2 = 0; x2 < 4; ++x2)
                    CHECK(out.at(0, 0, z, y, x2) ==
                          doctest::Approx(x.at(0, 0, 0, y / 2, x2 / 2)));
    }
    for (int f : {2, 3}) {
        CAPTURE(f);
        fd_check(mse_of([f](Graph& g, const std::vector<int>& ids) {
                     return g.nn_upsample(ids[0], f);
                 }),
                 {randn(Shape5{1, 2, 2, 2, 2}, 40 + std::uint64_t(f))});
    }
}

TEST_CASE("fan-out accumulates gradients from every consumer") {
    // x feeds two branches; d/dx of mse(x + x, t) + reuse in concat must sum.
    fd_check(
        [](Graph& g, const std::vector<int>& ids) {
            int s = g.add(ids[0], g.scale(ids[0], 0.5));
            int c = g.concat_channels({s, ids[0]});
            Tensor5 target(g.value(c).shape);
            for (std::size_t i = 0; i < target.data.size(); ++i)
                target.data[i] = 0.05 * double(i % 5);
            return g.mse_loss(c, g.leaf(target, false));
        },
        {randn(Shape5{1, 2, 2, 2, 2}, 50)});
}

TEST_CASE("dense-block composition passes finite differences") {
    fd_check(
        [](Graph& g, const std::vector<int>& ids) {
            int c1 = g.leaky_relu(g.conv3d(ids[0], ids[1], ids[2]), 0.2);
            int cat = g.concat_channels({ids[0], c1});
            int c2 = g.conv3d(cat, ids[3], ids[4]);
            int out = g.add(ids[0], g.scale(c2, 0.2));
            Tensor5 target(g.value(out).shape);
            return g.mse_loss(out, g.leaf(target, false));
        },
        {randn(Shape5{1, 2, 2, 2, 2}, 60), randn(Shape5{2, 2, 3, 3, 3}, 61, 0.4),
         randn(Shape5{1, 2, 1, 1, 1}, 62), randn(Shape5{2, 4, 3, 3, 3}, 63, 0.4),
         randn(Shape5{1, 2, 1, 1, 1}, 64)});
}

TEST_CASE("adam_step matches a reference implementation") {
    Tensor5 p(Shape5{1, 1, 1, 1, 4}), gr(Shape5{1, 1, 1, 1, 4});
    p.data = {1.0, -2.0, 0.5, 3.0};
    gr.data = {0.3, -0.1, 0.0, 2.0};
    Tensor5 m(p.shape), v(p.shape);
    AdamConfig cfg;
    cfg.lr = 1e-2;

    std::vector<double> rp = p.data, rm(4, 0.0), rv(4, 0.0);
    for (std::int64_t t = 1; t <= 3; ++t) {
        adam_step(p, gr, m, v, t, cfg);
        for (int i = 0; i < 4; ++i) {
            rm[std::size_t(i)] =
                cfg.beta1 * rm[std::size_t(i)] + (1 - cfg.beta1) * gr.data[std::size_t(i)];
            rv[std::size_t(i)] = cfg.beta2 * rv[std::size_t(i)] +
                                 (1 - cfg.beta2) * gr.data[std::size_t(i)] *
                                     gr.data[std::size_t(i)];
            double mh = rm[std::size_t(i)] / (1 - std::pow(cfg.beta1, double(t)));
            double vh = rv[std::size_t(i)] / (1 - std::pow(cfg.beta2, double(t)));
            rp[std::size_t(i)] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
            CHECK(p.data[std::size_t(i)] == doctest::Approx(rp[std::size_t(i)]).epsilon(1e-14));
        }
        // Bias correction makes every step move by almost exactly lr per unit sign.
        if (t == 1) CHECK(std::fabs(rp[0] - (1.0 - cfg.lr)) < 1e-5);
    }
}

TEST_CASE("adam_step rejects bad shapes and t") {
    Tensor5 p(Shape5{1, 1, 1, 1, 2}), g2(Shape5{1, 1, 1, 1, 3});
    Tensor5 m(p.shape), v(p.shape);
    CHECK_THROWS_AS(adam_step(p, g2, m, v, 1, AdamConfig{}), DataError);
    Tensor5 g3(p.shape);
    CHECK_THROWS_AS(adam_step(p, g3, m, v, 0, AdamConfig{}), ConfigError);
}

TEST_CASE("graph error paths") {
    Graph g;
    Tensor5 x = randn(Shape5{1, 1, 1, 1, 3}, 70);
    int xi = g.leaf(x, true);
    int loss = g.mse_loss(xi, g.leaf(Tensor5(x.shape), false));

    CHECK_THROWS_AS(g.grad(xi), DataError);      // before backward
    CHECK_THROWS_AS(g.backward(xi), ConfigError); // non-scalar root
    g.backward(loss);
    CHECK_THROWS_AS(g.backward(loss), ConfigError); // already swept
    CHECK_NOTHROW(g.grad(xi));

    Graph g2;
    int a = g2.leaf(x, false); // requires_grad unset
    int l2 = g2.mse_loss(a, g2.leaf(Tensor5(x.shape), false));
    g2.backward(l2);
    CHECK_THROWS_AS(g2.grad(a), DataError);

    CHECK_THROWS_AS(g.value(99), DataError);
}

TEST_CASE("conv3d rejects malformed weights") {
    Graph g;
    int x = g.leaf(randn(Shape5{1, 2, 2, 2, 2}, 80), false);
    int w_even = g.leaf(randn(Shape5{2, 2, 2, 3, 3}, 81), false);
    int b = g.leaf(Tensor5(Shape5{1, 2, 1, 1, 1}), false);
    CHECK_THROWS_AS(g.conv3d(x, w_even, b), ConfigError);

    int w_chan = g.leaf(randn(Shape5{2, 3, 3, 3, 3}, 82), false);
    CHECK_THROWS_AS(g.conv3d(x, w_chan, b), DataError);

    int w_ok = g.leaf(randn(Shape5{2, 2, 3, 3, 3}, 83), false);
    int b_bad = g.leaf(Tensor5(Shape5{1, 3, 1, 1, 1}), false);
    CHECK_THROWS_AS(g.conv3d(x, w_ok, b_bad), DataError);
}

TEST_CASE("tensor check rejects non-finite values") {
    Tensor5 t(Shape5{1, 1, 1, 1, 2});
    CHECK_NOTHROW(t.check());
    t.data[1] = std::nan("");
    CHECK_THROWS_AS(t.check(), DataError);
}

#ifdef _OPENMP
TEST_CASE("gradients are identical across thread counts") {
    Tensor5 x = randn(Shape5{3, 2, 3, 3, 3}, 90);
    Tensor5 w = randn(Shape5{2, 2, 3, 3, 3}, 91, 0.5);
    Tensor5 b = randn(Shape5{1, 2, 1, 1, 1}, 92);

    auto run = [&](int threads) {
        omp_set_num_threads(threads);
        Graph g;
        int wi = g.leaf(w, true), bi = g.leaf(b, true);
        int out = g.conv3d(g.leaf(x, false), wi, bi);
        Tensor5 target(g.value(out).shape);
        g.backward(g.mse_loss(out, g.leaf(target, false)));
        return std::pair<Tensor5, Tensor5>(g.grad(wi), g.grad(bi));
    };
    int before = omp_get_max_threads();
    auto [w1, b1] = run(1);
    auto [w3, b3] = run(3);
    omp_set_num_threads(before);
    for (std::size_t i = 0; i < w1.data.size(); ++i) CHECK(w1.data[i] == w3.data[i]);
    for (std::size_t i = 0; i < b1.data.size(); ++i) CHECK(b1.data[i] == b3.data[i]);
}
#endif
