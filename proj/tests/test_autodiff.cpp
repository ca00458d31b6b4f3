#include <doctest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "volsr/autodiff.hpp"
#include "volsr/errors.hpp"
#include "volsr/rng.hpp"

using namespace volsr;
using ad::Graph;
using ad::Shape;
using ad::Tensor;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                  double hi = 1.0) {
    std::vector<double> v(n);
    Rng rng(seed);
    for (double& d : v) d = rng.uniform(lo, hi);
    return v;
}

// Keeps relu inputs away from the kink at 0 so finite differences are valid.
std::vector<double> nudged_values(std::size_t n, std::uint64_t seed) {
    std::vector<double> v = random_values(n, seed);
    for (double& d : v)
        if (std::abs(d) < 0.02) d = d < 0 ? -0.05 : 0.05;
    return v;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("conv3d closed forms") {
    SUBCASE("1-voxel convolution: 3*2+1 = 7") {
        Graph g;
        double xv[] = {3.0}, wv[] = {2.0}, bv[] = {1.0};
        Tensor x = g.leaf({1, 1, 1, 1, 1}, std::span<const double>(xv, 1), true);
        Tensor w = g.leaf({1, 1, 1, 1, 1}, std::span<const double>(wv, 1), true);
        Tensor b = g.leaf({1}, std::span<const double>(bv, 1), true);
        Tensor y = g.conv3d(x, w, b, {0, 0, 0});
        CHECK(y.value()[0] == doctest::Approx(7.0));
    }
    SUBCASE("all-ones kernel with padding counts in-bounds taps") {
        Graph g;
        std::vector<double> xv(4 * 4 * 4, 1.0), wv(27, 1.0), bv{0.0};
        Tensor x = g.leaf({1, 1, 4, 4, 4}, xv, false);
        Tensor w = g.leaf({1, 1, 3, 3, 3}, wv, false);
        Tensor b = g.leaf({1}, bv, false);
        Tensor y = g.conv3d(x, w, b, {1, 1, 1});
        auto v = y.value();
        // center voxel (2,2,2) sees all 27 taps; corner (0,0,0) sees 8
        CHECK(v[(2 * 4 + 2) * 4 + 2] == doctest::Approx(27.0));
        CHECK(v[0] == doctest::Approx(8.0));
    }
    SUBCASE("random convolution matches the direct-summation oracle") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Graph g;
            auto xv = random_values(static_cast<std::size_t>(1) * 2 * 4 * 4 * 3, seed);
            auto wv = random_values(static_cast<std::size_t>(3) * 2 * 3 * 3 * 3, 50 + seed);
            auto bv = random_values(3, 90 + seed);
            Tensor x = g.leaf({1, 2, 4, 4, 3}, xv, false);
            Tensor w = g.leaf({3, 2, 3, 3, 3}, wv, false);
            Tensor b = g.leaf({3}, bv, false);
            Tensor y = g.conv3d(x, w, b, {1, 1, 1});
            auto expected =
                oracles::brute_conv3d(xv, wv, bv, 1, 2, 4, 4, 3, 3, 3, 3, 3, 1, 1, 1);
            auto got = y.value();
            for (std::size_t i = 0; i < expected.size(); ++i)
                CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
        }
    }
    SUBCASE("shape errors") {
        Graph g;
        auto xv = random_values(16, 1);
        auto wv = random_values(27 * 2, 2);
        Tensor x = g.leaf({1, 1, 4, 2, 2}, xv, false);
        Tensor w = g.leaf({1, 2, 3, 3, 3}, wv, false);  // channel mismatch
        CHECK_THROWS_AS(g.conv3d(x, w, Tensor{}, {1, 1, 1}), ShapeError);
        auto wv2 = random_values(125, 3);
        Tensor w2 = g.leaf({1, 1, 5, 5, 5}, wv2, false);  // kernel larger than padded input
        CHECK_THROWS_AS(g.conv3d(x, w2, Tensor{}, {1, 1, 1}), ShapeError);
    }
}

TEST_CASE("elementwise closed forms") {
    Graph g;
    double av[] = {-1.0, 0.0, 2.0};
    Tensor a = g.leaf({3}, std::span<const double>(av, 3), true);
    Tensor r = g.relu(a);
    CHECK(r.value()[0] == 0.0);
    CHECK(r.value()[1] == 0.0);
    CHECK(r.value()[2] == 2.0);
    Tensor loss = g.sum(r);
    g.backward(loss);
    CHECK(a.grad()[0] == 0.0);
    CHECK(a.grad()[1] == 0.0);  // subgradient at exactly 0 is 0
    CHECK(a.grad()[2] == 1.0);
}

TEST_CASE("mul backward routes each operand's partner value") {
    Graph g;
    double av[] = {2.0}, bv[] = {3.0};
    Tensor a = g.leaf({1}, std::span<const double>(av, 1), true);
    Tensor b = g.leaf({1}, std::span<const double>(bv, 1), true);
    Tensor y = g.mul(a, b);
    g.backward(y);
    CHECK(a.grad()[0] == doctest::Approx(3.0));
    CHECK(b.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("mean backward spreads 1/n") {
    Graph g;
    double av[] = {1.0, 2.0, 3.0, 4.0};
    Tensor a = g.leaf({4}, std::span<const double>(av, 4), true);
    Tensor m = g.mean(a);
    CHECK(m.value()[0] == doctest::Approx(2.5));
    g.backward(m);
    for (int i = 0; i < 4; ++i) CHECK(a.grad()[i] == doctest::Approx(0.25));
}

TEST_CASE("concat splits gradients by channel") {
    Graph g;
    auto av = random_values(2 * 2 * 2 * 2, 1);
    auto bv = random_values(3 * 2 * 2 * 2, 2);
    Tensor a = g.leaf({1, 2, 2, 2, 2}, av, true);
    Tensor b = g.leaf({1, 3, 2, 2, 2}, bv, true);
    Tensor c = g.concat_channels(a, b);
    CHECK(c.shape() == Shape{1, 5, 2, 2, 2});
    Tensor loss = g.sum(g.square(c));
    g.backward(loss);
    for (std::size_t i = 0; i < av.size(); ++i)
        CHECK(a.grad()[i] == doctest::Approx(2.0 * av[i]));
    for (std::size_t i = 0; i < bv.size(); ++i)
        CHECK(b.grad()[i] == doctest::Approx(2.0 * bv[i]));
}

TEST_CASE("crop_center backward zero-pads") {
    Graph g;
    auto av = random_values(8 * 8 * 8, 3);
    Tensor a = g.leaf({1, 1, 8, 8, 8}, av, true);
    Tensor c = g.crop_center(a, {6, 6, 6});
    Tensor loss = g.sum(c);
    g.backward(loss);
    // offset (8-6)/2 = 1 per axis; gradient 1 inside the window, 0 outside
    for (int z = 0; z < 8; ++z)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                const bool inside = z >= 1 && z < 7 && y >= 1 && y < 7 && x >= 1 && x < 7;
                CHECK(a.grad()[(z * 8 + y) * 8 + x] == (inside ? 1.0 : 0.0));
            }
}

TEST_CASE("diamond graph sums both paths") {
    Graph g;
    double xv[] = {3.0};
    Tensor x = g.leaf({1}, std::span<const double>(xv, 1), true);
    Tensor y = g.add(g.square(x), g.square(x));  // uses x twice
    g.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(12.0));  // 2*2x
}

TEST_CASE("x squared at 3 has gradient 6") {
    Graph g;
    double xv[] = {3.0};
    Tensor x = g.leaf({1}, std::span<const double>(xv, 1), true);
    Tensor y = g.square(x);
    g.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar roots") {
    Graph g;
    auto av = random_values(4, 4);
    Tensor a = g.leaf({4}, av, true);
    Tensor b = g.scale(a, 2.0);
    CHECK_THROWS_AS(g.backward(b), ValidationError);
}

TEST_CASE("scalar broadcast rules") {
    Graph g;
    auto av = random_values(6, 5);
    Tensor a = g.leaf({6}, av, true);
    Tensor s = g.scalar(2.5);
    Tensor y = g.mul(a, s);
    for (std::size_t i = 0; i < 6; ++i) CHECK(y.value()[i] == doctest::Approx(2.5 * av[i]));
    auto bv = random_values(4, 6);
    Tensor b = g.leaf({4}, bv, true);
    CHECK_THROWS_AS(g.add(a, b), ShapeError);
}

TEST_CASE("linear function gradient check is near machine precision") {
    auto point = random_values(16, 7);
    double err = ad::grad_check(
        {16}, point, [](Graph& g, Tensor x) { return g.sum(x); });
    CHECK(err < 1e-10);
}

TEST_CASE("gradient checks for every operator") {
    // conv3d w.r.t. input, weight and bias
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Shape xs{1, 2, 3, 4, 4};
        const Shape ws{2, 2, 3, 3, 3};
        auto xv = random_values(ad::numel(xs), seed);
        auto wv = random_values(ad::numel(ws), 100 + seed);
        auto bv = random_values(2, 200 + seed);

        double e_in = ad::grad_check(xs, xv, [&](Graph& g, Tensor x) {
            Tensor w = g.constant(ws, wv);
            Tensor b = g.constant({2}, bv);
            return g.mean(g.square(g.conv3d(x, w, b, {1, 1, 1})));
        });
        CHECK(e_in < 1e-6);

        double e_w = ad::grad_check(ws, wv, [&](Graph& g, Tensor w) {
            Tensor x = g.constant(xs, xv);
            Tensor b = g.constant({2}, bv);
            return g.mean(g.square(g.conv3d(x, w, b, {1, 1, 1})));
        });
        CHECK(e_w < 1e-6);

        double e_b = ad::grad_check({2}, bv, [&](Graph& g, Tensor b) {
            Tensor x = g.constant(xs, xv);
            Tensor w = g.constant(ws, wv);
            return g.mean(g.square(g.conv3d(x, w, b, {1, 1, 1})));
        });
        CHECK(e_b < 1e-6);
    }

    // elementwise, reductions, reshaping
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Shape s{1, 2, 2, 3, 4};
        const std::size_t n = ad::numel(s);
        auto xv = nudged_values(n, 300 + seed);
        auto yv = random_values(n, 400 + seed, 0.5, 1.5);  // positive divisor

        auto check = [&](auto build) {
            double err = ad::grad_check(s, xv, build);
            CHECK(err < 1e-6);
        };

        check([&](Graph& g, Tensor x) { return g.mean(g.add(x, g.constant(s, yv))); });
        check([&](Graph& g, Tensor x) { return g.mean(g.sub(x, g.constant(s, yv))); });
        check([&](Graph& g, Tensor x) { return g.mean(g.mul(x, g.constant(s, yv))); });
        check([&](Graph& g, Tensor x) { return g.mean(g.div(x, g.constant(s, yv))); });
        check([&](Graph& g, Tensor x) { return g.mean(g.scale(x, -1.7)); });
        check([&](Graph& g, Tensor x) { return g.mean(g.relu(x)); });
        check([&](Graph& g, Tensor x) { return g.mean(g.square(x)); });
        check([&](Graph& g, Tensor x) { return g.mean(g.sqrt_eps(g.square(x), 1e-3)); });
        check([&](Graph& g, Tensor x) { return g.sum(g.scale(x, 0.1)); });
        check([&](Graph& g, Tensor x) {
            return g.mean(g.concat_channels(x, g.constant(s, yv)));
        });
        check([&](Graph& g, Tensor x) { return g.mean(g.crop_center(x, {2, 2, 2})); });
        check([&](Graph& g, Tensor x) { return g.mean(g.stride2_subsample(x)); });
        check([&](Graph& g, Tensor x) { return g.mean(g.channel_unit_normalize(x, 1e-6)); });
        check([&](Graph& g, Tensor x) {
            // scalar broadcast against a {1} tensor
            return g.mean(g.mul(x, g.scalar(0.7)));
        });
    }
}

TEST_CASE("backward is deterministic") {
    const Shape s{1, 2, 3, 3, 3};
    auto xv = random_values(ad::numel(s), 9);
    auto wv = random_values(2 * 2 * 27, 10);

    auto run = [&]() {
        Graph g;
        Tensor x = g.leaf(s, xv, true);
        Tensor w = g.leaf({2, 2, 3, 3, 3}, wv, true);
        Tensor loss = g.mean(g.square(g.conv3d(x, w, Tensor{}, {1, 1, 1})));
        g.backward(loss);
        std::vector<double> grads(x.grad().begin(), x.grad().end());
        grads.insert(grads.end(), w.grad().begin(), w.grad().end());
        return grads;
    };
    auto g1 = run();
    auto g2 = run();
    CHECK(g1 == g2);  // bit-identical
}

TEST_CASE("gradient is linear in the loss") {
    const Shape s{8};
    auto xv = random_values(8, 11);
    const double a = 1.3, b = -0.7;

    auto grad_of = [&](auto build) {
        Graph g;
        Tensor x = g.leaf(s, xv, true);
        g.backward(build(g, x));
        return std::vector<double>(x.grad().begin(), x.grad().end());
    };
    auto gf = grad_of([](Graph& g, Tensor x) { return g.mean(g.square(x)); });
    auto gg = grad_of([](Graph& g, Tensor x) { return g.sum(g.relu(x)); });
    auto gc = grad_of([&](Graph& g, Tensor x) {
        return g.add(g.scale(g.mean(g.square(x)), a), g.scale(g.sum(g.relu(x)), b));
    });
    for (int i = 0; i < 8; ++i)
        CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-10));
}

}  // TEST_SUITE
