#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "support/oracles.hpp"
#include "support/testutil.hpp"
#include "volsr/errors.hpp"
#include "volsr/quality.hpp"

using namespace volsr;

TEST_SUITE("quality") {

TEST_CASE("identical volumes") {
    Volume v = testutil::random_volume(10, 10, 10, 5);
    CHECK(std::isinf(quality::psnr(v, v)));
    CHECK(quality::psnr(v, v) > 0);
    CHECK(quality::nrmse(v, v) == 0.0);
    CHECK(quality::ssim(v, v) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("uniform error closed form: L=1, err=0.1 -> 20 dB, NRMSE 0.1") {
    Volume ref(8, 8, 8);
    for (std::size_t i = 0; i < ref.data.size(); ++i) ref.data[i] = static_cast<float>(i % 2);
    Volume test = ref;
    for (float& f : test.data) f += 0.1f;
    CHECK(quality::psnr(ref, test) == doctest::Approx(20.0).epsilon(1e-4));
    CHECK(quality::nrmse(ref, test) == doctest::Approx(0.1).epsilon(1e-4));
}

TEST_CASE("input validation") {
    Volume a = testutil::random_volume(8, 8, 8, 1);
    Volume b = testutil::random_volume(8, 8, 4, 1);
    CHECK_THROWS_AS(quality::psnr(a, b), ValidationError);
    CHECK_THROWS_AS(quality::nrmse(a, b), ValidationError);
    Volume c(8, 8, 8);
    for (float& f : c.data) f = 1.0f;
    CHECK_THROWS_AS(quality::psnr(c, a), DegenerateInputError);
    Volume tiny = testutil::random_volume(6, 8, 8, 2);
    CHECK_THROWS_AS(quality::ssim(tiny, tiny), ValidationError);
    CHECK_THROWS_AS(quality::ssim(a, a, 4), ValidationError);
}

TEST_CASE("psnr and nrmse match the single-pass oracle") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Volume ref = testutil::random_volume(12, 10, 9, 100 + seed, 0.0, 2.0);
        Volume test = testutil::random_volume(12, 10, 9, 200 + seed, 0.0, 2.0);
        auto expected = oracles::brute_psnr_nrmse(ref, test);
        CHECK(quality::psnr(ref, test) == doctest::Approx(expected.psnr).epsilon(1e-9));
        CHECK(quality::nrmse(ref, test) == doctest::Approx(expected.nrmse).epsilon(1e-12));
    }
}

TEST_CASE("ssim matches the sliding-window oracle") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Volume ref = testutil::random_volume(10, 10, 10, 300 + seed);
        Volume test = testutil::random_volume(10, 10, 10, 400 + seed);
        const double expected = oracles::brute_ssim(ref, test, 7, 0.01, 0.03);
        CHECK(quality::ssim(ref, test) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("ssim of a constant offset follows the luminance term") {
    Volume ref = testutil::random_volume(9, 9, 9, 7, 1.0, 3.0);
    Volume test = ref;
    for (float& f : test.data) f += 0.5f;
    const double got = quality::ssim(ref, test);
    const double expected = oracles::brute_ssim(ref, test, 7, 0.01, 0.03);
    CHECK(got == doctest::Approx(expected).epsilon(1e-9));
    CHECK(got < 1.0);
}

TEST_CASE("reference is privileged: swapping arguments changes L") {
    Volume a = testutil::random_volume(8, 8, 8, 42, 0.0, 1.0);
    Volume b = testutil::random_volume(8, 8, 8, 43, 0.0, 2.0);
    CHECK(quality::psnr(a, b) != doctest::Approx(quality::psnr(b, a)).epsilon(1e-12));
}

TEST_CASE("noise monotonicity") {
    Volume ref = testutil::random_volume(10, 10, 10, 9, 0.0, 1.0);
    Rng rng(77);
    std::vector<float> noise(ref.data.size());
    for (float& f : noise) f = static_cast<float>(rng.normal());

    double prev_psnr = std::numeric_limits<double>::infinity();
    double prev_ssim = 2.0;
    double prev_nrmse = -1.0;
    for (double amp : {0.05, 0.1, 0.2}) {
        Volume test = ref;
        for (std::size_t i = 0; i < test.data.size(); ++i)
            test.data[i] += static_cast<float>(amp) * noise[i];
        const double p = quality::psnr(ref, test);
        const double s = quality::ssim(ref, test);
        const double n = quality::nrmse(ref, test);
        CHECK(p < prev_psnr);
        CHECK(s < prev_ssim);
        CHECK(n > prev_nrmse);
        prev_psnr = p;
        prev_ssim = s;
        prev_nrmse = n;
    }
}

TEST_CASE("metrics triple consistency: psnr = -20 log10(nrmse)") {
    Volume ref = testutil::random_volume(8, 8, 8, 50, 0.0, 3.0);
    Volume test = testutil::random_volume(8, 8, 8, 51, 0.0, 3.0);
    auto t = quality::metrics(ref, test);
    CHECK(t.psnr == doctest::Approx(-20.0 * std::log10(t.nrmse)).epsilon(1e-9));
    CHECK(t.ssim >= -1.0);
    CHECK(t.ssim <= 1.0);
}

TEST_CASE("aggregate report statistics and ordering") {
    SUBCASE("single volume has zero SD") {
        quality::MethodEntry e{"m", "n/a", {{30.0, 0.1, 0.9}}};
        auto report = quality::aggregate_report({e});
        CHECK(report.methods[0].sd.psnr == 0.0);
        CHECK(report.methods[0].sd.nrmse == 0.0);
        CHECK(report.methods[0].sd.ssim == 0.0);
    }
    SUBCASE("population SD of {30, 31, 32} is 0.82") {
        quality::MethodEntry e{"m", "n/a",
                               {{30.0, 0.1, 0.9}, {31.0, 0.1, 0.9}, {32.0, 0.1, 0.9}}};
        auto report = quality::aggregate_report({e});
        CHECK(report.methods[0].mean.psnr == doctest::Approx(31.0).epsilon(1e-12));
        CHECK(report.methods[0].sd.psnr == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    }
    SUBCASE("rows are ordered by (method, loss)") {
        quality::MethodEntry a{"resnet", "ssim", {{1, 1, 1}}};
        quality::MethodEntry b{"resnet", "mse", {{1, 1, 1}}};
        quality::MethodEntry c{"densenet", "mse", {{1, 1, 1}}};
        auto report = quality::aggregate_report({a, b, c});
        CHECK(report.methods[0].method == "densenet");
        CHECK(report.methods[1].loss == "mse");
        CHECK(report.methods[2].loss == "ssim");
    }
    SUBCASE("empty inputs are rejected") {
        CHECK_THROWS_AS(quality::aggregate_report({}), ValidationError);
        quality::MethodEntry e{"m", "n/a", {}};
        CHECK_THROWS_AS(quality::aggregate_report({e}), ValidationError);
    }
}

TEST_CASE("table rendering uses mean (SD) with two decimals and bolds the best") {
    quality::MethodEntry zf{"k-space zero-filling", "n/a",
                            {{28.50, 0.25, 0.70}, {30.04, 0.17, 0.76}}};
    quality::MethodEntry net{"resnet", "mse", {{32.29, 0.14, 0.85}, {32.29, 0.14, 0.85}}};
    auto report = quality::aggregate_report({zf, net});
    const std::string table = quality::render_table(report);
    CHECK(table.find("29.27 (0.77)") != std::string::npos);
    CHECK(table.find("**32.29 (0.00)**") != std::string::npos);
    CHECK(table.find("PSNR (SD) ↑") != std::string::npos);
    CHECK(table.find("NRMSE (SD) ↓") != std::string::npos);
}

TEST_CASE("report json is self-consistent") {
    quality::MethodEntry e{"m", "n/a", {{30.0, 0.2, 0.8}, {31.5, 0.1, 0.9}, {29.0, 0.3, 0.7}}};
    auto report = quality::aggregate_report({e});
    auto j = nlohmann::json::parse(quality::report_to_json(report));
    for (const char* metric : {"psnr", "nrmse", "ssim"}) {
        const auto& g = j["methods"][0][metric];
        double mean = 0.0;
        for (const auto& v : g["per_volume"]) mean += v.get<double>();
        mean /= static_cast<double>(g["per_volume"].size());
        CHECK(g["mean"].get<double>() == doctest::Approx(mean).epsilon(1e-9));
        double var = 0.0;
        for (const auto& v : g["per_volume"]) {
            const double d = v.get<double>() - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / static_cast<double>(g["per_volume"].size()));
        CHECK(g["sd"].get<double>() == doctest::Approx(sd).epsilon(1e-9));
    }
}

}  // TEST_SUITE
