#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "support/testutil.hpp"
#include "volsr/errors.hpp"
#include "volsr/fourier.hpp"
#include "volsr/phantom.hpp"
#include "volsr/trainkit.hpp"

using namespace volsr;

namespace {

std::vector<std::string> subject_names(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back("subject" + std::to_string(i));
    return out;
}

// Small smooth HR volumes with genuine high-frequency content.
std::vector<train::HrVolume> tiny_dataset(int subjects, std::uint64_t seed) {
    phantom::PhantomSpec spec;
    spec.dims = {24, 24, 8};
    spec.echoes = 2;
    spec.min_ellipsoids = 2;
    spec.max_ellipsoids = 4;
    spec.noise_sigma = 0.0;
    std::vector<train::HrVolume> out;
    for (int s = 0; s < subjects; ++s) {
        auto echoes = phantom::generate_subject(spec, derive_seed(seed, s));
        for (int e = 0; e < spec.echoes; ++e)
            out.push_back({std::move(echoes[e]), "subject" + std::to_string(s), e});
    }
    return out;
}

train::TrainConfig tiny_config() {
    train::TrainConfig cfg;
    cfg.model.architecture = "resnet";
    cfg.model.channels = 4;
    cfg.model.blocks = 1;
    cfg.model.seed = 3;
    cfg.loss.kind = "mse";
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 2;
    cfg.patch_dims = {12, 12, 6};
    cfg.patience = 2;
    cfg.max_epochs = 3;
    cfg.steps_per_epoch = 3;
    cfg.augment.flips = true;
    cfg.augment.rotations = false;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_SUITE("trainkit") {

TEST_CASE("split: 13 subjects at (0.6, 0.2, 0.2) gives 9/2/2") {
    auto split = train::split_subjects(subject_names(13), {0.6, 0.2, 0.2}, 7);
    CHECK(split.train.size() == 9);
    CHECK(split.validation.size() == 2);
    CHECK(split.test.size() == 2);
}

TEST_CASE("split is deterministic per seed") {
    auto a = train::split_subjects(subject_names(13), {0.6, 0.2, 0.2}, 5);
    auto b = train::split_subjects(subject_names(13), {0.6, 0.2, 0.2}, 5);
    CHECK(a.train == b.train);
    CHECK(a.validation == b.validation);
    CHECK(a.test == b.test);
    auto c = train::split_subjects(subject_names(13), {0.6, 0.2, 0.2}, 6);
    CHECK(a.train != c.train);
}

TEST_CASE("split is disjoint and complete for every seed") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const int n = 3 + static_cast<int>(seed % 17);
        auto subjects = subject_names(n);
        auto split = train::split_subjects(subjects, {0.6, 0.2, 0.2}, seed);
        std::set<std::string> all;
        all.insert(split.train.begin(), split.train.end());
        all.insert(split.validation.begin(), split.validation.end());
        all.insert(split.test.begin(), split.test.end());
        CHECK(all.size() ==
              split.train.size() + split.validation.size() + split.test.size());  // disjoint
        CHECK(all.size() == subjects.size());                                     // complete
    }
}

TEST_CASE("split input validation") {
    CHECK_THROWS_AS(train::split_subjects(subject_names(2), {0.6, 0.2, 0.2}, 1), ValidationError);
    CHECK_THROWS_AS(train::split_subjects(subject_names(10), {0.5, 0.2, 0.2}, 1), ValidationError);
}

TEST_CASE("make_pairs: band-limited HR gives input == target") {
    // Build a band-limited HR volume by zero-filling a coarse random one.
    Volume coarse = testutil::random_volume(8, 8, 4, 3, 1.0, 2.0);
    Volume hr = fourier::kspace_zerofill_upsample(coarse);
    auto pairs = train::make_pairs({{hr, "subject0", 0}});
    REQUIRE(pairs.size() == 1);
    const auto& p = pairs[0];
    CHECK(p.subject == "subject0");
    for (std::size_t i = 0; i < p.target.data.size(); ++i)
        CHECK(p.input.data[i] == doctest::Approx(p.target.data[i]).epsilon(1e-5));
}

TEST_CASE("make_pairs: both volumes are centered") {
    auto data = tiny_dataset(1, 5);
    auto pairs = train::make_pairs(data);
    for (const auto& p : pairs) {
        CHECK(std::abs(volume_mean(p.target)) < 1e-5);
        CHECK(std::abs(volume_mean(p.input)) < 1e-5);
        CHECK(p.input.nx == p.target.nx);
        // z-score stats invert back to the original intensities
        CHECK(p.hr_stats.stddev > 0.0);
    }
}

TEST_CASE("sample_patch: plain crop matches the volume content") {
    auto pairs = train::make_pairs(tiny_dataset(1, 9));
    const auto& pair = pairs[0];
    train::AugmentConfig no_aug{false, false};

    Rng rng(21);
    auto [pi, pt] = train::sample_patch(pair, {12, 12, 6}, no_aug, rng);
    // Replay the offset draws with an identical generator.
    Rng replay(21);
    const int ox = static_cast<int>(replay.below(pair.input.nx - 12 + 1));
    const int oy = static_cast<int>(replay.below(pair.input.ny - 12 + 1));
    const int oz = static_cast<int>(replay.below(pair.input.nz - 6 + 1));
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x) {
                CHECK(pi.at(x, y, z) == pair.input.at(ox + x, oy + y, oz + z));
                CHECK(pt.at(x, y, z) == pair.target.at(ox + x, oy + y, oz + z));
            }
}

TEST_CASE("sample_patch: flips permute values and stay aligned") {
    auto pairs = train::make_pairs(tiny_dataset(1, 13));
    const auto& pair = pairs[0];
    train::AugmentConfig flips_only{true, false};
    Rng rng(4);
    auto [pi, pt] = train::sample_patch(pair, {12, 12, 6}, flips_only, rng);

    Rng replay(4);
    const int ox = static_cast<int>(replay.below(pair.input.nx - 12 + 1));
    const int oy = static_cast<int>(replay.below(pair.input.ny - 12 + 1));
    const int oz = static_cast<int>(replay.below(pair.input.nz - 6 + 1));
    const bool fx = replay.coin(), fy = replay.coin(), fz = replay.coin();
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x) {
                const int sx = ox + (fx ? 11 - x : x);
                const int sy = oy + (fy ? 11 - y : y);
                const int sz = oz + (fz ? 5 - z : z);
                CHECK(pi.at(x, y, z) == pair.input.at(sx, sy, sz));
                CHECK(pt.at(x, y, z) == pair.target.at(sx, sy, sz));
            }
}

TEST_CASE("sample_patch rejects oversized patches") {
    auto pairs = train::make_pairs(tiny_dataset(1, 2));
    Rng rng(1);
    CHECK_THROWS_AS(train::sample_patch(pairs[0], {64, 64, 16}, {false, false}, rng),
                    ValidationError);
}

TEST_CASE("adam: first step moves by about -lr*sign(g)") {
    models::ModelConfig mc;
    mc.channels = 1;
    mc.blocks = 1;
    models::ParamStore params = models::init_parameters(mc);
    train::AdamState state = train::AdamState::like(params);

    std::vector<std::vector<double>> grads;
    Rng rng(5);
    for (const auto& v : params.values) {
        std::vector<double> g(v.size());
        for (double& d : g) d = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.1, 2.0);
        grads.push_back(std::move(g));
    }
    auto before = params.values;
    const double lr = 1e-3;
    train::adam_step(params, grads, state, lr);
    CHECK(state.t == 1);
    for (std::size_t p = 0; p < grads.size(); ++p)
        for (std::size_t i = 0; i < grads[p].size(); ++i) {
            const double update = params.values[p][i] - before[p][i];
            const double expected = -lr * (grads[p][i] > 0 ? 1.0 : -1.0);
            CHECK(std::abs(update - expected) < 1e-6 * lr);
        }
}

TEST_CASE("adam: zero gradient and zero learning rate leave parameters alone") {
    models::ModelConfig mc;
    mc.channels = 2;
    mc.blocks = 1;
    mc.seed = 8;
    models::ParamStore params = models::init_parameters(mc);
    auto before = params.values;

    std::vector<std::vector<double>> zeros;
    for (const auto& v : params.values) zeros.emplace_back(v.size(), 0.0);
    train::AdamState s1 = train::AdamState::like(params);
    train::adam_step(params, zeros, s1, 1e-3);
    CHECK(params.values == before);

    std::vector<std::vector<double>> grads;
    Rng rng(9);
    for (const auto& v : params.values) {
        std::vector<double> g(v.size());
        for (double& d : g) d = rng.normal();
        grads.push_back(std::move(g));
    }
    train::AdamState s2 = train::AdamState::like(params);
    train::adam_step(params, grads, s2, 0.0);  // lr = 0
    CHECK(params.values == before);
}

TEST_CASE("adam: scalar quadratic trajectory matches the simulation oracle") {
    // Library path: a 1-element parameter store driven by g = 2*theta.
    models::ParamStore params;
    params.specs = {{"theta", {1}}};
    params.values = {{1.0}};
    train::AdamState state = train::AdamState::like(params);

    // Independent scalar simulation of the same update rule.
    double sim_theta = 1.0, sim_m = 0.0, sim_v = 0.0;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    double prev_abs = 1.0;
    bool monotone_first10 = true;
    for (int t = 1; t <= 100; ++t) {
        train::adam_step(params, {{2.0 * params.values[0][0]}}, state, lr);

        const double g = 2.0 * sim_theta;
        sim_m = b1 * sim_m + (1 - b1) * g;
        sim_v = b2 * sim_v + (1 - b2) * g * g;
        sim_theta -= lr * (sim_m / (1 - std::pow(b1, t))) /
                     (std::sqrt(sim_v / (1 - std::pow(b2, t))) + eps);

        CHECK(params.values[0][0] == doctest::Approx(sim_theta).epsilon(1e-12));
        if (t <= 10) {
            if (std::abs(params.values[0][0]) > prev_abs) monotone_first10 = false;
            prev_abs = std::abs(params.values[0][0]);
        }
    }
    // |theta| shrinks monotonically until the zero crossing (~step 11) and
    // ends well below 0.1; after the crossing Adam's momentum oscillates, so
    // global monotonicity does not hold.
    CHECK(monotone_first10);
    CHECK(std::abs(params.values[0][0]) < 0.1);
}

TEST_CASE("early stopper contract") {
    SUBCASE("0.5, 0.6, then 100 flat epochs stops after epoch 102") {
        train::EarlyStopper stopper(100);
        CHECK(stopper.observe(1, 0.5));
        CHECK_FALSE(stopper.should_stop(1));
        CHECK(stopper.observe(2, 0.6));
        int epoch = 2;
        bool stopped = false;
        while (!stopped && epoch < 500) {
            ++epoch;
            stopper.observe(epoch, 0.6);  // never better (strict improvement required)
            stopped = stopper.should_stop(epoch);
        }
        CHECK(epoch == 102);
        CHECK(stopper.best_epoch() == 2);
    }
    SUBCASE("patience 0 stops at the first non-improving epoch") {
        train::EarlyStopper stopper(0);
        stopper.observe(1, 0.5);
        CHECK_FALSE(stopper.should_stop(1));
        stopper.observe(2, 0.4);
        CHECK(stopper.should_stop(2));
    }
    SUBCASE("always improving never stops") {
        train::EarlyStopper stopper(0);
        for (int e = 1; e <= 20; ++e) {
            stopper.observe(e, e * 0.01);
            CHECK_FALSE(stopper.should_stop(e));
        }
    }
}

TEST_CASE("train config json round trip and defaults") {
    train::TrainConfig cfg;
    CHECK(cfg.learning_rate == 1e-4);
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.patch_dims == std::array<int, 3>{64, 64, 16});
    CHECK(cfg.patience == 100);

    cfg = tiny_config();
    auto text = train::train_config_to_json(cfg);
    auto back = train::train_config_from_json(text);
    CHECK(back.model.architecture == cfg.model.architecture);
    CHECK(back.model.channels == cfg.model.channels);
    CHECK(back.loss.kind == cfg.loss.kind);
    CHECK(back.learning_rate == cfg.learning_rate);
    CHECK(back.patch_dims == cfg.patch_dims);
    CHECK(back.augment.rotations == cfg.augment.rotations);
    CHECK(back.seed == cfg.seed);

    // the full-size configuration used in the study parses cleanly
    const std::string paper_best = R"({
        "model": {"architecture": "resnet"},
        "loss": {"kind": "mse"},
        "learning_rate": 1e-4,
        "patience": 100,
        "max_epochs": 100000
    })";
    auto best = train::train_config_from_json(paper_best);
    CHECK(best.model.channels == 32);
    CHECK(best.model.blocks == 16);
    CHECK(best.patience == 100);

    CHECK_THROWS_AS(train::train_config_from_json("{"), FormatError);
    CHECK_THROWS_AS(train::train_config_from_json(R"({"model": {"architecture": "x"},
                                                     "loss": {"kind": "mse"}})"),
                    ValidationError);
}

TEST_CASE("train: smoke run, determinism, and logging") {
    auto pairs = train::make_pairs(tiny_dataset(3, 31));
    auto split = train::split_subjects(subject_names(3), {0.6, 0.2, 0.2}, 2);
    // 3 subjects floor to 3/0/0; reassign manually for the tiny smoke run.
    split.train = {split.train[0]};
    split.validation = {split.train[0] == "subject0" ? "subject1" : "subject0"};
    split.test = {"subject2"};

    auto cfg = tiny_config();
    train::TrainResult r1 = train::train(cfg, pairs, split);
    CHECK(r1.log.size() <= static_cast<std::size_t>(cfg.max_epochs));
    CHECK(!r1.log.empty());
    CHECK(r1.checkpoint.config.architecture == "resnet");
    CHECK(r1.checkpoint.epoch == r1.log.back().best_epoch);
    CHECK(r1.checkpoint.train_subjects == split.train);

    // the retained checkpoint is the argmax of the validation curve
    double best = -1.0;
    for (const auto& rec : r1.log) best = std::max(best, rec.val_ssim);
    CHECK(r1.checkpoint.best_val_ssim == doctest::Approx(best).epsilon(1e-12));

    train::TrainResult r2 = train::train(cfg, pairs, split);
    CHECK(r1.checkpoint.values == r2.checkpoint.values);  // bit-identical
    REQUIRE(r1.log.size() == r2.log.size());
    for (std::size_t i = 0; i < r1.log.size(); ++i) {
        CHECK(r1.log[i].train_loss == r2.log[i].train_loss);
        CHECK(r1.log[i].val_ssim == r2.log[i].val_ssim);
    }
}

TEST_CASE("train: empty split partitions are rejected") {
    auto pairs = train::make_pairs(tiny_dataset(2, 41));
    train::SplitAssignment split;
    split.train = {"subject0"};
    split.validation = {};  // empty
    split.test = {"subject1"};
    CHECK_THROWS_AS(train::train(tiny_config(), pairs, split), ValidationError);
}

TEST_CASE("train: absurd learning rate raises a divergence error") {
    auto pairs = train::make_pairs(tiny_dataset(2, 51));
    train::SplitAssignment split;
    split.train = {"subject0"};
    split.validation = {"subject1"};
    split.test = {};
    auto cfg = tiny_config();
    cfg.learning_rate = 1e18;
    cfg.max_epochs = 50;
    cfg.patience = 50;
    CHECK_THROWS_AS(train::train(cfg, pairs, split), DivergenceError);
}

TEST_CASE("predict_volume") {
    models::ModelConfig mc;
    mc.channels = 4;
    mc.blocks = 1;
    mc.seed = 2;

    SUBCASE("zero parameters reproduce the input") {
        models::ParamStore zero;
        zero.specs = models::parameter_specs(mc);
        for (const auto& spec : zero.specs) zero.values.emplace_back(ad::numel(spec.shape), 0.0);
        models::ModelCheckpoint ckpt = models::snapshot(mc, zero);
        Volume v = testutil::random_volume(10, 8, 6, 77);
        Volume out = train::predict_volume(ckpt, v);
        CHECK(out.data == v.data);
    }
    SUBCASE("deterministic") {
        models::ModelCheckpoint ckpt = models::snapshot(mc, models::init_parameters(mc));
        Volume v = testutil::random_volume(10, 8, 6, 78);
        Volume a = train::predict_volume(ckpt, v);
        Volume b = train::predict_volume(ckpt, v);
        CHECK(a.data == b.data);
    }
    SUBCASE("tiny inputs are rejected") {
        models::ModelCheckpoint ckpt = models::snapshot(mc, models::init_parameters(mc));
        Volume v = testutil::random_volume(2, 8, 8, 79);
        CHECK_THROWS_AS(train::predict_volume(ckpt, v), ValidationError);
    }
}

}  // TEST_SUITE
