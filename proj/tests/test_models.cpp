#include <doctest.h>

#include <cmath>
#include <fstream>

#include "support/testutil.hpp"
#include "volsr/errors.hpp"
#include "volsr/models.hpp"

using namespace volsr;
using models::ModelConfig;

namespace {

// Closed-form counts for the two architectures, written out independently of
// parameter_specs.
std::size_t resnet_count(int channels, int blocks) {
    const std::size_t c = static_cast<std::size_t>(channels);
    return 2 * static_cast<std::size_t>(blocks) * (c * c * 27 + c)  // residual convs
           + (c * 27 + c)                                           // head
           + (c * 27 + 1);                                          // tail
}

std::size_t densenet_count(int c0, int g, int blocks, int layers) {
    std::size_t per_block = 0;
    for (int l = 0; l < layers; ++l)
        per_block += static_cast<std::size_t>(c0 + l * g) * g * 27 + static_cast<std::size_t>(g);
    per_block += static_cast<std::size_t>(c0 + layers * g) * c0 + static_cast<std::size_t>(c0);
    return static_cast<std::size_t>(blocks) * per_block + (static_cast<std::size_t>(c0) * 27 + c0) +
           (static_cast<std::size_t>(c0) * 27 + 1);
}

models::ParamStore zero_params(const ModelConfig& config) {
    models::ParamStore store;
    store.specs = models::parameter_specs(config);
    for (const auto& spec : store.specs)
        store.values.emplace_back(ad::numel(spec.shape), 0.0);
    return store;
}

std::vector<double> random_input(std::size_t n, std::uint64_t seed) {
    std::vector<double> v(n);
    Rng rng(seed);
    for (double& d : v) d = rng.uniform(-1.0, 1.0);
    return v;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("parameter counts match the closed forms") {
    ModelConfig resnet;
    CHECK(models::count_parameters(resnet) == 887521);
    CHECK(models::count_parameters(resnet) == resnet_count(32, 16));

    ModelConfig tiny;
    tiny.blocks = 1;
    tiny.channels = 1;
    CHECK(models::count_parameters(tiny) == 112);

    ModelConfig densenet;
    densenet.architecture = "densenet";
    CHECK(models::count_parameters(densenet) == densenet_count(32, 16, 4, 4));
    CHECK(models::count_parameters(densenet) == 401505);
}

TEST_CASE("densenet layer i consumes initial_channels + i*growth channels") {
    ModelConfig cfg;
    cfg.architecture = "densenet";
    auto specs = models::parameter_specs(cfg);
    for (const auto& spec : specs) {
        // block{b}.layer{l}.weight has shape [growth, c0 + l*growth, 3,3,3]
        const auto layer_pos = spec.name.find(".layer");
        if (layer_pos == std::string::npos || !spec.name.ends_with(".weight")) continue;
        const int l = std::stoi(spec.name.substr(layer_pos + 6, 1));
        CHECK(spec.shape[0] == cfg.growth);
        CHECK(spec.shape[1] == cfg.initial_channels + l * cfg.growth);
    }
}

TEST_CASE("enumeration over the built graph agrees with count_parameters") {
    for (const char* arch : {"resnet", "densenet"}) {
        ModelConfig cfg;
        cfg.architecture = arch;
        cfg.channels = 8;
        cfg.blocks = 2;
        cfg.initial_channels = 8;
        cfg.growth = 4;
        cfg.dense_blocks = 2;
        cfg.layers_per_dense_block = 2;

        models::ParamStore params = models::init_parameters(cfg);
        ad::Graph g;
        std::vector<ad::Tensor> leaves;
        std::size_t built_count = 0;
        for (std::size_t i = 0; i < params.tensor_count(); ++i) {
            leaves.push_back(g.leaf(params.specs[i].shape, params.values[i], true));
            built_count += leaves.back().value().size();
        }
        auto xv = random_input(6 * 6 * 6, 3);
        ad::Tensor input = g.constant({1, 1, 6, 6, 6}, xv);
        ad::Tensor out = models::forward(g, cfg, leaves, input);
        CHECK(out.shape() == ad::Shape{1, 1, 6, 6, 6});
        CHECK(built_count == models::count_parameters(cfg));
    }
}

TEST_CASE("invalid configs are rejected") {
    ModelConfig bad;
    bad.architecture = "transformer";
    CHECK_THROWS_AS(models::parameter_specs(bad), ValidationError);
    ModelConfig neg;
    neg.channels = 0;
    CHECK_THROWS_AS(models::parameter_specs(neg), ValidationError);
}

TEST_CASE("zeroed parameters give the identity map (global skip)") {
    for (const char* arch : {"resnet", "densenet"}) {
        ModelConfig cfg;
        cfg.architecture = arch;
        cfg.channels = 4;
        cfg.blocks = 2;
        cfg.initial_channels = 4;
        cfg.growth = 4;
        cfg.dense_blocks = 2;
        cfg.layers_per_dense_block = 2;
        auto params = zero_params(cfg);
        auto xv = random_input(static_cast<std::size_t>(5) * 7 * 9, 11);
        auto out = models::infer(cfg, params, xv, 5, 7, 9);
        for (std::size_t i = 0; i < xv.size(); ++i) CHECK(out[i] == xv[i]);
    }
}

TEST_CASE("shape preservation for assorted input dims") {
    for (const char* arch : {"resnet", "densenet"}) {
        ModelConfig cfg;
        cfg.architecture = arch;
        cfg.channels = 4;
        cfg.blocks = 1;
        cfg.initial_channels = 4;
        cfg.growth = 2;
        cfg.dense_blocks = 1;
        cfg.layers_per_dense_block = 2;
        auto params = models::init_parameters(cfg);
        for (auto dims : std::vector<std::array<int, 3>>{{16, 16, 8}, {5, 7, 9}, {3, 3, 3}}) {
            const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
            auto out = models::infer(cfg, params, random_input(n, 5), dims[0], dims[1], dims[2]);
            CHECK(out.size() == n);
        }
    }
}

TEST_CASE("initialization is seeded and fan-in scaled") {
    ModelConfig cfg;
    cfg.channels = 32;
    cfg.blocks = 2;
    cfg.seed = 123;
    auto a = models::init_parameters(cfg);
    auto b = models::init_parameters(cfg);
    CHECK(a.values == b.values);  // bit-identical

    cfg.seed = 124;
    auto c = models::init_parameters(cfg);
    CHECK(a.values != c.values);

    // block0.conv1.weight: fan_in = 32*27 = 864, 27648 samples
    const auto& w = a.values[2];
    REQUIRE(w.size() == 27648);
    double mean = 0.0;
    for (double x : w) mean += x;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (double x : w) var += (x - mean) * (x - mean);
    var /= static_cast<double>(w.size());
    const double expected = 2.0 / 864.0;
    CHECK(var > 0.8 * expected);
    CHECK(var < 1.2 * expected);

    // biases start at zero
    for (double x : a.values[1]) CHECK(x == 0.0);
}

TEST_CASE("graph forward and buffer inference produce identical numbers") {
    ModelConfig cfg;
    cfg.architecture = "densenet";
    cfg.initial_channels = 6;
    cfg.growth = 3;
    cfg.dense_blocks = 2;
    cfg.layers_per_dense_block = 2;
    cfg.seed = 5;
    auto params = models::init_parameters(cfg);
    auto xv = random_input(static_cast<std::size_t>(6) * 8 * 10, 21);

    ad::Graph g;
    std::vector<ad::Tensor> leaves;
    for (std::size_t i = 0; i < params.tensor_count(); ++i)
        leaves.push_back(g.leaf(params.specs[i].shape, params.values[i], false));
    ad::Tensor input = g.constant({1, 1, 6, 8, 10}, xv);
    ad::Tensor out = models::forward(g, cfg, leaves, input);

    auto direct = models::infer(cfg, params, xv, 6, 8, 10);
    auto graph_out = out.value();
    for (std::size_t i = 0; i < direct.size(); ++i) CHECK(graph_out[i] == direct[i]);
}

TEST_CASE("forward inference is deterministic") {
    ModelConfig cfg;
    cfg.channels = 8;
    cfg.blocks = 2;
    cfg.seed = 9;
    auto params = models::init_parameters(cfg);
    auto xv = random_input(static_cast<std::size_t>(8) * 8 * 8, 33);
    auto y1 = models::infer(cfg, params, xv, 8, 8, 8);
    auto y2 = models::infer(cfg, params, xv, 8, 8, 8);
    CHECK(y1 == y2);
}

TEST_CASE("gradient reaches every parameter tensor") {
    for (const char* arch : {"resnet", "densenet"}) {
        ModelConfig cfg;
        cfg.architecture = arch;
        cfg.channels = 8;
        cfg.blocks = 2;
        cfg.initial_channels = 8;
        cfg.growth = 4;
        cfg.dense_blocks = 2;
        cfg.layers_per_dense_block = 2;
        cfg.seed = 31;
        auto params = models::init_parameters(cfg);

        ad::Graph g;
        std::vector<ad::Tensor> leaves;
        for (std::size_t i = 0; i < params.tensor_count(); ++i)
            leaves.push_back(g.leaf(params.specs[i].shape, params.values[i], true));
        ad::Tensor input = g.constant({2, 1, 6, 6, 6}, random_input(2 * 6 * 6 * 6, 77));
        ad::Tensor target = g.constant({2, 1, 6, 6, 6}, random_input(2 * 6 * 6 * 6, 78));
        ad::Tensor out = models::forward(g, cfg, leaves, input);
        ad::Tensor loss = g.mean(g.square(g.sub(out, target)));
        g.backward(loss);

        for (std::size_t i = 0; i < leaves.size(); ++i) {
            bool any_nonzero = false;
            for (double d : leaves[i].grad())
                if (d != 0.0) {
                    any_nonzero = true;
                    break;
                }
            INFO(arch, " parameter ", params.specs[i].name);
            CHECK(any_nonzero);
        }
    }
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
    testutil::TempDir tmp("ckpt");
    ModelConfig cfg;
    cfg.channels = 4;
    cfg.blocks = 1;
    cfg.seed = 17;
    models::ModelCheckpoint ckpt = models::snapshot(cfg, models::init_parameters(cfg));
    ckpt.epoch = 12;
    ckpt.best_val_ssim = 0.8734;
    ckpt.seed = 17;
    ckpt.split_seed = 3;
    ckpt.loss_kind = "mse";
    ckpt.train_subjects = {"subject0", "subject2"};
    ckpt.val_subjects = {"subject1"};

    const auto p1 = tmp.path() / "a.ckpt";
    const auto p2 = tmp.path() / "b.ckpt";
    models::write_checkpoint(p1, ckpt);
    models::ModelCheckpoint r = models::read_checkpoint(p1);
    CHECK(r.epoch == 12);
    CHECK(r.best_val_ssim == 0.8734);
    CHECK(r.loss_kind == "mse");
    CHECK(r.train_subjects == ckpt.train_subjects);
    CHECK(r.values == ckpt.values);
    models::write_checkpoint(p2, r);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("checkpoint with mismatched parameter list is corrupt") {
    testutil::TempDir tmp("ckptbad");
    ModelConfig cfg;
    cfg.channels = 4;
    cfg.blocks = 1;
    models::ModelCheckpoint ckpt = models::snapshot(cfg, models::init_parameters(cfg));
    ckpt.specs[0].name = "bogus";  // no longer matches the config-derived graph
    const auto path = tmp.path() / "bad.ckpt";
    models::write_checkpoint(path, ckpt);
    CHECK_THROWS_AS(models::read_checkpoint(path), CorruptionError);
}

}  // TEST_SUITE
