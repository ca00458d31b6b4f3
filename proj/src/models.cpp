#include "volsr/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "volsr/errors.hpp"
#include "volsr/rng.hpp"

namespace volsr::models {

void ModelConfig::validate() const {
    if (architecture != "resnet" && architecture != "densenet")
        throw ValidationError("unknown architecture: " + architecture);
    if (channels <= 0 || blocks <= 0 || growth <= 0 || initial_channels <= 0 ||
        dense_blocks <= 0 || layers_per_dense_block <= 0)
        throw ValidationError("model config counts must be positive");
}

namespace {

ad::Shape conv_shape(int co, int ci, int k) { return {co, ci, k, k, k}; }

}  // namespace

std::vector<ParamSpec> parameter_specs(const ModelConfig& config) {
    config.validate();
    std::vector<ParamSpec> specs;
    auto conv = [&specs](const std::string& name, int co, int ci, int k) {
        specs.push_back({name + ".weight", conv_shape(co, ci, k)});
        specs.push_back({name + ".bias", ad::Shape{co}});
    };

    if (config.architecture == "resnet") {
        const int c = config.channels;
        conv("head", c, 1, 3);
        for (int b = 0; b < config.blocks; ++b) {
            conv("block" + std::to_string(b) + ".conv1", c, c, 3);
            conv("block" + std::to_string(b) + ".conv2", c, c, 3);
        }
        conv("tail", 1, c, 3);
    } else {
        const int c0 = config.initial_channels;
        const int g = config.growth;
        conv("head", c0, 1, 3);
        for (int b = 0; b < config.dense_blocks; ++b) {
            const std::string prefix = "block" + std::to_string(b);
            for (int l = 0; l < config.layers_per_dense_block; ++l)
                conv(prefix + ".layer" + std::to_string(l), g, c0 + l * g, 3);
            conv(prefix + ".transition", c0, c0 + config.layers_per_dense_block * g, 1);
        }
        conv("tail", 1, c0, 3);
    }
    return specs;
}

std::size_t count_parameters(const ModelConfig& config) {
    std::size_t total = 0;
    for (const auto& s : parameter_specs(config)) total += ad::numel(s.shape);
    return total;
}

ParamStore init_parameters(const ModelConfig& config) {
    ParamStore store;
    store.specs = parameter_specs(config);
    Rng rng(config.seed);
    for (const auto& spec : store.specs) {
        std::vector<double> v(ad::numel(spec.shape));
        if (spec.name.ends_with(".weight")) {
            // fan_in = ci * kd * kh * kw
            double fan_in = 1.0;
            for (std::size_t i = 1; i < spec.shape.size(); ++i) fan_in *= spec.shape[i];
            const double stddev = std::sqrt(2.0 / fan_in);
            for (double& x : v) x = stddev * rng.normal();
        }
        store.values.push_back(std::move(v));
    }
    return store;
}

namespace {

struct ParamCursor {
    std::span<const ad::Tensor> params;
    std::size_t next = 0;

    // weight/bias pair
    std::pair<ad::Tensor, ad::Tensor> conv() {
        if (next + 2 > params.size()) throw ValidationError("model forward: too few parameters");
        ad::Tensor w = params[next++];
        ad::Tensor b = params[next++];
        return {w, b};
    }
};

ad::Tensor forward_resnet(ad::Graph& g, const ModelConfig& cfg, ParamCursor& cur,
                          ad::Tensor input) {
    const std::array<int, 3> pad1{1, 1, 1};
    auto [hw, hb] = cur.conv();
    ad::Tensor h = g.conv3d(input, hw, hb, pad1);
    for (int b = 0; b < cfg.blocks; ++b) {
        auto [w1, b1] = cur.conv();
        auto [w2, b2] = cur.conv();
        ad::Tensor t = g.conv3d(h, w1, b1, pad1);
        t = g.relu(t);
        t = g.conv3d(t, w2, b2, pad1);
        h = g.add(h, t);
    }
    auto [tw, tb] = cur.conv();
    ad::Tensor res = g.conv3d(h, tw, tb, pad1);
    return g.global_skip_add(input, res);
}

ad::Tensor forward_densenet(ad::Graph& g, const ModelConfig& cfg, ParamCursor& cur,
                            ad::Tensor input) {
    const std::array<int, 3> pad1{1, 1, 1};
    const std::array<int, 3> pad0{0, 0, 0};
    auto [hw, hb] = cur.conv();
    ad::Tensor h = g.conv3d(input, hw, hb, pad1);
    for (int b = 0; b < cfg.dense_blocks; ++b) {
        ad::Tensor stack = h;
        for (int l = 0; l < cfg.layers_per_dense_block; ++l) {
            auto [w, bias] = cur.conv();
            ad::Tensor y = g.conv3d(g.relu(stack), w, bias, pad1);
            stack = g.concat_channels(stack, y);
        }
        auto [tw, tb] = cur.conv();
        h = g.conv3d(stack, tw, tb, pad0);  // 1x1x1 transition
    }
    auto [ow, ob] = cur.conv();
    ad::Tensor res = g.conv3d(h, ow, ob, pad1);
    return g.global_skip_add(input, res);
}

}  // namespace

ad::Tensor forward(ad::Graph& g, const ModelConfig& config, std::span<const ad::Tensor> params,
                   ad::Tensor input) {
    config.validate();
    if (input.shape().size() != 5 || input.shape()[1] != 1)
        throw ShapeError("model input must be [N,1,D,H,W]");
    ParamCursor cur{params, 0};
    ad::Tensor out = config.architecture == "resnet" ? forward_resnet(g, config, cur, input)
                                                     : forward_densenet(g, config, cur, input);
    if (cur.next != params.size())
        throw ValidationError("model forward: parameter count mismatch");
    return out;
}

namespace {

// Minimal buffer-based executor mirroring the graph builders; shares the
// conv kernels so both paths produce identical numbers.
struct Infer {
    const ParamStore& params;
    std::size_t next = 0;
    int d, h, w;

    std::pair<const std::vector<double>*, const std::vector<double>*> conv_params() {
        const auto* wv = &params.values[next];
        const auto* bv = &params.values[next + 1];
        next += 2;
        return {wv, bv};
    }

    std::vector<double> conv(const std::vector<double>& in, int ci, int co, int k, int pad) {
        auto [wv, bv] = conv_params();
        kernels::Conv3dDims c;
        c.n = 1;
        c.ci = ci;
        c.d = d;
        c.h = h;
        c.w = w;
        c.co = co;
        c.kd = c.kh = c.kw = k;
        c.pd = c.ph = c.pw = pad;
        std::vector<double> out(c.out_count());
        kernels::conv3d_forward(out.data(), in.data(), wv->data(), bv->data(), c);
        return out;
    }
};

}  // namespace

std::vector<double> infer(const ModelConfig& config, const ParamStore& params,
                          std::span<const double> input, int d, int h, int w) {
    config.validate();
    if (static_cast<std::size_t>(d) * h * w != input.size())
        throw ShapeError("infer: input size does not match dims");
    if (params.specs.size() != parameter_specs(config).size())
        throw ValidationError("infer: parameter store does not match config");

    const std::size_t spatial = input.size();
    std::vector<double> x(input.begin(), input.end());
    Infer ex{params, 0, d, h, w};

    auto relu_inplace = [](std::vector<double>& v) {
        for (double& a : v)
            if (a < 0.0) a = 0.0;
    };

    std::vector<double> out;
    if (config.architecture == "resnet") {
        const int c = config.channels;
        std::vector<double> feat = ex.conv(x, 1, c, 3, 1);
        for (int b = 0; b < config.blocks; ++b) {
            std::vector<double> t = ex.conv(feat, c, c, 3, 1);
            relu_inplace(t);
            std::vector<double> t2 = ex.conv(t, c, c, 3, 1);
            for (std::size_t i = 0; i < feat.size(); ++i) feat[i] += t2[i];
        }
        out = ex.conv(feat, c, 1, 3, 1);
    } else {
        const int c0 = config.initial_channels;
        const int g = config.growth;
        const int layers = config.layers_per_dense_block;
        std::vector<double> feat = ex.conv(x, 1, c0, 3, 1);
        for (int b = 0; b < config.dense_blocks; ++b) {
            std::vector<double> stack = feat;
            stack.reserve(spatial * static_cast<std::size_t>(c0 + layers * g));
            for (int l = 0; l < layers; ++l) {
                const int ci = c0 + l * g;
                std::vector<double> act(stack.begin(), stack.begin() + static_cast<std::ptrdiff_t>(spatial * ci));
                relu_inplace(act);
                std::vector<double> y = ex.conv(act, ci, g, 3, 1);
                stack.insert(stack.end(), y.begin(), y.end());
            }
            feat = ex.conv(stack, c0 + layers * g, c0, 1, 0);
        }
        out = ex.conv(feat, c0, 1, 3, 1);
    }

    for (std::size_t i = 0; i < spatial; ++i) out[i] += x[i];
    return out;
}

ModelCheckpoint snapshot(const ModelConfig& config, const ParamStore& params) {
    ModelCheckpoint ckpt;
    ckpt.config = config;
    ckpt.specs = params.specs;
    for (const auto& v : params.values) {
        std::vector<float> f(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
        ckpt.values.push_back(std::move(f));
    }
    return ckpt;
}

ParamStore to_param_store(const ModelCheckpoint& ckpt) {
    ParamStore store;
    store.specs = ckpt.specs;
    for (const auto& f : ckpt.values) {
        std::vector<double> v(f.begin(), f.end());
        store.values.push_back(std::move(v));
    }
    return store;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "CKPT I/O assumes a little-endian host");

nlohmann::json config_to_json(const ModelConfig& c) {
    return {
        {"architecture", c.architecture},
        {"channels", c.channels},
        {"blocks", c.blocks},
        {"growth", c.growth},
        {"initial_channels", c.initial_channels},
        {"dense_blocks", c.dense_blocks},
        {"layers_per_dense_block", c.layers_per_dense_block},
        {"seed", c.seed},
    };
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.architecture = j.at("architecture").get<std::string>();
    c.channels = j.at("channels").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.growth = j.at("growth").get<int>();
    c.initial_channels = j.at("initial_channels").get<int>();
    c.dense_blocks = j.at("dense_blocks").get<int>();
    c.layers_per_dense_block = j.at("layers_per_dense_block").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
    ckpt.config.validate();
    nlohmann::json manifest;
    manifest["config"] = config_to_json(ckpt.config);
    manifest["params"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < ckpt.specs.size(); ++i) {
        manifest["params"].push_back({{"name", ckpt.specs[i].name},
                                      {"shape", ckpt.specs[i].shape},
                                      {"offset", offset}});
        offset += ckpt.values[i].size() * sizeof(float);
    }
    manifest["meta"] = {
        {"epoch", ckpt.epoch},
        {"best_val_ssim", ckpt.best_val_ssim},
        {"seed", ckpt.seed},
        {"split_seed", ckpt.split_seed},
        {"loss_kind", ckpt.loss_kind},
        {"train_subjects", ckpt.train_subjects},
        {"val_subjects", ckpt.val_subjects},
    };
    const std::string mtext = manifest.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write("CKPT", 4);
    std::uint32_t len = static_cast<std::uint32_t>(mtext.size());
    os.write(reinterpret_cast<const char*>(&len), 4);
    os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const auto& v : ckpt.values)
        os.write(reinterpret_cast<const char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

ModelCheckpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "CKPT", 4) != 0)
        throw FormatError("not a CKPT file: " + path.string());
    std::uint32_t len = 0;
    is.read(reinterpret_cast<char*>(&len), 4);
    if (!is || len == 0 || len > (1u << 24))
        throw FormatError("implausible manifest length: " + path.string());
    std::string mtext(len, '\0');
    is.read(mtext.data(), len);
    if (!is) throw FormatError("truncated manifest: " + path.string());

    ModelCheckpoint ckpt;
    try {
        nlohmann::json manifest = nlohmann::json::parse(mtext);
        ckpt.config = config_from_json(manifest.at("config"));
        for (const auto& p : manifest.at("params")) {
            ParamSpec spec;
            spec.name = p.at("name").get<std::string>();
            spec.shape = p.at("shape").get<ad::Shape>();
            ckpt.specs.push_back(std::move(spec));
        }
        const auto& meta = manifest.at("meta");
        ckpt.epoch = meta.at("epoch").get<int>();
        ckpt.best_val_ssim = meta.at("best_val_ssim").get<double>();
        ckpt.seed = meta.at("seed").get<std::uint64_t>();
        ckpt.split_seed = meta.at("split_seed").get<std::uint64_t>();
        ckpt.loss_kind = meta.value("loss_kind", std::string{});
        ckpt.train_subjects = meta.at("train_subjects").get<std::vector<std::string>>();
        ckpt.val_subjects = meta.at("val_subjects").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid checkpoint manifest in " + path.string() + ": " + e.what());
    }

    // Shapes must match the config-derived graph exactly.
    auto expected = parameter_specs(ckpt.config);
    if (expected.size() != ckpt.specs.size())
        throw CorruptionError("checkpoint parameter list does not match config: " + path.string());
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (expected[i].name != ckpt.specs[i].name || expected[i].shape != ckpt.specs[i].shape)
            throw CorruptionError("checkpoint parameter " + expected[i].name +
                                  " does not match config: " + path.string());

    for (const auto& spec : ckpt.specs) {
        std::vector<float> v(ad::numel(spec.shape));
        is.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(float)));
        if (static_cast<std::size_t>(is.gcount()) != v.size() * sizeof(float))
            throw CorruptionError("checkpoint payload shorter than manifest implies: " +
                                  path.string());
        ckpt.values.push_back(std::move(v));
    }
    if (is.peek() != std::ifstream::traits_type::eof())
        throw CorruptionError("checkpoint payload longer than manifest implies: " + path.string());
    return ckpt;
}

}  // namespace volsr::models
