#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "volsr/autodiff.hpp"

namespace volsr::models {

/// Architecture hyperparameters. Defaults are the full-size configurations;
/// tests and desk-scale runs shrink blocks/channels.
struct ModelConfig {
    std::string architecture = "resnet";  // "resnet" | "densenet"
    int channels = 32;                    // resnet block width
    int blocks = 16;                      // resnet residual blocks
    int growth = 16;                      // densenet growth rate
    int initial_channels = 32;            // densenet stem width
    int dense_blocks = 4;
    int layers_per_dense_block = 4;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ParamSpec {
    std::string name;
    ad::Shape shape;
};

/// Canonical parameter list (order is the serialization order).
std::vector<ParamSpec> parameter_specs(const ModelConfig& config);

/// Exact parameter count by enumerating the spec list.
std::size_t count_parameters(const ModelConfig& config);

/// Mutable double-precision parameter values used during training.
struct ParamStore {
    std::vector<ParamSpec> specs;
    std::vector<std::vector<double>> values;

    std::size_t tensor_count() const { return specs.size(); }
};

/// Kaiming fan-in scaled normal initialization for conv weights, zero
/// biases; bit-reproducible for a fixed config.seed.
ParamStore init_parameters(const ModelConfig& config);

/// Builds the forward graph. `params` must be leaf tensors matching
/// parameter_specs(config) in order. Input and output are [N,1,D,H,W]; the
/// networks are resolution-preserving and add the input back to the learned
/// residual (prediction = input + residual).
ad::Tensor forward(ad::Graph& g, const ModelConfig& config, std::span<const ad::Tensor> params,
                   ad::Tensor input);

/// Graph-free forward pass for full-volume inference. `input` is a single
/// volume (d*h*w doubles, x fastest); returns the prediction at the same
/// dims. Numerically identical to the graph path (same kernels, same order).
std::vector<double> infer(const ModelConfig& config, const ParamStore& params,
                          std::span<const double> input, int d, int h, int w);

/// Named, shaped float32 parameter snapshot plus training provenance.
/// Serializes bit-exactly (CKPT container).
struct ModelCheckpoint {
    ModelConfig config;
    std::vector<ParamSpec> specs;
    std::vector<std::vector<float>> values;

    int epoch = 0;
    double best_val_ssim = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    std::string loss_kind;
    std::vector<std::string> train_subjects;
    std::vector<std::string> val_subjects;
};

ModelCheckpoint snapshot(const ModelConfig& config, const ParamStore& params);
ParamStore to_param_store(const ModelCheckpoint& ckpt);

// CKPT container: magic "CKPT", uint32 little-endian JSON manifest length,
// JSON manifest {config, params[{name,shape,offset}], meta}, then raw
// float32 little-endian payloads in manifest order.
void write_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace volsr::models
