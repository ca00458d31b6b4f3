#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "volsr/quality.hpp"

namespace volsr::cli {

namespace fs = std::filesystem;

/// Every command writes run_manifest.json alongside its outputs: command
/// name, flag snapshot, input/output paths, seed, toolkit version and wall
/// time. Outputs themselves are bit-reproducible for identical flags; the
/// manifest's duration field is informational.

struct PhantomOptions {
    fs::path out_dir;
    int subjects = 13;
    std::uint64_t seed = 7;
    std::array<int, 3> dims{96, 96, 32};
    int echoes = 3;
    double texture_bandwidth = 0.4;
    double noise_sigma = 0.01;
};
void cmd_phantom(const PhantomOptions& opt);

struct DegradeOptions {
    fs::path in_dir;
    fs::path out_dir;
};
void cmd_degrade(const DegradeOptions& opt);

struct UpsampleOptions {
    fs::path in_dir;
    fs::path out_dir;
    std::string method = "zerofill";  // "zerofill" | "trilinear"
    int edge_filter = 0;              // zerofill taper width, 0 = off
};
void cmd_upsample(const UpsampleOptions& opt);

struct TrainOptions {
    fs::path config_path;
    fs::path data_dir;
    fs::path out_dir;
};
void cmd_train(const TrainOptions& opt);

struct EvaluateOptions {
    fs::path data_dir;
    std::vector<fs::path> checkpoints;
    fs::path out_report;  // JSON report path; a .txt table lands next to it
    std::optional<std::uint64_t> split_seed;  // defaults to the first checkpoint's
    std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
};
/// Test-set report over zero-fill, trilinear, and each checkpoint. Refuses
/// checkpoints whose train/validation subjects intersect the test split.
quality::MetricsReport cmd_evaluate(const EvaluateOptions& opt);

struct CompareOptions {
    fs::path hr_path;
    fs::path lr_path;  // the upsampled (HR-grid) input volume
    std::vector<fs::path> predictions;
    fs::path out_dir;
    int slice = -1;  // z index; -1 = middle slice
};
void cmd_compare(const CompareOptions& opt);

}  // namespace volsr::cli
