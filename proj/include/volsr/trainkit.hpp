#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "volsr/losses.hpp"
#include "volsr/models.hpp"
#include "volsr/rng.hpp"
#include "volsr/volume.hpp"

namespace volsr::train {

/// One training example: the zero-filled degraded volume on the HR grid and
/// the HR target, both in the HR volume's z-score space.
struct SamplePair {
    Volume input;
    Volume target;
    ZScoreStats hr_stats;  // stats that normalized the HR volume
    std::string subject;
    int echo = 0;
};

struct HrVolume {
    Volume volume;
    std::string subject;
    int echo = 0;
};

/// Subject-level split; all echoes of a subject share one partition.
struct SplitAssignment {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    std::array<double, 3> ratios{0.6, 0.2, 0.2};
    std::uint64_t seed = 0;
};

/// Seeded shuffle, then contiguous assignment: validation and test get
/// floor(ratio * n) subjects each, the remainder goes to train.
SplitAssignment split_subjects(std::vector<std::string> subjects, std::array<double, 3> ratios,
                               std::uint64_t seed);

/// Builds input/target pairs: z-score the HR volume, degrade by factor-2
/// k-space truncation, zero-fill back to the HR grid (no edge filter).
std::vector<SamplePair> make_pairs(const std::vector<HrVolume>& hr_volumes);

struct AugmentConfig {
    bool flips = true;
    bool rotations = true;  // uniform in [-15, 15] deg in-plane, [-5, 5] through-plane
};

/// Aligned random crop plus optional flips/rotation, applied identically to
/// input and target. Patch dims are (x, y, z) voxels. Deterministic given
/// the Rng state; draw order: offsets x,y,z; flips x,y,z; rotation angles.
std::pair<Volume, Volume> sample_patch(const SamplePair& pair, std::array<int, 3> patch_dims,
                                       const AugmentConfig& augment, Rng& rng);

struct TrainConfig {
    models::ModelConfig model;
    losses::LossSpec loss;
    double learning_rate = 1e-4;
    int batch_size = 4;
    std::array<int, 3> patch_dims{64, 64, 16};
    int patience = 100;
    int max_epochs = 1000;
    int steps_per_epoch = 32;
    AugmentConfig augment;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    std::array<double, 3> split_ratios{0.6, 0.2, 0.2};

    void validate() const;
};

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

/// Adam moment buffers; t increments by exactly one per step.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState like(const models::ParamStore& params);
};

/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected
/// moments.
void adam_step(models::ParamStore& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr);

/// Validation-metric early stopping: stops once at least `patience` epochs
/// (and at least one) have passed since the best epoch. Strict improvement
/// moves the best.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    /// Returns true when this epoch is a new best.
    bool observe(int epoch, double value) {
        if (value > best_value_) {
            best_value_ = value;
            best_epoch_ = epoch;
            return true;
        }
        return false;
    }
    bool should_stop(int epoch) const {
        int since = epoch - best_epoch_;
        return since >= patience_ && since >= 1;
    }
    int best_epoch() const { return best_epoch_; }
    double best_value() const { return best_value_; }

private:
    int patience_;
    double best_value_ = -std::numeric_limits<double>::infinity();
    int best_epoch_ = 0;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_ssim = 0.0;
    int best_epoch = 0;
};

struct TrainResult {
    models::ModelCheckpoint checkpoint;
    std::vector<EpochRecord> log;
};

/// Full training loop: fixed number of patch batches per epoch, full-volume
/// validation SSIM after each epoch (computed in the denormalized HR space),
/// best-SSIM checkpoint retained, early stopping per EarlyStopper.
/// Deterministic for a fixed config (single-threaded).
TrainResult train(const TrainConfig& config, const std::vector<SamplePair>& pairs,
                  const SplitAssignment& split);

/// Full-volume forward pass through a checkpoint (no patching). The input is
/// expected in the same normalized space the model was trained on; the
/// output stays in that space.
Volume predict_volume(const models::ModelCheckpoint& checkpoint, const Volume& input);

}  // namespace volsr::train
