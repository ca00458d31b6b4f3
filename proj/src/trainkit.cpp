#include "volsr/trainkit.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "volsr/errors.hpp"
#include "volsr/fourier.hpp"
#include "volsr/quality.hpp"

namespace volsr::train {

SplitAssignment split_subjects(std::vector<std::string> subjects, std::array<double, 3> ratios,
                               std::uint64_t seed) {
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    if (subjects.size() < 3)
        throw ValidationError("need at least 3 subjects to form train/validation/test splits");
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
    for (double r : ratios)
        if (r < 0.0) throw ValidationError("split ratios must be non-negative");

    Rng rng(seed);
    for (std::size_t i = subjects.size(); i > 1; --i)
        std::swap(subjects[i - 1], subjects[rng.below(i)]);

    const auto n = subjects.size();
    const auto n_val = static_cast<std::size_t>(ratios[1] * static_cast<double>(n));
    const auto n_test = static_cast<std::size_t>(ratios[2] * static_cast<double>(n));
    const auto n_train = n - n_val - n_test;  // floor remainder goes to train

    SplitAssignment split;
    split.ratios = ratios;
    split.seed = seed;
    split.train.assign(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.validation.assign(subjects.begin() + static_cast<std::ptrdiff_t>(n_train),
                            subjects.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(subjects.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                      subjects.end());
    return split;
}

std::vector<SamplePair> make_pairs(const std::vector<HrVolume>& hr_volumes) {
    std::vector<SamplePair> pairs;
    pairs.reserve(hr_volumes.size());
    for (const auto& hr : hr_volumes) {
        auto [normalized, stats] = zscore_normalize(hr.volume);
        Volume lr = fourier::kspace_truncate_downsample(normalized);
        SamplePair p;
        p.input = fourier::kspace_zerofill_upsample(lr);
        p.target = std::move(normalized);
        p.hr_stats = stats;
        p.subject = hr.subject;
        p.echo = hr.echo;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

namespace {

Volume flip_axes(const Volume& v, bool fx, bool fy, bool fz) {
    if (!fx && !fy && !fz) return v;
    Volume out(v.nx, v.ny, v.nz, v.sx, v.sy, v.sz);
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < v.ny; ++y)
            for (int x = 0; x < v.nx; ++x)
                out.at(x, y, z) =
                    v.at(fx ? v.nx - 1 - x : x, fy ? v.ny - 1 - y : y, fz ? v.nz - 1 - z : z);
    return out;
}

Volume crop(const Volume& v, int ox, int oy, int oz, std::array<int, 3> dims) {
    Volume out(dims[0], dims[1], dims[2], v.sx, v.sy, v.sz);
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) out.at(x, y, z) = v.at(ox + x, oy + y, oz + z);
    return out;
}

}  // namespace

std::pair<Volume, Volume> sample_patch(const SamplePair& pair, std::array<int, 3> patch_dims,
                                       const AugmentConfig& augment, Rng& rng) {
    const Volume& in = pair.input;
    if (patch_dims[0] > in.nx || patch_dims[1] > in.ny || patch_dims[2] > in.nz)
        throw ValidationError("patch dims larger than volume dims");

    const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(in.nx - patch_dims[0] + 1)));
    const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(in.ny - patch_dims[1] + 1)));
    const int oz = static_cast<int>(rng.below(static_cast<std::uint64_t>(in.nz - patch_dims[2] + 1)));

    Volume pi = crop(pair.input, ox, oy, oz, patch_dims);
    Volume pt = crop(pair.target, ox, oy, oz, patch_dims);

    if (augment.flips) {
        const bool fx = rng.coin(), fy = rng.coin(), fz = rng.coin();
        pi = flip_axes(pi, fx, fy, fz);
        pt = flip_axes(pt, fx, fy, fz);
    }
    if (augment.rotations) {
        const double inplane = rng.uniform(-15.0, 15.0);
        const double through = rng.uniform(-5.0, 5.0);
        pi = trilinear_resample(pi, patch_dims, inplane, through);
        pt = trilinear_resample(pt, patch_dims, inplane, through);
    }
    return {std::move(pi), std::move(pt)};
}

void TrainConfig::validate() const {
    model.validate();
    loss.validate();
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (batch_size <= 0) throw ValidationError("batch size must be positive");
    if (patch_dims[0] <= 0 || patch_dims[1] <= 0 || patch_dims[2] <= 0)
        throw ValidationError("patch dims must be positive");
    if (patience < 0) throw ValidationError("patience must be >= 0");
    if (max_epochs <= 0) throw ValidationError("max epochs must be positive");
    if (steps_per_epoch <= 0) throw ValidationError("steps per epoch must be positive");
}

std::string train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["model"] = {{"architecture", c.model.architecture},
                  {"channels", c.model.channels},
                  {"blocks", c.model.blocks},
                  {"growth", c.model.growth},
                  {"initial_channels", c.model.initial_channels},
                  {"dense_blocks", c.model.dense_blocks},
                  {"layers_per_dense_block", c.model.layers_per_dense_block},
                  {"seed", c.model.seed}};
    j["loss"] = {{"kind", c.loss.kind},
                 {"ssim_window", c.loss.ssim_window},
                 {"perceptual_seed", c.loss.perceptual_seed},
                 {"layer_weights", c.loss.layer_weights}};
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["patch_dims"] = c.patch_dims;
    j["patience"] = c.patience;
    j["max_epochs"] = c.max_epochs;
    j["steps_per_epoch"] = c.steps_per_epoch;
    j["augment"] = {{"flips", c.augment.flips}, {"rotations", c.augment.rotations}};
    j["seed"] = c.seed;
    j["split_seed"] = c.split_seed;
    j["split_ratios"] = c.split_ratios;
    return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
    TrainConfig c;
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        const auto& m = j.at("model");
        c.model.architecture = m.at("architecture").get<std::string>();
        c.model.channels = m.value("channels", c.model.channels);
        c.model.blocks = m.value("blocks", c.model.blocks);
        c.model.growth = m.value("growth", c.model.growth);
        c.model.initial_channels = m.value("initial_channels", c.model.initial_channels);
        c.model.dense_blocks = m.value("dense_blocks", c.model.dense_blocks);
        c.model.layers_per_dense_block =
            m.value("layers_per_dense_block", c.model.layers_per_dense_block);
        c.model.seed = m.value("seed", c.model.seed);
        const auto& l = j.at("loss");
        c.loss.kind = l.at("kind").get<std::string>();
        c.loss.ssim_window = l.value("ssim_window", c.loss.ssim_window);
        c.loss.perceptual_seed = l.value("perceptual_seed", c.loss.perceptual_seed);
        if (l.contains("layer_weights"))
            c.loss.layer_weights = l.at("layer_weights").get<std::array<double, 3>>();
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        if (j.contains("patch_dims")) c.patch_dims = j.at("patch_dims").get<std::array<int, 3>>();
        c.patience = j.value("patience", c.patience);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
        if (j.contains("augment")) {
            c.augment.flips = j.at("augment").value("flips", c.augment.flips);
            c.augment.rotations = j.at("augment").value("rotations", c.augment.rotations);
        }
        c.seed = j.value("seed", c.seed);
        c.split_seed = j.value("split_seed", c.split_seed);
        if (j.contains("split_ratios"))
            c.split_ratios = j.at("split_ratios").get<std::array<double, 3>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid training config: ") + e.what());
    }
    c.validate();
    return c;
}

AdamState AdamState::like(const models::ParamStore& params) {
    AdamState s;
    for (const auto& v : params.values) {
        s.m.emplace_back(v.size(), 0.0);
        s.v.emplace_back(v.size(), 0.0);
    }
    return s;
}

void adam_step(models::ParamStore& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr) {
    if (grads.size() != params.values.size() || state.m.size() != params.values.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t p = 0; p < params.values.size(); ++p) {
        auto& theta = params.values[p];
        const auto& g = grads[p];
        if (g.size() != theta.size()) throw ShapeError("adam_step: gradient shape mismatch");
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

namespace {

std::vector<const SamplePair*> pairs_for(const std::vector<SamplePair>& pairs,
                                         const std::vector<std::string>& subjects) {
    std::set<std::string> wanted(subjects.begin(), subjects.end());
    std::vector<const SamplePair*> out;
    for (const auto& p : pairs)
        if (wanted.count(p.subject)) out.push_back(&p);
    return out;
}

// Batch tensors are [B,1,D,H,W] with D=z, H=y, W=x.
std::vector<double> to_batch(const std::vector<Volume>& patches) {
    std::vector<double> out;
    out.reserve(patches.size() * patches.front().size());
    for (const auto& p : patches)
        for (float f : p.data) out.push_back(static_cast<double>(f));
    return out;
}

double validation_ssim(const models::ModelConfig& config, const models::ParamStore& params,
                       const std::vector<const SamplePair*>& val_pairs, int ssim_window) {
    double acc = 0.0;
    for (const SamplePair* p : val_pairs) {
        const Volume& in = p->input;
        std::vector<double> x(in.data.begin(), in.data.end());
        std::vector<double> y = models::infer(config, params, x, in.nz, in.ny, in.nx);
        Volume pred(in.nx, in.ny, in.nz, in.sx, in.sy, in.sz);
        for (std::size_t i = 0; i < y.size(); ++i) {
            // guard the float32 narrowing as well
            if (!std::isfinite(y[i]) || std::abs(y[i]) > 3.0e38)
                throw DivergenceError("non-finite model prediction during validation");
            pred.data[i] = static_cast<float>(y[i]);
        }
        // Score in the denormalized HR intensity space the reports use.
        Volume pred_raw = zscore_denormalize(pred, p->hr_stats);
        Volume ref_raw = zscore_denormalize(p->target, p->hr_stats);
        acc += quality::ssim(ref_raw, pred_raw, ssim_window);
    }
    return acc / static_cast<double>(val_pairs.size());
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<SamplePair>& pairs,
                  const SplitAssignment& split) {
    config.validate();
    auto train_pairs = pairs_for(pairs, split.train);
    auto val_pairs = pairs_for(pairs, split.validation);
    if (train_pairs.empty()) throw ValidationError("training split resolves to no sample pairs");
    if (val_pairs.empty()) throw ValidationError("validation split resolves to no sample pairs");
    for (const auto* p : train_pairs)
        if (config.patch_dims[0] > p->input.nx || config.patch_dims[1] > p->input.ny ||
            config.patch_dims[2] > p->input.nz)
            throw ValidationError("patch dims exceed volume dims");

    models::ParamStore params = models::init_parameters(config.model);
    AdamState adam = AdamState::like(params);
    Rng rng(config.seed);

    losses::PerceptualExtractor extractor;
    if (config.loss.kind == "perceptual")
        extractor = losses::PerceptualExtractor::make(config.loss.perceptual_seed);

    EarlyStopper stopper(config.patience);
    TrainResult result;
    models::ModelCheckpoint best;

    const auto [px, py, pz] = config.patch_dims;
    const ad::Shape batch_shape{config.batch_size, 1, pz, py, px};

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        double loss_sum = 0.0;
        for (int step = 0; step < config.steps_per_epoch; ++step) {
            std::vector<Volume> ins, tgts;
            for (int b = 0; b < config.batch_size; ++b) {
                const SamplePair& p = *train_pairs[rng.below(train_pairs.size())];
                auto [pi, pt] = sample_patch(p, config.patch_dims, config.augment, rng);
                ins.push_back(std::move(pi));
                tgts.push_back(std::move(pt));
            }
            std::vector<double> in_values = to_batch(ins);
            std::vector<double> tgt_values = to_batch(tgts);

            ad::Graph g;
            std::vector<ad::Tensor> param_leaves;
            param_leaves.reserve(params.tensor_count());
            for (std::size_t i = 0; i < params.tensor_count(); ++i)
                param_leaves.push_back(g.leaf(params.specs[i].shape, params.values[i], true));
            ad::Tensor input = g.constant(batch_shape, in_values);
            ad::Tensor target = g.constant(batch_shape, tgt_values);

            ad::Tensor out = models::forward(g, config.model, param_leaves, input);
            ad::Tensor loss;
            if (config.loss.kind == "mse")
                loss = losses::mse_loss(g, out, target);
            else if (config.loss.kind == "ssim")
                loss = losses::ssim_loss(g, out, target, config.loss.ssim_window);
            else
                loss = losses::perceptual_loss(g, out, target, extractor,
                                               config.loss.layer_weights);

            const double loss_value = loss.value()[0];
            if (!std::isfinite(loss_value))
                throw DivergenceError("non-finite training loss at epoch " +
                                      std::to_string(epoch) + ", step " + std::to_string(step));
            loss_sum += loss_value;

            g.backward(loss);
            std::vector<std::vector<double>> grads;
            grads.reserve(param_leaves.size());
            for (const auto& leaf : param_leaves) {
                auto gv = leaf.grad();
                grads.emplace_back(gv.begin(), gv.end());
            }
            adam_step(params, grads, adam, config.learning_rate);
        }

        double val = 0.0;
        try {
            val = validation_ssim(config.model, params, val_pairs, config.loss.ssim_window);
        } catch (const DivergenceError& e) {
            throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
        }
        if (stopper.observe(epoch, val)) {
            best = models::snapshot(config.model, params);
            best.epoch = epoch;
            best.best_val_ssim = val;
            best.seed = config.seed;
            best.split_seed = split.seed;
            best.train_subjects = split.train;
            best.val_subjects = split.validation;
        }
        result.log.push_back(
            {epoch, loss_sum / config.steps_per_epoch, val, stopper.best_epoch()});
        if (stopper.should_stop(epoch)) break;
    }

    result.checkpoint = std::move(best);
    return result;
}

Volume predict_volume(const models::ModelCheckpoint& checkpoint, const Volume& input) {
    input.validate();
    if (input.nx < 3 || input.ny < 3 || input.nz < 3)
        throw ValidationError("predict_volume input dims must be >= 3 per axis");
    models::ParamStore params = models::to_param_store(checkpoint);
    std::vector<double> x(input.data.begin(), input.data.end());
    std::vector<double> y = models::infer(checkpoint.config, params, x, input.nz, input.ny, input.nx);
    Volume out(input.nx, input.ny, input.nz, input.sx, input.sy, input.sz);
    for (std::size_t i = 0; i < y.size(); ++i) out.data[i] = static_cast<float>(y[i]);
    return out;
}

}  // namespace volsr::train
