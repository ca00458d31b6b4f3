#include "volsr/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "volsr/errors.hpp"
#include "volsr/fourier.hpp"
#include "volsr/phantom.hpp"
#include "volsr/png_io.hpp"
#include "volsr/trainkit.hpp"
#include "volsr/version.hpp"
#include "volsr/vol_io.hpp"

namespace volsr::cli {

namespace {

class ManifestWriter {
public:
    ManifestWriter(std::string command, nlohmann::json config, std::uint64_t seed = 0)
        : command_(std::move(command)), config_(std::move(config)), seed_(seed),
          start_(std::chrono::steady_clock::now()) {}

    void add_input(const fs::path& p) { inputs_.push_back(p.string()); }
    void add_output(const fs::path& p) { outputs_.push_back(p.string()); }

    void write(const fs::path& dir) const {
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        nlohmann::json j{{"command", command_}, {"config", config_},   {"inputs", inputs_},
                         {"outputs", outputs_}, {"seed", seed_},       {"version", kVersion},
                         {"duration_seconds", seconds}};
        std::ofstream os(dir / "run_manifest.json");
        if (!os) throw IoError("cannot write run manifest in " + dir.string());
        os << j.dump(2) << '\n';
    }

private:
    std::string command_;
    nlohmann::json config_;
    std::uint64_t seed_;
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

std::vector<fs::path> list_volumes(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".vol") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw IoError("no .vol files in " + dir.string());
    return paths;
}

std::vector<train::HrVolume> load_dataset(const fs::path& dir,
                                          const phantom::DatasetManifest& manifest) {
    std::vector<train::HrVolume> volumes;
    for (const auto& entry : manifest.entries) {
        train::HrVolume hr;
        hr.volume = read_volume(dir / entry.file);
        hr.subject = entry.subject;
        hr.echo = entry.echo;
        volumes.push_back(std::move(hr));
    }
    return volumes;
}

}  // namespace

void cmd_phantom(const PhantomOptions& opt) {
    phantom::PhantomSpec spec;
    spec.dims = opt.dims;
    spec.echoes = opt.echoes;
    spec.texture_bandwidth = opt.texture_bandwidth;
    spec.noise_sigma = opt.noise_sigma;
    spec.validate();

    ManifestWriter manifest("phantom",
                            {{"out", opt.out_dir.string()},
                             {"subjects", opt.subjects},
                             {"seed", opt.seed},
                             {"dims", opt.dims},
                             {"echoes", opt.echoes},
                             {"texture_bandwidth", opt.texture_bandwidth},
                             {"noise_sigma", opt.noise_sigma}},
                            opt.seed);

    phantom::Dataset ds = phantom::generate_dataset(spec, opt.subjects, opt.seed);
    phantom::write_dataset(opt.out_dir, ds);
    for (const auto& e : ds.entries)
        manifest.add_output(opt.out_dir / (e.subject + "_echo" + std::to_string(e.echo) + ".vol"));
    manifest.add_output(opt.out_dir / "dataset_manifest.json");
    manifest.write(opt.out_dir);
}

void cmd_degrade(const DegradeOptions& opt) {
    ManifestWriter manifest("degrade",
                            {{"in", opt.in_dir.string()}, {"out", opt.out_dir.string()}});
    fs::create_directories(opt.out_dir);
    for (const auto& path : list_volumes(opt.in_dir)) {
        Volume v = read_volume(path);
        Volume lr = fourier::kspace_truncate_downsample(v);
        const fs::path out = opt.out_dir / path.filename();
        write_volume(out, lr);
        manifest.add_input(path);
        manifest.add_output(out);
    }
    manifest.write(opt.out_dir);
}

void cmd_upsample(const UpsampleOptions& opt) {
    if (opt.method != "zerofill" && opt.method != "trilinear")
        throw ValidationError("unknown upsample method: " + opt.method);
    if (opt.method == "trilinear" && opt.edge_filter != 0)
        throw ValidationError("--edge-filter applies to the zerofill method only");

    ManifestWriter manifest("upsample", {{"in", opt.in_dir.string()},
                                         {"out", opt.out_dir.string()},
                                         {"method", opt.method},
                                         {"edge_filter", opt.edge_filter}});
    fs::create_directories(opt.out_dir);
    for (const auto& path : list_volumes(opt.in_dir)) {
        Volume v = read_volume(path);
        Volume up;
        if (opt.method == "zerofill") {
            up = fourier::kspace_zerofill_upsample(v, 2, opt.edge_filter);
        } else {
            up = trilinear_resample(v, {2 * v.nx, 2 * v.ny, 2 * v.nz});
        }
        const fs::path out = opt.out_dir / path.filename();
        write_volume(out, up);
        manifest.add_input(path);
        manifest.add_output(out);
    }
    manifest.write(opt.out_dir);
}

void cmd_train(const TrainOptions& opt) {
    std::ifstream cfg_in(opt.config_path);
    if (!cfg_in) throw IoError("cannot open training config: " + opt.config_path.string());
    std::stringstream buffer;
    buffer << cfg_in.rdbuf();
    train::TrainConfig config = train::train_config_from_json(buffer.str());

    if (!fs::is_directory(opt.data_dir))
        throw IoError("data directory does not exist: " + opt.data_dir.string());
    phantom::DatasetManifest dm = phantom::read_dataset_manifest(opt.data_dir);

    ManifestWriter manifest("train",
                            {{"config", opt.config_path.string()},
                             {"data", opt.data_dir.string()},
                             {"out", opt.out_dir.string()}},
                            config.seed);
    manifest.add_input(opt.config_path);
    manifest.add_input(opt.data_dir / "dataset_manifest.json");

    auto hr_volumes = load_dataset(opt.data_dir, dm);
    auto pairs = train::make_pairs(hr_volumes);
    auto split = train::split_subjects(dm.subjects, config.split_ratios, config.split_seed);

    train::TrainResult result = train::train(config, pairs, split);
    result.checkpoint.loss_kind = config.loss.kind;

    fs::create_directories(opt.out_dir);
    const fs::path ckpt_path = opt.out_dir / "checkpoint.ckpt";
    models::write_checkpoint(ckpt_path, result.checkpoint);
    manifest.add_output(ckpt_path);

    const fs::path log_path = opt.out_dir / "training_log.jsonl";
    {
        std::ofstream log(log_path);
        if (!log) throw IoError("cannot write training log: " + log_path.string());
        for (const auto& r : result.log) {
            nlohmann::json j{{"epoch", r.epoch},
                             {"train_loss", r.train_loss},
                             {"val_ssim", r.val_ssim},
                             {"best_epoch", r.best_epoch}};
            log << j.dump() << '\n';
        }
    }
    manifest.add_output(log_path);
    manifest.write(opt.out_dir);
}

namespace {

struct EvalMethod {
    std::string method;
    std::string loss;
    std::vector<quality::MetricsTriple> triples;
};

}  // namespace

quality::MetricsReport cmd_evaluate(const EvaluateOptions& opt) {
    phantom::DatasetManifest dm = phantom::read_dataset_manifest(opt.data_dir);

    std::vector<models::ModelCheckpoint> checkpoints;
    for (const auto& p : opt.checkpoints) checkpoints.push_back(models::read_checkpoint(p));

    std::uint64_t split_seed = 0;
    if (opt.split_seed.has_value())
        split_seed = *opt.split_seed;
    else if (!checkpoints.empty())
        split_seed = checkpoints.front().split_seed;

    auto split = train::split_subjects(dm.subjects, opt.split_ratios, split_seed);
    if (split.test.empty()) throw ValidationError("test split is empty");

    // Leakage refusal: a checkpoint trained (or validated) on a test subject
    // cannot be evaluated on that split.
    std::set<std::string> test_set(split.test.begin(), split.test.end());
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        const auto& ck = checkpoints[i];
        for (const auto& s : ck.train_subjects)
            if (test_set.count(s))
                throw LeakageError("checkpoint " + opt.checkpoints[i].string() +
                                   " was trained on test subject " + s);
        for (const auto& s : ck.val_subjects)
            if (test_set.count(s))
                throw LeakageError("checkpoint " + opt.checkpoints[i].string() +
                                   " was validated on test subject " + s);
    }

    ManifestWriter manifest("evaluate",
                            {{"data", opt.data_dir.string()},
                             {"out", opt.out_report.string()},
                             {"split_seed", split_seed},
                             {"split_ratios", opt.split_ratios}},
                            split_seed);
    manifest.add_input(opt.data_dir / "dataset_manifest.json");
    for (const auto& p : opt.checkpoints) manifest.add_input(p);

    // Method rows: the two baselines always, then one row per checkpoint.
    std::vector<EvalMethod> rows;
    rows.push_back({"k-space zero-filling", "n/a", {}});
    rows.push_back({"trilinear", "n/a", {}});
    std::map<std::pair<std::string, std::string>, int> collisions;
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        std::string method = checkpoints[i].config.architecture;
        std::string loss = checkpoints[i].loss_kind.empty() ? "n/a" : checkpoints[i].loss_kind;
        if (++collisions[{method, loss}] > 1)
            method += ":" + opt.checkpoints[i].stem().string();
        rows.push_back({method, loss, {}});
    }

    // Deterministic volume order: manifest entries restricted to the test
    // split, sorted by (subject, echo).
    std::vector<phantom::ManifestEntry> test_entries;
    for (const auto& e : dm.entries)
        if (test_set.count(e.subject)) test_entries.push_back(e);
    std::sort(test_entries.begin(), test_entries.end(), [](const auto& a, const auto& b) {
        return std::tie(a.subject, a.echo) < std::tie(b.subject, b.echo);
    });

    for (const auto& entry : test_entries) {
        Volume hr_raw = read_volume(opt.data_dir / entry.file);
        auto [hr_z, stats] = zscore_normalize(hr_raw);
        Volume lr = fourier::kspace_truncate_downsample(hr_z);
        Volume zerofill = fourier::kspace_zerofill_upsample(lr);
        Volume trilinear = trilinear_resample(lr, {hr_raw.nx, hr_raw.ny, hr_raw.nz});

        // Metrics run in the denormalized HR intensity space.
        rows[0].triples.push_back(
            quality::metrics(hr_raw, zscore_denormalize(zerofill, stats)));
        rows[1].triples.push_back(
            quality::metrics(hr_raw, zscore_denormalize(trilinear, stats)));
        for (std::size_t i = 0; i < checkpoints.size(); ++i) {
            Volume pred = train::predict_volume(checkpoints[i], zerofill);
            rows[2 + i].triples.push_back(
                quality::metrics(hr_raw, zscore_denormalize(pred, stats)));
        }
    }

    std::vector<quality::MethodEntry> entries;
    for (auto& r : rows) entries.push_back({r.method, r.loss, std::move(r.triples)});
    quality::MetricsReport report = quality::aggregate_report(entries);
    for (const auto& ck : checkpoints)
        if (ck.loss_kind == "perceptual") {
            report.notes.push_back(
                "perceptual-loss checkpoints use a fixed seeded random feature extractor, "
                "not a pretrained classifier");
            break;
        }

    if (opt.out_report.has_parent_path()) fs::create_directories(opt.out_report.parent_path());
    {
        std::ofstream os(opt.out_report);
        if (!os) throw IoError("cannot write report: " + opt.out_report.string());
        os << quality::report_to_json(report) << '\n';
    }
    manifest.add_output(opt.out_report);
    fs::path table_path = opt.out_report;
    table_path.replace_extension(".txt");
    {
        std::ofstream os(table_path);
        if (!os) throw IoError("cannot write report table: " + table_path.string());
        os << quality::render_table(report);
    }
    manifest.add_output(table_path);
    manifest.write(opt.out_report.has_parent_path() ? opt.out_report.parent_path()
                                                    : fs::path("."));
    return report;
}

namespace {

// [-3, 3] z-scored window mapped to [0, 255].
std::uint8_t window_to_gray(double z) {
    double t = (std::clamp(z, -3.0, 3.0) + 3.0) / 6.0;
    return static_cast<std::uint8_t>(std::lround(t * 255.0));
}

std::vector<std::uint8_t> slice_to_image(const Volume& v, int slice, const ZScoreStats& stats) {
    std::vector<std::uint8_t> img(static_cast<std::size_t>(v.nx) * v.ny);
    std::size_t o = 0;
    for (int y = 0; y < v.ny; ++y)
        for (int x = 0; x < v.nx; ++x, ++o)
            img[o] = window_to_gray((v.at(x, y, slice) - stats.mean) / stats.stddev);
    return img;
}

std::string fmt4(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << v;
    return os.str();
}

}  // namespace

void cmd_compare(const CompareOptions& opt) {
    Volume hr = read_volume(opt.hr_path);
    Volume lr = read_volume(opt.lr_path);
    if (lr.nx != hr.nx || lr.ny != hr.ny || lr.nz != hr.nz)
        throw ValidationError("compare expects the LR volume upsampled to HR dims");
    std::vector<std::pair<std::string, Volume>> preds;
    for (const auto& p : opt.predictions) {
        Volume v = read_volume(p);
        if (v.nx != hr.nx || v.ny != hr.ny || v.nz != hr.nz)
            throw ValidationError("prediction dims differ from HR: " + p.string());
        preds.emplace_back(p.stem().string(), std::move(v));
    }

    const int slice = opt.slice < 0 ? hr.nz / 2 : opt.slice;
    if (slice < 0 || slice >= hr.nz)
        throw ValidationError("slice index out of bounds: " + std::to_string(opt.slice));

    ManifestWriter manifest("compare", {{"hr", opt.hr_path.string()},
                                        {"lr", opt.lr_path.string()},
                                        {"out", opt.out_dir.string()},
                                        {"slice", slice}});
    manifest.add_input(opt.hr_path);
    manifest.add_input(opt.lr_path);
    for (const auto& p : opt.predictions) manifest.add_input(p);

    fs::create_directories(opt.out_dir);

    // Display window from the HR volume's z-score stats, shared by every
    // image panel so intensities stay comparable.
    ZScoreStats stats;
    stats.mean = volume_mean(hr);
    stats.stddev = volume_stddev(hr, stats.mean);
    if (!(stats.stddev > 0.0)) throw DegenerateInputError("HR volume is constant");

    const std::string suffix = "_slice" + std::to_string(slice) + ".png";
    auto write_panel = [&](const std::string& name, const Volume& v) {
        const fs::path path = opt.out_dir / (name + suffix);
        write_gray8_png(path, v.nx, v.ny, slice_to_image(v, slice, stats));
        manifest.add_output(path);
    };
    write_panel("input", lr);
    write_panel("hr", hr);

    nlohmann::json slice_metrics;
    slice_metrics["slice"] = slice;
    slice_metrics["methods"] = nlohmann::json::array();

    for (const auto& [name, pred] : preds) {
        write_panel("pred_" + name, pred);

        // Signed residual on a symmetric diverging scale; the slice's own
        // range goes into the filename.
        std::vector<double> residual(static_cast<std::size_t>(hr.nx) * hr.ny);
        double rmin = 0.0, rmax = 0.0, rsum = 0.0, sq = 0.0;
        double hmin = hr.at(0, 0, slice), hmax = hmin;
        std::size_t o = 0;
        for (int y = 0; y < hr.ny; ++y)
            for (int x = 0; x < hr.nx; ++x, ++o) {
                const double h = hr.at(x, y, slice);
                const double r = static_cast<double>(pred.at(x, y, slice)) - h;
                residual[o] = r;
                rmin = std::min(rmin, r);
                rmax = std::max(rmax, r);
                rsum += r;
                sq += r * r;
                hmin = std::min(hmin, h);
                hmax = std::max(hmax, h);
            }
        const double amplitude = std::max(std::abs(rmin), std::abs(rmax));
        std::vector<std::uint8_t> img(residual.size());
        for (std::size_t i = 0; i < residual.size(); ++i) {
            double t = amplitude > 0.0 ? residual[i] / amplitude : 0.0;  // [-1, 1], 0 at center
            img[i] = static_cast<std::uint8_t>(std::lround((t + 1.0) * 127.5));
        }
        const fs::path rpath = opt.out_dir / ("residual_" + name + "_slice" +
                                              std::to_string(slice) + "_min" + fmt4(rmin) +
                                              "_max" + fmt4(rmax) + ".png");
        write_gray8_png(rpath, hr.nx, hr.ny, img);
        manifest.add_output(rpath);

        const double n = static_cast<double>(residual.size());
        const double slice_mse = sq / n;
        const double range = hmax - hmin;
        nlohmann::json m{{"name", name},
                         {"residual_min", rmin},
                         {"residual_max", rmax},
                         {"residual_mean", rsum / n}};
        if (range > 0.0) {
            m["psnr"] = slice_mse > 0.0 ? 10.0 * std::log10(range * range / slice_mse)
                                        : std::numeric_limits<double>::infinity();
            m["nrmse"] = std::sqrt(slice_mse) / range;
        }
        slice_metrics["methods"].push_back(std::move(m));
    }

    const fs::path metrics_path = opt.out_dir / "slice_metrics.json";
    std::ofstream os(metrics_path);
    if (!os) throw IoError("cannot write slice metrics: " + metrics_path.string());
    os << slice_metrics.dump(2) << '\n';
    manifest.add_output(metrics_path);
    manifest.write(opt.out_dir);
}

}  // namespace volsr::cli
