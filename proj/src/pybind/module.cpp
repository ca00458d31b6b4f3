#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "volsr/commands.hpp"
#include "volsr/errors.hpp"
#include "volsr/fourier.hpp"
#include "volsr/phantom.hpp"
#include "volsr/quality.hpp"
#include "volsr/trainkit.hpp"
#include "volsr/version.hpp"
#include "volsr/vol_io.hpp"
#include "volsr/volume.hpp"

namespace py = pybind11;
using namespace volsr;

namespace {

// Volumes cross the boundary as float32 arrays of shape (nz, ny, nx); the
// last axis is x, matching the x-fastest layout bit for bit.
Volume volume_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr,
                         std::array<double, 3> spacing) {
    if (arr.ndim() != 3) throw ValidationError("expected a 3D array (nz, ny, nx)");
    Volume v(static_cast<int>(arr.shape(2)), static_cast<int>(arr.shape(1)),
             static_cast<int>(arr.shape(0)), spacing[0], spacing[1], spacing[2]);
    std::memcpy(v.data.data(), arr.data(), sizeof(float) * v.data.size());
    v.validate();
    return v;
}

py::array_t<float> array_from_volume(const Volume& v) {
    py::array_t<float> arr({v.nz, v.ny, v.nx});
    std::memcpy(arr.mutable_data(), v.data.data(), sizeof(float) * v.data.size());
    return arr;
}

std::array<double, 3> spacing_of(const Volume& v) { return {v.sx, v.sy, v.sz}; }

}  // namespace

PYBIND11_MODULE(_volsr, m) {
    m.doc() = "Volumetric MRI super-resolution toolkit (k-space zero-filling baseline, "
              "3D CNN upsamplers, quality metrics, phantom data)";
    m.attr("__version__") = kVersion;

    m.def(
        "read_volume",
        [](const std::filesystem::path& path) {
            Volume v = read_volume(path);
            return py::make_tuple(array_from_volume(v), spacing_of(v));
        },
        py::arg("path"), "Reads a VOL1 file; returns (array[nz, ny, nx], spacing (sx, sy, sz)).");

    m.def(
        "write_volume",
        [](const std::filesystem::path& path, py::array_t<float> arr,
           std::array<double, 3> spacing) { write_volume(path, volume_from_array(arr, spacing)); },
        py::arg("path"), py::arg("data"), py::arg("spacing") = std::array<double, 3>{1.0, 1.0, 1.0});

    m.def(
        "zscore_normalize",
        [](py::array_t<float> arr) {
            auto [z, stats] = zscore_normalize(volume_from_array(arr, {1, 1, 1}));
            return py::make_tuple(array_from_volume(z), stats.mean, stats.stddev);
        },
        py::arg("data"), "Returns (normalized, mean, stddev); population statistics.");

    m.def(
        "zscore_denormalize",
        [](py::array_t<float> arr, double mean, double stddev) {
            ZScoreStats stats{mean, stddev};
            return array_from_volume(zscore_denormalize(volume_from_array(arr, {1, 1, 1}), stats));
        },
        py::arg("data"), py::arg("mean"), py::arg("stddev"));

    m.def(
        "truncate_downsample",
        [](py::array_t<float> arr) {
            return array_from_volume(
                fourier::kspace_truncate_downsample(volume_from_array(arr, {1, 1, 1})));
        },
        py::arg("data"), "Factor-2 degradation by centered k-space truncation.");

    m.def(
        "zerofill_upsample",
        [](py::array_t<float> arr, int edge_filter) {
            return array_from_volume(fourier::kspace_zerofill_upsample(
                volume_from_array(arr, {1, 1, 1}), 2, edge_filter));
        },
        py::arg("data"), py::arg("edge_filter") = 0,
        "Factor-2 zero-filling upsampler (optional raised-cosine edge taper).");

    m.def(
        "trilinear_resample",
        [](py::array_t<float> arr, std::array<int, 3> target_dims, double inplane_deg,
           double throughplane_deg) {
            // target_dims comes in as (nz, ny, nx) to match the array layout.
            return array_from_volume(
                trilinear_resample(volume_from_array(arr, {1, 1, 1}),
                                   {target_dims[2], target_dims[1], target_dims[0]}, inplane_deg,
                                   throughplane_deg));
        },
        py::arg("data"), py::arg("target_dims"), py::arg("inplane_deg") = 0.0,
        py::arg("throughplane_deg") = 0.0);

    m.def(
        "psnr",
        [](py::array_t<float> ref, py::array_t<float> test) {
            return quality::psnr(volume_from_array(ref, {1, 1, 1}),
                                 volume_from_array(test, {1, 1, 1}));
        },
        py::arg("reference"), py::arg("test"));
    m.def(
        "nrmse",
        [](py::array_t<float> ref, py::array_t<float> test) {
            return quality::nrmse(volume_from_array(ref, {1, 1, 1}),
                                  volume_from_array(test, {1, 1, 1}));
        },
        py::arg("reference"), py::arg("test"));
    m.def(
        "ssim",
        [](py::array_t<float> ref, py::array_t<float> test, int window) {
            return quality::ssim(volume_from_array(ref, {1, 1, 1}),
                                 volume_from_array(test, {1, 1, 1}), window);
        },
        py::arg("reference"), py::arg("test"), py::arg("window") = 7);

    m.def(
        "generate_subject",
        [](std::uint64_t seed, std::array<int, 3> dims, int echoes) {
            phantom::PhantomSpec spec;
            spec.dims = {dims[2], dims[1], dims[0]};
            spec.echoes = echoes;
            py::list out;
            for (const auto& v : phantom::generate_subject(spec, seed))
                out.append(array_from_volume(v));
            return out;
        },
        py::arg("seed"), py::arg("dims") = std::array<int, 3>{32, 96, 96}, py::arg("echoes") = 3,
        "Synthetic multi-echo subject volumes; dims given as (nz, ny, nx).");

    m.def(
        "predict_volume",
        [](const std::filesystem::path& checkpoint, py::array_t<float> input) {
            models::ModelCheckpoint ckpt = models::read_checkpoint(checkpoint);
            return array_from_volume(
                train::predict_volume(ckpt, volume_from_array(input, {1, 1, 1})));
        },
        py::arg("checkpoint"), py::arg("input"),
        "Full-volume forward pass of a trained checkpoint (input in z-scored space).");

    // Pipeline commands, mirroring the CLI subcommands.
    m.def(
        "cmd_phantom",
        [](const std::filesystem::path& out_dir, int subjects, std::uint64_t seed,
           std::array<int, 3> dims, int echoes) {
            cli::PhantomOptions opt;
            opt.out_dir = out_dir;
            opt.subjects = subjects;
            opt.seed = seed;
            opt.dims = {dims[2], dims[1], dims[0]};
            opt.echoes = echoes;
            cli::cmd_phantom(opt);
        },
        py::arg("out_dir"), py::arg("subjects") = 13, py::arg("seed") = 7,
        py::arg("dims") = std::array<int, 3>{32, 96, 96}, py::arg("echoes") = 3);

    m.def(
        "cmd_degrade",
        [](const std::filesystem::path& in_dir, const std::filesystem::path& out_dir) {
            cli::cmd_degrade({in_dir, out_dir});
        },
        py::arg("in_dir"), py::arg("out_dir"));

    m.def(
        "cmd_upsample",
        [](const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
           const std::string& method, int edge_filter) {
            cli::cmd_upsample({in_dir, out_dir, method, edge_filter});
        },
        py::arg("in_dir"), py::arg("out_dir"), py::arg("method") = "zerofill",
        py::arg("edge_filter") = 0);

    m.def(
        "cmd_train",
        [](const std::filesystem::path& config, const std::filesystem::path& data,
           const std::filesystem::path& out) { cli::cmd_train({config, data, out}); },
        py::arg("config"), py::arg("data"), py::arg("out"));

    m.def(
        "cmd_evaluate",
        [](const std::filesystem::path& data, const std::vector<std::filesystem::path>& checkpoints,
           const std::filesystem::path& out_report, std::optional<std::uint64_t> split_seed) {
            cli::EvaluateOptions opt;
            opt.data_dir = data;
            opt.checkpoints = checkpoints;
            opt.out_report = out_report;
            opt.split_seed = split_seed;
            auto report = cli::cmd_evaluate(opt);
            return quality::report_to_json(report);
        },
        py::arg("data"), py::arg("checkpoints") = std::vector<std::filesystem::path>{},
        py::arg("out_report"), py::arg("split_seed") = std::nullopt,
        "Runs the test-set evaluation; returns the report JSON string.");

    m.def(
        "cmd_compare",
        [](const std::filesystem::path& hr, const std::filesystem::path& lr,
           const std::vector<std::filesystem::path>& preds, const std::filesystem::path& out_dir,
           int slice) { cli::cmd_compare({hr, lr, preds, out_dir, slice}); },
        py::arg("hr"), py::arg("lr"), py::arg("predictions"), py::arg("out_dir"),
        py::arg("slice") = -1);

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
    py::register_exception<LeakageError>(m, "LeakageError", PyExc_RuntimeError);
}
