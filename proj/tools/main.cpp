#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "volsr/commands.hpp"
#include "volsr/errors.hpp"
#include "volsr/version.hpp"

using namespace volsr;

int main(int argc, char** argv) {
    CLI::App app{"Volumetric MRI super-resolution toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    cli::PhantomOptions phantom_opt;
    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic multi-echo dataset");
    phantom->add_option("--out", phantom_opt.out_dir, "Output directory")->required();
    phantom->add_option("--subjects", phantom_opt.subjects, "Number of subjects");
    phantom->add_option("--seed", phantom_opt.seed, "Master seed");
    phantom->add_option("--dims", phantom_opt.dims, "Volume dims X,Y,Z")->delimiter(',');
    phantom->add_option("--echoes", phantom_opt.echoes, "Echoes per subject");
    phantom->add_option("--texture-bandwidth", phantom_opt.texture_bandwidth,
                        "Texture band as a fraction of Nyquist");
    phantom->add_option("--noise-sigma", phantom_opt.noise_sigma,
                        "Rician noise sigma as a fraction of the range");

    cli::DegradeOptions degrade_opt;
    auto* degrade = app.add_subcommand("degrade", "Factor-2 k-space truncation of each volume");
    degrade->add_option("--in", degrade_opt.in_dir, "Input directory of .vol files")->required();
    degrade->add_option("--out", degrade_opt.out_dir, "Output directory")->required();

    cli::UpsampleOptions upsample_opt;
    auto* upsample = app.add_subcommand("upsample", "Upsample volumes back to 2x dims");
    upsample->add_option("--in", upsample_opt.in_dir, "Input directory of .vol files")->required();
    upsample->add_option("--out", upsample_opt.out_dir, "Output directory")->required();
    upsample->add_option("--method", upsample_opt.method, "zerofill | trilinear")
        ->check(CLI::IsMember({"zerofill", "trilinear"}));
    upsample->add_option("--edge-filter", upsample_opt.edge_filter,
                         "Raised-cosine k-space taper width (zerofill only; 0 = off)");

    cli::TrainOptions train_opt;
    auto* train = app.add_subcommand("train", "Train a super-resolution network");
    train->add_option("--config", train_opt.config_path, "Training config JSON")->required();
    train->add_option("--data", train_opt.data_dir, "Dataset directory")->required();
    train->add_option("--out", train_opt.out_dir, "Output directory")->required();

    cli::EvaluateOptions eval_opt;
    std::uint64_t eval_seed = 0;
    auto* evaluate = app.add_subcommand("evaluate", "Test-set metrics report");
    evaluate->add_option("--data", eval_opt.data_dir, "Dataset directory")->required();
    evaluate->add_option("--checkpoints", eval_opt.checkpoints, "Checkpoint files");
    evaluate->add_option("--out", eval_opt.out_report, "Report JSON path")->required();
    auto* seed_opt = evaluate->add_option("--split-seed", eval_seed,
                                          "Split seed (default: first checkpoint's)");
    evaluate->add_option("--split-ratios", eval_opt.split_ratios, "train,val,test ratios")
        ->delimiter(',');

    cli::CompareOptions compare_opt;
    auto* compare = app.add_subcommand("compare", "Slice panels and residual maps");
    compare->add_option("--hr", compare_opt.hr_path, "HR reference volume")->required();
    compare->add_option("--lr", compare_opt.lr_path, "Upsampled input volume")->required();
    compare->add_option("--pred", compare_opt.predictions, "Prediction volumes");
    compare->add_option("--out", compare_opt.out_dir, "Output directory")->required();
    compare->add_option("--slice", compare_opt.slice, "Slice index (default: middle)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*phantom) cli::cmd_phantom(phantom_opt);
        if (*degrade) cli::cmd_degrade(degrade_opt);
        if (*upsample) cli::cmd_upsample(upsample_opt);
        if (*train) cli::cmd_train(train_opt);
        if (*evaluate) {
            if (seed_opt->count() > 0) eval_opt.split_seed = eval_seed;
            auto report = cli::cmd_evaluate(eval_opt);
            std::fputs(quality::render_table(report).c_str(), stdout);
        }
        if (*compare) cli::cmd_compare(compare_opt);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    }
    return kExitOk;
}
