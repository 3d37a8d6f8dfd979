#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gtaseg/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Gentle-teaching-assistant semi-supervised segmentation trainer"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Train one configuration and write metrics + checkpoints");
    std::string run_config, run_out = "out";
    std::optional<std::uint64_t> run_seed;
    run->add_option("--config", run_config, "Config file (flat JSON)")->required();
    run->add_option("--out", run_out, "Output directory");
    run->add_option("--seed", run_seed, "Override the config seed");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run an ablation grid and write a summary table");
    std::string ab_config, ab_axes, ab_out = "out";
    std::vector<std::uint64_t> ab_seeds{0, 1, 2};
    ablate->add_option("--config", ab_config, "Base config file")->required();
    ablate->add_option("--axes", ab_axes, "preset:<name> or field=v1,v2;field2=...")->required();
    ablate->add_option("--out", ab_out, "Output directory");
    ablate->add_option("--seeds", ab_seeds, "Seeds to average over")->delimiter(',');

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    std::string ev_ckpt, ev_data, ev_split = "heldout";
    eval->add_option("--checkpoint", ev_ckpt, "Checkpoint file (.gtas)")->required();
    eval->add_option("--dataset", ev_data, "Dataset file (.gtad)")->required();
    eval->add_option("--split", ev_split, "labeled|unlabeled|heldout");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
    std::uint64_t gd_seed = 0;
    int gd_n = 600, gd_classes = 4, gd_size = 32, gd_labeled = 20, gd_heldout = 100;
    std::string gd_out = "dataset.gtad";
    gen->add_option("--seed", gd_seed, "Generator seed");
    gen->add_option("--n", gd_n, "Total sample count");
    gen->add_option("--classes", gd_classes, "Class count (2-4)");
    gen->add_option("--size", gd_size, "Image side length");
    gen->add_option("--labeled", gd_labeled, "Labeled sample count");
    gen->add_option("--heldout", gd_heldout, "Held-out sample count");
    gen->add_option("--out", gd_out, "Output path");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return gtaseg::cli_run(run_config, run_out, run_seed);
    if (ablate->parsed()) return gtaseg::cli_ablate(ab_config, ab_axes, ab_out, ab_seeds);
    if (eval->parsed()) return gtaseg::cli_eval(ev_ckpt, ev_data, ev_split);
    if (gen->parsed()) {
        return gtaseg::cli_gen_data(gd_seed, gd_n, gd_classes, gd_size, gd_labeled, gd_heldout, gd_out);
    }
    return gtaseg::kExitFailure;
}
