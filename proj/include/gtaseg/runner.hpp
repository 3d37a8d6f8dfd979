#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gtaseg/config.hpp"
#include "gtaseg/trainer.hpp"

namespace gtaseg {

inline constexpr const char* kToolVersion = "gtaseg 0.1.0";

// Exit codes shared by the CLI operations.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

// Trains per the config and writes metrics.csv, one checkpoint per live
// model, and manifest.json into out_dir.
int cli_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override = std::nullopt);

// Runs an ablation grid ("preset:<name>" or "field=v1,v2;field2=...") over
// the given seeds; one sub-directory per configuration plus summary.csv.
int cli_ablate(const std::string& config_path, const std::string& axes_spec,
               const std::string& out_dir, const std::vector<std::uint64_t>& seeds);

// Evaluates a checkpoint on one split of a dataset file and prints per-class
// IoU and the mean to stdout.
int cli_eval(const std::string& checkpoint_path, const std::string& dataset_path,
             const std::string& split_name);

int cli_gen_data(std::uint64_t seed, int n, int classes, int size, int n_labeled, int n_heldout,
                 const std::string& out_path);

// Library-level pieces, exposed for tests and the acceptance suite.
DatasetSplit build_dataset(const RunSetup& setup);
std::string metrics_csv(const RunReport& report);
std::vector<GridEntry> resolve_axes(const TrainConfig& base, const std::string& axes_spec);

struct VariantSummary {
    std::string label;
    int n_seeds = 0;
    double mean_final_miou = 0.0;           // teacher when present, else student
    std::map<std::string, double> mean_model_miou;  // per live model
};

// Per-variant averages a grid run produces; also what summary.csv serializes.
std::vector<VariantSummary> run_grid(const DatasetSplit& data, const std::vector<GridEntry>& grid,
                                     const std::vector<std::uint64_t>& seeds,
                                     const std::string& out_dir);

}  // namespace gtaseg
