#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "gtaseg/trainer.hpp"

namespace gtaseg {

// A run description: the training config plus where its data comes from
// (a dataset file, or generator parameters for an in-process dataset).
struct RunSetup {
    TrainConfig train;
    std::optional<std::string> dataset_path;
    std::uint64_t data_seed = 0;
    int data_n = 600;
    int n_labeled = 20;
    int n_heldout = 100;
    int image_size = 32;
};

// Parses a flat JSON config document. Keys are exactly the config field
// names; unknown keys are a hard error, and only "method" is required.
RunSetup load_config(const std::string& path);

// Same parser over an in-memory document (used by tests).
RunSetup parse_config(const std::string& text, const std::string& origin = "<memory>");

// Round-trip of the effective config for the run manifest.
std::string setup_to_json(const RunSetup& setup);

}  // namespace gtaseg
