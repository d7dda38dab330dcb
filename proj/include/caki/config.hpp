#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "caki/eval_harness.hpp"
#include "caki/knowledge_bank.hpp"
#include "caki/prompt_learning.hpp"
#include "caki/qkpm.hpp"
#include "caki/synthetic_world.hpp"

namespace caki {

struct OfflineSource {
    std::filesystem::path path;
    std::size_t prompt_len = kDefaultPromptTokens;
};

/// Split settings shared by every seed; each seed drives the split, the
/// training shuffles and the random strategy of its run.
struct SplitSettings {
    std::size_t shots = 1;
    std::size_t test_per_class = 100;
    double base_fraction = 0.5;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

    SplitConfig for_seed(std::uint64_t seed) const;
};

struct OutputPaths {
    std::filesystem::path features;
    std::filesystem::path bank;
    std::filesystem::path csv;
};

/// Everything a command needs. Exactly one of `synthetic` / `offline` is set.
struct PipelineConfig {
    std::optional<SyntheticWorldSpec> synthetic;
    std::optional<OfflineSource> offline;
    TrainConfig train;
    QkpmConfig qkpm;
    Strategy strategy = Strategy::matching;
    KeyTemplate key_template = KeyTemplate::shared;
    SplitSettings split;
    OutputPaths output;

    /// Throws ConfigError naming the offending setting.
    void validate() const;
};

/// Parses a JSON document. Unknown keys, wrong types and invalid values raise
/// ConfigError. Relative paths are resolved against `base_dir`.
PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});

/// Reads and parses a config file; relative paths inside resolve against its directory.
PipelineConfig load_config(const std::filesystem::path& path);

/// The built-in defaults as a JSON document (the seeded synthetic task).
std::string default_config_json();

/// Comma-separated list of unsigned integers, e.g. "1,2,3".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// Comma-separated list of reals.
std::vector<double> parse_value_list(std::string_view text);

}  // namespace caki
