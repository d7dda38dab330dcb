#pragma once

#include <cstddef>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "caki/config.hpp"
#include "caki/encoder.hpp"
#include "caki/eval_harness.hpp"

namespace caki {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitFormat = 3,
    kExitFingerprint = 4,
};

/// Maps an exception escaping a command to its exit code.
int exit_code_for(const std::exception& e) noexcept;

struct LoadedWorld {
    std::shared_ptr<const Encoder> encoder;
    ClassCatalog catalog;
    std::size_t renormalization_warnings = 0;
};

LoadedWorld load_world(const PipelineConfig& config);

/// Writes the configured synthetic world as an offline feature file:
/// shots + test_per_class records for every class, drawn with the first seed.
void cmd_gen_task(const PipelineConfig& config, const std::filesystem::path& out_path,
                  std::ostream& log);

struct TrainBankResult {
    TrainedModel model;
    std::size_t base_classes = 0;
};

/// Trains on the first seed's split, saves the bank and prints per-class losses.
TrainBankResult cmd_train_bank(const PipelineConfig& config, const std::filesystem::path& out_path,
                               std::ostream& log);

/// One row for the chosen strategy and one coarse-only row per seed. With a
/// bank path the stored bank is evaluated as is; otherwise every seed trains
/// its own. Writes the CSV when `csv_path` is non-empty.
std::vector<ResultRow> cmd_eval(const PipelineConfig& config, const std::filesystem::path& bank_path,
                                const std::filesystem::path& csv_path, std::ostream& out);

struct SweepSummary {
    std::vector<ResultRow> rows;
    std::vector<double> values;
    std::vector<double> mean_hm;  ///< per value, over seeds
    double hm_range = 0.0;        ///< max - min of mean_hm
};

SweepSummary cmd_sweep(const PipelineConfig& config, SweepParameter parameter,
                       const std::vector<double>& values, const std::filesystem::path& csv_path,
                       std::ostream& out);

/// The sweep grids used when no values are given.
std::vector<double> default_sweep_values(SweepParameter parameter);

void cmd_inspect_bank(const std::filesystem::path& bank_path, std::ostream& out);

}  // namespace caki
