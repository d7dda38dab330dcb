#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "caki/encoder.hpp"
#include "caki/knowledge_bank.hpp"
#include "caki/prompt_learning.hpp"
#include "caki/qkpm.hpp"

namespace caki {

/// 2bn / (b + n) for percentages in [0, 100]; 0 when both are 0.
double harmonic_mean(double base_percent, double novel_percent);

struct SplitConfig {
    std::uint64_t seed = 1;
    std::size_t shots = 1;
    std::size_t test_per_class = 100;
    double base_fraction = 0.5;

    void validate() const;
};

/// Base classes are the first ceil(base_fraction * C) catalog indices, so
/// sample labels double as base-catalog indices during training.
struct Split {
    std::vector<std::size_t> base_classes;
    std::vector<std::size_t> novel_classes;
    FewShotDataset train;
    std::vector<Sample> base_test;
    std::vector<Sample> novel_test;
};

Split make_split(const Encoder& encoder, const ClassCatalog& catalog, const SplitConfig& config);

struct Metrics {
    double base_accuracy = 0.0;
    double novel_accuracy = 0.0;
    double harmonic_mean = 0.0;
    std::size_t base_correct = 0;
    std::size_t base_total = 0;
    std::size_t novel_correct = 0;
    std::size_t novel_total = 0;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics make_metrics(std::size_t base_correct, std::size_t base_total, std::size_t novel_correct,
                     std::size_t novel_total);

struct TrainedModel {
    PromptBank bank;
    TrainReport shared;
    std::vector<TrainReport> class_reports;  ///< one per base class
};

/// Shared prompt on all base shots, one class-specific prompt per base class,
/// then the bank over the base catalog.
TrainedModel train_model(const Encoder& encoder, const ClassCatalog& catalog, const Split& split,
                         const TrainConfig& train, KeyTemplate key_template = KeyTemplate::shared);

struct ExperimentResult {
    Metrics caki;
    Metrics coarse;  ///< shared prompt alone (the beta = 0 reduction)
};

/// Base test against the base catalog, novel test against the novel catalog,
/// both matched against the same (base-class) bank.
ExperimentResult evaluate_bank(const Encoder& encoder, const ClassCatalog& catalog,
                               const Split& split, const PromptBank& bank,
                               const QkpmConfig& qkpm, Strategy strategy);

ExperimentResult run_experiment(const Encoder& encoder, const ClassCatalog& catalog,
                                const Split& split, const TrainConfig& train,
                                const QkpmConfig& qkpm, Strategy strategy,
                                KeyTemplate key_template = KeyTemplate::shared);

enum class SweepParameter { beta, top_k, tau };

SweepParameter parse_sweep_parameter(std::string_view text);
std::string_view to_string(SweepParameter p);

struct SweepRow {
    double value = 0.0;
    TrainConfig train;
    QkpmConfig qkpm;
    ExperimentResult result;
};

/// One experiment per value with everything else fixed. Training does not
/// depend on beta or K, so those sweeps share one trained model; a tau sweep
/// retrains (tau enters the training loss too).
std::vector<SweepRow> sweep(const Encoder& encoder, const ClassCatalog& catalog, const Split& split,
                            SweepParameter parameter, const std::vector<double>& values,
                            const TrainConfig& train, const QkpmConfig& qkpm, Strategy strategy,
                            KeyTemplate key_template = KeyTemplate::shared);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  ///< sample standard deviation (n - 1); 0 for a single value
};

MeanStd mean_std(const std::vector<double>& values);

/// One line of the results table / CSV.
struct ResultRow {
    std::string strategy;  ///< M, R, A, or "coarse"
    std::uint64_t seed = 0;
    std::size_t k_shots = 0;
    std::size_t top_k = 0;
    double beta = 0.0;
    double tau = 0.0;
    Metrics metrics;
};

inline constexpr std::string_view kCsvHeader =
    "strategy,seed,k_shots,K,beta,tau,base_acc,novel_acc,hm";

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
void write_table(std::ostream& out, const std::vector<ResultRow>& rows);

}  // namespace caki
