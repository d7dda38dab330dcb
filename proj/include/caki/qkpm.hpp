#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "caki/encoder.hpp"
#include "caki/knowledge_bank.hpp"
#include "caki/prompt_learning.hpp"

namespace caki {

/// Which bank entries feed the fine prediction.
enum class Strategy {
    matching,  ///< top-K keys by query similarity
    random,    ///< K seeded random entries, uniform weights 1/K
    all,       ///< every entry, weighted by its full softmax score
};

/// How matching scores are used as ensemble weights.
enum class GammaMode {
    raw,   ///< softmax over the whole bank, as computed
    topk,  ///< renormalized to sum to one over the selected entries
};

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);
std::string_view to_string(GammaMode m);
GammaMode parse_gamma_mode(std::string_view text);
std::string_view to_string(KeyTemplate k);
KeyTemplate parse_key_template(std::string_view text);

struct QkpmConfig {
    std::size_t top_k = 3;
    double beta = 0.3;
    double temperature = 1.0;
    GammaMode gamma_mode = GammaMode::raw;
    std::uint64_t strategy_seed = 0;  ///< drives Strategy::random

    void validate() const;
};

struct MatchResult {
    std::size_t cache_index = 0;
    double gamma = 0.0;

    friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

/// Class probabilities under the class-shared prompt.
Prediction coarse_predict(const Encoder& encoder, const TokenMatrix& shared_prompt,
                          const ClassCatalog& test_catalog, const Embedding& image,
                          double temperature);

/// softmax over every bank key of logit_scale * cos(query, key) / tau.
Vector match_scores(const Embedding& query, const PromptBank& bank, double logit_scale,
                    double temperature);

/// The min(K, |bank|) highest-scoring entries, descending, ties to the lower index.
std::vector<MatchResult> match_topk(const Embedding& query, const PromptBank& bank, std::size_t k,
                                    double logit_scale, double temperature);

/// sum_i gamma_i * p^(s_i), where p^(s_i) applies the value prompt of entry s_i
/// to every class of the test catalog. Not renormalized.
Vector fine_ensemble(const Encoder& encoder, const PromptBank& bank,
                     std::span<const MatchResult> matches, const ClassCatalog& test_catalog,
                     const Embedding& image, double temperature);

/// coarse + beta * fine.
Prediction refine(const Prediction& coarse, std::span<const double> fine, double beta);

struct Classification {
    std::size_t label = 0;
    Prediction coarse;
    Prediction refined;
    std::vector<MatchResult> matches;
};

/// Coarse prediction, prompt selection by `strategy`, fine ensemble, refinement.
/// `sample_key` identifies the input for the seeded random strategy.
Classification classify(const Encoder& encoder, const PromptBank& bank,
                        const ClassCatalog& test_catalog, const Embedding& image,
                        const QkpmConfig& config, Strategy strategy, std::uint64_t sample_key = 0);

}  // namespace caki
