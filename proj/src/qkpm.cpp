#include "caki/qkpm.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numeric>

#include "caki/error.hpp"
#include "caki/random.hpp"

namespace caki {

namespace {

void note_clamped_k(std::size_t k, std::size_t bank_size) {
    static std::once_flag once;
    std::call_once(once, [&] {
        std::clog << "note: top-K of " << k << " exceeds the bank size " << bank_size
                  << "; using " << bank_size << '\n';
    });
}

}  // namespace

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::matching: return "M";
        case Strategy::random: return "R";
        case Strategy::all: return "A";
    }
    return "?";
}

Strategy parse_strategy(std::string_view text) {
    if (text == "m" || text == "M") return Strategy::matching;
    if (text == "r" || text == "R") return Strategy::random;
    if (text == "a" || text == "A") return Strategy::all;
    throw InvalidArgument("unknown strategy '" + std::string(text) + "' (expected m, r or a)");
}

std::string_view to_string(GammaMode m) { return m == GammaMode::raw ? "raw" : "topk"; }

GammaMode parse_gamma_mode(std::string_view text) {
    if (text == "raw") return GammaMode::raw;
    if (text == "topk") return GammaMode::topk;
    throw InvalidArgument("unknown gamma mode '" + std::string(text) + "' (expected raw or topk)");
}

std::string_view to_string(KeyTemplate k) {
    return k == KeyTemplate::shared ? "shared" : "handcrafted";
}

KeyTemplate parse_key_template(std::string_view text) {
    if (text == "shared") return KeyTemplate::shared;
    if (text == "handcrafted") return KeyTemplate::handcrafted;
    throw InvalidArgument("unknown key template '" + std::string(text) +
                          "' (expected shared or handcrafted)");
}

void QkpmConfig::validate() const {
    if (top_k < 1) throw InvalidArgument("qkpm config: K must be >= 1");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("qkpm config: beta must be >= 0");
    if (!(temperature > 0.0)) throw InvalidArgument("qkpm config: temperature must be > 0");
}

Prediction coarse_predict(const Encoder& encoder, const TokenMatrix& shared_prompt,
                          const ClassCatalog& test_catalog, const Embedding& image,
                          double temperature) {
    return class_probabilities(encoder, shared_prompt, test_catalog, image, temperature);
}

Vector match_scores(const Embedding& query, const PromptBank& bank, double logit_scale,
                    double temperature) {
    if (bank.empty()) {
        throw EmptyBank("cannot match against an empty prompt bank");
    }
    Vector sims(bank.size());
    for (std::size_t c = 0; c < bank.size(); ++c) {
        sims[c] = logit_scale * cosine(query, bank.entries[c].key);
    }
    return softmax(sims, temperature);
}

std::vector<MatchResult> match_topk(const Embedding& query, const PromptBank& bank, std::size_t k,
                                    double logit_scale, double temperature) {
    if (k < 1) throw InvalidArgument("match_topk: K must be >= 1");
    const Vector gamma = match_scores(query, bank, logit_scale, temperature);
    if (k > bank.size()) {
        note_clamped_k(k, bank.size());
        k = bank.size();
    }
    std::vector<std::size_t> idx(bank.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&gamma](std::size_t a, std::size_t b) {
                          return gamma[a] > gamma[b] || (gamma[a] == gamma[b] && a < b);
                      });
    std::vector<MatchResult> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back({idx[i], gamma[idx[i]]});
    }
    return out;
}

Vector fine_ensemble(const Encoder& encoder, const PromptBank& bank,
                     std::span<const MatchResult> matches, const ClassCatalog& test_catalog,
                     const Embedding& image, double temperature) {
    if (matches.empty()) {
        throw InvalidArgument("fine_ensemble: no matches");
    }
    Vector fine(test_catalog.size(), 0.0);
    for (const auto& m : matches) {
        if (m.cache_index >= bank.size()) {
            throw InvalidArgument("fine_ensemble: cache index " + std::to_string(m.cache_index) +
                                  " out of range");
        }
        const Prediction p = class_probabilities(encoder, bank.entries[m.cache_index].value,
                                                 test_catalog, image, temperature);
        for (std::size_t j = 0; j < fine.size(); ++j) {
            fine[j] += m.gamma * p.scores[j];
        }
    }
    return fine;
}

Prediction refine(const Prediction& coarse, std::span<const double> fine, double beta) {
    if (coarse.scores.size() != fine.size()) {
        throw InvalidArgument("refine: coarse has " + std::to_string(coarse.scores.size()) +
                              " scores, fine has " + std::to_string(fine.size()));
    }
    Prediction out{coarse.scores, false};
    for (std::size_t j = 0; j < fine.size(); ++j) {
        out.scores[j] += beta * fine[j];
    }
    return out;
}

Classification classify(const Encoder& encoder, const PromptBank& bank,
                        const ClassCatalog& test_catalog, const Embedding& image,
                        const QkpmConfig& config, Strategy strategy, std::uint64_t sample_key) {
    config.validate();
    if (bank.empty()) {
        throw EmptyBank("cannot classify with an empty prompt bank");
    }
    Classification out;
    out.coarse = coarse_predict(encoder, bank.shared_prompt, test_catalog, image, config.temperature);

    switch (strategy) {
        case Strategy::matching:
            out.matches = match_topk(image, bank, config.top_k, encoder.logit_scale(),
                                     config.temperature);
            break;
        case Strategy::random: {
            const std::size_t k = std::min(config.top_k, bank.size());
            std::vector<std::size_t> idx(bank.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            Rng rng(mix_seed({config.strategy_seed, sample_key}));
            // Partial Fisher-Yates: the first k slots become a uniform k-subset.
            for (std::size_t i = 0; i < k; ++i) {
                std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
            }
            for (std::size_t i = 0; i < k; ++i) {
                out.matches.push_back({idx[i], 1.0 / static_cast<double>(k)});
            }
            break;
        }
        case Strategy::all: {
            const Vector gamma = match_scores(image, bank, encoder.logit_scale(), config.temperature);
            for (std::size_t i = 0; i < gamma.size(); ++i) out.matches.push_back({i, gamma[i]});
            break;
        }
    }

    if (config.gamma_mode == GammaMode::topk) {
        double total = 0.0;
        for (const auto& m : out.matches) total += m.gamma;
        for (auto& m : out.matches) m.gamma /= total;
    }

    const Vector fine =
        fine_ensemble(encoder, bank, out.matches, test_catalog, image, config.temperature);
    out.refined = refine(out.coarse, fine, config.beta);
    out.label = argmax(out.refined.scores);
    return out;
}

}  // namespace caki
