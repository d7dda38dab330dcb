#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "caki/encoder.hpp"
#include "caki/numerics.hpp"

namespace caki {

/// Score vector over the active class catalog. `normalized` is set when the
/// scores form a probability distribution.
struct Prediction {
    Vector scores;
    bool normalized = false;
};

/// Labelled few-shot samples. Labels index the catalog the dataset is trained against.
struct FewShotDataset {
    std::vector<Sample> samples;

    std::map<std::uint32_t, std::size_t> shots_per_class() const;
};

struct TrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 1;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    AdamWHyper adamw;  ///< adamw.learning_rate is the training learning rate

    double learning_rate() const noexcept { return adamw.learning_rate; }
    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_losses;  ///< mean per-sample loss, measured before each update
    TokenMatrix prompt;
    std::size_t optimizer_steps = 0;
};

/// softmax_j( s * cos(encode_text(prompt, token_j), image) / tau ) over the catalog,
/// with s the encoder's logit scale.
Prediction class_probabilities(const Encoder& encoder, const TokenMatrix& prompt,
                               const ClassCatalog& catalog, const Embedding& image,
                               double temperature);

struct LossGradient {
    double loss = 0.0;
    TokenMatrix gradient;
};

/// -log p(target | image) under `prompt`, and its gradient w.r.t. the prompt.
LossGradient prompt_loss_and_gradient(const Encoder& encoder, const TokenMatrix& prompt,
                                      const ClassCatalog& catalog, const Embedding& image,
                                      std::size_t target, double temperature);

/// Class-shared prompt: every sample contributes the loss of its own label.
TrainReport train_shared_prompt(const Encoder& encoder, const FewShotDataset& dataset,
                                const ClassCatalog& catalog, const TrainConfig& config);

/// Class-specific prompt for `class_index`: only that class's samples, still
/// normalized against the full catalog.
TrainReport train_class_prompt(const Encoder& encoder, std::size_t class_index,
                               const FewShotDataset& dataset, const ClassCatalog& catalog,
                               const TrainConfig& config);

}  // namespace caki
