#include "caki/prompt_learning.hpp"

#include <algorithm>
#include <cmath>

#include "caki/error.hpp"
#include "caki/random.hpp"

namespace caki {

namespace {

enum : std::uint64_t { kSharedStream = 0x5348, kClassStream = 0x434c };

struct Example {
    Embedding image;
    std::size_t target;
};

TrainReport run_training(const Encoder& encoder, const std::vector<Example>& examples,
                         const ClassCatalog& catalog, const TrainConfig& config,
                         std::uint64_t shuffle_seed) {
    config.validate();
    if (examples.empty()) {
        throw InvalidArgument("training dataset is empty");
    }
    if (!encoder.supports_vjp()) {
        throw Unsupported("prompt training needs an encoder with a text VJP; " +
                          encoder.fingerprint().to_string() + " has none");
    }

    TrainReport report;
    report.prompt = template_prompt(encoder.prompt_len(), encoder.token_dim());
    AdamWState state = AdamWState::zeros_like(report.prompt);

    std::vector<std::size_t> order(examples.size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(mix_seed({shuffle_seed, epoch}));
        shuffle(order, rng);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            TokenMatrix grad(report.prompt.rows(), report.prompt.cols());
            for (std::size_t k = start; k < end; ++k) {
                const Example& ex = examples[order[k]];
                LossGradient lg = prompt_loss_and_gradient(encoder, report.prompt, catalog, ex.image,
                                                           ex.target, config.temperature);
                epoch_loss += lg.loss;
                auto g = grad.values();
                auto s = lg.gradient.values();
                for (std::size_t j = 0; j < g.size(); ++j) g[j] += s[j];
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (double& g : grad.values()) g *= inv;
            adamw_update(report.prompt, grad, state, config.adamw);
            ++report.optimizer_steps;
        }
        report.epoch_losses.push_back(epoch_loss / static_cast<double>(examples.size()));
    }
    return report;
}

std::vector<Example> encode_examples(const Encoder& encoder, const FewShotDataset& dataset,
                                     const ClassCatalog& catalog) {
    std::vector<Example> out;
    out.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples) {
        if (s.label >= catalog.size()) {
            throw InvalidArgument("sample label " + std::to_string(s.label) +
                                  " outside the training catalog of " +
                                  std::to_string(catalog.size()) + " classes");
        }
        out.push_back({encoder.encode_image(s), s.label});
    }
    return out;
}

}  // namespace

std::map<std::uint32_t, std::size_t> FewShotDataset::shots_per_class() const {
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& s : samples) ++counts[s.label];
    return counts;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("train config: epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("train config: batch_size must be >= 1");
    if (!(temperature > 0.0)) throw InvalidArgument("train config: temperature must be > 0");
    adamw.validate();
}

namespace {

Vector class_logits(const Encoder& encoder, const TokenMatrix& prompt, const ClassCatalog& catalog,
                    const Embedding& image) {
    if (catalog.size() == 0) {
        throw InvalidArgument("class_probabilities: empty catalog");
    }
    Vector sims(catalog.size());
    for (std::size_t j = 0; j < catalog.size(); ++j) {
        sims[j] = encoder.logit_scale() *
                  cosine(encoder.encode_text(prompt, catalog.class_tokens[j]), image);
    }
    return sims;
}

}  // namespace

Prediction class_probabilities(const Encoder& encoder, const TokenMatrix& prompt,
                               const ClassCatalog& catalog, const Embedding& image,
                               double temperature) {
    return {softmax(class_logits(encoder, prompt, catalog, image), temperature), true};
}

LossGradient prompt_loss_and_gradient(const Encoder& encoder, const TokenMatrix& prompt,
                                      const ClassCatalog& catalog, const Embedding& image,
                                      std::size_t target, double temperature) {
    if (target >= catalog.size()) {
        throw InvalidArgument("target class " + std::to_string(target) + " out of range");
    }
    const Vector logits = class_logits(encoder, prompt, catalog, image);
    const Prediction p{softmax(logits, temperature), true};
    LossGradient out{softmax_cross_entropy(logits, temperature, target),
                     TokenMatrix(prompt.rows(), prompt.cols())};

    // dL/dlogit_j = p_j - [j == target]; logit_j = s <w_j, f> / tau with unit w_j and f,
    // so the cotangent on w_j is that coefficient times s f / tau. The text-side
    // normalization backward happens inside encode_text_vjp.
    Vector cotangent(image.size());
    for (std::size_t j = 0; j < catalog.size(); ++j) {
        const double coeff =
            (p.scores[j] - (j == target ? 1.0 : 0.0)) * encoder.logit_scale() / temperature;
        for (std::size_t i = 0; i < image.size(); ++i) cotangent[i] = coeff * image[i];
        const TokenMatrix g = encoder.encode_text_vjp(prompt, catalog.class_tokens[j], cotangent);
        auto acc = out.gradient.values();
        auto gv = g.values();
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += gv[k];
    }
    return out;
}

TrainReport train_shared_prompt(const Encoder& encoder, const FewShotDataset& dataset,
                                const ClassCatalog& catalog, const TrainConfig& config) {
    return run_training(encoder, encode_examples(encoder, dataset, catalog), catalog, config,
                        mix_seed({config.seed, kSharedStream}));
}

TrainReport train_class_prompt(const Encoder& encoder, std::size_t class_index,
                               const FewShotDataset& dataset, const ClassCatalog& catalog,
                               const TrainConfig& config) {
    if (class_index >= catalog.size()) {
        throw InvalidArgument("class index " + std::to_string(class_index) + " out of range");
    }
    for (const auto& s : dataset.samples) {
        if (s.label != class_index) {
            throw InvalidArgument("class-specific dataset for class " +
                                  std::to_string(class_index) + " contains a sample of class " +
                                  std::to_string(s.label));
        }
    }
    return run_training(encoder, encode_examples(encoder, dataset, catalog), catalog, config,
                        mix_seed({config.seed, kClassStream, class_index}));
}

}  // namespace caki
