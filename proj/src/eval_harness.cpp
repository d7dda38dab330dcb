#include "caki/eval_harness.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>

#include "caki/error.hpp"
#include "caki/random.hpp"

namespace caki {

double harmonic_mean(double base_percent, double novel_percent) {
    auto in_range = [](double x) { return x >= 0.0 && x <= 100.0; };
    if (!in_range(base_percent) || !in_range(novel_percent)) {
        throw InvalidArgument("harmonic_mean: accuracies must lie in [0, 100]");
    }
    const double sum = base_percent + novel_percent;
    return sum > 0.0 ? 2.0 * base_percent * novel_percent / sum : 0.0;
}

void SplitConfig::validate() const {
    if (shots < 1) throw InvalidArgument("split: shots must be >= 1");
    if (test_per_class < 1) throw InvalidArgument("split: test_per_class must be >= 1");
    if (!(base_fraction > 0.0 && base_fraction < 1.0)) {
        throw InvalidArgument("split: base_fraction must lie in (0, 1)");
    }
}

Split make_split(const Encoder& encoder, const ClassCatalog& catalog, const SplitConfig& config) {
    config.validate();
    const std::size_t c = catalog.size();
    if (c < 2) {
        throw InvalidArgument("split: need at least 2 classes, catalog has " + std::to_string(c));
    }
    const auto n_base = static_cast<std::size_t>(std::ceil(config.base_fraction * static_cast<double>(c)));
    if (n_base < 1 || n_base >= c) {
        throw InvalidArgument("split: base fraction leaves an empty base or novel set");
    }
    Split split;
    for (std::size_t i = 0; i < c; ++i) {
        (i < n_base ? split.base_classes : split.novel_classes).push_back(i);
    }
    for (std::size_t i = 0; i < c; ++i) {
        const bool base = i < n_base;
        const std::size_t train_n = base ? config.shots : 0;
        const auto samples = encoder.draw_samples(static_cast<std::uint32_t>(i),
                                                  train_n + config.test_per_class,
                                                  mix_seed({config.seed, i}));
        for (std::size_t k = 0; k < samples.size(); ++k) {
            if (k < train_n) {
                split.train.samples.push_back(samples[k]);
            } else {
                (base ? split.base_test : split.novel_test).push_back(samples[k]);
            }
        }
    }
    return split;
}

Metrics make_metrics(std::size_t base_correct, std::size_t base_total, std::size_t novel_correct,
                     std::size_t novel_total) {
    Metrics m;
    m.base_correct = base_correct;
    m.base_total = base_total;
    m.novel_correct = novel_correct;
    m.novel_total = novel_total;
    auto pct = [](std::size_t k, std::size_t n) {
        return n == 0 ? 0.0 : 100.0 * static_cast<double>(k) / static_cast<double>(n);
    };
    m.base_accuracy = pct(base_correct, base_total);
    m.novel_accuracy = pct(novel_correct, novel_total);
    m.harmonic_mean = harmonic_mean(m.base_accuracy, m.novel_accuracy);
    return m;
}

TrainedModel train_model(const Encoder& encoder, const ClassCatalog& catalog, const Split& split,
                         const TrainConfig& train, KeyTemplate key_template) {
    const ClassCatalog base = catalog.subset(split.base_classes);
    TrainedModel model;
    model.shared = train_shared_prompt(encoder, split.train, base, train);

    std::vector<TokenMatrix> prompts;
    for (std::size_t c = 0; c < base.size(); ++c) {
        FewShotDataset own;
        for (const auto& s : split.train.samples) {
            if (s.label == c) own.samples.push_back(s);
        }
        model.class_reports.push_back(train_class_prompt(encoder, c, own, base, train));
        prompts.push_back(model.class_reports.back().prompt);
    }
    model.bank = build_bank(encoder, base, model.shared.prompt, prompts, key_template);
    return model;
}

namespace {

struct Counts {
    std::size_t caki = 0;
    std::size_t coarse = 0;
};

Counts count_correct(const Encoder& encoder, const PromptBank& bank, const ClassCatalog& catalog,
                     std::span<const std::size_t> classes, std::span<const Sample> samples,
                     const QkpmConfig& qkpm, Strategy strategy) {
    const ClassCatalog test_catalog = catalog.subset(classes);
    Counts counts;
    for (const auto& s : samples) {
        std::size_t local = 0;
        while (classes[local] != s.label) ++local;
        const Embedding image = encoder.encode_image(s);
        const Classification r = classify(encoder, bank, test_catalog, image, qkpm, strategy,
                                          mix_seed({s.label, s.id}));
        counts.caki += r.label == local ? 1 : 0;
        counts.coarse += argmax(r.coarse.scores) == local ? 1 : 0;
    }
    return counts;
}

}  // namespace

ExperimentResult evaluate_bank(const Encoder& encoder, const ClassCatalog& catalog,
                               const Split& split, const PromptBank& bank,
                               const QkpmConfig& qkpm, Strategy strategy) {
    if (!(bank.fingerprint == encoder.fingerprint())) {
        throw FingerprintMismatch("bank fingerprint " + bank.fingerprint.to_string() +
                                  " does not match encoder " + encoder.fingerprint().to_string());
    }
    const Counts base = count_correct(encoder, bank, catalog, split.base_classes, split.base_test,
                                      qkpm, strategy);
    const Counts novel = count_correct(encoder, bank, catalog, split.novel_classes,
                                       split.novel_test, qkpm, strategy);
    const std::size_t nb = split.base_test.size();
    const std::size_t nn = split.novel_test.size();
    return {make_metrics(base.caki, nb, novel.caki, nn),
            make_metrics(base.coarse, nb, novel.coarse, nn)};
}

ExperimentResult run_experiment(const Encoder& encoder, const ClassCatalog& catalog,
                                const Split& split, const TrainConfig& train,
                                const QkpmConfig& qkpm, Strategy strategy,
                                KeyTemplate key_template) {
    const TrainedModel model = train_model(encoder, catalog, split, train, key_template);
    return evaluate_bank(encoder, catalog, split, model.bank, qkpm, strategy);
}

SweepParameter parse_sweep_parameter(std::string_view text) {
    if (text == "beta") return SweepParameter::beta;
    if (text == "K" || text == "k" || text == "topk") return SweepParameter::top_k;
    if (text == "tau") return SweepParameter::tau;
    throw InvalidArgument("unknown sweep parameter '" + std::string(text) +
                          "' (expected beta, K or tau)");
}

std::string_view to_string(SweepParameter p) {
    switch (p) {
        case SweepParameter::beta: return "beta";
        case SweepParameter::top_k: return "K";
        case SweepParameter::tau: return "tau";
    }
    return "?";
}

std::vector<SweepRow> sweep(const Encoder& encoder, const ClassCatalog& catalog, const Split& split,
                            SweepParameter parameter, const std::vector<double>& values,
                            const TrainConfig& train, const QkpmConfig& qkpm, Strategy strategy,
                            KeyTemplate key_template) {
    if (values.empty()) {
        throw InvalidArgument("sweep: no values given");
    }
    std::vector<SweepRow> rows;
    if (parameter == SweepParameter::tau) {
        for (double v : values) {
            SweepRow row{v, train, qkpm, {}};
            row.train.temperature = v;
            row.qkpm.temperature = v;
            row.result = run_experiment(encoder, catalog, split, row.train, row.qkpm, strategy,
                                        key_template);
            rows.push_back(row);
        }
        return rows;
    }

    const TrainedModel model = train_model(encoder, catalog, split, train, key_template);
    for (double v : values) {
        SweepRow row{v, train, qkpm, {}};
        if (parameter == SweepParameter::beta) {
            row.qkpm.beta = v;
        } else {
            if (!(v >= 1.0) || v != std::floor(v)) {
                throw InvalidArgument("sweep: K values must be positive integers");
            }
            row.qkpm.top_k = static_cast<std::size_t>(v);
        }
        row.result = evaluate_bank(encoder, catalog, split, model.bank, row.qkpm, strategy);
        rows.push_back(row);
    }
    return rows;
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    return out;
}

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// Shortest representation that round-trips, for the configuration columns.
std::string compact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    for (int p = 1; p <= 17; ++p) {
        char probe[64];
        std::snprintf(probe, sizeof probe, "%.*g", p, v);
        if (std::strtod(probe, nullptr) == v) return probe;
    }
    return buf;
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << kCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.strategy << ',' << r.seed << ',' << r.k_shots << ',' << r.top_k << ','
            << compact(r.beta) << ',' << compact(r.tau) << ',' << fixed(r.metrics.base_accuracy, 4)
            << ',' << fixed(r.metrics.novel_accuracy, 4) << ',' << fixed(r.metrics.harmonic_mean, 4)
            << '\n';
    }
}

void write_table(std::ostream& out, const std::vector<ResultRow>& rows) {
    char line[256];
    std::snprintf(line, sizeof line, "%-8s %6s %6s %4s %6s %6s %9s %9s %9s\n", "strategy", "seed",
                  "shots", "K", "beta", "tau", "base", "novel", "HM");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-8s %6llu %6zu %4zu %6s %6s %9.2f %9.2f %9.2f\n",
                      r.strategy.c_str(), static_cast<unsigned long long>(r.seed), r.k_shots,
                      r.top_k, compact(r.beta).c_str(), compact(r.tau).c_str(),
                      r.metrics.base_accuracy, r.metrics.novel_accuracy, r.metrics.harmonic_mean);
        out << line;
    }
}

}  // namespace caki
