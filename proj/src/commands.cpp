#include "caki/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "caki/error.hpp"
#include "caki/knowledge_bank.hpp"
#include "caki/offline_features.hpp"
#include "caki/random.hpp"
#include "caki/synthetic_world.hpp"

namespace caki {

namespace {

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

void write_csv_file(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    write_csv(out, rows);
    if (!out) throw IoError("write failed for " + path.string());
}

ResultRow make_row(std::string strategy, std::uint64_t seed, const PipelineConfig& cfg,
                   const QkpmConfig& qkpm, double tau, const Metrics& m) {
    return {std::move(strategy), seed, cfg.split.shots, qkpm.top_k, qkpm.beta, tau, m};
}

ResultRow coarse_row(std::uint64_t seed, const PipelineConfig& cfg, const QkpmConfig& qkpm,
                     double tau, const Metrics& m) {
    ResultRow r = make_row("coarse", seed, cfg, qkpm, tau, m);
    r.beta = 0.0;
    return r;
}

void print_summary(std::ostream& out, const std::vector<ResultRow>& rows) {
    std::map<std::string, std::vector<double>> hm;
    std::vector<std::string> order;
    for (const auto& r : rows) {
        if (!hm.count(r.strategy)) order.push_back(r.strategy);
        hm[r.strategy].push_back(r.metrics.harmonic_mean);
    }
    for (const auto& name : order) {
        const MeanStd ms = mean_std(hm[name]);
        char line[160];
        std::snprintf(line, sizeof line, "%-8s HM %.2f +/- %.2f over %zu seed(s)\n", name.c_str(),
                      ms.mean, ms.stddev, hm[name].size());
        out << line;
    }
}

}  // namespace

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e)) {
        return kExitConfig;
    }
    if (dynamic_cast<const FormatError*>(&e)) return kExitFormat;
    if (dynamic_cast<const FingerprintMismatch*>(&e)) return kExitFingerprint;
    return kExitFailure;
}

LoadedWorld load_world(const PipelineConfig& config) {
    config.validate();
    if (config.synthetic) {
        SyntheticWorld w = make_synthetic_world(*config.synthetic);
        return {std::move(w.encoder), std::move(w.catalog), 0};
    }
    OfflineWorld w = load_offline_features(config.offline->path, config.offline->prompt_len);
    return {std::move(w.encoder), std::move(w.catalog), w.renormalization_warnings};
}

void cmd_gen_task(const PipelineConfig& config, const std::filesystem::path& out_path,
                  std::ostream& log) {
    if (!config.synthetic) {
        throw ConfigError("gen-task needs a synthetic world in the config");
    }
    if (out_path.empty()) throw ConfigError("gen-task: no output path (use --out)");
    const LoadedWorld world = load_world(config);
    const std::uint64_t seed = config.split.seeds.front();
    const std::size_t per_class = config.split.shots + config.split.test_per_class;

    std::vector<Sample> samples;
    for (std::size_t c = 0; c < world.catalog.size(); ++c) {
        const auto drawn = world.encoder->draw_samples(static_cast<std::uint32_t>(c), per_class,
                                                       mix_seed({seed, c}));
        samples.insert(samples.end(), drawn.begin(), drawn.end());
    }
    const OfflineFeatureSet set = export_features(*world.encoder, world.catalog, samples);
    save_offline_features(set, out_path);
    log << "wrote " << out_path.string() << ": " << world.catalog.size() << " classes, "
        << set.records.size() << " records, D=" << set.dim << ", Dt=" << set.token_dim << '\n';
}

TrainBankResult cmd_train_bank(const PipelineConfig& config, const std::filesystem::path& out_path,
                               std::ostream& log) {
    if (out_path.empty()) throw ConfigError("train-bank: no output path (use --out)");
    const LoadedWorld world = load_world(config);
    const std::uint64_t seed = config.split.seeds.front();
    const Split split = make_split(*world.encoder, world.catalog, config.split.for_seed(seed));
    TrainConfig train = config.train;
    train.seed = seed;

    TrainBankResult result;
    result.model = train_model(*world.encoder, world.catalog, split, train, config.key_template);
    result.base_classes = split.base_classes.size();
    save_bank(result.model.bank, out_path);

    const auto& shared = result.model.shared.epoch_losses;
    log << "shared prompt      initial " << fmt("%.6f", shared.front()) << "  final "
        << fmt("%.6f", shared.back()) << '\n';
    for (std::size_t c = 0; c < result.model.class_reports.size(); ++c) {
        const auto& l = result.model.class_reports[c].epoch_losses;
        char line[160];
        std::snprintf(line, sizeof line, "%-18s initial %.6f  final %.6f\n",
                      result.model.bank.entries[c].class_name.c_str(), l.front(), l.back());
        log << line;
    }
    log << "bank: " << result.model.bank.size() << " entries, "
        << result.model.bank.fingerprint.to_string() << " -> " << out_path.string() << '\n';
    return result;
}

std::vector<ResultRow> cmd_eval(const PipelineConfig& config, const std::filesystem::path& bank_path,
                                const std::filesystem::path& csv_path, std::ostream& out) {
    const LoadedWorld world = load_world(config);
    if (world.renormalization_warnings > 0) {
        out << "warning: " << world.renormalization_warnings
            << " feature vector(s) were renormalized on load\n";
    }
    std::optional<PromptBank> bank;
    if (!bank_path.empty()) {
        bank = load_bank(bank_path);
        if (!(bank->fingerprint == world.encoder->fingerprint())) {
            throw FingerprintMismatch("bank " + bank_path.string() + " was built for " +
                                      bank->fingerprint.to_string() + " but the world is " +
                                      world.encoder->fingerprint().to_string());
        }
    }

    std::vector<ResultRow> rows;
    for (std::uint64_t seed : config.split.seeds) {
        const Split split = make_split(*world.encoder, world.catalog, config.split.for_seed(seed));
        QkpmConfig qkpm = config.qkpm;
        qkpm.strategy_seed = seed;
        ExperimentResult r;
        if (bank) {
            r = evaluate_bank(*world.encoder, world.catalog, split, *bank, qkpm, config.strategy);
        } else {
            TrainConfig train = config.train;
            train.seed = seed;
            r = run_experiment(*world.encoder, world.catalog, split, train, qkpm, config.strategy,
                               config.key_template);
        }
        rows.push_back(make_row(std::string(to_string(config.strategy)), seed, config, qkpm,
                                qkpm.temperature, r.caki));
        rows.push_back(coarse_row(seed, config, qkpm, qkpm.temperature, r.coarse));
    }
    write_table(out, rows);
    print_summary(out, rows);
    if (!csv_path.empty()) write_csv_file(csv_path, rows);
    return rows;
}

std::vector<double> default_sweep_values(SweepParameter parameter) {
    switch (parameter) {
        case SweepParameter::beta: return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        case SweepParameter::top_k: return {1, 3, 5, 7, 9};
        case SweepParameter::tau: return {0.6, 0.8, 1.0, 1.2, 1.4};
    }
    return {};
}

SweepSummary cmd_sweep(const PipelineConfig& config, SweepParameter parameter,
                       const std::vector<double>& values, const std::filesystem::path& csv_path,
                       std::ostream& out) {
    const LoadedWorld world = load_world(config);
    SweepSummary summary;
    summary.values = values;
    std::vector<std::vector<double>> hm(values.size());

    for (std::uint64_t seed : config.split.seeds) {
        const Split split = make_split(*world.encoder, world.catalog, config.split.for_seed(seed));
        TrainConfig train = config.train;
        train.seed = seed;
        QkpmConfig qkpm = config.qkpm;
        qkpm.strategy_seed = seed;
        const auto sweep_rows = sweep(*world.encoder, world.catalog, split, parameter, values, train,
                                      qkpm, config.strategy, config.key_template);
        for (std::size_t i = 0; i < sweep_rows.size(); ++i) {
            const SweepRow& s = sweep_rows[i];
            // The coarse model does not see beta or K, so one baseline row per
            // seed covers those sweeps; tau changes it, so it gets one per value.
            if (parameter == SweepParameter::tau || i == 0) {
                summary.rows.push_back(
                    coarse_row(seed, config, s.qkpm, s.qkpm.temperature, s.result.coarse));
            }
            summary.rows.push_back(make_row(std::string(to_string(config.strategy)), seed, config,
                                            s.qkpm, s.qkpm.temperature, s.result.caki));
            hm[i].push_back(s.result.caki.harmonic_mean);
        }
    }

    write_table(out, summary.rows);
    double lo = 0.0;
    double hi = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double m = mean_std(hm[i]).mean;
        summary.mean_hm.push_back(m);
        lo = i == 0 ? m : std::min(lo, m);
        hi = i == 0 ? m : std::max(hi, m);
        out << to_string(parameter) << '=' << fmt("%g", values[i]) << "  mean HM "
            << fmt("%.2f", m) << '\n';
    }
    summary.hm_range = hi - lo;
    out << "HM range over " << to_string(parameter) << " (max - min): "
        << fmt("%.2f", summary.hm_range) << '\n';
    if (!csv_path.empty()) write_csv_file(csv_path, summary.rows);
    return summary;
}

void cmd_inspect_bank(const std::filesystem::path& bank_path, std::ostream& out) {
    const PromptBank bank = load_bank(bank_path);
    const std::size_t d = bank.fingerprint.dim;
    out << "bank " << bank_path.string() << '\n'
        << "format version " << bank.format_version << '\n'
        << "encoder " << bank.fingerprint.to_string() << '\n'
        << "D " << d << "  Dt " << bank.shared_prompt.cols() << "  L " << bank.shared_prompt.rows()
        << "  C " << bank.size() << '\n';
    if (bank.empty()) return;
    char line[200];
    std::snprintf(line, sizeof line, "%-24s %10s %12s\n", "class", "key_norm", "value_frob");
    out << line;
    for (const auto& e : bank.entries) {
        std::snprintf(line, sizeof line, "%-24s %10.6f %12.6f\n", e.class_name.c_str(),
                      l2_norm(e.key), l2_norm(e.value.values()));
        out << line;
    }
}

}  // namespace caki
