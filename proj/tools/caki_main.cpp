#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "caki/commands.hpp"
#include "caki/config.hpp"
#include "caki/error.hpp"

namespace {

struct Overrides {
    std::string config;
    std::string out;
    std::string bank;
    std::optional<std::string> strategy;
    std::optional<double> beta;
    std::optional<std::size_t> topk;
    std::optional<std::string> seeds;
    std::optional<std::string> key_template;
    std::optional<std::string> gamma_renorm;
    std::string sweep_param = "beta";
    std::optional<std::string> sweep_values;
};

caki::PipelineConfig make_config(const Overrides& o) {
    caki::PipelineConfig cfg = o.config.empty() ? caki::parse_config("{}") : caki::load_config(o.config);
    try {
        if (o.strategy) cfg.strategy = caki::parse_strategy(*o.strategy);
        if (o.beta) cfg.qkpm.beta = *o.beta;
        if (o.topk) cfg.qkpm.top_k = *o.topk;
        if (o.seeds) cfg.split.seeds = caki::parse_seed_list(*o.seeds);
        if (o.key_template) cfg.key_template = caki::parse_key_template(*o.key_template);
        if (o.gamma_renorm) cfg.qkpm.gamma_mode = caki::parse_gamma_mode(*o.gamma_renorm);
    } catch (const caki::InvalidArgument& e) {
        throw caki::ConfigError(e.what());
    }
    cfg.validate();
    return cfg;
}

std::filesystem::path pick(const std::string& flag, const std::filesystem::path& fallback) {
    return flag.empty() ? fallback : std::filesystem::path(flag);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Class-specific prompt bank with training-free query-key prompt matching"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config, "JSON pipeline config (defaults to the built-in task)");
    app.add_option("--out", o.out, "output path for the command's main artifact");
    app.add_option("--strategy", o.strategy, "prompt selection: m (matching), r (random), a (all)")
        ->check(CLI::IsMember({"m", "r", "a", "M", "R", "A"}));
    app.add_option("--beta", o.beta, "weight of the fine prediction");
    app.add_option("--topk", o.topk, "number of matched prompts K");
    app.add_option("--seeds", o.seeds, "comma-separated seed list");
    app.add_option("--key-template", o.key_template, "bank key prompt")
        ->check(CLI::IsMember({"shared", "handcrafted"}));
    app.add_option("--gamma-renorm", o.gamma_renorm, "matching weights: raw or topk")
        ->check(CLI::IsMember({"raw", "topk"}));

    auto* gen = app.add_subcommand("gen-task", "write the synthetic task as an offline feature file");
    auto* train = app.add_subcommand("train-bank", "train prompts and save the knowledge bank");
    auto* eval = app.add_subcommand("eval", "evaluate per seed; prints a table and writes CSV");
    eval->add_option("--bank", o.bank, "evaluate this stored bank instead of training");
    auto* sweep = app.add_subcommand("sweep", "sweep beta, K or tau");
    sweep->add_option("--param", o.sweep_param, "beta, K or tau")
        ->check(CLI::IsMember({"beta", "K", "k", "tau"}));
    sweep->add_option("--values", o.sweep_values, "comma-separated values (default: standard grid)");
    auto* inspect = app.add_subcommand("inspect-bank", "summarize a bank file");
    inspect->add_option("bank", o.bank, "bank file")->required();
    auto* defaults = app.add_subcommand("default-config", "print the built-in config as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return caki::kExitConfig;
    }

    try {
        if (*defaults) {
            std::cout << caki::default_config_json();
            return caki::kExitOk;
        }
        if (*inspect) {
            caki::cmd_inspect_bank(o.bank, std::cout);
            return caki::kExitOk;
        }
        const caki::PipelineConfig cfg = make_config(o);
        if (*gen) {
            caki::cmd_gen_task(cfg, pick(o.out, cfg.output.features), std::cout);
        } else if (*train) {
            caki::cmd_train_bank(cfg, pick(o.out, cfg.output.bank), std::cout);
        } else if (*eval) {
            caki::cmd_eval(cfg, o.bank, pick(o.out, cfg.output.csv), std::cout);
        } else if (*sweep) {
            const auto param = caki::parse_sweep_parameter(o.sweep_param);
            const auto values = o.sweep_values ? caki::parse_value_list(*o.sweep_values)
                                               : caki::default_sweep_values(param);
            caki::cmd_sweep(cfg, param, values, pick(o.out, cfg.output.csv), std::cout);
        }
        return caki::kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return caki::exit_code_for(e);
    }
}
