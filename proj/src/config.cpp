#include "caki/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "caki/error.hpp"

namespace caki {

namespace {

using nlohmann::json;

// A JSON object whose keys must all be consumed; leftovers are typos.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) {
            throw ConfigError(where() + " must be a JSON object");
        }
    }

    bool has(const std::string& key) const { return node_.contains(key); }

    const json* get(const std::string& key) {
        seen_.insert(key);
        auto it = node_.find(key);
        return it == node_.end() ? nullptr : &*it;
    }

    Section child(const std::string& key) {
        const json* v = get(key);
        static const json empty = json::object();
        return Section(v ? *v : empty, path_.empty() ? key : path_ + "." + key);
    }

    template <class T>
    void read_unsigned(const std::string& key, T& out, std::uint64_t min = 0) {
        const json* v = get(key);
        if (!v) return;
        if (!v->is_number_unsigned()) {
            throw ConfigError(qualify(key) + " must be a non-negative integer");
        }
        const auto x = v->get<std::uint64_t>();
        if (x < min || x > std::numeric_limits<T>::max()) {
            throw ConfigError(qualify(key) + " is out of range (got " + std::to_string(x) + ")");
        }
        out = static_cast<T>(x);
    }

    void read_real(const std::string& key, double& out) {
        const json* v = get(key);
        if (!v) return;
        if (!v->is_number()) throw ConfigError(qualify(key) + " must be a number");
        out = v->get<double>();
    }

    std::optional<std::string> read_string(const std::string& key) {
        const json* v = get(key);
        if (!v) return std::nullopt;
        if (!v->is_string()) throw ConfigError(qualify(key) + " must be a string");
        return v->get<std::string>();
    }

    template <class Parse, class T>
    void read_enum(const std::string& key, T& out, Parse parse) {
        if (auto s = read_string(key)) {
            try {
                out = parse(*s);
            } catch (const InvalidArgument& e) {
                throw ConfigError(qualify(key) + ": " + e.what());
            }
        }
    }

    void finish() const {
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError("unknown key " + qualify(it.key()));
            }
        }
    }

    std::string qualify(const std::string& key) const {
        return path_.empty() ? "'" + key + "'" : "'" + path_ + "." + key + "'";
    }

private:
    std::string where() const { return path_.empty() ? "the config document" : "'" + path_ + "'"; }

    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::string& text, const std::filesystem::path& base) {
    std::filesystem::path p(text);
    return p.is_relative() && !base.empty() ? base / p : p;
}

void read_synthetic(Section s, SyntheticWorldSpec& w) {
    s.read_unsigned("seed", w.seed);
    s.read_unsigned("classes", w.classes, 1);
    s.read_unsigned("dim", w.dim, 1);
    s.read_unsigned("token_dim", w.token_dim, 1);
    s.read_unsigned("prompt_len", w.prompt_len, 1);
    s.read_real("sigma", w.sigma);
    s.read_real("domain_shift_scale", w.domain_shift_scale);
    s.read_real("class_shift_scale", w.class_shift_scale);
    s.read_real("prompt_gain", w.prompt_gain);
    s.read_real("logit_scale", w.logit_scale);
    s.finish();
}

void read_world(Section s, PipelineConfig& cfg, const std::filesystem::path& base) {
    const bool synthetic = s.has("synthetic");
    const bool offline = s.has("offline");
    if (synthetic == offline) {
        throw ConfigError("'world' needs exactly one of 'synthetic' or 'offline'");
    }
    if (synthetic) {
        cfg.synthetic = SyntheticWorldSpec{};
        read_synthetic(s.child("synthetic"), *cfg.synthetic);
    } else {
        Section o = s.child("offline");
        OfflineSource src;
        auto path = o.read_string("path");
        if (!path || path->empty()) throw ConfigError("'world.offline.path' is required");
        src.path = resolve(*path, base);
        o.read_unsigned("prompt_len", src.prompt_len, 1);
        o.finish();
        cfg.offline = src;
    }
    s.finish();
}

void read_train(Section s, TrainConfig& t) {
    s.read_unsigned("epochs", t.epochs);
    s.read_unsigned("batch_size", t.batch_size);
    s.read_real("temperature", t.temperature);
    s.read_real("learning_rate", t.adamw.learning_rate);
    s.read_real("beta1", t.adamw.beta1);
    s.read_real("beta2", t.adamw.beta2);
    s.read_real("epsilon", t.adamw.epsilon);
    s.read_real("weight_decay", t.adamw.weight_decay);
    s.finish();
}

void read_qkpm(Section s, PipelineConfig& cfg) {
    s.read_unsigned("top_k", cfg.qkpm.top_k);
    s.read_real("beta", cfg.qkpm.beta);
    s.read_real("temperature", cfg.qkpm.temperature);
    s.read_enum("gamma_renorm", cfg.qkpm.gamma_mode, parse_gamma_mode);
    s.read_enum("strategy", cfg.strategy, parse_strategy);
    s.read_enum("key_template", cfg.key_template, parse_key_template);
    s.finish();
}

void read_split(Section s, SplitSettings& sp) {
    s.read_unsigned("shots", sp.shots);
    s.read_unsigned("test_per_class", sp.test_per_class);
    s.read_real("base_fraction", sp.base_fraction);
    if (const json* seeds = s.get("seeds")) {
        if (!seeds->is_array()) throw ConfigError(s.qualify("seeds") + " must be an array");
        sp.seeds.clear();
        for (const auto& v : *seeds) {
            if (!v.is_number_unsigned()) {
                throw ConfigError(s.qualify("seeds") + " must hold non-negative integers");
            }
            sp.seeds.push_back(v.get<std::uint64_t>());
        }
    }
    s.finish();
}

void read_output(Section s, OutputPaths& out, const std::filesystem::path& base) {
    if (auto p = s.read_string("features")) out.features = resolve(*p, base);
    if (auto p = s.read_string("bank")) out.bank = resolve(*p, base);
    if (auto p = s.read_string("csv")) out.csv = resolve(*p, base);
    s.finish();
}

template <class T, class Parse>
std::vector<T> parse_list(std::string_view text, const char* what, Parse parse_one) {
    std::vector<T> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = std::min(text.find(',', start), text.size());
        std::string item(text.substr(start, comma - start));
        const auto first = item.find_first_not_of(" \t");
        const auto last = item.find_last_not_of(" \t");
        item = first == std::string::npos ? "" : item.substr(first, last - first + 1);
        if (item.empty()) throw InvalidArgument(std::string("empty entry in ") + what + " list");
        out.push_back(parse_one(item));
        start = comma + 1;
    }
    return out;
}

}  // namespace

SplitConfig SplitSettings::for_seed(std::uint64_t seed) const {
    SplitConfig c;
    c.seed = seed;
    c.shots = shots;
    c.test_per_class = test_per_class;
    c.base_fraction = base_fraction;
    return c;
}

void PipelineConfig::validate() const {
    try {
        if (synthetic.has_value() == offline.has_value()) {
            throw ConfigError("exactly one world source must be configured");
        }
        if (synthetic) synthetic->validate();
        if (offline && offline->prompt_len < 1) {
            throw ConfigError("offline prompt_len must be >= 1");
        }
        train.validate();
        qkpm.validate();
        split.for_seed(0).validate();
        if (split.seeds.empty()) throw ConfigError("split: the seed list is empty");
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    PipelineConfig cfg;
    Section root(doc, "");
    if (root.has("world")) {
        read_world(root.child("world"), cfg, base_dir);
    } else {
        cfg.synthetic = SyntheticWorldSpec{};
    }
    read_train(root.child("train"), cfg.train);
    read_qkpm(root.child("qkpm"), cfg);
    read_split(root.child("split"), cfg.split);
    read_output(root.child("output"), cfg.output, base_dir);
    root.finish();
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.parent_path());
}

std::string default_config_json() {
    const SyntheticWorldSpec w;
    const TrainConfig t;
    const QkpmConfig q;
    const SplitSettings s;
    nlohmann::ordered_json doc = {
        {"world",
         {{"synthetic",
           {{"seed", w.seed},
            {"classes", w.classes},
            {"dim", w.dim},
            {"token_dim", w.token_dim},
            {"prompt_len", w.prompt_len},
            {"sigma", w.sigma},
            {"domain_shift_scale", w.domain_shift_scale},
            {"class_shift_scale", w.class_shift_scale},
            {"prompt_gain", w.prompt_gain},
            {"logit_scale", w.logit_scale}}}}},
        {"train",
         {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"temperature", t.temperature},
          {"learning_rate", t.adamw.learning_rate},
          {"beta1", t.adamw.beta1},
          {"beta2", t.adamw.beta2},
          {"epsilon", t.adamw.epsilon},
          {"weight_decay", t.adamw.weight_decay}}},
        {"qkpm",
         {{"top_k", q.top_k},
          {"beta", q.beta},
          {"temperature", q.temperature},
          {"gamma_renorm", std::string(to_string(q.gamma_mode))},
          {"strategy", "m"},
          {"key_template", "shared"}}},
        {"split",
         {{"shots", s.shots},
          {"test_per_class", s.test_per_class},
          {"base_fraction", s.base_fraction},
          {"seeds", s.seeds}}},
        {"output", {{"features", "task.cakifeat"}, {"bank", "bank.cakibank"}, {"csv", "results.csv"}}},
    };
    return doc.dump(2) + "\n";
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
    return parse_list<std::uint64_t>(text, "seed", [](const std::string& item) {
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw InvalidArgument("'" + item + "' is not a non-negative integer seed");
        }
        return v;
    });
}

std::vector<double> parse_value_list(std::string_view text) {
    return parse_list<double>(text, "value", [](const std::string& item) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || !std::isfinite(v)) {
            throw InvalidArgument("'" + item + "' is not a number");
        }
        return v;
    });
}

}  // namespace caki
