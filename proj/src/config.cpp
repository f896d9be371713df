#include "mmlab/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmlab/random.hpp"

namespace mmlab {

namespace {

using nlohmann::json;

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + s + "'");
}

json grid_json(const MethodGrid& g) {
    json j = json::object();
    if (g.method == Method::mixup || g.method == Method::mentormix) j["alpha"] = g.alpha;
    if (g.method == Method::mentornet || g.method == Method::mentormix) j["gamma_p"] = g.gamma_p;
    return j;
}

json to_json(const AppConfig& c) {
    json j;
    j["master_seed"] = c.master_seed;
    j["task"] = {{"classes", c.task.num_classes},
                 {"dim", c.task.dim},
                 {"mean_scale", c.task.mean_scale},
                 {"within_std", c.task.within_std},
                 {"train_per_class", c.task.examples_per_class},
                 {"val_per_class", c.task.val_per_class}};
    j["noise"] = {{"type", std::string(to_string(c.noise.type))},
                  {"level", c.noise.level},
                  {"pool_clusters", c.noise.pool_clusters},
                  {"red_proximity", c.noise.red_proximity}};
    j["model"] = {{"hidden", c.train.model.hidden}, {"activation", activation_name(c.train.model.activation)}};
    const auto& t = c.train;
    j["train"] = {{"method", std::string(to_string(t.method.method))},
                  {"alpha", t.method.alpha},
                  {"gamma_p", t.method.gamma_p},
                  {"temperature", t.method.temperature},
                  {"ema_decay", t.method.ema_decay},
                  {"second_weighting", t.method.second_weighting},
                  {"lr", t.lr},
                  {"lr_decay_factor", t.lr_decay_factor},
                  {"lr_decay_every", t.lr_decay_every},
                  {"momentum", t.momentum},
                  {"nesterov", t.nesterov},
                  {"weight_decay", t.weight_decay},
                  {"batch_size", t.batch_size},
                  {"max_epochs", t.max_epochs},
                  {"eval_every", t.eval_every}};
    json types = json::array(), methods = json::array();
    for (auto nt : c.sweep.noise_types) types.push_back(std::string(to_string(nt)));
    for (auto m : c.sweep.methods) methods.push_back(std::string(to_string(m)));
    j["sweep"] = {{"noise_types", types},
                  {"levels", c.sweep.levels},
                  {"methods", methods},
                  {"grid",
                   {{"mixup", grid_json(c.sweep.mixup)},
                    {"mentornet", grid_json(c.sweep.mentornet)},
                    {"mentormix", grid_json(c.sweep.mentormix)}}},
                  {"seeds", c.sweep.seeds},
                  {"parallelism", c.sweep.parallelism}};
    return j;
}

AppConfig from_json(const json& j) {
    AppConfig c;
    c.master_seed = j.at("master_seed").get<std::uint64_t>();
    const auto& task = j.at("task");
    c.task.num_classes = task.at("classes").get<int>();
    c.task.dim = task.at("dim").get<int>();
    c.task.mean_scale = task.at("mean_scale").get<double>();
    c.task.within_std = task.at("within_std").get<double>();
    c.task.examples_per_class = task.at("train_per_class").get<int>();
    c.task.val_per_class = task.at("val_per_class").get<int>();
    const auto& noise = j.at("noise");
    c.noise.type = parse_noise_type(noise.at("type").get<std::string>());
    c.noise.level = noise.at("level").get<int>();
    c.noise.pool_clusters = noise.at("pool_clusters").get<int>();
    c.noise.red_proximity = noise.at("red_proximity").get<double>();
    const auto& model = j.at("model");
    c.train.model.hidden = model.at("hidden").get<std::vector<std::size_t>>();
    c.train.model.activation = parse_activation(model.at("activation").get<std::string>());
    const auto& t = j.at("train");
    c.train.method.method = parse_method(t.at("method").get<std::string>());
    c.train.method.alpha = t.at("alpha").get<double>();
    c.train.method.gamma_p = t.at("gamma_p").get<double>();
    c.train.method.temperature = t.at("temperature").get<double>();
    c.train.method.ema_decay = t.at("ema_decay").get<double>();
    c.train.method.second_weighting = t.at("second_weighting").get<bool>();
    c.train.lr = t.at("lr").get<double>();
    c.train.lr_decay_factor = t.at("lr_decay_factor").get<double>();
    c.train.lr_decay_every = t.at("lr_decay_every").get<std::uint64_t>();
    c.train.momentum = t.at("momentum").get<double>();
    c.train.nesterov = t.at("nesterov").get<bool>();
    c.train.weight_decay = t.at("weight_decay").get<double>();
    c.train.batch_size = t.at("batch_size").get<std::size_t>();
    c.train.max_epochs = t.at("max_epochs").get<std::size_t>();
    c.train.eval_every = t.at("eval_every").get<std::uint64_t>();
    const auto& s = j.at("sweep");
    c.sweep.noise_types.clear();
    for (const auto& v : s.at("noise_types")) c.sweep.noise_types.push_back(parse_noise_type(v.get<std::string>()));
    c.sweep.levels = s.at("levels").get<std::vector<int>>();
    c.sweep.methods.clear();
    for (const auto& v : s.at("methods")) c.sweep.methods.push_back(parse_method(v.get<std::string>()));
    const auto& grid = s.at("grid");
    c.sweep.mixup.alpha = grid.at("mixup").at("alpha").get<std::vector<double>>();
    c.sweep.mentornet.gamma_p = grid.at("mentornet").at("gamma_p").get<std::vector<double>>();
    c.sweep.mentormix.alpha = grid.at("mentormix").at("alpha").get<std::vector<double>>();
    c.sweep.mentormix.gamma_p = grid.at("mentormix").at("gamma_p").get<std::vector<double>>();
    c.sweep.seeds = s.at("seeds").get<std::vector<std::uint64_t>>();
    c.sweep.parallelism = s.at("parallelism").get<std::size_t>();
    return c;
}

// 1-based line of the first occurrence of the quoted key path in `text`.
std::size_t line_of_path(const std::string& text, const std::vector<std::string>& path) {
    std::size_t pos = 0;
    for (const auto& key : path) {
        const auto found = text.find('"' + key + '"', pos);
        if (found == std::string::npos) break;
        pos = found;
    }
    if (pos == 0) return 0;
    return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
}

std::string join(const std::vector<std::string>& path) {
    std::string s;
    for (const auto& p : path) s += (s.empty() ? "" : ".") + p;
    return s;
}

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return true;
    return a.type() == b.type();
}

void check_against(const json& user, const json& defaults, std::vector<std::string>& path, const std::string& text) {
    if (defaults.is_object()) {
        if (!user.is_object()) throw ConfigFileError("'" + join(path) + "' must be an object", line_of_path(text, path));
        for (const auto& [key, value] : user.items()) {
            path.push_back(key);
            if (!defaults.contains(key)) throw ConfigFileError("unknown key '" + join(path) + "'", line_of_path(text, path));
            check_against(value, defaults.at(key), path, text);
            path.pop_back();
        }
        return;
    }
    if (!same_kind(user, defaults)) {
        throw ConfigFileError("'" + join(path) + "' has the wrong type (expected " + std::string(defaults.type_name()) + ")",
                              line_of_path(text, path));
    }
}

void collect_leaves(const json& j, std::vector<std::string>& path, std::vector<std::vector<std::string>>& out) {
    if (j.is_object()) {
        for (const auto& [key, value] : j.items()) {
            path.push_back(key);
            collect_leaves(value, path, out);
            path.pop_back();
        }
        return;
    }
    out.push_back(path);
}

std::vector<std::string> split_dots(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, '.')) out.push_back(part);
    return out;
}

void apply_override(json& config, const std::string& override_text) {
    const auto eq = override_text.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigFileError("override '" + override_text + "' is not key=value", 0);
    const std::string key = override_text.substr(0, eq);
    const std::string raw = override_text.substr(eq + 1);

    std::vector<std::vector<std::string>> leaves;
    std::vector<std::string> scratch;
    collect_leaves(config, scratch, leaves);
    const auto wanted = split_dots(key);
    std::vector<std::string> target;
    // A bare leaf name prefers the single-run sections over the sweep grids,
    // so `alpha=2` means train.alpha.
    std::vector<std::vector<std::string>> run_hits, sweep_hits;
    for (const auto& leaf : leaves) {
        if (leaf == wanted) {
            target = leaf;
            break;
        }
        if (wanted.size() == 1 && leaf.back() == wanted.front()) {
            (leaf.front() == "sweep" ? sweep_hits : run_hits).push_back(leaf);
        }
    }
    if (target.empty()) {
        const auto& hits = run_hits.empty() ? sweep_hits : run_hits;
        if (hits.size() > 1) {
            throw ConfigFileError("override key '" + key + "' is ambiguous (" + join(hits[0]) + ", " + join(hits[1]) + ")", 0);
        }
        if (hits.size() == 1) target = hits.front();
    }
    if (target.empty()) throw ConfigFileError("override: unknown key '" + key + "'", 0);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* slot = &config;
    for (const auto& p : target) slot = &(*slot)[p];
    if (!same_kind(value, *slot)) {
        throw ConfigFileError("override '" + key + "' has the wrong type (expected " + std::string(slot->type_name()) + ")", 0);
    }
    *slot = value;
}

constexpr const char* kPaperGrid = R"({
  "sweep": {
    "noise_types": ["blue", "red"],
    "levels": [0, 5, 10, 15, 20, 30, 40, 50, 60, 80],
    "methods": ["vanilla", "mixup", "mentornet", "mentormix"],
    "grid": {
      "mixup": {"alpha": [0.4, 1, 2]},
      "mentornet": {"gamma_p": [90, 80, 70]},
      "mentormix": {"alpha": [0.4, 1, 2], "gamma_p": [90, 80, 70]}
    },
    "seeds": [1, 2, 3]
  }
})";

constexpr const char* kQuick = R"({
  "task": {"train_per_class": 40, "val_per_class": 20},
  "model": {"hidden": [32]},
  "train": {"max_epochs": 5},
  "sweep": {
    "noise_types": ["blue", "red"],
    "levels": [0, 40],
    "methods": ["vanilla", "mentormix"],
    "grid": {"mentormix": {"alpha": [1], "gamma_p": [80]}},
    "seeds": [1]
  }
})";

}  // namespace

std::optional<std::string> builtin_preset(const std::string& name) {
    if (name == "paper_grid") return std::string(kPaperGrid);
    if (name == "quick") return std::string(kQuick);
    if (name == "default") return std::string("{}");
    return std::nullopt;
}

AppConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    json merged = to_json(AppConfig{});
    json user;
    try {
        user = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t line =
            static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(std::min(e.byte, text.size())), '\n')) + 1;
        throw ConfigFileError(std::string("malformed config: ") + e.what(), line);
    }
    std::vector<std::string> path;
    check_against(user, merged, path, text);
    merged.merge_patch(user);
    for (const auto& o : overrides) apply_override(merged, o);
    AppConfig config;
    try {
        config = from_json(merged);
    } catch (const json::exception& e) {
        throw ConfigFileError(std::string("invalid config value: ") + e.what(), 0);
    }
    config.task.validate();
    config.train.validate();
    if (!is_canonical_level(config.noise.level)) {
        throw ConfigFileError("noise.level " + std::to_string(config.noise.level) + " is not canonical",
                              line_of_path(text, {"noise", "level"}));
    }
    return config;
}

AppConfig load_config(const std::string& path_or_preset, const std::vector<std::string>& overrides) {
    if (std::filesystem::exists(path_or_preset)) {
        std::ifstream in(path_or_preset, std::ios::binary);
        if (!in) throw IoError("cannot read config '" + path_or_preset + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            return parse_config(ss.str(), overrides);
        } catch (const ConfigFileError& e) {
            throw ConfigFileError(path_or_preset + ": " + e.message(), e.line());
        }
    }
    if (auto preset = builtin_preset(path_or_preset)) return parse_config(*preset, overrides);
    throw ConfigFileError("config '" + path_or_preset + "' is neither a file nor a built-in preset", 0);
}

std::string config_to_json(const AppConfig& config) { return to_json(config).dump(); }

std::string provenance_json(const AppConfig& config) {
    json j = to_json(config);
    j["sweep"].erase("parallelism");
    return j.dump();
}

NoisySplit make_config_split(const AppConfig& config) {
    SweepSpec spec = make_sweep_spec(config);
    spec.seeds = {config.master_seed};
    NoisySplit split = make_split(spec, config.noise.type, config.noise.level, 0);
    split.provenance = config_to_json(config);
    return split;
}

TrainConfig make_train_config(const AppConfig& config) {
    TrainConfig t = config.train;
    t.seed = hash_words({config.master_seed, 0x72756eULL});
    return t;
}

SweepSpec make_sweep_spec(const AppConfig& config) {
    SweepSpec spec;
    spec.task = config.task;
    spec.pool_clusters = config.noise.pool_clusters;
    spec.red_proximity = config.noise.red_proximity;
    spec.noise_types = config.sweep.noise_types;
    spec.levels = config.sweep.levels;
    spec.seeds = config.sweep.seeds;
    spec.parallelism = config.sweep.parallelism;
    spec.master_seed = config.master_seed;
    spec.train = config.train;
    for (Method m : config.sweep.methods) {
        switch (m) {
            case Method::vanilla: spec.methods.push_back({Method::vanilla, {}, {}}); break;
            case Method::mixup: spec.methods.push_back(config.sweep.mixup); break;
            case Method::mentornet: spec.methods.push_back(config.sweep.mentornet); break;
            case Method::mentormix: spec.methods.push_back(config.sweep.mentormix); break;
        }
    }
    return spec;
}

}  // namespace mmlab
