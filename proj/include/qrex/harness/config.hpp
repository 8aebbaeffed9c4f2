#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrex/algorithms.hpp"

namespace qrex::harness {

// Raised for malformed files, unknown keys, type mismatches and
// constraint violations. The CLI maps it to exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"gridworld",   "randomwalk", "mountaincar",
                                                "baird",       "lds",        "custom-tabular"};
    return names;
}

inline const std::vector<std::string>& algorithm_names() {
    static const std::vector<std::string> names{"qrex",     "qrexdare", "epiqrex", "vanilla",
                                                "otl_er_q", "er_q",     "otl_q"};
    return names;
}

// A fully-resolved run description: experiment, algorithm, the AlgoConfig
// fields, seed fan-out and environment overrides. Defaults mirror the
// shipped experiment setups; unknown keys are rejected.
struct ExperimentConfig {
    std::string experiment = "gridworld";
    std::string algorithm = "qrex";
    AlgoConfig algo;
    int seeds = 30;
    std::uint64_t base_seed = 0;
    std::vector<std::string> metrics;
    std::string init_w = "zeros";  // zeros | ones
    std::string control = "fixed"; // fixed | greedy (episodic control policy)

    // environment overrides
    double reward_noise = 0.5;  // gridworld additive reward noise half-width
    double lds_rho = 0.9;
    double lds_sigma = 1.0;
    int lds_dim = 5;
    std::string model_file;  // custom-tabular

    std::vector<std::pair<std::string, std::string>> echo() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a real number, got '" + v + "'");
    }
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::int64_t x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

inline std::string to_string(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

struct KeyValues {
    // insertion-ordered key/value pairs; later entries win
    std::vector<std::pair<std::string, std::string>> items;

    void add_line(const std::string& raw, const std::string& where) {
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) return;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected 'key = value', got '" + trim(raw) + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key in '" + trim(raw) + "'");
        items.emplace_back(key, value);
    }

    const std::string* find(const std::string& key) const {
        const std::string* out = nullptr;
        for (const auto& [k, v] : items)
            if (k == key) out = &v;
        return out;
    }
};

inline void apply_experiment_defaults(ExperimentConfig& cfg) {
    AlgoConfig& a = cfg.algo;
    if (cfg.experiment == "gridworld") {
        a.gamma = 0.9;
        a.eta = 0.05;
        a.B = 3000;
        a.N = 1;
        a.u = 0;
        a.K = 300;
        a.combine = CombineOption::OptionII;
        a.checkpoint_every = 3000;
        cfg.seeds = 30;
        cfg.metrics = {"sup_error"};
        cfg.reward_noise = 0.5;
        cfg.algorithm = "qrex";
    } else if (cfg.experiment == "randomwalk") {
        a.gamma = 1.0;
        a.eta = 0.01;
        a.N = 1;
        a.K = 3000;  // episodes
        a.B = 1;
        a.combine = CombineOption::OptionII;
        a.episodic = true;
        cfg.seeds = 20;
        cfg.metrics = {"sup_error"};
        cfg.control = "fixed";
        cfg.algorithm = "epiqrex";
    } else if (cfg.experiment == "mountaincar") {
        a.gamma = 1.0;
        a.eta = 0.1 / 4.0;
        a.N = 1;
        a.K = 500;  // episodes
        a.B = 1;
        a.combine = CombineOption::OptionI;
        a.episodic = true;
        cfg.seeds = 100;
        cfg.metrics = {"episode_length"};
        cfg.control = "greedy";
        cfg.algorithm = "epiqrex";
    } else if (cfg.experiment == "baird") {
        a.gamma = 0.99;
        a.eta = 0.01 / std::sqrt(5.0);
        a.B = 50;
        a.u = 0;
        a.N = 5;
        a.K = 80;  // 2e4 samples
        a.combine = CombineOption::OptionI;
        a.checkpoint_every = 250;
        cfg.seeds = 10;
        cfg.metrics = {"weight_norm"};
        cfg.init_w = "ones";
        cfg.algorithm = "vanilla";
    } else if (cfg.experiment == "lds") {
        a.gamma = 0.99;
        a.eta = 0.01;
        a.B = 75;
        a.u = 25;
        a.N = 5;
        a.K = 200;
        a.combine = CombineOption::OptionII;
        a.iterate_averaging = true;
        a.checkpoint_every = 500;
        cfg.seeds = 100;
        cfg.metrics = {"l2_weight_error"};
        cfg.algorithm = "qrex";
    } else if (cfg.experiment == "custom-tabular") {
        a.gamma = 0.9;
        a.eta = 0.05;
        a.B = 100;
        a.N = 1;
        a.K = 50;
        a.combine = CombineOption::OptionI;
        a.checkpoint_every = 100;
        cfg.seeds = 10;
        cfg.metrics = {"sup_error"};
        cfg.algorithm = "qrex";
    } else {
        throw ConfigError("config key 'experiment': unknown experiment '" + cfg.experiment + "'");
    }
}

inline void apply_algorithm_mode(ExperimentConfig& cfg) {
    AlgoConfig& a = cfg.algo;
    if (cfg.algorithm == "qrex") {
        a.replay_order = ReplayOrder::Reverse;
        a.target_mode = TargetMode::FrozenPerOuterLoop;
        a.data_mode = DataMode::Fresh;
    } else if (cfg.algorithm == "qrexdare") {
        a.replay_order = ReplayOrder::Reverse;
        a.target_mode = TargetMode::FrozenPerOuterLoop;
        a.data_mode = DataMode::Reuse;
        a.combine = CombineOption::OptionI;
    } else if (cfg.algorithm == "epiqrex") {
        a.replay_order = ReplayOrder::Reverse;
        a.target_mode = TargetMode::FrozenPerOuterLoop;
        a.data_mode = DataMode::Fresh;
        a.episodic = true;
    } else if (cfg.algorithm == "vanilla") {
        a.target_mode = TargetMode::Live;
        a.data_mode = DataMode::Fresh;
    } else if (cfg.algorithm == "otl_er_q") {
        a.replay_order = ReplayOrder::UniformRandomPermutation;
        a.target_mode = TargetMode::FrozenPerOuterLoop;
        a.data_mode = DataMode::Fresh;
    } else if (cfg.algorithm == "er_q") {
        a.replay_order = ReplayOrder::UniformRandomPermutation;
        a.target_mode = TargetMode::Live;
        a.data_mode = DataMode::Fresh;
    } else if (cfg.algorithm == "otl_q") {
        a.replay_order = ReplayOrder::Forward;
        a.target_mode = TargetMode::FrozenPerOuterLoop;
        a.data_mode = DataMode::Fresh;
    } else {
        throw ConfigError("config key 'algorithm': unknown algorithm '" + cfg.algorithm + "'");
    }
}

inline void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    AlgoConfig& a = cfg.algo;
    if (key == "experiment" || key == "algorithm") return;  // handled in the first pass
    if (key == "eta") {
        a.eta = parse_double(key, value);
    } else if (key == "gamma") {
        a.gamma = parse_double(key, value);
    } else if (key == "K") {
        a.K = parse_int(key, value);
    } else if (key == "N") {
        a.N = parse_int(key, value);
    } else if (key == "B") {
        a.B = parse_int(key, value);
    } else if (key == "u") {
        a.u = parse_int(key, value);
    } else if (key == "combine") {
        if (value == "option1")
            a.combine = CombineOption::OptionI;
        else if (value == "option2")
            a.combine = CombineOption::OptionII;
        else
            throw ConfigError("config key 'combine': expected option1|option2, got '" + value + "'");
    } else if (key == "replay_order") {
        if (value == "reverse")
            a.replay_order = ReplayOrder::Reverse;
        else if (value == "forward")
            a.replay_order = ReplayOrder::Forward;
        else if (value == "random")
            a.replay_order = ReplayOrder::UniformRandomPermutation;
        else
            throw ConfigError("config key 'replay_order': expected reverse|forward|random, got '" +
                              value + "'");
    } else if (key == "target_mode") {
        if (value == "frozen")
            a.target_mode = TargetMode::FrozenPerOuterLoop;
        else if (value == "live")
            a.target_mode = TargetMode::Live;
        else
            throw ConfigError("config key 'target_mode': expected frozen|live, got '" + value + "'");
    } else if (key == "data_mode") {
        if (value == "fresh")
            a.data_mode = DataMode::Fresh;
        else if (value == "reuse")
            a.data_mode = DataMode::Reuse;
        else
            throw ConfigError("config key 'data_mode': expected fresh|reuse, got '" + value + "'");
    } else if (key == "episodic") {
        a.episodic = parse_bool(key, value);
    } else if (key == "episode_cap") {
        a.episode_cap = parse_int(key, value);
    } else if (key == "checkpoint_every") {
        a.checkpoint_every = parse_int(key, value);
    } else if (key == "replay_with_replacement") {
        a.replay_with_replacement = parse_bool(key, value);
    } else if (key == "iterate_averaging") {
        a.iterate_averaging = parse_bool(key, value);
    } else if (key == "init_w") {
        if (value != "zeros" && value != "ones")
            throw ConfigError("config key 'init_w': expected zeros|ones, got '" + value + "'");
        cfg.init_w = value;
    } else if (key == "control") {
        if (value != "fixed" && value != "greedy")
            throw ConfigError("config key 'control': expected fixed|greedy, got '" + value + "'");
        cfg.control = value;
    } else if (key == "seeds") {
        cfg.seeds = static_cast<int>(parse_int(key, value));
    } else if (key == "base_seed") {
        cfg.base_seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "metrics") {
        cfg.metrics.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) cfg.metrics.push_back(item);
        }
        if (cfg.metrics.empty()) throw ConfigError("config key 'metrics': empty metric list");
    } else if (key == "reward_noise") {
        cfg.reward_noise = parse_double(key, value);
    } else if (key == "lds_rho") {
        cfg.lds_rho = parse_double(key, value);
    } else if (key == "lds_sigma") {
        cfg.lds_sigma = parse_double(key, value);
    } else if (key == "lds_dim") {
        cfg.lds_dim = static_cast<int>(parse_int(key, value));
    } else if (key == "model_file") {
        cfg.model_file = value;
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

inline void check_algorithm_constraints(const ExperimentConfig& cfg) {
    const AlgoConfig& a = cfg.algo;
    auto fail = [&](const std::string& key, const std::string& why) {
        throw ConfigError("config key '" + key + "': " + why + " for algorithm '" + cfg.algorithm +
                          "'");
    };
    if (cfg.algorithm == "qrex" || cfg.algorithm == "qrexdare" || cfg.algorithm == "epiqrex") {
        if (a.replay_order != ReplayOrder::Reverse) fail("replay_order", "must be reverse");
        if (a.target_mode != TargetMode::FrozenPerOuterLoop) fail("target_mode", "must be frozen");
    }
    if (cfg.algorithm == "qrexdare") {
        if (a.data_mode != DataMode::Reuse) fail("data_mode", "must be reuse");
        if (a.combine != CombineOption::OptionI) fail("combine", "must be option1");
        if (a.episodic) fail("episodic", "needs a continuing sample stream");
    } else if (a.data_mode != DataMode::Fresh) {
        fail("data_mode", "must be fresh");
    }
    if (cfg.algorithm == "vanilla" && a.target_mode != TargetMode::Live)
        fail("target_mode", "must be live");
    if ((cfg.algorithm == "otl_er_q" || cfg.algorithm == "er_q") &&
        a.replay_order != ReplayOrder::UniformRandomPermutation)
        fail("replay_order", "must be random");
    if (cfg.algorithm == "er_q" && a.target_mode != TargetMode::Live)
        fail("target_mode", "must be live");
    if ((cfg.algorithm == "otl_er_q" || cfg.algorithm == "otl_q") &&
        a.target_mode != TargetMode::FrozenPerOuterLoop)
        fail("target_mode", "must be frozen");
    if (cfg.experiment == "mountaincar" || cfg.experiment == "randomwalk") {
        if (!a.episodic) fail("episodic", "must be true");
    } else if (a.episodic) {
        throw ConfigError("config key 'episodic': experiment '" + cfg.experiment +
                          "' is a continuing task");
    }
    if (cfg.seeds < 1) throw ConfigError("config key 'seeds': must be >= 1");
    try {
        a.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace detail

// Resolve a config from `file_lines` (a config file's contents) plus inline
// key=value overrides, in that order. Defaults are filled per experiment and
// algorithm; unknown keys and constraint violations are rejected.
inline ExperimentConfig resolve_config(const std::vector<std::string>& file_lines,
                                       const std::vector<std::string>& overrides) {
    detail::KeyValues kv;
    for (std::size_t i = 0; i < file_lines.size(); ++i)
        kv.add_line(file_lines[i], "config line " + std::to_string(i + 1));
    for (const auto& o : overrides) kv.add_line(o, "--set argument");

    ExperimentConfig cfg;
    if (const auto* exp = kv.find("experiment")) cfg.experiment = *exp;
    detail::apply_experiment_defaults(cfg);
    if (const auto* alg = kv.find("algorithm")) {
        if (std::find(algorithm_names().begin(), algorithm_names().end(), *alg) ==
            algorithm_names().end())
            throw ConfigError("config key 'algorithm': unknown algorithm '" + *alg + "'");
        cfg.algorithm = *alg;
    }
    detail::apply_algorithm_mode(cfg);
    for (const auto& [k, v] : kv.items) detail::apply_key(cfg, k, v);
    detail::check_algorithm_constraints(cfg);
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& path,
                                     const std::vector<std::string>& overrides = {}) {
    std::vector<std::string> lines;
    if (!path.empty()) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot read config file '" + path + "'");
        std::string line;
        while (std::getline(is, line)) lines.push_back(line);
    }
    return resolve_config(lines, overrides);
}

inline std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
    using detail::to_string;
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("experiment", experiment);
    kv.emplace_back("algorithm", algorithm);
    kv.emplace_back("eta", to_string(algo.eta));
    kv.emplace_back("gamma", to_string(algo.gamma));
    kv.emplace_back("K", std::to_string(algo.K));
    kv.emplace_back("N", std::to_string(algo.N));
    kv.emplace_back("B", std::to_string(algo.B));
    kv.emplace_back("u", std::to_string(algo.u));
    kv.emplace_back("combine", algo.combine == CombineOption::OptionI ? "option1" : "option2");
    kv.emplace_back("replay_order", algo.replay_order == ReplayOrder::Reverse    ? "reverse"
                                    : algo.replay_order == ReplayOrder::Forward ? "forward"
                                                                                : "random");
    kv.emplace_back("target_mode",
                    algo.target_mode == TargetMode::FrozenPerOuterLoop ? "frozen" : "live");
    kv.emplace_back("data_mode", algo.data_mode == DataMode::Fresh ? "fresh" : "reuse");
    kv.emplace_back("episodic", algo.episodic ? "true" : "false");
    kv.emplace_back("episode_cap", std::to_string(algo.episode_cap));
    kv.emplace_back("checkpoint_every", std::to_string(algo.checkpoint_every));
    kv.emplace_back("replay_with_replacement", algo.replay_with_replacement ? "true" : "false");
    kv.emplace_back("iterate_averaging", algo.iterate_averaging ? "true" : "false");
    kv.emplace_back("init_w", init_w);
    kv.emplace_back("control", control);
    kv.emplace_back("seeds", std::to_string(seeds));
    kv.emplace_back("base_seed", std::to_string(base_seed));
    std::string ms;
    for (const auto& m : metrics) ms += (ms.empty() ? "" : ",") + m;
    kv.emplace_back("metrics", ms);
    if (experiment == "gridworld") kv.emplace_back("reward_noise", to_string(reward_noise));
    if (experiment == "lds") {
        kv.emplace_back("lds_rho", to_string(lds_rho));
        kv.emplace_back("lds_sigma", to_string(lds_sigma));
        kv.emplace_back("lds_dim", std::to_string(lds_dim));
    }
    if (experiment == "custom-tabular") kv.emplace_back("model_file", model_file);
    return kv;
}

}  // namespace qrex::harness
