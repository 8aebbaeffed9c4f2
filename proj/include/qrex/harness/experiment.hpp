#pragma once

#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "qrex/algorithms.hpp"
#include "qrex/envs/baird.hpp"
#include "qrex/envs/gridworld.hpp"
#include "qrex/envs/lds.hpp"
#include "qrex/envs/mountain_car.hpp"
#include "qrex/envs/random_walk.hpp"
#include "qrex/envs/tabular_env.hpp"
#include "qrex/harness/config.hpp"
#include "qrex/oracle.hpp"

namespace qrex::harness {

struct SeedCurve {
    std::uint64_t seed = 0;
    bool diverged = false;
    std::vector<std::int64_t> xs;
    std::vector<std::map<std::string, double>> rows;  // one metric map per checkpoint
};

// Per-checkpoint mean and standard error across seeds, plus the per-seed
// curves. Diverged seeds contribute to the curves up to their divergence
// point and are counted separately.
struct AggregateResult {
    ExperimentConfig config;
    std::string x_unit;  // samples | episodes
    std::vector<SeedCurve> seeds;
    int diverged_count = 0;
    std::vector<std::int64_t> xs;  // longest grid over seeds
    std::vector<std::map<std::string, double>> mean_rows;
    std::vector<std::map<std::string, double>> stderr_rows;
};

namespace detail {

inline void parallel_for_seeds(int seeds, int jobs, const std::function<void(int)>& fn) {
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    std::atomic<int> next{0};
    std::vector<std::string> errors(static_cast<std::size_t>(seeds));
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= seeds) return;
            try {
                fn(i);
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(i)] = e.what();
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = "unknown error";
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (int i = 0; i < seeds; ++i)
        if (!errors[static_cast<std::size_t>(i)].empty())
            throw std::runtime_error("seed " + std::to_string(i) +
                                     " failed: " + errors[static_cast<std::size_t>(i)]);
}

// metric value resolver: name x checkpoint -> value
using MetricEval = std::function<double(const std::string&, const RunCheckpoint&)>;

inline const Vec& metric_weights(const ExperimentConfig& cfg, const RunCheckpoint& cp) {
    return cfg.algo.iterate_averaging && cp.w_avg.size() > 0 ? cp.w_avg : cp.w;
}

inline SeedCurve make_curve(const ExperimentConfig& cfg, std::uint64_t seed, const RunTrace& trace,
                            const MetricEval& eval) {
    SeedCurve curve;
    curve.seed = seed;
    curve.diverged = trace.diverged;
    curve.xs.reserve(trace.checkpoints.size());
    curve.rows.reserve(trace.checkpoints.size());
    for (const auto& cp : trace.checkpoints) {
        curve.xs.push_back(cfg.algo.episodic ? cp.episodes : cp.samples);
        std::map<std::string, double> row;
        for (const auto& name : cfg.metrics) row[name] = eval(name, cp);
        curve.rows.push_back(std::move(row));
    }
    return curve;
}

template <Environment Env, class Policy>
RunTrace dispatch_run(const ExperimentConfig& cfg, const Env& env, const Policy& policy,
                      ControlPolicyMode mode, Rng& rng) {
    const AlgoConfig& a = cfg.algo;
    if (cfg.algorithm == "vanilla") return vanilla_q_run(a, env, policy, rng, mode);
    if (a.episodic) return episodic_replay_q_run(a, env, policy, mode, rng);
    if (cfg.algorithm == "qrexdare") {
        auto dataset = sample_trajectory(env, policy, a.N * (a.B + a.u), rng);
        return qrexdare_run(a, env, dataset);
    }
    return replay_q_run(a, env, policy, rng);
}

// shared driver: builds the per-seed rng, resolves init_w, runs, evaluates
template <Environment Env>
AggregateResult drive(const ExperimentConfig& cfg, int jobs,
                      const std::function<Env(Rng&)>& env_factory,
                      const std::function<MetricEval(const Env&, Rng&)>& metric_factory) {
    AggregateResult result;
    result.config = cfg;
    result.x_unit = cfg.algo.episodic ? "episodes" : "samples";
    result.seeds.resize(static_cast<std::size_t>(cfg.seeds));

    const ControlPolicyMode mode = cfg.control == "greedy" ? ControlPolicyMode::GreedyOnline
                                                           : ControlPolicyMode::FixedBehavior;

    parallel_for_seeds(cfg.seeds, jobs, [&](int i) {
        const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(i);
        Rng rng(seed);
        Env env = env_factory(rng);
        ExperimentConfig local = cfg;
        if (cfg.init_w == "ones") local.algo.init_w = Vec::Ones(env.feature_dim());
        MetricEval eval = metric_factory(env, rng);
        auto policy = BehaviorPolicy<Env>::uniform();
        RunTrace trace = dispatch_run(local, env, policy, mode, rng);
        result.seeds[static_cast<std::size_t>(i)] = make_curve(local, seed, trace, eval);
    });

    for (const auto& s : result.seeds)
        if (s.diverged) ++result.diverged_count;

    // index-aligned aggregation over the seeds still alive at each checkpoint
    std::size_t longest = 0, arg = 0;
    for (std::size_t i = 0; i < result.seeds.size(); ++i)
        if (result.seeds[i].xs.size() > longest) {
            longest = result.seeds[i].xs.size();
            arg = i;
        }
    if (longest > 0) result.xs = result.seeds[arg].xs;
    result.mean_rows.resize(longest);
    result.stderr_rows.resize(longest);
    for (std::size_t cp = 0; cp < longest; ++cp) {
        for (const auto& name : cfg.metrics) {
            double sum = 0.0, sumsq = 0.0;
            int n = 0;
            for (const auto& s : result.seeds) {
                if (cp >= s.rows.size()) continue;
                const double v = s.rows[cp].at(name);
                sum += v;
                sumsq += v * v;
                ++n;
            }
            const double mean = n > 0 ? sum / n : 0.0;
            double se = 0.0;
            if (n > 1) {
                const double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1));
                se = std::sqrt(var / n);
            }
            result.mean_rows[cp][name] = mean;
            result.stderr_rows[cp][name] = se;
        }
    }
    return result;
}

inline double weight_norm_metric(const ExperimentConfig& cfg, const RunCheckpoint& cp) {
    return metric_weights(cfg, cp).norm();
}

[[noreturn]] inline void unknown_metric(const std::string& name, const std::string& experiment) {
    throw ConfigError("metric '" + name + "' is not available for experiment '" + experiment + "'");
}

// sup-norm error |Q_w - Q*| over an explicit evaluation set
template <Environment Env>
MetricEval tabular_sup_error_eval(const ExperimentConfig& cfg, const Env& env, Vec qstar) {
    auto pairs = env.eval_pairs();
    return [cfg, &env, qstar = std::move(qstar), pairs = std::move(pairs)](
               const std::string& name, const RunCheckpoint& cp) -> double {
        if (name == "weight_norm") return weight_norm_metric(cfg, cp);
        if (name == "episode_length") {
            const auto it = cp.metrics.find(name);
            return it == cp.metrics.end() ? 0.0 : it->second;
        }
        if (name != "sup_error") unknown_metric(name, cfg.experiment);
        const Vec& w = metric_weights(cfg, cp);
        QEval<Env> ev(env);
        double worst = 0.0;
        for (std::size_t i = 0; i < pairs.size(); ++i)
            worst = std::max(std::abs(ev.q(w, pairs[i].first, pairs[i].second) -
                                      qstar[static_cast<Eigen::Index>(i)]),
                             worst);
        return worst;
    };
}

}  // namespace detail

// Launches `seeds` independent runs with seeds base_seed..base_seed+seeds-1,
// at most `jobs` concurrently; results merge in seed order so the output is
// independent of scheduling.
inline AggregateResult run_experiment(const ExperimentConfig& cfg, int jobs = 1) {
    using detail::drive;
    using detail::MetricEval;

    {
        std::vector<std::string> allowed{"weight_norm"};
        if (cfg.experiment == "gridworld" || cfg.experiment == "custom-tabular" ||
            cfg.experiment == "randomwalk")
            allowed.push_back("sup_error");
        if (cfg.experiment == "lds") allowed.push_back("l2_weight_error");
        if (cfg.algo.episodic) allowed.push_back("episode_length");
        for (const auto& name : cfg.metrics) {
            static const std::vector<std::string> known{"sup_error", "l2_weight_error",
                                                        "weight_norm", "episode_length"};
            if (std::find(known.begin(), known.end(), name) == known.end())
                throw ConfigError("unknown metric '" + name + "'");
            if (std::find(allowed.begin(), allowed.end(), name) == allowed.end())
                throw ConfigError("metric '" + name + "' is not available for experiment '" +
                                  cfg.experiment + "'");
        }
    }

    if (cfg.experiment == "gridworld") {
        GridWorldEnv proto(cfg.reward_noise, cfg.algo.gamma);
        TabularModel model = proto.to_tabular_model();
        const Vec qstar = oracle::value_iteration(model, 1e-10);
        return drive<GridWorldEnv>(
            cfg, jobs, [&](Rng&) { return GridWorldEnv(cfg.reward_noise, cfg.algo.gamma); },
            [&](const GridWorldEnv& env, Rng&) -> MetricEval {
                // qstar rows follow env.eval_pairs() order: s-major, then a
                return detail::tabular_sup_error_eval(cfg, env, qstar);
            });
    }

    if (cfg.experiment == "custom-tabular") {
        if (cfg.model_file.empty())
            throw ConfigError("config key 'model_file': required for custom-tabular");
        TabularModel model = TabularModel::load_file(cfg.model_file);
        model.gamma = cfg.algo.gamma;  // the run's discount wins over the file's
        const Vec qstar = oracle::value_iteration(model, 1e-10);
        return drive<TabularEnv>(
            cfg, jobs, [&](Rng&) { return TabularEnv(model); },
            [&](const TabularEnv& env, Rng&) -> MetricEval {
                return detail::tabular_sup_error_eval(cfg, env, qstar);
            });
    }

    if (cfg.experiment == "randomwalk") {
        RandomWalkEnv proto(cfg.algo.gamma);
        TabularModel model = proto.to_tabular_model();
        Vec qfull = oracle::value_iteration(model, 1e-8);
        // re-index the 101-state model table onto the walk's (s,a) pairs
        Vec qstar(static_cast<Eigen::Index>(RandomWalkEnv::kStates) * RandomWalkEnv::kActions);
        for (int s = 1; s <= RandomWalkEnv::kStates; ++s)
            for (int a = 0; a < RandomWalkEnv::kActions; ++a)
                qstar[(s - 1) * RandomWalkEnv::kActions + a] = qfull[oracle::sa_index(model, s, a)];
        return drive<RandomWalkEnv>(
            cfg, jobs, [&](Rng&) { return RandomWalkEnv(cfg.algo.gamma); },
            [&](const RandomWalkEnv& env, Rng&) -> MetricEval {
                return detail::tabular_sup_error_eval(cfg, env, qstar);
            });
    }

    if (cfg.experiment == "mountaincar") {
        return drive<MountainCarEnv>(
            cfg, jobs, [&](Rng&) { return MountainCarEnv(); },
            [&](const MountainCarEnv&, Rng&) -> MetricEval {
                return [cfg](const std::string& name, const RunCheckpoint& cp) -> double {
                    if (name == "weight_norm") return detail::weight_norm_metric(cfg, cp);
                    if (name == "episode_length") {
                        const auto it = cp.metrics.find(name);
                        return it == cp.metrics.end() ? 0.0 : it->second;
                    }
                    detail::unknown_metric(name, cfg.experiment);
                };
            });
    }

    if (cfg.experiment == "baird") {
        return drive<BairdEnv>(
            cfg, jobs, [&](Rng&) { return BairdEnv(); },
            [&](const BairdEnv&, Rng&) -> MetricEval {
                return [cfg](const std::string& name, const RunCheckpoint& cp) -> double {
                    if (name == "weight_norm") return detail::weight_norm_metric(cfg, cp);
                    detail::unknown_metric(name, cfg.experiment);
                };
            });
    }

    if (cfg.experiment == "lds") {
        return drive<LdsEnv>(
            cfg, jobs,
            [&](Rng& rng) { return LdsEnv::random(cfg.lds_dim, cfg.lds_rho, cfg.lds_sigma, rng); },
            [&](const LdsEnv& env, Rng&) -> MetricEval {
                const Vec wstar = oracle::lds_closed_form(env.dynamics(), env.theta(), cfg.algo.gamma);
                return [cfg, wstar](const std::string& name, const RunCheckpoint& cp) -> double {
                    if (name == "weight_norm") return detail::weight_norm_metric(cfg, cp);
                    if (name == "l2_weight_error")
                        return (detail::metric_weights(cfg, cp) - wstar).norm();
                    detail::unknown_metric(name, cfg.experiment);
                };
            });
    }

    throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

namespace detail {

inline std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace detail

// CSV layout: '#'-prefixed header comments echoing the full effective
// config, a column header, then one row per (seed|mean|stderr, checkpoint,
// metric). 12 significant digits, LF line endings.
inline void emit_csv(const AggregateResult& result, std::ostream& os) {
    os << "# qrex experiment output\n";
    for (const auto& [k, v] : result.config.echo()) os << "# " << k << " = " << v << "\n";
    os << "# diverged_runs = " << result.diverged_count << "\n";
    os << "experiment,algorithm,seed,x_unit,x,metric,value\n";
    const std::string prefix = result.config.experiment + "," + result.config.algorithm + ",";
    auto write_rows = [&](const std::string& seed_label, const std::vector<std::int64_t>& xs,
                          const std::vector<std::map<std::string, double>>& rows) {
        for (std::size_t i = 0; i < xs.size(); ++i)
            for (const auto& name : result.config.metrics)
                os << prefix << seed_label << "," << result.x_unit << "," << xs[i] << "," << name
                   << "," << detail::format_value(rows[i].at(name)) << "\n";
    };
    for (const auto& s : result.seeds) write_rows(std::to_string(s.seed), s.xs, s.rows);
    write_rows("mean", result.xs, result.mean_rows);
    write_rows("stderr", result.xs, result.stderr_rows);
}

inline void emit_csv(const AggregateResult& result, const std::string& path) {
    std::ofstream os(path, std::ios::binary);  // binary keeps LF endings everywhere
    if (!os) throw std::runtime_error("emit_csv: cannot open '" + path + "' for writing");
    emit_csv(result, os);
    if (!os) throw std::runtime_error("emit_csv: write to '" + path + "' failed");
}

struct CsvRow {
    std::string experiment, algorithm, seed, x_unit, metric;
    std::int64_t x = 0;
    double value = 0.0;
};

struct CsvContent {
    std::vector<std::pair<std::string, std::string>> header;
    std::vector<CsvRow> rows;
};

inline CsvContent read_csv(std::istream& is) {
    CsvContent out;
    std::string line;
    bool saw_columns = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                std::string k = detail::trim(line.substr(1, eq - 1));
                std::string v = detail::trim(line.substr(eq + 1));
                out.header.emplace_back(std::move(k), std::move(v));
            }
            continue;
        }
        if (!saw_columns) {  // column header row
            saw_columns = true;
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        CsvRow row;
        std::getline(ss, row.experiment, ',');
        std::getline(ss, row.algorithm, ',');
        std::getline(ss, row.seed, ',');
        std::getline(ss, row.x_unit, ',');
        std::getline(ss, field, ',');
        row.x = std::stoll(field);
        std::getline(ss, row.metric, ',');
        std::getline(ss, field, ',');
        row.value = std::stod(field);
        out.rows.push_back(std::move(row));
    }
    return out;
}

inline CsvContent read_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_csv: cannot open '" + path + "'");
    return read_csv(is);
}

}  // namespace qrex::harness
