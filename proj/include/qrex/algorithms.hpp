#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrex/mdp.hpp"
#include "qrex/replay.hpp"
#include "qrex/rng.hpp"

namespace qrex {

enum class CombineOption { OptionI, OptionII };
enum class TargetMode { FrozenPerOuterLoop, Live };
enum class DataMode { Fresh, Reuse };

// Any weight magnitude beyond this marks the run diverged (Baird's vanilla
// run is designed to blow up; we stop it before the floats do).
inline constexpr double kDivergenceLimit = 1e12;

// Everything that determines a run: step size, discount, loop geometry
// (K outer loops, N buffers of B used + u gap samples), chaining option,
// traversal order, target and data modes.
struct AlgoConfig {
    double eta = 0.1;
    double gamma = 0.99;
    std::int64_t K = 1;
    std::int64_t N = 1;
    std::int64_t B = 1;
    std::int64_t u = 0;
    CombineOption combine = CombineOption::OptionI;
    ReplayOrder replay_order = ReplayOrder::Reverse;
    TargetMode target_mode = TargetMode::FrozenPerOuterLoop;
    DataMode data_mode = DataMode::Fresh;
    Vec init_w;  // empty = all zeros
    bool episodic = false;
    std::int64_t episode_cap = 100000;
    std::int64_t checkpoint_every = 100;  // streaming (vanilla) cadence, in samples
    bool replay_with_replacement = false;
    bool iterate_averaging = false;  // maintain running mean of post-update iterates
    bool track_q_range = false;      // record min/max weight entry over all updates

    void validate() const {
        if (!(eta >= 0.0) || !std::isfinite(eta))
            throw std::invalid_argument("AlgoConfig: eta must be a finite nonnegative real");
        if (!(gamma >= 0.0 && gamma <= 1.0))
            throw std::invalid_argument("AlgoConfig: gamma must be in [0, 1]");
        if (K < 1 || N < 1 || B < 1 || u < 0)
            throw std::invalid_argument("AlgoConfig: need K,N,B >= 1 and u >= 0");
        if (data_mode == DataMode::Reuse && target_mode != TargetMode::FrozenPerOuterLoop)
            throw std::invalid_argument("AlgoConfig: data reuse requires a frozen target");
        if (data_mode == DataMode::Reuse && combine == CombineOption::OptionII)
            throw std::invalid_argument("AlgoConfig: data reuse supports Option I only");
    }
};

struct RunCheckpoint {
    std::int64_t samples = 0;   // processed samples so far (counts reuse passes)
    std::int64_t episodes = 0;  // completed episodes so far (episodic runs)
    Vec w;
    Vec w_avg;  // running average of post-update iterates, when enabled
    std::map<std::string, double> metrics;
};

struct RunTrace {
    std::vector<RunCheckpoint> checkpoints;
    Vec final_w;
    bool diverged = false;
    std::int64_t samples_consumed = 0;  // fresh environment samples drawn
    std::int64_t episodes_run = 0;
    std::int64_t empty_episodes_skipped = 0;
    std::int64_t truncated_episodes = 0;
    double q_min = 0.0, q_max = 0.0;  // valid when track_q_range was set
    bool target_fresh_ok = true;      // frozen-target instrumentation result
};

struct InnerPassLog {
    std::vector<int> positions;  // 1-based intra-buffer positions, consumption order
    std::int64_t updates = 0;
    bool diverged = false;
};

// Recorded raw material for the lemma verifiers in the oracle module: per
// outer loop, the loop-entry/exit weights and the B used transitions of each
// buffer in data order.
template <class S>
struct LoopRecording {
    Vec w_entry;
    Vec w_exit;
    std::vector<std::vector<TransitionSample<S>>> buffers;
};

template <class S>
struct RunRecording {
    double eta = 0.0;
    double gamma = 0.0;
    std::vector<LoopRecording<S>> loops;
};

inline Vec combine_iterates(CombineOption option, const std::vector<Vec>& buffer_outputs) {
    if (buffer_outputs.empty())
        throw std::invalid_argument("combine_iterates: no buffer outputs");
    if (option == CombineOption::OptionI) return buffer_outputs.back();
    Vec mean = Vec::Zero(buffer_outputs.front().size());
    for (const Vec& v : buffer_outputs) mean += v;
    return mean / static_cast<double>(buffer_outputs.size());
}

// Shared update engine. Holds the feature workspace and the optional
// iterate-averaging / range-tracking accumulators so the hot loop never
// allocates.
template <Environment Env>
class UpdateEngine {
  public:
    UpdateEngine(const Env& env, double eta, double gamma)
        : env_(env), ev_(env), phi_(env.feature_dim()), eta_(eta), gamma_(gamma) {}

    bool log_positions = false;

    void enable_iterate_averaging(std::int64_t dim) {
        avg_ = Vec::Zero(dim);
        avg_count_ = 0;
        averaging_ = true;
    }
    void enable_range_tracking(const Vec& w0) {
        lo_ = w0.minCoeff();
        hi_ = w0.maxCoeff();
        tracking_ = true;
    }

    const Vec& iterate_average() const { return avg_; }
    bool averaging() const { return averaging_; }
    double range_lo() const { return lo_; }
    double range_hi() const { return hi_; }

    // One Q-learning step on transition t. Bootstraps against *target when
    // given, else against the evolving w. Returns false on divergence.
    template <class S>
    bool update(Vec& w, const Vec* target, const TransitionSample<S>& t) {
        env_.embed(t.state, t.action, phi_);
        const double boot = ev_.max_q(target ? *target : w, t.next_state, t.next_terminal);
        const double delta = t.reward + gamma_ * boot - w.dot(phi_);
        w += (eta_ * delta) * phi_;
        if (!std::isfinite(delta) || w.cwiseAbs().maxCoeff() > kDivergenceLimit) return false;
        if (averaging_) {
            ++avg_count_;
            avg_ += (w - avg_) / static_cast<double>(avg_count_);
        }
        if (tracking_) {
            lo_ = std::min(lo_, w.minCoeff());
            hi_ = std::max(hi_, w.maxCoeff());
        }
        return true;
    }

    // Sequential updates over buffer positions in the given order. When
    // buffer_mean is non-null it receives the mean of the post-update
    // iterates (the Option II within-buffer combine).
    template <class S>
    InnerPassLog pass(Vec& w, const Vec* target, std::span<const TransitionSample<S>> buf,
                      const std::vector<int>& order, Vec* buffer_mean) {
        InnerPassLog log;
        std::int64_t n = 0;
        if (buffer_mean) buffer_mean->setZero(w.size());
        for (int pos : order) {
            const auto& t = buf[static_cast<std::size_t>(pos - 1)];
            if (log_positions) log.positions.push_back(pos);
            if (!update(w, target, t)) {
                log.diverged = true;
                break;
            }
            ++log.updates;
            if (buffer_mean) {
                *buffer_mean += w;
                ++n;
            }
        }
        if (buffer_mean && n > 0) *buffer_mean /= static_cast<double>(n);
        return log;
    }

  private:
    const Env& env_;
    QEval<Env> ev_;
    Vec phi_;
    double eta_, gamma_;
    Vec avg_;
    std::int64_t avg_count_ = 0;
    bool averaging_ = false;
    bool tracking_ = false;
    double lo_ = 0.0, hi_ = 0.0;
};

template <class S>
struct InnerPassResult {
    Vec w_end;
    Vec w_avg;
    InnerPassLog log;
};

// B sequential target-based updates over the buffer in the given order;
// the bootstrap always reads target_w, never the evolving iterate.
template <Environment Env>
InnerPassResult<typename Env::State> inner_buffer_pass(
    const Vec& w_start, const Vec& target_w,
    std::span<const TransitionSample<typename Env::State>> buf, double eta, double gamma,
    const std::vector<int>& order, const Env& fm) {
    if (w_start.size() != fm.feature_dim() || target_w.size() != fm.feature_dim())
        throw std::invalid_argument("inner_buffer_pass: weight dimension mismatch");
    UpdateEngine<Env> engine(fm, eta, gamma);
    engine.log_positions = true;
    InnerPassResult<typename Env::State> res;
    res.w_end = w_start;
    res.log = engine.pass(res.w_end, &target_w, buf, order, &res.w_avg);
    return res;
}

template <Environment Env>
InnerPassResult<typename Env::State> inner_buffer_pass(
    const Vec& w_start, const Vec& target_w,
    std::span<const TransitionSample<typename Env::State>> buf, double eta, double gamma,
    ReplayOrder order, const Env& fm, Rng& rng) {
    return inner_buffer_pass(w_start, target_w, buf, eta, gamma,
                             iteration_order(static_cast<int>(buf.size()), order, rng), fm);
}

namespace detail {

template <Environment Env, class Policy>
class StreamSampler {
  public:
    StreamSampler(const Env& env, const Policy& policy, Rng& rng)
        : env_(env), policy_(policy), rng_(rng) {}

    TransitionSample<typename Env::State> next() {
        if (!has_state_) {
            state_ = env_.reset(rng_);
            has_state_ = true;
        }
        if (env_.resamples_state_each_step()) state_ = env_.reset(rng_);
        const int a = policy_(env_, state_, rng_);
        auto t = env_.step(state_, a, rng_);
        state_ = t.next_terminal ? env_.reset(rng_) : t.next_state;
        return t;
    }

  private:
    const Env& env_;
    const Policy& policy_;
    Rng& rng_;
    typename Env::State state_{};
    bool has_state_ = false;
};

inline Vec initial_weights(const AlgoConfig& cfg, int dim) {
    if (cfg.init_w.size() == 0) return Vec::Zero(dim);
    if (cfg.init_w.size() != dim)
        throw std::invalid_argument("AlgoConfig: init_w has dimension " +
                                    std::to_string(cfg.init_w.size()) + ", environment needs " +
                                    std::to_string(dim));
    if (!cfg.init_w.allFinite())
        throw std::invalid_argument("AlgoConfig: init_w must be finite");
    return cfg.init_w;
}

template <Environment Env>
std::vector<int> make_order(const AlgoConfig& cfg, int B, Rng& rng) {
    if (cfg.replay_order == ReplayOrder::UniformRandomPermutation && cfg.replay_with_replacement)
        return iteration_order_with_replacement(B, rng);
    return iteration_order(B, cfg.replay_order, rng);
}

}  // namespace detail

// Buffered runner over a continuing sample stream: Q-Rex and its ablations
// (traversal order, live vs frozen target), plus the data-reuse variant when
// a dataset is supplied. One checkpoint per buffer completion.
template <Environment Env, class Policy>
RunTrace replay_q_run(const AlgoConfig& cfg, const Env& env, const Policy& policy, Rng& rng,
                      const std::vector<TransitionSample<typename Env::State>>* dataset = nullptr,
                      RunRecording<typename Env::State>* recording = nullptr) {
    using S = typename Env::State;
    cfg.validate();
    const int d = env.feature_dim();
    const std::int64_t block = cfg.B + cfg.u;

    if (cfg.data_mode == DataMode::Reuse) {
        if (dataset == nullptr)
            throw std::invalid_argument("replay_q_run: data reuse needs a dataset");
        if (static_cast<std::int64_t>(dataset->size()) < cfg.N * block)
            throw std::invalid_argument("replay_q_run: dataset holds " +
                                        std::to_string(dataset->size()) + " samples, need N*(B+u) = " +
                                        std::to_string(cfg.N * block));
    }

    RunTrace trace;
    Vec w = detail::initial_weights(cfg, d);
    UpdateEngine<Env> engine(env, cfg.eta, cfg.gamma);
    if (cfg.iterate_averaging) engine.enable_iterate_averaging(d);
    if (cfg.track_q_range) engine.enable_range_tracking(w);
    if (recording) {
        recording->eta = cfg.eta;
        recording->gamma = cfg.gamma;
        recording->loops.clear();
    }

    detail::StreamSampler<Env, Policy> sampler(env, policy, rng);
    std::vector<TransitionSample<S>> buf(static_cast<std::size_t>(block));
    std::vector<Vec> outputs;
    std::int64_t processed = 0;

    auto checkpoint = [&](const Vec& current) {
        RunCheckpoint cp;
        cp.samples = processed;
        cp.w = current;
        if (engine.averaging()) cp.w_avg = engine.iterate_average();
        trace.checkpoints.push_back(std::move(cp));
    };

    for (std::int64_t k = 1; k <= cfg.K; ++k) {
        const Vec target = w;           // loop-entry snapshot, frozen for the whole loop
        const Vec target_witness = target;
        LoopRecording<S>* loop_rec = nullptr;
        if (recording) {
            recording->loops.emplace_back();
            loop_rec = &recording->loops.back();
            loop_rec->w_entry = w;
        }
        outputs.clear();
        for (std::int64_t j = 1; j <= cfg.N; ++j) {
            if (cfg.data_mode == DataMode::Reuse) {
                const std::int64_t base = block * (j - 1);
                for (std::int64_t i = 0; i < block; ++i)
                    buf[static_cast<std::size_t>(i)] =
                        (*dataset)[static_cast<std::size_t>(base + i)];
                if (k == 1) trace.samples_consumed += block;
            } else {
                for (std::int64_t i = 0; i < block; ++i) buf[static_cast<std::size_t>(i)] = sampler.next();
                trace.samples_consumed += block;
            }
            processed += block;

            const auto order = detail::make_order<Env>(cfg, static_cast<int>(cfg.B), rng);
            Vec buffer_mean;
            const Vec* boot = cfg.target_mode == TargetMode::FrozenPerOuterLoop ? &target : nullptr;
            auto log = engine.pass(w, boot,
                                   std::span<const TransitionSample<S>>(buf.data(),
                                                                        static_cast<std::size_t>(cfg.B)),
                                   order, cfg.combine == CombineOption::OptionII ? &buffer_mean : nullptr);
            if (loop_rec)
                loop_rec->buffers.emplace_back(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(cfg.B));
            if (log.diverged) {
                trace.diverged = true;
                checkpoint(w);
                trace.final_w = w;
                if (cfg.track_q_range) {
                    trace.q_min = engine.range_lo();
                    trace.q_max = engine.range_hi();
                }
                return trace;
            }
            if (cfg.combine == CombineOption::OptionII) w = buffer_mean;
            outputs.push_back(w);
            if (j < cfg.N) checkpoint(w);
        }
        w = combine_iterates(cfg.combine, outputs);
        if ((target.array() != target_witness.array()).any()) trace.target_fresh_ok = false;
        if (loop_rec) loop_rec->w_exit = w;
        checkpoint(w);
    }

    trace.final_w = w;
    if (cfg.track_q_range) {
        trace.q_min = engine.range_lo();
        trace.q_max = engine.range_hi();
    }
    return trace;
}

// Q-Rex proper: frozen target, fresh data, reverse traversal.
template <Environment Env, class Policy>
RunTrace qrex_run(const AlgoConfig& cfg, const Env& env, const Policy& policy, Rng& rng,
                  RunRecording<typename Env::State>* recording = nullptr) {
    if (cfg.target_mode != TargetMode::FrozenPerOuterLoop || cfg.data_mode != DataMode::Fresh ||
        cfg.replay_order != ReplayOrder::Reverse)
        throw std::invalid_argument("qrex_run: needs frozen target, fresh data, reverse order");
    return replay_q_run(cfg, env, policy, rng, nullptr, recording);
}

// Q-Rex with data reuse: every outer loop replays the same first N*(B+u)
// dataset samples. No rng is consumed once the dataset is fixed.
template <Environment Env>
RunTrace qrexdare_run(const AlgoConfig& cfg, const Env& env,
                      const std::vector<TransitionSample<typename Env::State>>& dataset,
                      RunRecording<typename Env::State>* recording = nullptr) {
    if (cfg.data_mode != DataMode::Reuse)
        throw std::invalid_argument("qrexdare_run: cfg.data_mode must be Reuse");
    if (cfg.replay_order != ReplayOrder::Reverse)
        throw std::invalid_argument("qrexdare_run: needs reverse order");
    Rng unused(0);
    auto policy = [](const Env&, const typename Env::State&, Rng&) { return 0; };
    return replay_q_run(cfg, env, policy, unused, &dataset, recording);
}

// Replay ablations sharing the Q-Rex plumbing: OTL+ER+Q (frozen target) and
// ER+Q (live target), both with uniformly random traversal.
template <Environment Env, class Policy>
RunTrace otl_replay_q_run(const AlgoConfig& cfg, const Env& env, const Policy& policy, Rng& rng) {
    if (cfg.replay_order != ReplayOrder::UniformRandomPermutation)
        throw std::invalid_argument("otl_replay_q_run: needs uniform random traversal");
    return replay_q_run(cfg, env, policy, rng);
}

enum class ControlPolicyMode { FixedBehavior, GreedyOnline };

// Episodic runner: each buffer is one episode, traversed in reverse (or in
// the configured ablation order); the target refreshes every N episodes.
// Under greedy-online control, episode t is generated with the greedy policy
// of the weights at the end of episode t-1.
template <Environment Env, class Policy>
RunTrace episodic_replay_q_run(const AlgoConfig& cfg, const Env& env, const Policy& behavior,
                               ControlPolicyMode mode, Rng& rng) {
    using S = typename Env::State;
    cfg.validate();
    const int d = env.feature_dim();
    RunTrace trace;
    Vec w = detail::initial_weights(cfg, d);
    UpdateEngine<Env> engine(env, cfg.eta, cfg.gamma);
    if (cfg.iterate_averaging) engine.enable_iterate_averaging(d);
    if (cfg.track_q_range) engine.enable_range_tracking(w);

    Vec target = w;
    const std::int64_t total_episodes = cfg.K * cfg.N;
    for (std::int64_t t = 1; t <= total_episodes; ++t) {
        if ((t - 1) % cfg.N == 0) target = w;

        Episode<S> ep;
        if (mode == ControlPolicyMode::GreedyOnline) {
            // the weights entering the episode define its acting policy
            QEval<Env> ev(env);
            auto greedy = [&](const Env& e, const S& s, Rng& r) {
                return greedy_action_random_ties(w, ev, s, e.num_actions(), r);
            };
            ep = sample_episode(env, greedy, cfg.episode_cap, rng);
        } else {
            ep = sample_episode(env, behavior, cfg.episode_cap, rng);
        }
        ++trace.episodes_run;
        trace.samples_consumed += static_cast<std::int64_t>(ep.steps.size());
        if (ep.truncated) ++trace.truncated_episodes;

        RunCheckpoint cp;
        cp.samples = trace.samples_consumed;
        cp.episodes = t;
        cp.metrics["episode_length"] = static_cast<double>(ep.steps.size());

        if (ep.steps.empty()) {
            ++trace.empty_episodes_skipped;
            cp.w = w;
            if (engine.averaging()) cp.w_avg = engine.iterate_average();
            trace.checkpoints.push_back(std::move(cp));
            continue;
        }

        const int len = static_cast<int>(ep.steps.size());
        const auto order = detail::make_order<Env>(cfg, len, rng);
        Vec episode_mean;
        const Vec* boot = cfg.target_mode == TargetMode::FrozenPerOuterLoop ? &target : nullptr;
        auto log = engine.pass(w, boot, std::span<const TransitionSample<S>>(ep.steps),
                               order, cfg.combine == CombineOption::OptionII ? &episode_mean : nullptr);
        if (log.diverged) {
            trace.diverged = true;
            cp.w = w;
            if (engine.averaging()) cp.w_avg = engine.iterate_average();
            trace.checkpoints.push_back(std::move(cp));
            trace.final_w = w;
            if (cfg.track_q_range) {
                trace.q_min = engine.range_lo();
                trace.q_max = engine.range_hi();
            }
            return trace;
        }
        if (cfg.combine == CombineOption::OptionII) w = episode_mean;
        cp.w = w;
        if (engine.averaging()) cp.w_avg = engine.iterate_average();
        trace.checkpoints.push_back(std::move(cp));
    }

    trace.final_w = w;
    if (cfg.track_q_range) {
        trace.q_min = engine.range_lo();
        trace.q_max = engine.range_hi();
    }
    return trace;
}

template <Environment Env, class Policy>
RunTrace epiqrex_run(const AlgoConfig& cfg, const Env& env, const Policy& behavior,
                     ControlPolicyMode mode, Rng& rng) {
    if (!cfg.episodic) throw std::invalid_argument("epiqrex_run: cfg.episodic must be set");
    if (cfg.replay_order != ReplayOrder::Reverse ||
        cfg.target_mode != TargetMode::FrozenPerOuterLoop)
        throw std::invalid_argument("epiqrex_run: needs frozen target and reverse order");
    return episodic_replay_q_run(cfg, env, behavior, mode, rng);
}

// Vanilla Q-learning: streaming single-sample updates bootstrapping against
// the current weights. Continuing runs take K*N*(B+u) steps; episodic runs
// take K*N episodes with the acting policy frozen per episode.
template <Environment Env, class Policy>
RunTrace vanilla_q_run(const AlgoConfig& cfg, const Env& env, const Policy& policy, Rng& rng,
                       ControlPolicyMode mode = ControlPolicyMode::FixedBehavior) {
    using S = typename Env::State;
    cfg.validate();
    if (cfg.target_mode != TargetMode::Live)
        throw std::invalid_argument("vanilla_q_run: cfg.target_mode must be Live");
    const int d = env.feature_dim();
    RunTrace trace;
    Vec w = detail::initial_weights(cfg, d);
    UpdateEngine<Env> engine(env, cfg.eta, cfg.gamma);
    if (cfg.iterate_averaging) engine.enable_iterate_averaging(d);
    if (cfg.track_q_range) engine.enable_range_tracking(w);

    auto finalize = [&]() {
        trace.final_w = w;
        if (cfg.track_q_range) {
            trace.q_min = engine.range_lo();
            trace.q_max = engine.range_hi();
        }
    };

    if (!cfg.episodic) {
        const std::int64_t T = cfg.K * cfg.N * (cfg.B + cfg.u);
        const std::int64_t every = cfg.checkpoint_every > 0 ? cfg.checkpoint_every : 100;
        detail::StreamSampler<Env, Policy> sampler(env, policy, rng);
        for (std::int64_t t = 1; t <= T; ++t) {
            const auto ts = sampler.next();
            ++trace.samples_consumed;
            const bool ok = engine.update(w, nullptr, ts);
            if (!ok) trace.diverged = true;
            if (!ok || t % every == 0 || t == T) {
                RunCheckpoint cp;
                cp.samples = t;
                cp.w = w;
                if (engine.averaging()) cp.w_avg = engine.iterate_average();
                trace.checkpoints.push_back(std::move(cp));
            }
            if (!ok) break;
        }
        finalize();
        return trace;
    }

    const std::int64_t total_episodes = cfg.K * cfg.N;
    QEval<Env> greedy_ev(env);
    for (std::int64_t t = 1; t <= total_episodes; ++t) {
        // greedy-online control acts on the live weights, which the
        // streaming updates keep improving within the episode
        S s = env.reset(rng);
        std::int64_t len = 0;
        bool done = env.is_terminal(s);
        while (!done && len < cfg.episode_cap) {
            const int a = mode == ControlPolicyMode::GreedyOnline
                              ? greedy_action_random_ties(w, greedy_ev, s, env.num_actions(), rng)
                              : policy(env, s, rng);
            const auto ts = env.step(s, a, rng);
            ++len;
            ++trace.samples_consumed;
            done = ts.next_terminal;
            s = ts.next_state;
            if (!engine.update(w, nullptr, ts)) {
                trace.diverged = true;
                done = true;
            }
        }
        ++trace.episodes_run;
        if (!trace.diverged && len == cfg.episode_cap) ++trace.truncated_episodes;
        RunCheckpoint cp;
        cp.samples = trace.samples_consumed;
        cp.episodes = t;
        cp.metrics["episode_length"] = static_cast<double>(len);
        cp.w = w;
        if (engine.averaging()) cp.w_avg = engine.iterate_average();
        trace.checkpoints.push_back(std::move(cp));
        if (trace.diverged) break;
    }
    finalize();
    return trace;
}

}  // namespace qrex
