#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrex/rng.hpp"

namespace qrex {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One observed (s, a, r, s') tuple from a trajectory. If next_terminal is
// set, next_state must never be embedded or bootstrapped (bootstrap value 0).
template <class S>
struct TransitionSample {
    S state;
    int action = 0;
    double reward = 0.0;
    S next_state;
    bool next_terminal = false;
};

// An environment bundles dynamics with its feature map. Stepping is a pure
// function of (state, action, rng); the object itself is an immutable
// parameter bundle safe to share across threads.
template <class E>
concept Environment = requires(const E& e, const typename E::State& s, int a,
                               Rng& rng, Vec& out) {
    { e.num_actions() } -> std::convertible_to<int>;
    { e.feature_dim() } -> std::convertible_to<int>;
    { e.reset(rng) } -> std::same_as<typename E::State>;
    { e.step(s, a, rng) } -> std::same_as<TransitionSample<typename E::State>>;
    { e.embed(s, a, out) } -> std::same_as<void>;
    { e.is_terminal(s) } -> std::convertible_to<bool>;
    { e.resamples_state_each_step() } -> std::convertible_to<bool>;
};

inline double q_value(const Vec& w, const Vec& phi) {
    if (w.size() != phi.size())
        throw std::invalid_argument("q_value: dimension mismatch between weights (" +
                                    std::to_string(w.size()) + ") and features (" +
                                    std::to_string(phi.size()) + ")");
    return w.dot(phi);
}

// Workspace-carrying evaluator so hot loops do not allocate per call.
template <Environment Env>
class QEval {
  public:
    explicit QEval(const Env& env) : env_(&env), phi_(env.feature_dim()) {}

    double q(const Vec& w, const typename Env::State& s, int a) {
        env_->embed(s, a, phi_);
        return q_value(w, phi_);
    }

    // max over actions of <phi(s,a'), w>; 0 at terminal states
    double max_q(const Vec& w, const typename Env::State& s, bool terminal) {
        if (terminal) return 0.0;
        double best = -std::numeric_limits<double>::infinity();
        const int na = env_->num_actions();
        for (int a = 0; a < na; ++a) best = std::max(best, q(w, s, a));
        return best;
    }

    // lowest action index attaining the maximum
    int greedy(const Vec& w, const typename Env::State& s) {
        int best_a = 0;
        double best = q(w, s, 0);
        const int na = env_->num_actions();
        for (int a = 1; a < na; ++a) {
            const double v = q(w, s, a);
            if (v > best) {
                best = v;
                best_a = a;
            }
        }
        return best_a;
    }

    const Vec& last_phi() const { return phi_; }

  private:
    const Env* env_;
    Vec phi_;
};

template <Environment Env>
double max_q(const Vec& w, const Env& env, const typename Env::State& s, bool terminal) {
    QEval<Env> ev(env);
    return ev.max_q(w, s, terminal);
}

template <Environment Env>
int greedy_action(const Vec& w, const Env& env, const typename Env::State& s) {
    QEval<Env> ev(env);
    return ev.greedy(w, s);
}

// Greedy control action with exact ties broken uniformly at random. Plain
// lowest-index greedy from a zero initialization locks episodic control into
// a single constant action; randomized ties keep the policy pure greedy
// while letting optimistic initial values drive exploration.
template <Environment Env>
int greedy_action_random_ties(const Vec& w, QEval<Env>& ev, const typename Env::State& s,
                              int num_actions, Rng& rng) {
    double best = ev.q(w, s, 0);
    int count = 1;
    int pick = 0;
    for (int a = 1; a < num_actions; ++a) {
        const double v = ev.q(w, s, a);
        if (v > best) {
            best = v;
            count = 1;
            pick = a;
        } else if (v == best) {
            ++count;
            if (rng.uniform_int(count) == 0) pick = a;
        }
    }
    return pick;
}

// Data-generating policy, distinct from the greedy policy being learned.
template <Environment Env>
struct BehaviorPolicy {
    enum class Kind { UniformRandom, GreedyWrt, FixedTable };

    Kind kind = Kind::UniformRandom;
    Vec weights;                             // GreedyWrt
    std::vector<std::vector<double>> table;  // FixedTable, integer states only

    static BehaviorPolicy uniform() { return {}; }

    static BehaviorPolicy greedy_wrt(Vec w) {
        BehaviorPolicy p;
        p.kind = Kind::GreedyWrt;
        p.weights = std::move(w);
        return p;
    }

    static BehaviorPolicy fixed(std::vector<std::vector<double>> t) {
        BehaviorPolicy p;
        p.kind = Kind::FixedTable;
        for (const auto& row : t) {
            double sum = 0.0;
            for (double x : row) sum += x;
            if (std::abs(sum - 1.0) > 1e-12)
                throw std::invalid_argument("BehaviorPolicy: action probabilities must sum to 1");
        }
        p.table = std::move(t);
        return p;
    }

    int operator()(const Env& env, const typename Env::State& s, Rng& rng) const {
        switch (kind) {
            case Kind::UniformRandom:
                return rng.uniform_int(env.num_actions());
            case Kind::GreedyWrt:
                return greedy_action(weights, env, s);
            case Kind::FixedTable:
                if constexpr (std::integral<typename Env::State>) {
                    return rng.categorical(table.at(static_cast<std::size_t>(s)));
                } else {
                    throw std::invalid_argument("BehaviorPolicy: fixed table needs integer states");
                }
        }
        return 0;
    }
};

// T transitions from a continuing stream. Episodic environments auto-reset
// at terminal states; environments flagged as i.i.d.-sampling draw a fresh
// state before every step.
template <Environment Env, class Policy>
std::vector<TransitionSample<typename Env::State>> sample_trajectory(const Env& env,
                                                                     const Policy& policy,
                                                                     std::int64_t T, Rng& rng) {
    if (T < 1) throw std::invalid_argument("sample_trajectory: T must be >= 1");
    std::vector<TransitionSample<typename Env::State>> out;
    out.reserve(static_cast<std::size_t>(T));
    typename Env::State s = env.reset(rng);
    for (std::int64_t t = 0; t < T; ++t) {
        if (env.resamples_state_each_step()) s = env.reset(rng);
        const int a = policy(env, s, rng);
        auto ts = env.step(s, a, rng);
        s = ts.next_terminal ? env.reset(rng) : ts.next_state;
        out.push_back(std::move(ts));
    }
    return out;
}

template <class S>
struct Episode {
    std::vector<TransitionSample<S>> steps;
    bool truncated = false;  // cap reached before termination
};

// One episode, at most `cap` steps. A truncated episode's last sample keeps
// next_terminal=false so bootstrapping at the truncation state uses max_q.
template <Environment Env, class Policy>
Episode<typename Env::State> sample_episode(const Env& env, const Policy& policy,
                                            std::int64_t cap, Rng& rng) {
    Episode<typename Env::State> ep;
    typename Env::State s = env.reset(rng);
    if (cap <= 0 || env.is_terminal(s)) return ep;
    for (std::int64_t t = 0; t < cap; ++t) {
        const int a = policy(env, s, rng);
        auto ts = env.step(s, a, rng);
        const bool done = ts.next_terminal;
        s = ts.next_state;
        ep.steps.push_back(std::move(ts));
        if (done) return ep;
    }
    ep.truncated = true;
    return ep;
}

// Explicit (P, R, gamma), the ground truth used by the oracle module.
// Terminal states of episodic tasks are modeled as zero-reward absorbing
// states, which is why gamma = 1 is admitted.
struct TabularModel {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> transitions;  // [s*A*S + a*S + s']
    std::vector<double> rewards;      // [s*A + a]
    double gamma = 0.9;

    double p(int s, int a, int s2) const {
        return transitions[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
    }
    double& p(int s, int a, int s2) {
        return transitions[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
    }
    double r(int s, int a) const { return rewards[static_cast<std::size_t>(s) * num_actions + a]; }
    double& r(int s, int a) { return rewards[static_cast<std::size_t>(s) * num_actions + a]; }

    static TabularModel zeros(int S, int A, double gamma) {
        TabularModel m;
        m.num_states = S;
        m.num_actions = A;
        m.gamma = gamma;
        m.transitions.assign(static_cast<std::size_t>(S) * A * S, 0.0);
        m.rewards.assign(static_cast<std::size_t>(S) * A, 0.0);
        return m;
    }

    void validate() const {
        if (num_states < 1 || num_actions < 1)
            throw std::invalid_argument("TabularModel: need at least one state and action");
        if (!(gamma >= 0.0 && gamma <= 1.0))
            throw std::invalid_argument("TabularModel: gamma must be in [0, 1]");
        for (int s = 0; s < num_states; ++s)
            for (int a = 0; a < num_actions; ++a) {
                double sum = 0.0;
                for (int s2 = 0; s2 < num_states; ++s2) {
                    const double v = p(s, a, s2);
                    if (v < 0.0)
                        throw std::invalid_argument("TabularModel: negative transition probability");
                    sum += v;
                }
                if (std::abs(sum - 1.0) > 1e-12)
                    throw std::invalid_argument(
                        "TabularModel: P(.|" + std::to_string(s) + "," + std::to_string(a) +
                        ") sums to " + std::to_string(sum));
                if (!std::isfinite(r(s, a)))
                    throw std::invalid_argument("TabularModel: non-finite reward entry");
            }
    }

    // Plain text format: line 1 "S A gamma", then S*A lines
    // "s a R(s,a) p_0 p_1 ... p_{S-1}" with probabilities in state order.
    void save(std::ostream& os) const {
        os.precision(17);
        os << num_states << " " << num_actions << " " << gamma << "\n";
        for (int s = 0; s < num_states; ++s)
            for (int a = 0; a < num_actions; ++a) {
                os << s << " " << a << " " << r(s, a);
                for (int s2 = 0; s2 < num_states; ++s2) os << " " << p(s, a, s2);
                os << "\n";
            }
    }

    void save_file(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("TabularModel: cannot open " + path + " for writing");
        save(os);
    }

    static TabularModel load(std::istream& is) {
        int S = 0, A = 0;
        double g = 0.0;
        if (!(is >> S >> A >> g)) throw std::invalid_argument("TabularModel: malformed header line");
        TabularModel m = zeros(S, A, g);
        for (int i = 0; i < S * A; ++i) {
            int s = 0, a = 0;
            double rv = 0.0;
            if (!(is >> s >> a >> rv))
                throw std::invalid_argument("TabularModel: malformed row " + std::to_string(i));
            if (s < 0 || s >= S || a < 0 || a >= A)
                throw std::invalid_argument("TabularModel: state/action index out of range");
            m.r(s, a) = rv;
            for (int s2 = 0; s2 < S; ++s2) {
                double pv = 0.0;
                if (!(is >> pv))
                    throw std::invalid_argument("TabularModel: missing probability entry");
                m.p(s, a, s2) = pv;
            }
        }
        m.validate();
        return m;
    }

    static TabularModel load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("TabularModel: cannot open " + path);
        return load(is);
    }
};

}  // namespace qrex
