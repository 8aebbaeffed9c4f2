#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "qrex/mdp.hpp"
#include "qrex/rng.hpp"

namespace qrex {

// Episodic walk on a line of 100 states (handles 1..100). The chosen action
// moves one state deterministically; stepping right off state 100 ends the
// episode with reward 1, stepping left off state 1 ends it with reward 0,
// all interior rewards are 0. State aggregation into 10 groups of 10 gives a
// 20-dimensional one-hot embedding over (group, action).
class RandomWalkEnv {
  public:
    using State = int;  // 1..100; terminal handles 0 (left) and kStates+1 (right)

    static constexpr int kStates = 100;
    static constexpr int kGroups = 10;
    static constexpr int kActions = 2;  // 0 = left, 1 = right

    explicit RandomWalkEnv(double gamma = 1.0) : gamma_(gamma) {}

    double gamma() const { return gamma_; }
    int num_actions() const { return kActions; }
    int feature_dim() const { return kGroups * kActions; }
    bool is_terminal(State s) const { return s < 1 || s > kStates; }
    bool resamples_state_each_step() const { return false; }

    State reset(Rng& rng) const { return 1 + rng.uniform_int(kStates); }

    TransitionSample<State> step(State s, int a, Rng&) const {
        if (a < 0 || a >= kActions)
            throw std::invalid_argument("RandomWalkEnv: action index out of range");
        if (is_terminal(s)) throw std::invalid_argument("RandomWalkEnv: stepping a terminal state");
        TransitionSample<State> t;
        t.state = s;
        t.action = a;
        if (a == 1) {
            t.next_state = s + 1;
            t.next_terminal = s == kStates;
            t.reward = t.next_terminal ? 1.0 : 0.0;
        } else {
            t.next_state = s - 1;
            t.next_terminal = s == 1;
            t.reward = 0.0;
        }
        return t;
    }

    static int group_of(State s) { return (s - 1) / (kStates / kGroups); }

    void embed(State s, int a, Vec& out) const {
        if (is_terminal(s)) throw std::invalid_argument("RandomWalkEnv: embedding a terminal state");
        out.setZero(feature_dim());
        out[group_of(s) * kActions + a] = 1.0;
    }

    // Absorbing-state model for the oracle: index 0 absorbs both terminals
    // with zero reward, indices 1..100 are the walk states.
    TabularModel to_tabular_model() const {
        TabularModel m = TabularModel::zeros(kStates + 1, kActions, gamma_);
        for (int a = 0; a < kActions; ++a) m.p(0, a, 0) = 1.0;
        for (int s = 1; s <= kStates; ++s) {
            m.p(s, 0, s == 1 ? 0 : s - 1) = 1.0;
            m.p(s, 1, s == kStates ? 0 : s + 1) = 1.0;
            m.r(s, 1) = s == kStates ? 1.0 : 0.0;
        }
        return m;
    }

    std::vector<std::pair<State, int>> eval_pairs() const {
        std::vector<std::pair<State, int>> ps;
        for (int s = 1; s <= kStates; ++s)
            for (int a = 0; a < kActions; ++a) ps.emplace_back(s, a);
        return ps;
    }

  private:
    double gamma_;
};

}  // namespace qrex
