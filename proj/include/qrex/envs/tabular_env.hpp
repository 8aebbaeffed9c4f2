#pragma once

#include <utility>
#include <vector>

#include "qrex/mdp.hpp"
#include "qrex/rng.hpp"

namespace qrex {

// Continuing environment backed by an explicit TabularModel, with the
// standard one-hot embedding phi(s,a) = e_{s*A+a}. Episodic tasks encode
// their terminals as absorbing states.
class TabularEnv {
  public:
    using State = int;

    explicit TabularEnv(TabularModel model, double reward_noise = 0.0)
        : model_(std::move(model)), reward_noise_(reward_noise) {
        model_.validate();
    }

    const TabularModel& model() const { return model_; }

    int num_actions() const { return model_.num_actions; }
    int num_states() const { return model_.num_states; }
    int feature_dim() const { return model_.num_states * model_.num_actions; }
    bool is_terminal(State) const { return false; }
    bool resamples_state_each_step() const { return false; }

    State reset(Rng& rng) const { return rng.uniform_int(model_.num_states); }

    TransitionSample<State> step(State s, int a, Rng& rng) const {
        check_action(a);
        const double* row =
            model_.transitions.data() +
            (static_cast<std::size_t>(s) * model_.num_actions + a) * model_.num_states;
        TransitionSample<State> t;
        t.state = s;
        t.action = a;
        t.next_state = rng.categorical(row, model_.num_states);
        t.reward = model_.r(s, a);
        if (reward_noise_ > 0.0) t.reward += rng.uniform(-reward_noise_, reward_noise_);
        t.next_terminal = false;
        return t;
    }

    void embed(State s, int a, Vec& out) const {
        out.setZero(feature_dim());
        out[s * model_.num_actions + a] = 1.0;
    }

    std::vector<std::pair<State, int>> eval_pairs() const {
        std::vector<std::pair<State, int>> ps;
        for (int s = 0; s < model_.num_states; ++s)
            for (int a = 0; a < model_.num_actions; ++a) ps.emplace_back(s, a);
        return ps;
    }

  private:
    void check_action(int a) const {
        if (a < 0 || a >= model_.num_actions)
            throw std::invalid_argument("TabularEnv: action index " + std::to_string(a) +
                                        " out of range");
    }

    TabularModel model_;
    double reward_noise_;
};

// Random MDP with dense uniform-normalized transition rows and rewards
// uniform in [reward_lo, reward_hi].
inline TabularModel random_tabular_model(int S, int A, double gamma, Rng& rng,
                                         double reward_lo = 0.0, double reward_hi = 1.0) {
    TabularModel m = TabularModel::zeros(S, A, gamma);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            double sum = 0.0;
            for (int s2 = 0; s2 < S; ++s2) {
                const double v = 0.05 + rng.uniform();  // bounded away from 0
                m.p(s, a, s2) = v;
                sum += v;
            }
            double renorm = 0.0;
            for (int s2 = 0; s2 < S; ++s2) {
                m.p(s, a, s2) /= sum;
                renorm += m.p(s, a, s2);
            }
            m.p(s, a, S - 1) += 1.0 - renorm;  // absorb rounding residue
            m.r(s, a) = rng.uniform(reward_lo, reward_hi);
        }
    m.validate();
    return m;
}

}  // namespace qrex
