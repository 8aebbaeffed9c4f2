#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "qrex/mdp.hpp"
#include "qrex/rng.hpp"

namespace qrex {

// 5x5 grid, continuing task. Two special cells teleport with high reward:
// A = (0,1) -> (4,1) pays 10, B = (0,3) -> (2,3) pays 5. Walking off the
// grid pays -1 and leaves the state unchanged; every other move pays 0.
// All rewards carry additive uniform noise on [-noise, +noise].
class GridWorldEnv {
  public:
    using State = int;  // row * 5 + col

    static constexpr int kSize = 5;
    static constexpr int kStates = kSize * kSize;
    static constexpr int kActions = 4;  // N, S, E, W

    explicit GridWorldEnv(double reward_noise = 0.5, double gamma = 0.9)
        : reward_noise_(reward_noise), gamma_(gamma) {}

    double gamma() const { return gamma_; }
    int num_actions() const { return kActions; }
    int feature_dim() const { return kStates * kActions; }
    bool is_terminal(State) const { return false; }
    bool resamples_state_each_step() const { return false; }

    State reset(Rng& rng) const { return rng.uniform_int(kStates); }

    TransitionSample<State> step(State s, int a, Rng& rng) const {
        auto [next, reward] = move(s, a);
        if (reward_noise_ > 0.0) reward += rng.uniform(-reward_noise_, reward_noise_);
        return TransitionSample<State>{s, a, reward, next, false};
    }

    void embed(State s, int a, Vec& out) const {
        out.setZero(feature_dim());
        out[s * kActions + a] = 1.0;
    }

    // Noiseless dynamics, the ground truth for the oracle.
    TabularModel to_tabular_model() const {
        TabularModel m = TabularModel::zeros(kStates, kActions, gamma_);
        for (int s = 0; s < kStates; ++s)
            for (int a = 0; a < kActions; ++a) {
                auto [next, reward] = move(s, a);
                m.p(s, a, next) = 1.0;
                m.r(s, a) = reward;
            }
        return m;
    }

    std::vector<std::pair<State, int>> eval_pairs() const {
        std::vector<std::pair<State, int>> ps;
        for (int s = 0; s < kStates; ++s)
            for (int a = 0; a < kActions; ++a) ps.emplace_back(s, a);
        return ps;
    }

  private:
    static constexpr int kStateA = 0 * kSize + 1;
    static constexpr int kStateAPrime = 4 * kSize + 1;
    static constexpr int kStateB = 0 * kSize + 3;
    static constexpr int kStateBPrime = 2 * kSize + 3;

    std::pair<State, double> move(State s, int a) const {
        if (a < 0 || a >= kActions)
            throw std::invalid_argument("GridWorldEnv: action index out of range");
        if (s == kStateA) return {kStateAPrime, 10.0};
        if (s == kStateB) return {kStateBPrime, 5.0};
        const int row = s / kSize, col = s % kSize;
        int r2 = row, c2 = col;
        switch (a) {
            case 0: r2 = row - 1; break;  // north
            case 1: r2 = row + 1; break;  // south
            case 2: c2 = col + 1; break;  // east
            case 3: c2 = col - 1; break;  // west
        }
        if (r2 < 0 || r2 >= kSize || c2 < 0 || c2 >= kSize) return {s, -1.0};
        return {r2 * kSize + c2, 0.0};
    }

    double reward_noise_;
    double gamma_;
};

}  // namespace qrex
