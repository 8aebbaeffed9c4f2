#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "qrex/mdp.hpp"
#include "qrex/rng.hpp"

namespace qrex {

// Off-policy divergence counter-example: 7 states, one action, every
// transition lands in state 7 (index 6) with reward 0, so w* = 0. The
// trajectory draws the current state uniformly at random each step
// (synchronous-style sampling); only the bootstrap uses the actual
// transition. Default features keep the classic shared-coordinate structure,
// phi(i) = a e_i + b e_7 for the six upper states and phi(7) = 2 e_7 with
// a = sqrt(5 - b^2), b = 0.7: every upper-state row has norm exactly
// sqrt(5), live-target updates spiral outward (the expected update matrix
// has an eigenvalue with negative real part at gamma = 0.99), and
// frozen-target runs contract.
class BairdEnv {
  public:
    using State = int;  // 0..6

    static constexpr int kStates = 7;
    static constexpr double kSharedWeight = 0.7;
    static constexpr double kBootstrapWeight = 2.0;

    BairdEnv() : features_(default_features()) {}

    explicit BairdEnv(Mat features) : features_(std::move(features)) {
        if (features_.rows() != kStates)
            throw std::invalid_argument("BairdEnv: need one feature row per state");
    }

    static Mat default_features() {
        Mat f = Mat::Zero(kStates, kStates);
        const double own = std::sqrt(5.0 - kSharedWeight * kSharedWeight);
        for (int i = 0; i < kStates - 1; ++i) {
            f(i, i) = own;
            f(i, kStates - 1) = kSharedWeight;
        }
        f(kStates - 1, kStates - 1) = kBootstrapWeight;
        return f;
    }

    int num_actions() const { return 1; }
    int feature_dim() const { return static_cast<int>(features_.cols()); }
    bool is_terminal(State) const { return false; }
    bool resamples_state_each_step() const { return true; }

    State reset(Rng& rng) const { return rng.uniform_int(kStates); }

    TransitionSample<State> step(State s, int a, Rng&) const {
        if (a != 0) throw std::invalid_argument("BairdEnv: action index out of range");
        return TransitionSample<State>{s, 0, 0.0, kStates - 1, false};
    }

    void embed(State s, int a, Vec& out) const {
        if (a != 0) throw std::invalid_argument("BairdEnv: action index out of range");
        out = features_.row(s).transpose();
    }

    std::vector<std::pair<State, int>> eval_pairs() const {
        std::vector<std::pair<State, int>> ps;
        for (int s = 0; s < kStates; ++s) ps.emplace_back(s, 0);
        return ps;
    }

  private:
    Mat features_;
};

}  // namespace qrex
