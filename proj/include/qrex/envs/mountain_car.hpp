#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qrex/mdp.hpp"
#include "qrex/rng.hpp"

namespace qrex {

struct McState {
    double x = 0.0;  // position in [-1.2, 0.5]
    double v = 0.0;  // velocity in [-0.07, 0.07]
    bool operator==(const McState&) const = default;
};

// Underpowered car in a valley. Actions {0,1,2} map to accelerations
// {-1,0,+1}; reward is -1 per step until the right peak (x >= 0.5) ends the
// episode. Features: 4 offset tilings of 4x4 tiles over (x,v) per action,
// dimension 4*16*3 = 192, exactly 4 active entries (||phi|| = 2).
class MountainCarEnv {
  public:
    using State = McState;

    static constexpr int kActions = 3;
    static constexpr int kTilings = 4;
    static constexpr int kTilesPerDim = 4;
    static constexpr double kXMin = -1.2, kXMax = 0.5;
    static constexpr double kVMin = -0.07, kVMax = 0.07;

    int num_actions() const { return kActions; }
    int feature_dim() const { return kActions * kTilings * kTilesPerDim * kTilesPerDim; }
    bool is_terminal(const State& s) const { return s.x >= kXMax; }
    bool resamples_state_each_step() const { return false; }

    State reset(Rng& rng) const { return {rng.uniform(-0.6, -0.4), 0.0}; }

    TransitionSample<State> step(const State& s, int a, Rng&) const {
        if (a < 0 || a >= kActions)
            throw std::invalid_argument("MountainCarEnv: action index out of range");
        const double accel = static_cast<double>(a - 1);
        double v = s.v + 0.001 * accel - 0.0025 * std::cos(3.0 * s.x);
        v = std::clamp(v, kVMin, kVMax);
        double x = std::clamp(s.x + v, kXMin, kXMax);
        if (x <= kXMin) v = 0.0;  // left wall zeroes velocity
        TransitionSample<State> t;
        t.state = s;
        t.action = a;
        t.reward = -1.0;
        t.next_state = {x, v};
        t.next_terminal = x >= kXMax;
        return t;
    }

    // Tiling m is offset by m/4 of one tile width in x and one tile height
    // in v; indices are clamped into [0, 3] so the shifted boundary tile
    // folds back onto the edge.
    void embed(const State& s, int a, Vec& out) const {
        out.setZero(feature_dim());
        for (int m = 0; m < kTilings; ++m) out[feature_index(s, a, m)] = 1.0;
    }

    int feature_index(const State& s, int a, int tiling) const {
        constexpr double tile_w = (kXMax - kXMin) / kTilesPerDim;
        constexpr double tile_h = (kVMax - kVMin) / kTilesPerDim;
        const double off = static_cast<double>(tiling) / kTilings;
        const int ix = std::clamp(
            static_cast<int>(std::floor((s.x - kXMin + off * tile_w) / tile_w)), 0,
            kTilesPerDim - 1);
        const int iv = std::clamp(
            static_cast<int>(std::floor((s.v - kVMin + off * tile_h) / tile_h)), 0,
            kTilesPerDim - 1);
        return (a * kTilings + tiling) * kTilesPerDim * kTilesPerDim + ix * kTilesPerDim + iv;
    }

    // Documented evaluation grid for the phi-norm: 64x64 over (x,v), all actions.
    std::vector<std::pair<State, int>> eval_pairs(int grid = 64) const {
        std::vector<std::pair<State, int>> ps;
        for (int i = 0; i < grid; ++i)
            for (int j = 0; j < grid; ++j) {
                const double x = kXMin + (kXMax - kXMin) * (i + 0.5) / grid;
                const double v = kVMin + (kVMax - kVMin) * (j + 0.5) / grid;
                for (int a = 0; a < kActions; ++a) ps.push_back({{x, v}, a});
            }
        return ps;
    }
};

}  // namespace qrex
