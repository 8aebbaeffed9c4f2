#pragma once

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qrex/algorithms.hpp"
#include "qrex/envs/tabular_env.hpp"
#include "qrex/oracle.hpp"

namespace qrex::harness {

struct VerifyCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct VerifyReport {
    std::vector<VerifyCheck> checks;
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

namespace detail {

inline std::string sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

}  // namespace detail

// Numerical checks of the structural properties the algorithms rely on,
// run on randomized small instances with a fixed master seed. `full` scales
// the instance counts up roughly tenfold.
inline VerifyReport verify_suite(bool full = false, std::ostream* log = nullptr) {
    VerifyReport report;
    const std::uint64_t master_seed = 20240;
    const int scale = full ? 10 : 1;

    auto emit = [&](const std::string& name, bool passed, const std::string& detail) {
        report.checks.push_back({name, passed, detail});
        if (log)
            (*log) << (passed ? "[PASS] " : "[FAIL] ") << name << ": " << detail << "\n";
    };

    {  // gamma-contraction of the Bellman operator
        Rng rng(master_seed);
        const int mdps = 10 * scale, pairs = 100;
        int violations = 0;
        double worst_ratio = 0.0;
        for (int t = 0; t < mdps; ++t) {
            TabularModel m = random_tabular_model(4, 3, 0.9, rng);
            for (int rep = 0; rep < pairs; ++rep) {
                Vec q1(12), q2(12);
                for (int i = 0; i < 12; ++i) {
                    q1[i] = rng.uniform(-5.0, 5.0);
                    q2[i] = rng.uniform(-5.0, 5.0);
                }
                const double num =
                    (oracle::bellman_apply(m, q1) - oracle::bellman_apply(m, q2)).cwiseAbs().maxCoeff();
                const double den = (q1 - q2).cwiseAbs().maxCoeff();
                if (num > m.gamma * den + 1e-12) ++violations;
                if (den > 0) worst_ratio = std::max(worst_ratio, num / den);
            }
        }
        emit("bellman-gamma-contraction", violations == 0,
             std::to_string(violations) + " violations in " + std::to_string(mdps * pairs) +
                 " random Q-pairs (worst ratio " + detail::sci(worst_ratio) + ", gamma 0.9)");
    }

    {  // value-iteration fixed point and the optimal-Q bound
        Rng rng(master_seed + 1);
        double worst_res = 0.0, worst_bound = 0.0;
        const int mdps = 10 * scale;
        for (int t = 0; t < mdps; ++t) {
            const double gamma = t % 2 == 0 ? 0.5 : 0.9;
            TabularModel m = random_tabular_model(5, 2, gamma, rng, 0.0, 1.0);
            const Vec q = oracle::value_iteration(m, 1e-10);
            worst_res = std::max(worst_res,
                                 (oracle::bellman_apply(m, q) - q).cwiseAbs().maxCoeff());
            worst_bound = std::max(worst_bound, q.maxCoeff() * (1.0 - gamma));
        }
        emit("value-iteration-residual", worst_res <= 1e-10,
             "max residual " + detail::sci(worst_res) + " (tol 1e-10) across " +
                 std::to_string(mdps) + " MDPs");
        emit("optimal-q-bound", worst_bound <= 1.0 + 1e-9,
             "max (1-gamma)*||Q*|| = " + detail::sci(worst_bound) + " <= 1 for rewards in [0,1]");
    }

    {  // noiseless Q-iteration contracts at rate gamma
        Rng rng(master_seed + 2);
        bool ok = true;
        double worst = 0.0;
        for (int t = 0; t < 10 * scale; ++t) {
            TabularModel m = random_tabular_model(4, 2, 0.9, rng);
            const Vec qstar = oracle::value_iteration(m, 1e-13);
            auto iters = oracle::noiseless_q_iteration(m, 40);
            double prev = (iters[0] - qstar).cwiseAbs().maxCoeff();
            for (std::size_t i = 1; i < iters.size(); ++i) {
                const double err = (iters[i] - qstar).cwiseAbs().maxCoeff();
                if (err > m.gamma * prev + 1e-12) ok = false;
                if (prev > 1e-12) worst = std::max(worst, err / prev);
                prev = err;
            }
        }
        emit("noiseless-iteration-contraction", ok,
             "per-step error ratio <= gamma (worst " + detail::sci(worst) + ")");
    }

    {  // uniform iterate bound across every runner
        Rng rng(master_seed + 3);
        double lo = 0.0, hi_excess = 0.0;
        const int mdps = 4 * scale;
        for (int t = 0; t < mdps; ++t) {
            const double gamma = t % 2 == 0 ? 0.5 : 0.9;
            TabularModel m = random_tabular_model(4, 2, gamma, rng, 0.0, 1.0);
            TabularEnv env(m);
            const double bound = 1.0 / (1.0 - gamma);
            auto policy = BehaviorPolicy<TabularEnv>::uniform();

            auto probe = [&](RunTrace trace) {
                lo = std::min(lo, trace.q_min);
                hi_excess = std::max(hi_excess, trace.q_max - bound);
            };
            AlgoConfig base;
            base.eta = 0.1;
            base.gamma = gamma;
            base.K = 5;
            base.N = 2;
            base.B = 100 * scale;
            base.track_q_range = true;

            {
                Rng r(rng.next_u64());
                probe(qrex_run(base, env, policy, r));
            }
            {
                AlgoConfig c = base;
                c.combine = CombineOption::OptionII;
                Rng r(rng.next_u64());
                probe(qrex_run(c, env, policy, r));
            }
            {
                AlgoConfig c = base;
                c.target_mode = TargetMode::Live;
                Rng r(rng.next_u64());
                probe(vanilla_q_run(c, env, policy, r));
            }
            {
                AlgoConfig c = base;
                c.replay_order = ReplayOrder::UniformRandomPermutation;
                Rng r(rng.next_u64());
                probe(otl_replay_q_run(c, env, policy, r));
            }
            {
                AlgoConfig c = base;
                c.replay_order = ReplayOrder::UniformRandomPermutation;
                c.target_mode = TargetMode::Live;
                Rng r(rng.next_u64());
                probe(otl_replay_q_run(c, env, policy, r));
            }
            {
                AlgoConfig c = base;
                c.replay_order = ReplayOrder::Forward;
                Rng r(rng.next_u64());
                probe(replay_q_run(c, env, policy, r));
            }
            {
                AlgoConfig c = base;
                c.data_mode = DataMode::Reuse;
                Rng r(rng.next_u64());
                auto dataset = sample_trajectory(env, policy, c.N * (c.B + c.u), r);
                probe(qrexdare_run(c, env, dataset));
            }
        }
        emit("uniform-iterate-bound", lo >= -1e-12 && hi_excess <= 1e-12,
             "iterates stayed in [0, 1/(1-gamma)] (min " + detail::sci(lo) + ", max excess " +
                 detail::sci(hi_excess) + ") across 7 runners x " + std::to_string(mdps) + " MDPs");
    }

    {  // bias-variance identity and tabular bias factor on recorded runs
        Rng rng(master_seed + 4);
        double worst_bv = 0.0, worst_tb = 0.0;
        const int runs = 10 * scale;
        for (int t = 0; t < runs; ++t) {
            TabularModel m = random_tabular_model(2 + t % 4, 2 + t % 2, 0.9, rng);
            TabularEnv env(m);
            AlgoConfig cfg;
            cfg.eta = 0.05;
            cfg.gamma = m.gamma;
            cfg.K = 2;
            cfg.N = 3;
            cfg.B = 5;
            RunRecording<int> rec;
            Rng r(rng.next_u64());
            qrex_run(cfg, env, BehaviorPolicy<TabularEnv>::uniform(), r, &rec);
            for (const auto& loop : rec.loops) {
                worst_bv = std::max(worst_bv, oracle::bias_variance_residual(loop, m, cfg.eta));
                const Vec g = loop.w_entry - oracle::bellman_apply(m, loop.w_entry);
                for (int s = 0; s < m.num_states; ++s)
                    for (int a = 0; a < m.num_actions; ++a) {
                        auto [lhs, rhs] = oracle::tabular_bias_factor(loop, m, g, s, a, cfg.eta);
                        worst_tb = std::max(worst_tb, std::abs(lhs - rhs));
                    }
            }
        }
        emit("bias-variance-identity", worst_bv <= 1e-10,
             "max residual " + detail::sci(worst_bv) + " (tol 1e-10) over " + std::to_string(runs) +
                 " recorded runs");
        emit("tabular-bias-factor", worst_tb <= 1e-12,
             "max |lhs - rhs| " + detail::sci(worst_tb) + " (tol 1e-12)");
    }

    {  // hyper-contractivity fixed point
        Rng rng(master_seed + 5);
        double worst = 0.0;
        const int n = 1000 * scale;
        for (int i = 0; i < n; ++i) {
            const double alpha = rng.uniform(0.0, 10.0), beta = rng.uniform(0.0, 10.0);
            const double u = oracle::hypercontract_fixed_point(alpha, beta);
            worst = std::max(worst, std::abs(u - (alpha + beta * std::sqrt(u))) / (1.0 + u));
        }
        emit("hypercontract-fixed-point", worst <= 1e-12,
             "max relative residual " + detail::sci(worst) + " (tol 1e-12) on " +
                 std::to_string(n) + " random (alpha, beta)");
    }

    return report;
}

}  // namespace qrex::harness
