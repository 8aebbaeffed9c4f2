#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qrex/algorithms.hpp"
#include "qrex/mdp.hpp"

namespace qrex::oracle {

// Q tables over a TabularModel are flat vectors indexed s*A + a.

inline int sa_index(const TabularModel& m, int s, int a) { return s * m.num_actions + a; }

inline double table_max(const TabularModel& m, const Vec& q, int s) {
    double best = q[sa_index(m, s, 0)];
    for (int a = 1; a < m.num_actions; ++a) best = std::max(best, q[sa_index(m, s, a)]);
    return best;
}

// One application of the Bellman optimality operator:
// T(Q)(s,a) = R(s,a) + gamma * sum_{s'} P(s'|s,a) * max_{a'} Q(s',a').
inline Vec bellman_apply(const TabularModel& m, const Vec& q) {
    if (q.size() != static_cast<Eigen::Index>(m.num_states) * m.num_actions)
        throw std::invalid_argument("bellman_apply: Q table has wrong shape");
    m.validate();
    Vec out(q.size());
    std::vector<double> vmax(static_cast<std::size_t>(m.num_states));
    for (int s = 0; s < m.num_states; ++s) vmax[static_cast<std::size_t>(s)] = table_max(m, q, s);
    for (int s = 0; s < m.num_states; ++s)
        for (int a = 0; a < m.num_actions; ++a) {
            double acc = 0.0;
            for (int s2 = 0; s2 < m.num_states; ++s2) {
                const double p = m.p(s, a, s2);
                if (p != 0.0) acc += p * vmax[static_cast<std::size_t>(s2)];
            }
            out[sa_index(m, s, a)] = m.r(s, a) + m.gamma * acc;
        }
    return out;
}

// Fixed-point iteration to ||T(Q) - Q||_inf <= tol. Converges by
// gamma-contraction for gamma < 1 and by the absorbing structure for the
// episodic gamma = 1 models.
inline Vec value_iteration(const TabularModel& m, double tol = 1e-10,
                           std::int64_t max_iters = 1000000) {
    if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
    Vec q = Vec::Zero(static_cast<Eigen::Index>(m.num_states) * m.num_actions);
    double residual = 0.0;
    for (std::int64_t it = 0; it < max_iters; ++it) {
        Vec next = bellman_apply(m, q);
        residual = (next - q).cwiseAbs().maxCoeff();
        q = std::move(next);
        if (residual <= tol) return q;
    }
    throw std::runtime_error("value_iteration: no convergence after " + std::to_string(max_iters) +
                             " iterations, residual " + std::to_string(residual));
}

// Noiseless Q-iteration w^1 = 0, w^{t+1} = T(w^t); returns all k iterates.
inline std::vector<Vec> noiseless_q_iteration(const TabularModel& m, int k) {
    if (k < 1) throw std::invalid_argument("noiseless_q_iteration: k must be >= 1");
    std::vector<Vec> iters;
    iters.reserve(static_cast<std::size_t>(k));
    iters.push_back(Vec::Zero(static_cast<Eigen::Index>(m.num_states) * m.num_actions));
    for (int t = 1; t < k; ++t) iters.push_back(bellman_apply(m, iters.back()));
    return iters;
}

// sup over the evaluation pairs of |<phi(s,a), x>|. The pair set is
// exhaustive for finite environments and a documented grid for Mountain Car.
template <Environment Env>
double phi_sup_norm(const Vec& x, const Env& fm,
                    const std::vector<std::pair<typename Env::State, int>>& eval_pairs) {
    if (eval_pairs.empty()) throw std::invalid_argument("phi_sup_norm: empty evaluation set");
    Vec phi(fm.feature_dim());
    double best = 0.0;
    for (const auto& [s, a] : eval_pairs) {
        fm.embed(s, a, phi);
        best = std::max(best, std::abs(phi.dot(x)));
    }
    return best;
}

struct OracleDiagnostics {
    Vec mu;  // stationary distribution over (s,a), indexed s*A + a
    double mu_min = 0.0;
    double kappa = 0.0;  // 1 / mu_min in the tabular setting
};

inline std::vector<std::vector<double>> uniform_policy_table(int S, int A) {
    return std::vector<std::vector<double>>(static_cast<std::size_t>(S),
                                            std::vector<double>(static_cast<std::size_t>(A), 1.0 / A));
}

// Stationary distribution of the behavior chain over state-action pairs,
// P^pi((s,a),(s',a')) = P(s'|s,a) * pi(a'|s'), by power iteration.
inline OracleDiagnostics stationary_distribution(const TabularModel& m,
                                                 const std::vector<std::vector<double>>& policy,
                                                 double tol = 1e-12,
                                                 std::int64_t max_iters = 1000000) {
    m.validate();
    const int S = m.num_states, A = m.num_actions;
    if (static_cast<int>(policy.size()) != S)
        throw std::invalid_argument("stationary_distribution: policy table has wrong size");
    const auto dim = static_cast<Eigen::Index>(S) * A;
    Vec mu = Vec::Constant(dim, 1.0 / static_cast<double>(dim));
    Vec next(dim);
    std::vector<double> occupancy(static_cast<std::size_t>(S));
    for (std::int64_t it = 0; it < max_iters; ++it) {
        std::fill(occupancy.begin(), occupancy.end(), 0.0);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const double mass = mu[sa_index(m, s, a)];
                if (mass == 0.0) continue;
                for (int s2 = 0; s2 < S; ++s2) occupancy[static_cast<std::size_t>(s2)] += mass * m.p(s, a, s2);
            }
        for (int s2 = 0; s2 < S; ++s2)
            for (int a2 = 0; a2 < A; ++a2)
                next[sa_index(m, s2, a2)] =
                    occupancy[static_cast<std::size_t>(s2)] * policy[static_cast<std::size_t>(s2)][static_cast<std::size_t>(a2)];
        next /= next.sum();
        const double diff = (next - mu).cwiseAbs().sum();
        mu = next;
        if (diff <= tol) {
            OracleDiagnostics d;
            d.mu = mu;
            d.mu_min = mu.minCoeff();
            d.kappa = d.mu_min > 0.0 ? 1.0 / d.mu_min : std::numeric_limits<double>::infinity();
            return d;
        }
    }
    throw std::runtime_error(
        "stationary_distribution: power iteration did not converge (chain may be periodic or reducible)");
}

// Closed-form TD fixed point of the linear dynamical system:
// solves (I - gamma * A^T) w = theta.
inline Vec lds_closed_form(const Mat& A, const Vec& theta, double gamma) {
    if (A.rows() != A.cols() || A.rows() != theta.size())
        throw std::invalid_argument("lds_closed_form: shape mismatch");
    const Eigen::VectorXcd eigs = Eigen::EigenSolver<Mat>(A, false).eigenvalues();
    double rho = 0.0;
    for (Eigen::Index i = 0; i < eigs.size(); ++i) rho = std::max(rho, std::abs(eigs[i]));
    if (!(gamma * rho < 1.0))
        throw std::invalid_argument("lds_closed_form: spectral radius of gamma*A is " +
                                    std::to_string(gamma * rho) + ", need < 1");
    const Mat system = Mat::Identity(A.rows(), A.cols()) - gamma * A.transpose();
    Eigen::PartialPivLU<Mat> lu(system);
    const Vec w = lu.solve(theta);
    if ((system * w - theta).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + theta.cwiseAbs().maxCoeff()))
        throw std::runtime_error("lds_closed_form: linear solve is ill-conditioned");
    return w;
}

// Fixed point of f(u) = alpha + beta * sqrt(u).
inline double hypercontract_fixed_point(double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0)
        throw std::invalid_argument("hypercontract_fixed_point: alpha and beta must be nonnegative");
    const double root = (beta + std::sqrt(beta * beta + 4.0 * alpha)) / 2.0;
    return root * root;
}

namespace detail {

inline double expected_next_max(const TabularModel& m, const Vec& w, int s, int a) {
    double acc = 0.0;
    for (int s2 = 0; s2 < m.num_states; ++s2) {
        const double p = m.p(s, a, s2);
        if (p != 0.0) acc += p * table_max(m, w, s2);
    }
    return acc;
}

inline double next_state_max(const TabularModel& m, const Vec& w,
                             const TransitionSample<int>& t) {
    return t.next_terminal ? 0.0 : table_max(m, w, t.next_state);
}

}  // namespace detail

// Contraction matrices H^{k,j}_{1,B} = prod_{i=1..B} (I - eta phi_i phi_i^T)
// (lower data index leftmost) and noise vectors
// L^{k,j} = eta * sum_i eps_i H^{k,j}_{1,i-1} phi_i for one recorded loop.
struct LoopDecomposition {
    std::vector<Mat> H;  // per buffer
    std::vector<Vec> L;  // per buffer
    Vec w_star_next;     // T(w_entry)
};

inline LoopDecomposition loop_decomposition(const LoopRecording<int>& loop,
                                            const TabularModel& m, double eta) {
    if (loop.buffers.empty()) throw std::invalid_argument("loop_decomposition: no recorded buffers");
    if (!(eta < 1.0)) throw std::invalid_argument("loop_decomposition: needs eta * ||phi||^2 < 1");
    const auto d = static_cast<Eigen::Index>(m.num_states) * m.num_actions;
    if (loop.w_entry.size() != d || loop.w_exit.size() != d)
        throw std::invalid_argument("loop_decomposition: recorded weights missing or mis-sized");
    LoopDecomposition out;
    out.w_star_next = bellman_apply(m, loop.w_entry);
    Vec phi = Vec::Zero(d);
    for (const auto& buffer : loop.buffers) {
        Mat H = Mat::Identity(d, d);
        Vec L = Vec::Zero(d);
        for (const auto& t : buffer) {
            const int idx = sa_index(m, t.state, t.action);
            const double eps = (t.reward - m.r(t.state, t.action)) +
                               m.gamma * (detail::next_state_max(m, loop.w_entry, t) -
                                          detail::expected_next_max(m, loop.w_entry, t.state, t.action));
            phi[idx] = 1.0;
            L += (eta * eps) * (H * phi);          // uses the prefix product H_{1,i-1}
            H -= eta * (H * phi) * phi.transpose();
            phi[idx] = 0.0;
        }
        out.H.push_back(std::move(H));
        out.L.push_back(std::move(L));
    }
    return out;
}

// sup-norm gap between the recorded outer-loop error
// eps_k = w_exit - T(w_entry) and its bias + variance reconstruction
//   prod_{j=N..1} H^{k,j}(w_entry - T(w_entry)) + sum_j prod_{l=N..j+1} H^{k,l} L^{k,j}.
inline double bias_variance_residual(const LoopRecording<int>& loop, const TabularModel& m,
                                     double eta) {
    const LoopDecomposition dec = loop_decomposition(loop, m, eta);
    const auto n = static_cast<std::ptrdiff_t>(dec.H.size());
    const auto d = dec.w_star_next.size();

    Mat bias_product = Mat::Identity(d, d);  // H^N ... H^1, higher buffer index leftmost
    for (std::ptrdiff_t j = 0; j < n; ++j) bias_product = dec.H[static_cast<std::size_t>(j)] * bias_product;

    std::vector<Mat> suffix(static_cast<std::size_t>(n));  // suffix[j] = H^N ... H^{j+2}, 0-based
    suffix[static_cast<std::size_t>(n - 1)] = Mat::Identity(d, d);
    for (std::ptrdiff_t j = n - 2; j >= 0; --j)
        suffix[static_cast<std::size_t>(j)] =
            suffix[static_cast<std::size_t>(j + 1)] * dec.H[static_cast<std::size_t>(j + 1)];

    Vec rhs = bias_product * (loop.w_entry - dec.w_star_next);
    for (std::ptrdiff_t j = 0; j < n; ++j)
        rhs += suffix[static_cast<std::size_t>(j)] * dec.L[static_cast<std::size_t>(j)];

    const Vec lhs = loop.w_exit - dec.w_star_next;
    return (lhs - rhs).cwiseAbs().maxCoeff();
}

// Tabular bias factor: the explicit matrix product
// <e_{(s,a)}, prod_{j=N..1} H^{k,j} g> against the visit-count form
// (1-eta)^{N^k(s,a)} g(s,a). Returned as (lhs, rhs) for equality assertion.
inline std::pair<double, double> tabular_bias_factor(const LoopRecording<int>& loop,
                                                     const TabularModel& m, const Vec& g,
                                                     int s, int a, double eta) {
    const LoopDecomposition dec = loop_decomposition(loop, m, eta);
    const auto d = dec.w_star_next.size();
    if (g.size() != d) throw std::invalid_argument("tabular_bias_factor: g has wrong shape");
    Mat product = Mat::Identity(d, d);
    for (const Mat& H : dec.H) product = H * product;
    const double lhs = (product * g)[sa_index(m, s, a)];

    std::int64_t visits = 0;
    for (const auto& buffer : loop.buffers)
        for (const auto& t : buffer)
            if (t.state == s && t.action == a) ++visits;
    const double rhs = std::pow(1.0 - eta, static_cast<double>(visits)) * g[sa_index(m, s, a)];
    return {lhs, rhs};
}

}  // namespace qrex::oracle
