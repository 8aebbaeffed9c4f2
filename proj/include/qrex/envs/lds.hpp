#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qrex/mdp.hpp"
#include "qrex/rng.hpp"

namespace qrex {

// Linear dynamical system X_{t+1} = A X_t + noise with reward <X_t, theta>
// at step t. A is symmetric (hence normal) with spectral radius rho < 1;
// there is a single action and the identity embedding phi(X) = X, so the
// learners reduce to TD(0)-style value approximation. The TD fixed point is
// w* = (I - gamma A^T)^{-1} theta.
class LdsEnv {
  public:
    using State = Vec;

    LdsEnv(Mat A, Vec theta, double noise_sigma)
        : A_(std::move(A)), theta_(std::move(theta)), sigma_(noise_sigma) {
        if (A_.rows() != A_.cols() || A_.rows() != theta_.size())
            throw std::invalid_argument("LdsEnv: shape mismatch between A and theta");
    }

    // Random instance: symmetric Gaussian matrix rescaled to spectral radius
    // rho, with a uniformly random unit theta.
    static LdsEnv random(int dim, double rho, double noise_sigma, Rng& rng) {
        Mat A(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j <= i; ++j) {
                const double v = rng.gaussian();
                A(i, j) = v;
                A(j, i) = v;
            }
        Eigen::SelfAdjointEigenSolver<Mat> es(A);
        const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
        if (radius > 0.0) A *= rho / radius;
        Vec theta(dim);
        for (int i = 0; i < dim; ++i) theta[i] = rng.gaussian();
        const double norm = theta.norm();
        if (norm > 0.0) theta /= norm;
        return LdsEnv(std::move(A), std::move(theta), noise_sigma);
    }

    const Mat& dynamics() const { return A_; }
    const Vec& theta() const { return theta_; }
    double noise_sigma() const { return sigma_; }

    int num_actions() const { return 1; }
    int feature_dim() const { return static_cast<int>(A_.rows()); }
    bool is_terminal(const State&) const { return false; }
    bool resamples_state_each_step() const { return false; }

    State reset(Rng&) const { return Vec::Zero(A_.rows()); }

    TransitionSample<State> step(const State& s, int a, Rng& rng) const {
        if (a != 0) throw std::invalid_argument("LdsEnv: action index out of range");
        Vec next = A_ * s;
        for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += sigma_ * rng.gaussian();
        TransitionSample<State> t;
        t.state = s;
        t.action = 0;
        t.reward = s.dot(theta_);
        t.next_state = std::move(next);
        t.next_terminal = false;
        return t;
    }

    void embed(const State& s, int a, Vec& out) const {
        if (a != 0) throw std::invalid_argument("LdsEnv: action index out of range");
        out = s;
    }

  private:
    Mat A_;
    Vec theta_;
    double sigma_;
};

}  // namespace qrex
