#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cqb/env.hpp"

namespace cqb {

using Observation = std::pair<Vec, double>;  // (feature, binary outcome)

struct EstimatorConfig {
    int d = 5;
    int K = 5;
    double kappa = 10.0;
    double S = 1.0;
    double lambda0 = 1.0;
    double delta = 0.05;
};

// Regularized cross-entropy objective and its analytic gradient, exposed so
// tests can difference them independently.
double mle_objective(const std::vector<Observation>& history, double reg_weight,
                     const Vec& theta);
Vec mle_gradient(const std::vector<Observation>& history, double reg_weight,
                 const Vec& theta);

// Maximizer of the regularized cross-entropy loss (damped Newton with
// backtracking, warm-started). Throws SolverError if the gradient norm has
// not reached `grad_tol` after `max_iter` iterations.
Vec fit_logistic_mle(const std::vector<Observation>& history, double reg_weight,
                     const Vec& warm_start, int max_iter = 100, double grad_tol = 1e-8);

// Weighted-norm residual of the projection objective:
// || sum_i [mu(x_i'theta) - mu(x_i'theta1)] x_i ||_{V^{-1}}.
double projection_objective(const Vec& theta, const std::vector<Observation>& history,
                            const Eigen::LLT<Mat>& llt, const Vec& theta1);

// Projects an unconstrained estimate onto {||theta|| <= S} by minimizing the
// weighted residual norm (projected gradient with backtracking). Returns
// theta1 unchanged when it is already feasible.
Vec project_estimate(const Vec& theta1, const std::vector<Observation>& history,
                     const Eigen::LLT<Mat>& llt, double S, int max_iter = 2000,
                     double obj_tol = 1e-6);

// Confidence radius beta_{t,k} as a function of the per-server observation
// count; monotone nondecreasing in n_obs.
double confidence_radius(long long n_obs, double kappa, double lambda0, int d, int K,
                         double delta, double S);

// Per-server learning state: observation history, design matrix with a
// maintained Cholesky factor, the projected MLE and its confidence radius.
class ServerEstimator {
public:
    ServerEstimator() = default;
    ServerEstimator(int server_id, const EstimatorConfig& cfg);

    void observe(const Vec& x, bool outcome);

    // sqrt(x' V^{-1} x) through the maintained factorization, O(d^2).
    double uncertainty(const Vec& x) const;

    double predict(const Vec& x) const { return logistic(x.dot(theta_hat_)); }
    double ucb_score(const Vec& x) const { return predict(x) + beta_ * uncertainty(x); }

    int server_id() const { return server_id_; }
    long long n_obs() const { return n_obs_; }
    double beta() const { return beta_; }
    const Vec& theta_hat() const { return theta_hat_; }
    const Vec& theta_mle() const { return theta_mle_; }
    const Mat& V() const { return V_; }
    const Eigen::LLT<Mat>& llt() const { return llt_; }
    const std::vector<Observation>& history() const { return history_; }
    const EstimatorConfig& config() const { return cfg_; }

    // Rebuilds V from scratch out of the history (oracle for the incremental
    // factorization).
    Mat recompute_V_from_history() const;

    // Flat audit record: k, n_obs, theta_hat, beta, upper triangle of V, in
    // decimal text at 17 significant digits.
    std::string snapshot_line() const;
    static ServerEstimator from_snapshot_line(const std::string& line,
                                              const EstimatorConfig& cfg);

private:
    EstimatorConfig cfg_;
    int server_id_ = 0;
    std::vector<Observation> history_;
    Vec theta_mle_;  // unprojected maximizer, warm start for the next refit
    Vec theta_hat_;  // projected estimate used by policies
    Mat V_;
    Eigen::LLT<Mat> llt_;
    long long n_obs_ = 0;
    double beta_ = 0;

    void refresh_beta();
};

} // namespace cqb
