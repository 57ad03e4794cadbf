#include "cqb/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cqb/errors.hpp"

namespace cqb {

double mle_objective(const std::vector<Observation>& history, double reg_weight,
                     const Vec& theta) {
    double obj = -0.5 * reg_weight * theta.squaredNorm();
    for (const auto& [x, r] : history) {
        const double z = x.dot(theta);
        // r log mu + (1-r) log(1-mu), in log-sum-exp form
        obj += -r * log1pexp(-z) - (1.0 - r) * log1pexp(z);
    }
    return obj;
}

Vec mle_gradient(const std::vector<Observation>& history, double reg_weight,
                 const Vec& theta) {
    Vec g = -reg_weight * theta;
    for (const auto& [x, r] : history) {
        g += (r - logistic(x.dot(theta))) * x;
    }
    return g;
}

Vec fit_logistic_mle(const std::vector<Observation>& history, double reg_weight,
                     const Vec& warm_start, int max_iter, double grad_tol) {
    if (!(reg_weight > 0.0)) throw SolverError("fit_logistic_mle needs reg_weight > 0");
    const int d = static_cast<int>(warm_start.size());
    if (history.empty()) return Vec::Zero(d);

    Vec theta = warm_start;
    for (int it = 0; it < max_iter; ++it) {
        Vec g = mle_gradient(history, reg_weight, theta);
        if (g.norm() <= grad_tol) return theta;

        Mat H = reg_weight * Mat::Identity(d, d);
        for (const auto& [x, r] : history) {
            (void)r;
            H.selfadjointView<Eigen::Lower>().rankUpdate(x, logistic_dot(x.dot(theta)));
        }
        const Vec dir = Mat(H.selfadjointView<Eigen::Lower>()).llt().solve(g);

        // Close to the maximizer the objective is flat to machine precision
        // and an Armijo gate only stalls; the undamped step converges
        // quadratically there.
        if (g.norm() <= 1e-3) {
            theta += dir;
            continue;
        }

        // Backtracking on the (concave) objective while still far away.
        const double obj = mle_objective(history, reg_weight, theta);
        const double slope = g.dot(dir);
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            const Vec cand = theta + alpha * dir;
            if (mle_objective(history, reg_weight, cand) >= obj + 1e-4 * alpha * slope) {
                theta = cand;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) theta += dir;  // Armijo stalled on rounding noise
    }
    if (mle_gradient(history, reg_weight, theta).norm() <= grad_tol) return theta;
    throw SolverError("fit_logistic_mle: no convergence after " + std::to_string(max_iter) +
                      " iterations");
}

namespace {

// Residual sum_i [mu(x_i'theta) - mu(x_i'theta1)] x_i.
Vec projection_residual(const Vec& theta, const std::vector<Observation>& history,
                        const Vec& theta1) {
    Vec g = Vec::Zero(theta.size());
    for (const auto& [x, r] : history) {
        (void)r;
        g += (logistic(x.dot(theta)) - logistic(x.dot(theta1))) * x;
    }
    return g;
}

Vec clip_to_ball(Vec v, double S) {
    const double n = v.norm();
    if (n > S) v *= S / n;
    return v;
}

} // namespace

double projection_objective(const Vec& theta, const std::vector<Observation>& history,
                            const Eigen::LLT<Mat>& llt, const Vec& theta1) {
    const Vec g = projection_residual(theta, history, theta1);
    return std::sqrt(g.dot(llt.solve(g)));
}

Vec project_estimate(const Vec& theta1, const std::vector<Observation>& history,
                     const Eigen::LLT<Mat>& llt, double S, int max_iter, double obj_tol) {
    if (!(S > 0.0)) throw SolverError("project_estimate needs S > 0");
    if (theta1.norm() <= S) return theta1;
    if (history.empty()) return S / theta1.norm() * theta1;

    // Minimize F(theta) = ||residual||^2_{V^{-1}} over the ball by spectral
    // projected gradient (Barzilai-Borwein steps, nonmonotone line search).
    auto F = [&](const Vec& th) {
        const Vec g = projection_residual(th, history, theta1);
        return g.dot(llt.solve(g));
    };
    auto gradF = [&](const Vec& th) {
        const Vec g = projection_residual(th, history, theta1);
        const Vec h = llt.solve(g);
        Vec grad = Vec::Zero(th.size());
        for (const auto& [x, r] : history) {
            (void)r;
            grad += 2.0 * logistic_dot(x.dot(th)) * x.dot(h) * x;
        }
        return grad;
    };

    Vec theta = clip_to_ball(theta1, S);
    Vec grad = gradF(theta);
    double f = F(theta);
    const double sq_tol = obj_tol * obj_tol;  // contract tolerance is on the norm
    double bb = 1.0;
    std::vector<double> recent{f};  // nonmonotone reference window
    for (int it = 0; it < max_iter; ++it) {
        const Vec target = clip_to_ball(theta - bb * grad, S);
        const Vec dir = target - theta;
        if (dir.norm() <= 1e-12 * (1.0 + theta.norm())) return theta;

        const double slope = grad.dot(dir);
        double f_ref = f;
        for (double past : recent) f_ref = std::max(f_ref, past);
        double lambda = 1.0;
        Vec cand;
        double fc = f;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            cand = theta + lambda * dir;
            fc = F(cand);
            if (fc <= f_ref + 1e-4 * lambda * slope) {
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted) return theta;  // flat to machine precision

        const Vec g_new = gradF(cand);
        const Vec s = cand - theta;
        const Vec y = g_new - grad;
        const double sy = s.dot(y);
        bb = sy > 0 ? std::clamp(s.squaredNorm() / sy, 1e-10, 1e10) : 1.0;

        const double decrease = f - fc;
        theta = cand;
        grad = g_new;
        f = fc;
        recent.push_back(f);
        if (recent.size() > 10) recent.erase(recent.begin());
        if (decrease >= 0 && decrease <= sq_tol && s.norm() <= obj_tol) return theta;
    }
    throw SolverError("project_estimate: budget exhausted");
}

double confidence_radius(long long n_obs, double kappa, double lambda0, int d, int K,
                         double delta, double S) {
    const double inside = 2.0 * d * std::log1p(static_cast<double>(n_obs) / (kappa * lambda0 * d)) +
                          std::log(static_cast<double>(K) / delta);
    return 0.5 * kappa * std::sqrt(inside) + 0.5 * kappa * S * std::sqrt(lambda0);
}

ServerEstimator::ServerEstimator(int server_id, const EstimatorConfig& cfg)
    : cfg_(cfg),
      server_id_(server_id),
      theta_mle_(Vec::Zero(cfg.d)),
      theta_hat_(Vec::Zero(cfg.d)),
      V_(cfg.kappa * cfg.lambda0 * Mat::Identity(cfg.d, cfg.d)) {
    llt_.compute(V_);
    refresh_beta();
}

void ServerEstimator::refresh_beta() {
    beta_ = confidence_radius(n_obs_, cfg_.kappa, cfg_.lambda0, cfg_.d, cfg_.K, cfg_.delta, cfg_.S);
}

double ServerEstimator::uncertainty(const Vec& x) const {
    const Vec y = llt_.matrixL().solve(x);
    const auto diag = llt_.matrixLLT().diagonal();
    const double dmax = diag.maxCoeff();
    const double dmin = diag.minCoeff();
    if (dmin <= 0.0 || (dmax / dmin) * (dmax / dmin) > 1e12) {
        throw SolverError("design matrix numerically singular");
    }
    return y.norm();
}

void ServerEstimator::observe(const Vec& x, bool outcome) {
    history_.emplace_back(x, outcome ? 1.0 : 0.0);
    V_ += x * x.transpose();
    llt_.rankUpdate(x, 1.0);
    ++n_obs_;
    theta_mle_ = fit_logistic_mle(history_, cfg_.lambda0, theta_mle_);
    theta_hat_ = project_estimate(theta_mle_, history_, llt_, cfg_.S);
    refresh_beta();
}

Mat ServerEstimator::recompute_V_from_history() const {
    Mat V = cfg_.kappa * cfg_.lambda0 * Mat::Identity(cfg_.d, cfg_.d);
    for (const auto& [x, r] : history_) {
        (void)r;
        V += x * x.transpose();
    }
    return V;
}

std::string ServerEstimator::snapshot_line() const {
    std::ostringstream out;
    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), " %.17g", v);
        out << buf;
    };
    out << server_id_ << ' ' << n_obs_;
    for (int i = 0; i < cfg_.d; ++i) put(theta_hat_[i]);
    put(beta_);
    for (int i = 0; i < cfg_.d; ++i) {
        for (int j = i; j < cfg_.d; ++j) put(V_(i, j));
    }
    return out.str();
}

ServerEstimator ServerEstimator::from_snapshot_line(const std::string& line,
                                                    const EstimatorConfig& cfg) {
    std::istringstream in(line);
    int server_id = 0;
    long long n_obs = 0;
    if (!(in >> server_id >> n_obs)) throw DataError("bad estimator snapshot: " + line);
    ServerEstimator est(server_id, cfg);
    est.n_obs_ = n_obs;
    for (int i = 0; i < cfg.d; ++i) in >> est.theta_hat_[i];
    in >> est.beta_;
    for (int i = 0; i < cfg.d; ++i) {
        for (int j = i; j < cfg.d; ++j) {
            double v = 0;
            in >> v;
            est.V_(i, j) = v;
            est.V_(j, i) = v;
        }
    }
    if (!in) throw DataError("truncated estimator snapshot: " + line);
    est.llt_.compute(est.V_);
    est.theta_mle_ = est.theta_hat_;
    return est;
}

} // namespace cqb
