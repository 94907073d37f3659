// Closed-form estimators for the two-task setting: OLS, ridge, averaging,
// pooled/weighted HPS with fixed or optimized head ratio, the target excess
// risk, and the exact bias-variance split of the combined estimator.

#ifndef HPSLAB_ESTIMATORS_HPP
#define HPSLAB_ESTIMATORS_HPP

#include "hpslab/common.hpp"
#include "hpslab/model.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <vector>

namespace hpslab {

struct HpsSolution {
    Vec beta_hat;
    double a_hat = 0.0;          // head ratio A1/A2
    double objective_value = 0.0;
};

struct RiskReport {
    double excess_risk = 0.0;
    double bias = 0.0;
    double variance = 0.0;
    double a = 0.0;
    int replicates = 0;
    double stderr_mean = 0.0;
};

namespace detail {

// Cached Gram-space view of a dataset pair; every per-a solve is O(p^3)
// with no further O(n p^2) work.
struct GramPair {
    Mat g1, g2;   // X1'X1, X2'X2
    Vec b1, b2;   // X1'Y1, X2'Y2
    double yy1 = 0.0, yy2 = 0.0;
    int n1 = 0, n2 = 0, p = 0;

    GramPair(const Dataset& d1, const Dataset& d2) {
        if (d1.p() != d2.p()) throw ConfigError("dataset dimension mismatch");
        g1 = d1.X.transpose() * d1.X;
        g2 = d2.X.transpose() * d2.X;
        b1 = d1.X.transpose() * d1.Y;
        b2 = d2.X.transpose() * d2.Y;
        yy1 = d1.Y.squaredNorm();
        yy2 = d2.Y.squaredNorm();
        n1 = d1.n();
        n2 = d2.n();
        p = d1.p();
    }
};

inline Eigen::LLT<Mat> factor_spd(const Mat& m, const char* what) {
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        throw NumericError(std::string(what) + ": matrix numerically singular (cond ~ " +
                           std::to_string(hi / std::max(lo, 1e-300)) + ")");
    }
    return llt;
}

// HPS estimate and profile objective value at head ratio a, from cached Grams.
inline Vec hps_beta_at(const GramPair& g, double a, Eigen::LLT<Mat>* llt_out = nullptr) {
    Mat sig = a * a * g.g1 + g.g2;
    auto llt = factor_spd(sig, "sigma_hat");
    Vec beta = llt.solve(a * g.b1 + g.b2);
    if (llt_out) *llt_out = std::move(llt);
    return beta;
}

inline double hps_objective_at(const GramPair& g, double a, const Vec& beta) {
    const double q1 = beta.dot(g.g1 * beta);
    const double q2 = beta.dot(g.g2 * beta);
    return a * a * q1 - 2.0 * a * beta.dot(g.b1) + g.yy1 + q2 - 2.0 * beta.dot(g.b2) + g.yy2;
}

inline double hps_objective_at(const GramPair& g, double a) {
    return hps_objective_at(g, a, hps_beta_at(g, a));
}

}  // namespace detail

// a^2 X1'X1 + X2'X2
inline Mat sigma_hat(double a, const Dataset& d1, const Dataset& d2) {
    if (d1.p() != d2.p()) throw ConfigError("sigma_hat: dimension mismatch");
    return a * a * (d1.X.transpose() * d1.X) + d2.X.transpose() * d2.X;
}

inline Vec fit_ols(const Dataset& d) {
    if (d.n() <= d.p()) throw ConfigError("fit_ols: requires n > p");
    Mat gram = d.X.transpose() * d.X;
    auto llt = detail::factor_spd(gram, "fit_ols");
    return llt.solve(d.X.transpose() * d.Y);
}

inline Vec fit_ridge(const Dataset& d, double k) {
    if (k < 0.0) throw ConfigError("fit_ridge: k must be nonnegative");
    Mat gram = d.X.transpose() * d.X;
    gram.diagonal().array() += k;
    auto llt = detail::factor_spd(gram, "fit_ridge");
    return llt.solve(d.X.transpose() * d.Y);
}

inline Vec fit_avg(double b, const Vec& ols1, const Vec& ols2) {
    if (b < 0.0 || b > 1.0) throw ConfigError("fit_avg: b must lie in [0, 1]");
    return b * ols1 + (1.0 - b) * ols2;
}

inline double validation_mse(const Vec& beta, const Dataset& val) {
    return (val.X * beta - val.Y).squaredNorm() / static_cast<double>(val.n());
}

// Smallest candidate achieving the minimal validation MSE (ties go to the
// earlier candidate, so pass candidates sorted ascending).
template <typename FitFn>
std::size_t select_hyperparam(const std::vector<double>& candidates, FitFn&& fit,
                              const Dataset& validation) {
    if (candidates.empty()) throw ConfigError("select_hyperparam: no candidates");
    std::size_t best = 0;
    double best_mse = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double mse = validation_mse(fit(candidates[i]), validation);
        if (mse < best_mse) {
            best_mse = mse;
            best = i;
        }
    }
    return best;
}

inline HpsSolution fit_hps_fixed_a(double a, const Dataset& d1, const Dataset& d2) {
    if (d2.n() <= d2.p()) throw ConfigError("fit_hps_fixed_a: requires n2 > p");
    detail::GramPair g(d1, d2);
    HpsSolution sol;
    sol.beta_hat = detail::hps_beta_at(g, a);
    sol.a_hat = a;
    sol.objective_value = detail::hps_objective_at(g, a, sol.beta_hat);
    return sol;
}

struct HpsSearch {
    double lo = -10.0;
    double hi = 10.0;
    int grid_points = 201;
    double refine_tol = 1e-6;
};

// Profile objective over a: grid scan, then golden-section refinement around
// the best grid cell. Ties resolve to the smallest |a|.
inline HpsSolution fit_hps(const Dataset& d1, const Dataset& d2, const HpsSearch& search = {}) {
    if (d2.n() <= d2.p()) throw ConfigError("fit_hps: requires n2 > p");
    if (search.grid_points < 3) throw ConfigError("fit_hps: need at least 3 grid points");
    detail::GramPair g(d1, d2);

    const int m = search.grid_points;
    const double step = (search.hi - search.lo) / (m - 1);
    int best_i = 0;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> vals(m);
    for (int i = 0; i < m; ++i) {
        const double a = search.lo + step * i;
        vals[i] = detail::hps_objective_at(g, a);
        const bool better = vals[i] < best_val ||
                            (vals[i] == best_val &&
                             std::abs(a) < std::abs(search.lo + step * best_i));
        if (better) {
            best_val = vals[i];
            best_i = i;
        }
    }

    double lo = search.lo + step * std::max(best_i - 1, 0);
    double hi = search.lo + step * std::min(best_i + 1, m - 1);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = detail::hps_objective_at(g, x1);
    double f2 = detail::hps_objective_at(g, x2);
    while (hi - lo > search.refine_tol) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = detail::hps_objective_at(g, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = detail::hps_objective_at(g, x2);
        }
    }

    HpsSolution sol;
    sol.a_hat = 0.5 * (lo + hi);
    sol.beta_hat = detail::hps_beta_at(g, sol.a_hat);
    sol.objective_value = detail::hps_objective_at(g, sol.a_hat, sol.beta_hat);
    return sol;
}

// (beta_hat - beta)' Sigma2 (beta_hat - beta)
inline double excess_risk(const Vec& beta_hat, const Vec& beta_true,
                          const CovarianceSpec& sigma2_cov) {
    if (beta_hat.size() != beta_true.size() || beta_hat.size() != sigma2_cov.dim)
        throw ConfigError("excess_risk: shape mismatch");
    CovarianceFactor f(sigma2_cov);
    return f.quadratic(beta_hat - beta_true);
}

// Exact partial expectation over the noise: bias and variance of the HPS
// estimator at ratio a, deterministic in (X1, X2). One factorization of
// sigma_hat(a) serves both terms.
inline RiskReport empirical_bias_variance(double a, const Dataset& d1, const Dataset& d2,
                                          const Vec& beta1, const Vec& beta2, double sigma,
                                          const CovarianceSpec& sigma2_cov) {
    if (d2.n() <= d2.p()) throw ConfigError("empirical_bias_variance: requires n2 > p");
    const int p = d2.p();
    if (beta1.size() != p || beta2.size() != p || sigma2_cov.dim != p)
        throw ConfigError("empirical_bias_variance: shape mismatch");

    Mat g1 = d1.X.transpose() * d1.X;
    Mat sig = a * a * g1 + d2.X.transpose() * d2.X;
    auto llt = detail::factor_spd(sig, "empirical_bias_variance");

    CovarianceFactor f2(sigma2_cov);
    RiskReport report;
    report.a = a;

    Vec shift = g1 * (a * beta1 - a * a * beta2);
    Vec u = llt.solve(shift);
    report.bias = f2.quadratic(u);

    Mat inv_sig = llt.solve(Mat::Identity(p, p));
    double tr;
    switch (sigma2_cov.kind) {
        case CovKind::Identity:
            tr = inv_sig.trace();
            break;
        case CovKind::Diagonal:
            tr = (sigma2_cov.spectrum.array() * inv_sig.diagonal().array()).sum();
            break;
        case CovKind::Dense:
            tr = (sigma2_cov.dense.array() * inv_sig.array()).sum();
            break;
        default:
            tr = 0.0;
    }
    report.variance = sigma * sigma * tr;
    report.excess_risk = report.bias + report.variance;
    return report;
}

}  // namespace hpslab

#endif  // HPSLAB_ESTIMATORS_HPP
