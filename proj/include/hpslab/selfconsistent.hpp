// Deterministic solvers for the coupled scalar systems that parameterize the
// spectral limit of a weighted sum of two sample covariance matrices, plus
// the covariate-shift variance limit and the combined-shift bias estimate.

#ifndef HPSLAB_SELFCONSISTENT_HPP
#define HPSLAB_SELFCONSISTENT_HPP

#include "hpslab/common.hpp"
#include "hpslab/model.hpp"

#include <cmath>
#include <iostream>

namespace hpslab {

struct AlphaPair {
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double residual = 0.0;  // max violation of the two defining equations
};

struct AlphaDeriv {
    double alpha3 = 0.0;
    double alpha4 = 0.0;
    double residual = 0.0;
};

namespace detail {

// f(alpha1) = alpha1 + (1/n) sum (a li)^2 alpha1 / ((a li)^2 alpha1 + 1-gamma-alpha1),
// strictly increasing on [0, 1-gamma]; the root of f = n1/n pins alpha1.
inline double alpha_f(double alpha1, double a, const Vec& lambdas, double n, double gamma) {
    const double alpha2 = 1.0 - gamma - alpha1;
    double sum = 0.0;
    for (int i = 0; i < lambdas.size(); ++i) {
        const double c = a * lambdas[i] * a * lambdas[i];
        sum += c * alpha1 / (c * alpha1 + alpha2);
    }
    return alpha1 + sum / n;
}

inline double alpha_pair_residual(const AlphaPair& s, double a, const Vec& lambdas, double n1,
                                  double n2, double p) {
    const double n = n1 + n2;
    double sum = 0.0;
    for (int i = 0; i < lambdas.size(); ++i) {
        const double c = a * lambdas[i] * a * lambdas[i];
        sum += c * s.alpha1 / (c * s.alpha1 + s.alpha2);
    }
    const double r1 = s.alpha1 + s.alpha2 - (1.0 - p / n);
    const double r2 = s.alpha1 + sum / n - n1 / n;
    return std::max(std::abs(r1), std::abs(r2));
}

}  // namespace detail

// Solves the two-equation system for (alpha1, alpha2) by eliminating
// alpha2 = 1 - p/n - alpha1 and bisecting the monotone scalar equation.
inline AlphaPair solve_alpha12(double a, const ShiftMatrix& shift, double n1, double n2,
                               double p) {
    const int ps = shift.p();
    if (ps != static_cast<int>(p)) throw ConfigError("solve_alpha12: spectrum length != p");
    if (!(n2 > p)) throw ConfigError("solve_alpha12: requires n2 > p");
    if (n1 < 0.0) throw ConfigError("solve_alpha12: requires n1 >= 0");
    if ((shift.lambdas.array() <= 0.0).any())
        throw ConfigError("solve_alpha12: spectrum must be positive");
    if (!std::isfinite(a)) throw ConfigError("solve_alpha12: a must be finite");
    if (std::abs(a) > 1e3) {
        std::cerr << "warning: solve_alpha12 clamping |a| from " << std::abs(a)
                  << " to 1e3 to preserve conditioning of the spectral sums\n";
        a = a > 0.0 ? 1e3 : -1e3;
    }

    const double n = n1 + n2;
    const double gamma = p / n;
    const double r1 = n1 / n;

    AlphaPair sol;
    if (n1 == 0.0) {
        sol.alpha1 = 0.0;
        sol.alpha2 = 1.0 - gamma;
        sol.residual = detail::alpha_pair_residual(sol, a, shift.lambdas, n1, n2, p);
        return sol;
    }

    double lo = 0.0;
    double hi = std::min(1.0 - gamma, r1);
    const double f_lo = detail::alpha_f(lo, a, shift.lambdas, n, gamma);
    const double f_hi = detail::alpha_f(hi, a, shift.lambdas, n, gamma);
    if (!(f_lo <= r1 && f_hi >= r1))
        throw NumericError("solve_alpha12: bracket does not straddle the root");

    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (detail::alpha_f(mid, a, shift.lambdas, n, gamma) < r1)
            lo = mid;
        else
            hi = mid;
    }
    sol.alpha1 = 0.5 * (lo + hi);
    sol.alpha2 = 1.0 - gamma - sol.alpha1;
    sol.residual = detail::alpha_pair_residual(sol, a, shift.lambdas, n1, n2, p);
    return sol;
}

// sigma^2/(n1+n2) * sum_i 1/(alpha1 a^2 li^2 + alpha2)
inline double variance_limit(double a, const ShiftMatrix& shift, double n1, double n2, double p,
                             double sigma) {
    AlphaPair s = solve_alpha12(a, shift, n1, n2, p);
    double sum = 0.0;
    for (int i = 0; i < shift.lambdas.size(); ++i) {
        const double c = a * shift.lambdas[i] * a * shift.lambdas[i];
        sum += 1.0 / (s.alpha1 * c + s.alpha2);
    }
    return sigma * sigma * sum / (n1 + n2);
}

// Given (alpha1, alpha2), the derivative system is linear in (alpha3, alpha4):
//   alpha3 + alpha4 = S0
//   alpha3 (1 + alpha2 S1) - alpha4 alpha1 S1 = S2
// with S0 = (1/n) sum 1/D_i, S1 = (1/n) sum (a li)^2 / D_i^2,
// S2 = alpha1 S1, and D_i = (a li)^2 alpha1 + alpha2.
inline AlphaDeriv solve_alpha34(double a, const ShiftMatrix& shift, double n1, double n2,
                                double p, const AlphaPair& alpha) {
    if (shift.p() != static_cast<int>(p)) throw ConfigError("solve_alpha34: spectrum length != p");
    const double n = n1 + n2;
    double s0 = 0.0, s1 = 0.0;
    for (int i = 0; i < shift.lambdas.size(); ++i) {
        const double c = a * shift.lambdas[i] * a * shift.lambdas[i];
        const double d = c * alpha.alpha1 + alpha.alpha2;
        s0 += 1.0 / d;
        s1 += c / (d * d);
    }
    s0 /= n;
    s1 /= n;
    const double s2 = alpha.alpha1 * s1;

    // Substituting alpha4 = S0 - alpha3 into the second equation gives
    // alpha3 (1 + (alpha1 + alpha2) S1) = S2 + S0 alpha1 S1.
    const double denom = 1.0 + (alpha.alpha1 + alpha.alpha2) * s1;
    if (!(std::abs(denom) > 1e-300))
        throw NumericError("solve_alpha34: singular 2x2 system (degenerate spectrum)");
    AlphaDeriv sol;
    sol.alpha3 = (s2 + s0 * alpha.alpha1 * s1) / denom;
    sol.alpha4 = s0 - sol.alpha3;

    double sum2 = 0.0;
    for (int i = 0; i < shift.lambdas.size(); ++i) {
        const double c = a * shift.lambdas[i] * a * shift.lambdas[i];
        const double d = c * alpha.alpha1 + alpha.alpha2;
        sum2 += c * (alpha.alpha2 * sol.alpha3 - alpha.alpha1 * sol.alpha4) / (d * d);
    }
    const double r1 = sol.alpha3 + sol.alpha4 - s0;
    const double r2 = sol.alpha3 + sum2 / n - s2;
    sol.residual = std::max(std::abs(r1), std::abs(r2));
    return sol;
}

struct BiasEstimate {
    double value = 0.0;       // quadratic form through the Pi(a) kernel
    double error_band = 0.0;  // deterministic accuracy band; shrinks as n1/p grows
};

// Bias estimate under combined covariate and model shift: the Pi(a) kernel is
// evaluated in the eigenbasis of Sigma2^{-1/2} Sigma1 Sigma2^{-1/2}, and the
// returned band scales like (1 + sqrt(p/n1))^4 - 1, so the estimate tightens
// as n1/p grows.
inline BiasEstimate bias_estimate_pi(double a, const CovarianceSpec& sigma1,
                                     const CovarianceSpec& sigma2, double n1, double n2,
                                     const Vec& beta1, const Vec& beta2) {
    const int p = sigma1.dim;
    if (sigma2.dim != p || beta1.size() != p || beta2.size() != p)
        throw ConfigError("bias_estimate_pi: shape mismatch");
    if (!(n2 > p)) throw ConfigError("bias_estimate_pi: requires n2 > p");

    BiasEstimate out;
    if (a == 0.0) return out;

    CovarianceFactor f1(sigma1);
    CovarianceFactor f2(sigma2);

    // Eigenbasis of C = Sigma2^{-1/2} Sigma1 Sigma2^{-1/2}; eigenvalues are
    // the squared singular values of the shift matrix.
    Mat sigma1_dense = f1.materialize(1.0);
    Mat c = f2.right_apply_power(f2.right_apply_power(sigma1_dense, -0.5).transpose(), -0.5);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (c + c.transpose()));
    if (es.info() != Eigen::Success) throw NumericError("bias_estimate_pi: eigensolve failed");
    Vec lam2 = es.eigenvalues().cwiseMax(0.0);

    ShiftMatrix shift;
    shift.lambdas = lam2.array().sqrt();
    std::reverse(shift.lambdas.data(), shift.lambdas.data() + p);
    AlphaPair al = solve_alpha12(a, shift, n1, n2, p);
    AlphaDeriv ad = solve_alpha34(a, shift, n1, n2, p, al);

    const Vec gap = beta1 - a * beta2;
    // u = Sigma2^{-1/2} Sigma1 gap, expressed in the eigenbasis of C.
    Vec u = f2.apply_power(f1.apply_power(gap, 1.0), -0.5);
    Vec u_tilde = es.eigenvectors().transpose() * u;

    const double n = n1 + n2;
    const double pref = (n1 * n1 * a * a) / (n * n);
    double quad = 0.0;
    for (int i = 0; i < p; ++i) {
        const double c2 = a * a * lam2[i];
        const double den = al.alpha1 * c2 + al.alpha2;
        quad += u_tilde[i] * u_tilde[i] * (ad.alpha3 * c2 + ad.alpha4 + 1.0) / (den * den);
    }
    out.value = pref * quad;

    const double lam_max = shift.lambdas[0];
    const double lam_min = shift.lambdas[p - 1];
    const double gap_energy = f1.quadratic(gap);
    const double factor = std::pow(1.0 + std::sqrt(p / n1), 4.0) - 1.0;
    const double den_edge = a * a * lam_min * lam_min * std::pow(std::sqrt(n1) - std::sqrt(p), 2.0) +
                            std::pow(std::sqrt(n2) - std::sqrt(p), 2.0);
    out.error_band = factor * (a * a * lam_max * lam_max * n1 * n1 * gap_energy) /
                     (den_edge * den_edge);
    return out;
}

}  // namespace hpslab

#endif  // HPSLAB_SELFCONSISTENT_HPP
