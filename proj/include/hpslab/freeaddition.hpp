// Model-shift and isotropic-target limit formulas obtained from the free
// additive convolution of two Marchenko-Pastur laws: the closed forms L1(a),
// L2(a), kappa(a), the scalar triplet (f1, f2, f3), and the deformed-MP
// quantities (g0, y0) used when the source covariance is non-isotropic.

#ifndef HPSLAB_FREEADDITION_HPP
#define HPSLAB_FREEADDITION_HPP

#include "hpslab/common.hpp"

#include <cmath>
#include <limits>

namespace hpslab {

struct ModelShiftLimits {
    double L1 = 0.0;
    double L2 = 0.0;           // NaN at a == 0, where only a^2 L2 extends continuously
    double kappa = 0.0;
    double bias_factor = 0.0;  // a^2 * L2(a); multiply by ||Sigma^{1/2}(beta1 - a beta2)||^2
    double a = 0.0;
    double xi1 = 0.0, xi2 = 0.0;
};

struct DeformedMpLimits {
    double y0 = 0.0;
    double f1 = 0.0, f2 = 0.0, f3 = 0.0;
    double variance_factor = 0.0;  // (p/n1) f1; multiply by sigma^2
    double bias_factor = 0.0;      // multiply by 2 mu^2
    double residual = 0.0;         // defining equation of y0 after substitution
};

struct FTriplet {
    double f1 = 0.0, f2 = 0.0, f3 = 0.0;
};

// f1 is the positive root of alpha(xi1+xi2-xi1 xi2) f^2 + [alpha(1-xi2)+(1-xi1)] f - 1 = 0;
// f2 and f3 follow from it.
inline FTriplet f_alpha_triplet(double alpha, double xi1, double xi2) {
    if (!(alpha > 0.0)) throw ConfigError("f_alpha_triplet: alpha must be positive");
    if (!(xi1 > 0.0) || !(xi2 > 0.0)) throw ConfigError("f_alpha_triplet: xi must be positive");
    if (!(xi2 < 1.0)) throw ConfigError("f_alpha_triplet: xi2 must be < 1");
    const double b = alpha * (1.0 - xi2) + (1.0 - xi1);
    const double q = alpha * (xi1 + xi2 - xi1 * xi2);
    FTriplet f;
    f.f1 = 2.0 / (b + std::sqrt(b * b + 4.0 * q));
    if (!(f.f1 > 0.0)) throw NumericError("f_alpha_triplet: positive branch lost");
    const double denom = 1.0 / (f.f1 * f.f1) - xi1 / ((1.0 + xi1 * f.f1) * (1.0 + xi1 * f.f1));
    f.f2 = 1.0 / denom;
    f.f3 = alpha / (1.0 + alpha * xi2 * f.f1);
    return f;
}

// Closed forms of the excess-risk limits when both tasks share one covariance.
inline ModelShiftLimits model_shift_limits(double a, double p, double n1, double n2) {
    if (!(n2 > p)) throw ConfigError("model_shift_limits: requires n2 > p");
    if (!(n1 >= 1.0)) throw ConfigError("model_shift_limits: requires n1 >= 1");
    ModelShiftLimits out;
    out.a = a;
    out.xi1 = p / n1;
    out.xi2 = p / n2;

    const double s = (n2 - p) + a * a * (n1 - p);
    const double disc = s * s + 4.0 * a * a * (n1 * p + n2 * p - p * p);
    out.L1 = 2.0 * p / (s + std::sqrt(disc));
    if (!(out.L1 > 0.0)) throw NumericError("model_shift_limits: L1 branch not positive");

    const double l1 = out.L1;
    const double xi1 = out.xi1;
    const double xi2 = out.xi2;
    const double kappa_core = 1.0 - (a * a * a * a * l1 * l1) / (xi1 * (1.0 + a * a * l1) * (1.0 + a * a * l1));
    if (std::abs(kappa_core) < 1e-14)
        throw NumericError("model_shift_limits: kappa denominator vanished");
    out.kappa = (l1 * l1) / (xi2 * xi2 * (1.0 + l1) * (1.0 + l1)) / kappa_core;

    const double num = 1.0 - 2.0 * l1 / (xi2 * (1.0 + l1)) + out.kappa;
    const double den = 1.0 - xi2 * out.kappa;
    if (std::abs(den) < 1e-14)
        throw NumericError("model_shift_limits: L2 denominator vanished");
    out.bias_factor = num / den;
    out.L2 = a == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                      : out.bias_factor / (a * a);
    return out;
}

namespace detail {

inline double g0_of(double x, const Vec& sigma1_spectrum, double n1) {
    double sum = 0.0;
    for (int i = 0; i < sigma1_spectrum.size(); ++i)
        sum += sigma1_spectrum[i] / (1.0 + x * sigma1_spectrum[i]);
    return sum / n1 - 1.0 / x;
}

inline double g0_prime_of(double x, const Vec& sigma1_spectrum, double n1) {
    double sum = 0.0;
    for (int i = 0; i < sigma1_spectrum.size(); ++i) {
        const double t = sigma1_spectrum[i] / (1.0 + x * sigma1_spectrum[i]);
        sum += t * t;
    }
    return -sum / n1 + 1.0 / (x * x);
}

}  // namespace detail

// Bias and variance limits for the random-effect model with an isotropic
// target covariance and an arbitrary source spectrum, evaluated at a = 1.
// y0 is the unique positive root of (n1+n2-p)/n1 + g0(x)(1+x) = 0, found by
// bisection on a log-expanded bracket.
inline DeformedMpLimits deformed_mp_limits(const Vec& sigma1_spectrum, double n1, double n2,
                                           double p) {
    if (sigma1_spectrum.size() != static_cast<int>(p))
        throw ConfigError("deformed_mp_limits: spectrum length != p");
    if (!(n2 > p)) throw ConfigError("deformed_mp_limits: requires n2 > p");
    if ((sigma1_spectrum.array() <= 0.0).any())
        throw ConfigError("deformed_mp_limits: spectrum must be positive");

    const double target = (n1 + n2 - p) / n1;
    auto equation = [&](double x) {
        return target + detail::g0_of(x, sigma1_spectrum, n1) * (1.0 + x);
    };

    double lo = 1e-8, hi = 1e8;
    int expand = 0;
    while (!(equation(lo) < 0.0) && expand < 3) {
        lo *= 0.1;
        ++expand;
    }
    expand = 0;
    while (!(equation(hi) > 0.0) && expand < 3) {
        hi *= 10.0;
        ++expand;
    }
    if (!(equation(lo) < 0.0 && equation(hi) > 0.0))
        throw NumericError("deformed_mp_limits: failed to bracket y0");

    // Bisect in log x: the equation is monotone through the unique root.
    double llo = std::log(lo), lhi = std::log(hi);
    for (int it = 0; it < 200 && lhi - llo > 1e-14; ++it) {
        const double mid = 0.5 * (llo + lhi);
        if (equation(std::exp(mid)) < 0.0)
            llo = mid;
        else
            lhi = mid;
    }

    DeformedMpLimits out;
    out.y0 = std::exp(0.5 * (llo + lhi));
    out.residual = std::abs(equation(out.y0));

    const double g = detail::g0_of(out.y0, sigma1_spectrum, n1);
    const double gp = detail::g0_prime_of(out.y0, sigma1_spectrum, n1);
    out.f1 = (n1 / p) * out.y0 + (n1 - p) / (p * g);
    out.f2 = n1 / (p * gp) - (n1 - p) / (p * g * g);
    out.f3 = -g;
    if (!(out.f1 > 0.0)) throw NumericError("deformed_mp_limits: f1 not positive");

    out.variance_factor = (p / n1) * out.f1;
    const double num = 1.0 - 2.0 * out.f1 * out.f3 + out.f2 * out.f3 * out.f3;
    const double den = 1.0 - (p / n2) * out.f2 * out.f3 * out.f3;
    if (std::abs(den) < 1e-14)
        throw NumericError("deformed_mp_limits: bias denominator vanished");
    out.bias_factor = num / den;
    return out;
}

}  // namespace hpslab

#endif  // HPSLAB_FREEADDITION_HPP
