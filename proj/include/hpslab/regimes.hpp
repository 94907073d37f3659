// Closed-form classifiers for positive/negative information transfer: the
// model-shift regime of a (mu, sigma, p, n2) configuration, the covariate
// shift dichotomy comparator, and the optimal multi-task width rule.

#ifndef HPSLAB_REGIMES_HPP
#define HPSLAB_REGIMES_HPP

#include "hpslab/common.hpp"
#include "hpslab/freeaddition.hpp"
#include "hpslab/selfconsistent.hpp"

#include <cmath>
#include <optional>

namespace hpslab {

enum class Regime { AlwaysPositive, Crossover, AlwaysNegative };

struct RegimeVerdict {
    Regime regime = Regime::AlwaysPositive;
    std::optional<double> rho;  // crossover threshold n1 = rho * p
    double mu2_low = 0.0;       // sigma^2 p / (2(n2-p))
    double mu2_high = 0.0;      // sigma^2 n2 / (2(n2-p))
    bool outside_proven_range = false;  // p < n2 < 3p
    // With p < n2 < 3p and mu^2 >= mu2_high the sign pattern can open a
    // positive window (r_lo, r_hi); rho reports the upper edge and this
    // field the lower one.
    std::optional<double> rho_window_low;
};

// Sign pattern of the quadratic C2 n1^2 + C1 n1 + C0 that compares the
// model-shift risk limit against the OLS limit.
inline RegimeVerdict classify_model_shift(double mu, double sigma, double p, double n2) {
    if (!(n2 > p)) throw ConfigError("classify_model_shift: requires n2 > p");
    if (mu == 0.0 && sigma == 0.0)
        throw ConfigError("classify_model_shift: degenerate mu = sigma = 0");

    RegimeVerdict v;
    v.mu2_low = sigma * sigma * p / (2.0 * (n2 - p));
    v.mu2_high = sigma * sigma * n2 / (2.0 * (n2 - p));
    v.outside_proven_range = n2 < 3.0 * p;

    if (sigma == 0.0) {
        v.regime = Regime::AlwaysNegative;
        return v;
    }

    const double mu2 = mu * mu;
    const double s2 = sigma * sigma;
    const double c2 = 2.0 * mu2 * (n2 - p) - s2 * p;
    const double c1 = 2.0 * mu2 * (n2 - p) * (n2 - p) - 2.0 * s2 * p * n2;
    const double c0 = 2.0 * mu2 * (n2 - p) * p * n2 - s2 * p * n2 * n2;

    if (c2 < 0.0 || (c2 == 0.0 && c1 <= 0.0 && c0 <= 0.0)) {
        v.regime = Regime::AlwaysPositive;
        return v;
    }
    if (c2 == 0.0) {
        // Linear fall-through; c1 > 0 cannot occur with c2 = 0 here, but the
        // classification stays by sign pattern.
        if (c0 >= 0.0) {
            v.regime = Regime::AlwaysNegative;
        } else {
            v.regime = Regime::Crossover;
            v.rho = -c0 / c1 / p;
        }
        return v;
    }

    // c2 > 0 from here on.
    if (c0 < 0.0) {
        // Exactly one positive root; cancellation-safe quadratic formula.
        const double disc = std::sqrt(c1 * c1 - 4.0 * c2 * c0);
        const double q = -0.5 * (c1 + (c1 >= 0.0 ? disc : -disc));
        const double r1 = q / c2;
        const double r2 = c0 / q;
        v.regime = Regime::Crossover;
        v.rho = std::max(r1, r2) / p;
        return v;
    }
    if (c1 >= 0.0) {
        v.regime = Regime::AlwaysNegative;
        return v;
    }
    // c2 > 0, c1 < 0, c0 >= 0: possible only for n2 < 3p. Two positive roots
    // open a window of positive transfer if the discriminant is positive.
    const double disc2 = c1 * c1 - 4.0 * c2 * c0;
    if (disc2 <= 0.0) {
        v.regime = Regime::AlwaysNegative;
        return v;
    }
    const double sq = std::sqrt(disc2);
    const double q = -0.5 * (c1 - sq);  // c1 < 0
    v.regime = Regime::Crossover;
    v.rho = q / c2 / p;
    v.rho_window_low = c0 / q / p;
    return v;
}

// Limiting HPS risk at a = 1 in the random-effect model.
inline double model_shift_risk_limit(double n1, double mu, double sigma, double p, double n2) {
    ModelShiftLimits lim = model_shift_limits(1.0, p, n1, n2);
    return sigma * sigma * lim.L1 + 2.0 * mu * mu * lim.bias_factor;
}

// n1 at which the limiting HPS risk curve crosses the OLS level, located by
// bisection; agrees with the quadratic root of classify_model_shift. Returns
// nullopt when the curve never rises above OLS, and 0 when it starts above.
inline std::optional<double> limit_curve_crossing(double mu, double sigma, double p, double n2,
                                                  double n1_max = 1e9) {
    const double ols = sigma * sigma * p / (n2 - p);
    auto diff = [&](double n1) { return model_shift_risk_limit(n1, mu, sigma, p, n2) - ols; };
    double lo = 1.0;
    if (diff(lo) > 0.0) return 0.0;  // negative transfer from the start
    double hi = p;
    while (diff(hi) < 0.0) {
        hi *= 2.0;
        if (hi > n1_max) return std::nullopt;  // never crosses: always positive
    }
    for (int it = 0; it < 200 && (hi - lo) > 1e-9 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (diff(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

enum class ShiftComparison { ShiftHelps, ShiftHurts, Tie };

struct CovariateShiftVerdict {
    ShiftComparison comparison = ShiftComparison::Tie;
    double g_shift = 0.0;     // variance limit under the shifted spectrum
    double g_identity = 0.0;  // variance limit with matching covariances
    bool paired_spectrum = true;  // dichotomy guarantee only for paired spectra
};

// Compares the a = 1 variance limit under the given shift spectrum against
// the identity spectrum. The dichotomy guarantee applies to spectra paired
// as lambda_{p+1-i} = 1/lambda_i.
inline CovariateShiftVerdict compare_covariate_shift(const ShiftMatrix& shift, double n1,
                                                     double n2, double p, double sigma) {
    CovariateShiftVerdict v;
    const int ps = shift.p();
    for (int i = 0; i < ps / 2; ++i) {
        if (std::abs(shift.lambdas[i] * shift.lambdas[ps - 1 - i] - 1.0) > 1e-8) {
            v.paired_spectrum = false;
            break;
        }
    }
    v.g_shift = variance_limit(1.0, shift, n1, n2, p, sigma);
    v.g_identity = sigma * sigma * p / (n1 + n2 - p);
    const double tol = 1e-10;
    if (v.g_shift < v.g_identity - tol)
        v.comparison = ShiftComparison::ShiftHelps;
    else if (v.g_shift > v.g_identity + tol)
        v.comparison = ShiftComparison::ShiftHurts;
    else
        v.comparison = ShiftComparison::Tie;
    return v;
}

struct WidthVerdict {
    int r_star = 1;
    bool positive_transfer = true;
    double mu2_threshold = 0.0;  // sigma^2 p^2 / ((n-p) tr Sigma)
};

// Random-effect multi-task rule: below the threshold r = 1 wins and transfer
// is positive; at or above, no width r < t transfers positively.
inline WidthVerdict optimal_width_multitask(double mu, double sigma, double p, double n,
                                            double trace_sigma, int t) {
    if (!(n > p)) throw ConfigError("optimal_width_multitask: requires n > p");
    if (t < 2) throw ConfigError("optimal_width_multitask: requires t >= 2");
    if (!(trace_sigma > 0.0)) throw ConfigError("optimal_width_multitask: trace must be positive");
    WidthVerdict v;
    v.mu2_threshold = sigma * sigma * p * p / ((n - p) * trace_sigma);
    if (mu * mu < v.mu2_threshold) {
        v.r_star = 1;
        v.positive_transfer = true;
    } else {
        v.r_star = t - 1;
        v.positive_transfer = false;
    }
    return v;
}

}  // namespace hpslab

#endif  // HPSLAB_REGIMES_HPP
