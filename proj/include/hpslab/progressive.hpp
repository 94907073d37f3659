// Progressive source enlargement for the linear HPS estimator: shuffle the
// source pool, add one batch per stage, refit in closed form, and stop when
// the target validation risk rises (or drops below a target threshold).

#ifndef HPSLAB_PROGRESSIVE_HPP
#define HPSLAB_PROGRESSIVE_HPP

#include "hpslab/common.hpp"
#include "hpslab/estimators.hpp"
#include "hpslab/rng.hpp"

#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

namespace hpslab {

enum class StopReason { RiskIncrease, ThresholdReached, Exhausted };

struct ProgressiveTrace {
    std::vector<int> stage_sizes;      // cumulative source rows per visited stage
    std::vector<double> stage_risks;   // validation MSE per visited stage
    int stop_stage = 0;                // 1-based stage at which the run ended
    int best_stage = 0;                // 1-based stage with the lowest risk
    StopReason stop_reason = StopReason::Exhausted;
};

struct ProgressiveResult {
    ProgressiveTrace trace;
    HpsSolution best;  // estimator from the best stage seen, not the stopping stage
};

struct ProgressiveOptions {
    std::optional<double> tau;  // stop once validation risk falls below this
    int patience = 1;           // consecutive risk increases tolerated before stopping
    HpsSearch search;
};

inline ProgressiveResult progressive_hps(const Dataset& d1, const Dataset& d2_train,
                                         const Dataset& d2_val, int num_batches,
                                         std::uint64_t seed,
                                         const ProgressiveOptions& opts = {}) {
    if (num_batches < 1) throw ConfigError("progressive_hps: need at least one batch");
    if (d2_train.n() <= d2_train.p())
        throw ConfigError("progressive_hps: target training set requires n > p");
    if (opts.patience < 1) throw ConfigError("progressive_hps: patience must be >= 1");
    const int n1 = d1.n();
    if (num_batches > n1) throw ConfigError("progressive_hps: more batches than source rows");

    std::vector<int> order(n1);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    // Batch b gets rows [b*n1/S, (b+1)*n1/S).
    auto batch_end = [&](int b) {
        return static_cast<int>((static_cast<std::int64_t>(n1) * (b + 1)) / num_batches);
    };

    ProgressiveResult out;
    HpsSolution best_sol;
    double best_risk = std::numeric_limits<double>::infinity();
    int consecutive_increases = 0;

    for (int stage = 1; stage <= num_batches; ++stage) {
        const int rows = batch_end(stage - 1);
        Dataset cum;
        cum.X = Mat(rows, d1.p());
        cum.Y = Vec(rows);
        for (int i = 0; i < rows; ++i) {
            cum.X.row(i) = d1.X.row(order[i]);
            cum.Y[i] = d1.Y[order[i]];
        }

        HpsSolution sol = fit_hps(cum, d2_train, opts.search);
        const double risk = validation_mse(sol.beta_hat, d2_val);

        out.trace.stage_sizes.push_back(rows);
        out.trace.stage_risks.push_back(risk);
        out.trace.stop_stage = stage;

        if (risk < best_risk) {
            best_risk = risk;
            best_sol = sol;
            out.trace.best_stage = stage;
        }

        if (opts.tau && risk < *opts.tau) {
            out.trace.stop_reason = StopReason::ThresholdReached;
            out.best = best_sol;
            return out;
        }
        if (stage > 1 && risk > out.trace.stage_risks[stage - 2]) {
            if (++consecutive_increases >= opts.patience) {
                out.trace.stop_reason = StopReason::RiskIncrease;
                out.best = best_sol;
                return out;
            }
        } else {
            consecutive_increases = 0;
        }
    }
    out.trace.stop_reason = StopReason::Exhausted;
    out.best = best_sol;
    return out;
}

}  // namespace hpslab

#endif  // HPSLAB_PROGRESSIVE_HPP
