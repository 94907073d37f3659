// Experiment harness: JSON configuration with a strict versioned schema,
// seeded replicate fan-out with index-ordered reduction, theory overlays,
// and CSV/JSON emission. This is the engine behind the command-line tool.

#ifndef HPSLAB_EXPERIMENT_HPP
#define HPSLAB_EXPERIMENT_HPP

#include "hpslab/common.hpp"
#include "hpslab/estimators.hpp"
#include "hpslab/freeaddition.hpp"
#include "hpslab/model.hpp"
#include "hpslab/multitask.hpp"
#include "hpslab/progressive.hpp"
#include "hpslab/regimes.hpp"
#include "hpslab/selfconsistent.hpp"

#include <json.hpp>

#include <array>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace hpslab {

using Json = nlohmann::json;

enum class ExperimentKind {
    VarianceCovshift,
    ModelShift,
    CombinedShift,
    Baselines,
    Multitask,
    Progressive,
    Regimes,
};

struct SpectrumSpec {
    enum class Kind { Identity, Paired, Diagonal } kind = Kind::Identity;
    double value = 1.0;  // Paired: eigenvalues half `value`, half 1/`value`
    std::vector<double> values;

    CovarianceSpec realize(int p) const {
        switch (kind) {
            case Kind::Identity:
                return CovarianceSpec::identity(p);
            case Kind::Paired: {
                if (p % 2 != 0) throw ConfigError("paired spectrum requires even p");
                Vec s(p);
                const double v = value >= 1.0 ? value : 1.0 / value;
                s.head(p / 2).setConstant(v);
                s.tail(p / 2).setConstant(1.0 / v);
                return CovarianceSpec::diagonal(s);
            }
            case Kind::Diagonal: {
                if (static_cast<int>(values.size()) != p)
                    throw ConfigError("diagonal spectrum length != p");
                Vec s = Eigen::Map<const Vec>(values.data(), p);
                return CovarianceSpec::diagonal(s);
            }
        }
        return CovarianceSpec::identity(p);
    }
};

struct ExperimentConfig {
    int schema_version = 1;
    ExperimentKind kind = ExperimentKind::VarianceCovshift;

    int p = 100;
    std::vector<int> n1_values{300};
    int n2 = 300;
    int t = 2;
    std::vector<int> r_values{1};
    int n_val = 0;      // defaults to n2 when 0
    int batches = 10;   // progressive stages

    double mu = 0.0;
    double sigma = 0.5;
    double beta0_norm = 1.0;
    SpectrumSpec sigma1;
    SpectrumSpec sigma2;

    int replicates = 100;
    std::uint64_t master_seed = 1;
    NoiseLaw noise_law = NoiseLaw::Gaussian;
    double student_df = 6.0;
    std::optional<double> tau;  // progressive threshold
    bool tau_ols = false;       // threshold = per-replicate ols validation risk
    std::vector<double> ridge_candidates{0.0, 1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 100.0, 250.0};
    std::vector<double> avg_candidates{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

    std::string output = "result.csv";
    bool strict = false;

    Json resolved() const;
};

namespace detail {

inline void reject_unknown_keys(const Json& obj, const char* where,
                                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError(std::string("unknown key \"") + it.key() + "\" in " + where);
    }
}

inline ExperimentKind parse_kind(const std::string& s) {
    if (s == "variance_covshift") return ExperimentKind::VarianceCovshift;
    if (s == "model_shift") return ExperimentKind::ModelShift;
    if (s == "combined_shift") return ExperimentKind::CombinedShift;
    if (s == "baselines") return ExperimentKind::Baselines;
    if (s == "multitask") return ExperimentKind::Multitask;
    if (s == "progressive") return ExperimentKind::Progressive;
    if (s == "regimes") return ExperimentKind::Regimes;
    throw ConfigError("unknown experiment kind \"" + s + "\"");
}

inline const char* kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::VarianceCovshift: return "variance_covshift";
        case ExperimentKind::ModelShift: return "model_shift";
        case ExperimentKind::CombinedShift: return "combined_shift";
        case ExperimentKind::Baselines: return "baselines";
        case ExperimentKind::Multitask: return "multitask";
        case ExperimentKind::Progressive: return "progressive";
        case ExperimentKind::Regimes: return "regimes";
    }
    return "?";
}

inline NoiseLaw parse_noise_law(const std::string& s) {
    if (s == "gaussian") return NoiseLaw::Gaussian;
    if (s == "rademacher") return NoiseLaw::Rademacher;
    if (s == "student_t") return NoiseLaw::StudentT;
    throw ConfigError("unknown noise law \"" + s + "\"");
}

inline const char* noise_law_name(NoiseLaw law) {
    switch (law) {
        case NoiseLaw::Gaussian: return "gaussian";
        case NoiseLaw::Rademacher: return "rademacher";
        case NoiseLaw::StudentT: return "student_t";
    }
    return "?";
}

inline SpectrumSpec parse_spectrum(const Json& j, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    reject_unknown_keys(j, where, {"kind", "value", "values"});
    SpectrumSpec s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "identity") {
        s.kind = SpectrumSpec::Kind::Identity;
    } else if (kind == "paired") {
        s.kind = SpectrumSpec::Kind::Paired;
        s.value = j.at("value").get<double>();
        if (!(s.value > 0.0)) throw ConfigError(std::string(where) + ": value must be positive");
    } else if (kind == "diagonal") {
        s.kind = SpectrumSpec::Kind::Diagonal;
        s.values = j.at("values").get<std::vector<double>>();
    } else {
        throw ConfigError(std::string(where) + ": unknown spectrum kind \"" + kind + "\"");
    }
    return s;
}

inline Json spectrum_json(const SpectrumSpec& s) {
    switch (s.kind) {
        case SpectrumSpec::Kind::Identity: return Json{{"kind", "identity"}};
        case SpectrumSpec::Kind::Paired: return Json{{"kind", "paired"}, {"value", s.value}};
        case SpectrumSpec::Kind::Diagonal: return Json{{"kind", "diagonal"}, {"values", s.values}};
    }
    return Json{};
}

inline std::vector<int> parse_int_or_array(const Json& j, const char* where) {
    std::vector<int> out;
    if (j.is_number_integer()) {
        out.push_back(j.get<int>());
    } else if (j.is_array()) {
        for (const auto& v : j) out.push_back(v.get<int>());
    } else {
        throw ConfigError(std::string(where) + " must be an integer or an array of integers");
    }
    if (out.empty()) throw ConfigError(std::string(where) + " must not be empty");
    return out;
}

// Deterministic replicate fan-out: results land in index order regardless of
// thread count, and the reduction always runs in index order.
inline std::vector<double> parallel_map(int count, int threads,
                                        const std::function<double(int)>& fn) {
    std::vector<double> out(count);
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int workers = std::min(threads, count);
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) out[i] = fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

struct MeanStderr {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double stderr_mean = std::numeric_limits<double>::quiet_NaN();
};

inline MeanStderr reduce(const std::vector<double>& xs) {
    MeanStderr m;
    if (xs.empty()) return m;
    double sum = 0.0;
    for (double x : xs) sum += x;
    m.mean = sum / xs.size();
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - m.mean) * (x - m.mean);
        m.stderr_mean = std::sqrt(ss / (xs.size() - 1) / xs.size());
    } else {
        m.stderr_mean = 0.0;
    }
    return m;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace detail

inline Json ExperimentConfig::resolved() const {
    Json dims{{"p", p}, {"n1", n1_values}, {"n2", n2}, {"t", t},
              {"r", r_values}, {"n_val", n_val == 0 ? n2 : n_val}, {"batches", batches}};
    Json model{{"mu", mu},
               {"sigma", sigma},
               {"beta0_norm", beta0_norm},
               {"sigma1_spectrum", detail::spectrum_json(sigma1)},
               {"sigma2_spectrum", detail::spectrum_json(sigma2)},
               {"ridge_candidates", ridge_candidates},
               {"avg_candidates", avg_candidates}};
    Json j{{"schema_version", schema_version},
           {"experiment", detail::kind_name(kind)},
           {"dimensions", dims},
           {"model", model},
           {"replicates", replicates},
           {"master_seed", master_seed},
           {"noise_law", detail::noise_law_name(noise_law)},
           {"student_df", student_df},
           {"output", output},
           {"strict", strict}};
    if (tau_ols)
        j["tau"] = "ols";
    else if (tau)
        j["tau"] = *tau;
    return j;
}

inline ExperimentConfig parse_config(const Json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    detail::reject_unknown_keys(j, "config root",
                                {"schema_version", "experiment", "dimensions", "model",
                                 "replicates", "master_seed", "noise_law", "student_df",
                                 "output", "tau", "strict"});
    ExperimentConfig c;
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != 1) throw ConfigError("unsupported schema_version");
    c.kind = detail::parse_kind(j.at("experiment").get<std::string>());

    const Json& dims = j.at("dimensions");
    detail::reject_unknown_keys(dims, "dimensions",
                                {"p", "n1", "n2", "t", "r", "n_val", "batches"});
    c.p = dims.at("p").get<int>();
    if (dims.contains("n1")) c.n1_values = detail::parse_int_or_array(dims["n1"], "dimensions.n1");
    if (dims.contains("n2")) c.n2 = dims["n2"].get<int>();
    if (dims.contains("t")) c.t = dims["t"].get<int>();
    if (dims.contains("r")) c.r_values = detail::parse_int_or_array(dims["r"], "dimensions.r");
    if (dims.contains("n_val")) c.n_val = dims["n_val"].get<int>();
    if (dims.contains("batches")) c.batches = dims["batches"].get<int>();

    if (j.contains("model")) {
        const Json& model = j["model"];
        detail::reject_unknown_keys(model, "model",
                                    {"mu", "sigma", "beta0_norm", "sigma1_spectrum",
                                     "sigma2_spectrum", "ridge_candidates", "avg_candidates"});
        if (model.contains("mu")) c.mu = model["mu"].get<double>();
        if (model.contains("sigma")) c.sigma = model["sigma"].get<double>();
        if (model.contains("beta0_norm")) c.beta0_norm = model["beta0_norm"].get<double>();
        if (model.contains("sigma1_spectrum"))
            c.sigma1 = detail::parse_spectrum(model["sigma1_spectrum"], "model.sigma1_spectrum");
        if (model.contains("sigma2_spectrum"))
            c.sigma2 = detail::parse_spectrum(model["sigma2_spectrum"], "model.sigma2_spectrum");
        if (model.contains("ridge_candidates"))
            c.ridge_candidates = model["ridge_candidates"].get<std::vector<double>>();
        if (model.contains("avg_candidates"))
            c.avg_candidates = model["avg_candidates"].get<std::vector<double>>();
    }

    if (j.contains("replicates")) c.replicates = j["replicates"].get<int>();
    if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<std::uint64_t>();
    if (j.contains("noise_law"))
        c.noise_law = detail::parse_noise_law(j["noise_law"].get<std::string>());
    if (j.contains("student_df")) c.student_df = j["student_df"].get<double>();
    if (j.contains("output")) c.output = j["output"].get<std::string>();
    if (j.contains("tau") && !j["tau"].is_null()) {
        if (j["tau"].is_string()) {
            if (j["tau"].get<std::string>() != "ols")
                throw ConfigError("tau must be a number, null, or \"ols\"");
            c.tau_ols = true;
        } else {
            c.tau = j["tau"].get<double>();
        }
    }
    if (j.contains("strict")) c.strict = j["strict"].get<bool>();

    if (c.p <= 0) throw ConfigError("dimensions.p must be positive");
    if (c.n2 <= c.p) throw ConfigError("dimensions.n2 must exceed p");
    for (int n1 : c.n1_values)
        if (n1 < 0) throw ConfigError("dimensions.n1 entries must be nonnegative");
    if (c.replicates < 0) throw ConfigError("replicates must be nonnegative");
    if (c.sigma < 0.0) throw ConfigError("model.sigma must be nonnegative");
    if (c.mu < 0.0) throw ConfigError("model.mu must be nonnegative");
    if (c.noise_law == NoiseLaw::StudentT && !(c.student_df > 4.0))
        throw ConfigError("student_df must exceed 4");
    c.sigma1.realize(c.p).validate(kDefaultTau, c.strict);
    c.sigma2.realize(c.p).validate(kDefaultTau, c.strict);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file \"" + path + "\"");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    try {
        return parse_config(j);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }
}

struct SweepRow {
    std::string grid_param;
    double grid_value = 0.0;
    detail::MeanStderr empirical;
    double theory = std::numeric_limits<double>::quiet_NaN();
    int replicates = 0;
    std::uint64_t seed_base = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::string csv;
};

namespace detail {

inline Vec spread_beta0(int p, double norm) {
    return Vec::Constant(p, norm / std::sqrt(static_cast<double>(p)));
}

inline std::string render_csv(const std::vector<SweepRow>& rows) {
    std::string out = "grid_param,grid_value,empirical_mean,empirical_stderr,theory_value,"
                      "rel_dev,replicates,seed_base\n";
    for (const auto& r : rows) {
        const double rel = (r.theory != 0.0 && std::isfinite(r.theory))
                               ? (r.empirical.mean - r.theory) / r.theory
                               : std::numeric_limits<double>::quiet_NaN();
        out += r.grid_param + ',' + format_double(r.grid_value) + ',' +
               format_double(r.empirical.mean) + ',' + format_double(r.empirical.stderr_mean) +
               ',' + format_double(r.theory) + ',' + format_double(rel) + ',' +
               std::to_string(r.replicates) + ',' + std::to_string(r.seed_base) + '\n';
    }
    return out;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output path \"" + path + "\"");
    out << content;
    if (!out) throw ConfigError("failed writing output path \"" + path + "\"");
}

inline void write_sidecar(const ExperimentConfig& c) {
    write_file(c.output + ".json", c.resolved().dump(2) + "\n");
}

struct ReplicateDraw {
    Dataset d1, d2;
    Vec beta1, beta2;
};

// One replicate of the two-task random-effect data model. Substreams: 0 for
// the model vectors, 1 and 2 for the two designs, 3 for validation data.
inline ReplicateDraw draw_two_task(const ExperimentConfig& c, int n1, std::uint64_t seed) {
    ReplicateDraw d;
    RandomEffectSpec re{spread_beta0(c.p, c.beta0_norm), c.mu, 2};
    auto betas = sample_random_effect(re, derive_stream(seed, 0));
    d.beta1 = betas[0];
    d.beta2 = betas[1];
    TaskSpec t1{c.sigma1.realize(c.p), d.beta1, c.sigma, std::max(n1, 1), c.student_df};
    TaskSpec t2{c.sigma2.realize(c.p), d.beta2, c.sigma, c.n2, c.student_df};
    if (n1 > 0) d.d1 = generate_dataset(t1, c.noise_law, derive_stream(seed, 1));
    d.d2 = generate_dataset(t2, c.noise_law, derive_stream(seed, 2));
    if (n1 == 0) {
        d.d1.X = Mat::Zero(0, c.p);
        d.d1.Y = Vec::Zero(0);
    }
    return d;
}

}  // namespace detail

// Sweep over n1 of the pooled-estimator variance under covariate shift,
// against the deterministic limit.
inline SweepResult run_variance_covshift(const ExperimentConfig& c, int threads) {
    SweepResult res;
    CovarianceSpec s1 = c.sigma1.realize(c.p);
    CovarianceSpec s2 = c.sigma2.realize(c.p);
    ShiftMatrix shift = shift_spectrum(s1, s2);
    const Vec beta = Vec::Zero(c.p);

    for (std::size_t gi = 0; gi < c.n1_values.size(); ++gi) {
        const int n1 = c.n1_values[gi];
        SweepRow row;
        row.grid_param = "n1";
        row.grid_value = n1;
        row.seed_base = derive_stream(c.master_seed, gi);
        row.replicates = c.replicates;
        row.theory = variance_limit(1.0, shift, n1, c.n2, c.p, c.sigma);
        if (c.replicates > 0) {
            auto vals = detail::parallel_map(c.replicates, threads, [&](int j) {
                const std::uint64_t seed = derive_stream(row.seed_base, j);
                TaskSpec t1{s1, beta, 0.0, n1, c.student_df};
                TaskSpec t2{s2, beta, 0.0, c.n2, c.student_df};
                Dataset d1 = generate_dataset(t1, c.noise_law, derive_stream(seed, 1));
                Dataset d2 = generate_dataset(t2, c.noise_law, derive_stream(seed, 2));
                return empirical_bias_variance(1.0, d1, d2, beta, beta, c.sigma, s2).variance;
            });
            row.empirical = detail::reduce(vals);
        }
        res.rows.push_back(row);
    }
    res.csv = detail::render_csv(res.rows);
    return res;
}

// Sweep over n1 of the HPS excess risk in the random-effect model with a
// shared covariance, against sigma^2 L1(1) + 2 mu^2 L2(1).
inline SweepResult run_model_shift(const ExperimentConfig& c, int threads) {
    SweepResult res;
    if (c.noise_law != NoiseLaw::Gaussian)
        std::cerr << "warning: model-shift limits are proven for Gaussian designs; "
                     "this run is beyond proven scope\n";
    CovarianceSpec s2 = c.sigma2.realize(c.p);
    for (std::size_t gi = 0; gi < c.n1_values.size(); ++gi) {
        const int n1 = c.n1_values[gi];
        SweepRow row;
        row.grid_param = "n1";
        row.grid_value = n1;
        row.seed_base = derive_stream(c.master_seed, gi);
        row.replicates = c.replicates;
        row.theory = model_shift_risk_limit(n1, c.mu, c.sigma, c.p, c.n2);
        if (c.replicates > 0) {
            auto vals = detail::parallel_map(c.replicates, threads, [&](int j) {
                auto d = detail::draw_two_task(c, n1, derive_stream(row.seed_base, j));
                HpsSolution sol = fit_hps(d.d1, d.d2);
                return empirical_bias_variance(sol.a_hat, d.d1, d.d2, d.beta1, d.beta2, c.sigma,
                                               s2)
                    .excess_risk;
            });
            row.empirical = detail::reduce(vals);
        }
        res.rows.push_back(row);
    }
    res.csv = detail::render_csv(res.rows);
    return res;
}

// Sweep over n1 with both covariate and model shift; requires an isotropic
// target covariance so the deformed-MP limit applies.
inline SweepResult run_combined_shift(const ExperimentConfig& c, int threads) {
    if (c.sigma2.kind != SpectrumSpec::Kind::Identity)
        throw ConfigError("combined_shift requires sigma2_spectrum = identity");
    SweepResult res;
    if (c.noise_law != NoiseLaw::Gaussian)
        std::cerr << "warning: combined-shift limits are proven for Gaussian designs; "
                     "this run is beyond proven scope\n";
    CovarianceSpec s1 = c.sigma1.realize(c.p);
    CovarianceSpec s2 = c.sigma2.realize(c.p);
    CovarianceFactor f1(s1);
    Vec spectrum = s1.kind == CovKind::Identity ? Vec::Ones(c.p) : f1.eigenvalues_or_empty();

    for (std::size_t gi = 0; gi < c.n1_values.size(); ++gi) {
        const int n1 = c.n1_values[gi];
        SweepRow row;
        row.grid_param = "n1";
        row.grid_value = n1;
        row.seed_base = derive_stream(c.master_seed, gi);
        row.replicates = c.replicates;
        DeformedMpLimits lim = deformed_mp_limits(spectrum, n1, c.n2, c.p);
        row.theory = c.sigma * c.sigma * lim.variance_factor +
                     2.0 * c.mu * c.mu * lim.bias_factor;
        if (c.replicates > 0) {
            auto vals = detail::parallel_map(c.replicates, threads, [&](int j) {
                auto d = detail::draw_two_task(c, n1, derive_stream(row.seed_base, j));
                HpsSolution sol = fit_hps(d.d1, d.d2);
                return empirical_bias_variance(sol.a_hat, d.d1, d.d2, d.beta1, d.beta2, c.sigma,
                                               s2)
                    .excess_risk;
            });
            row.empirical = detail::reduce(vals);
        }
        res.rows.push_back(row);
    }
    res.csv = detail::render_csv(res.rows);
    return res;
}

// Weighted, ridge-regularized HPS profile fit used only by the baseline
// comparison; b weighs the tasks and k penalizes the shared vector.
inline HpsSolution fit_hps_weighted(const Dataset& d1, const Dataset& d2, double b, double k,
                                    const HpsSearch& search = {}) {
    detail::GramPair g(d1, d2);
    auto beta_at = [&](double a) -> Vec {
        Mat sys = 2.0 * b * a * a * g.g1 + 2.0 * (1.0 - b) * g.g2;
        sys.diagonal().array() += k;
        auto llt = detail::factor_spd(sys, "fit_hps_weighted");
        return llt.solve(2.0 * b * a * g.b1 + 2.0 * (1.0 - b) * g.b2);
    };
    auto objective_at = [&](double a) {
        Vec beta = beta_at(a);
        const double r1 = a * a * beta.dot(g.g1 * beta) - 2.0 * a * beta.dot(g.b1) + g.yy1;
        const double r2 = beta.dot(g.g2 * beta) - 2.0 * beta.dot(g.b2) + g.yy2;
        return b * r1 + (1.0 - b) * r2 + 0.5 * k * beta.squaredNorm();
    };

    const int m = search.grid_points;
    const double step = (search.hi - search.lo) / (m - 1);
    int best_i = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        const double v = objective_at(search.lo + step * i);
        if (v < best_val) {
            best_val = v;
            best_i = i;
        }
    }
    double lo = search.lo + step * std::max(best_i - 1, 0);
    double hi = search.lo + step * std::min(best_i + 1, m - 1);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double v1 = objective_at(x1), v2 = objective_at(x2);
    while (hi - lo > search.refine_tol) {
        if (v1 <= v2) {
            hi = x2; x2 = x1; v2 = v1;
            x1 = hi - inv_phi * (hi - lo);
            v1 = objective_at(x1);
        } else {
            lo = x1; x1 = x2; v1 = v2;
            x2 = lo + inv_phi * (hi - lo);
            v2 = objective_at(x2);
        }
    }
    HpsSolution sol;
    sol.a_hat = 0.5 * (lo + hi);
    sol.beta_hat = beta_at(sol.a_hat);
    sol.objective_value = objective_at(sol.a_hat);
    return sol;
}

// Estimator comparison at fixed sizes: OLS, validated ridge, validated
// averaging, and weighted/regularized HPS with (b, k) validated.
inline SweepResult run_baselines(const ExperimentConfig& c, int threads) {
    SweepResult res;
    CovarianceSpec s2 = c.sigma2.realize(c.p);
    const int n1 = c.n1_values.front();
    static constexpr const char* names[4] = {"hps", "ols", "ridge", "avg"};

    std::vector<std::vector<double>> risks(4);
    const std::uint64_t seed_base = derive_stream(c.master_seed, 0);

    std::vector<std::array<double, 4>> per_rep(c.replicates);
    detail::parallel_map(c.replicates, threads, [&](int j) {
        const std::uint64_t seed = derive_stream(seed_base, j);
        auto d = detail::draw_two_task(c, n1, seed);
        TaskSpec tval{s2, d.beta2, c.sigma, c.n_val > 0 ? c.n_val : c.n2, c.student_df};
        Dataset dval = generate_dataset(tval, c.noise_law, derive_stream(seed, 3));

        Vec ols1 = fit_ols(d.d1);
        Vec ols2 = fit_ols(d.d2);

        const std::size_t ki = select_hyperparam(
            c.ridge_candidates, [&](double k) { return fit_ridge(d.d2, k); }, dval);
        Vec ridge = fit_ridge(d.d2, c.ridge_candidates[ki]);

        const std::size_t bi = select_hyperparam(
            c.avg_candidates, [&](double b) { return fit_avg(b, ols1, ols2); }, dval);
        Vec avg = fit_avg(c.avg_candidates[bi], ols1, ols2);

        Vec hps;
        double best_mse = std::numeric_limits<double>::infinity();
        for (double b : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            for (double k : {0.0, 1.0, 5.0, 25.0}) {
                HpsSolution sol = fit_hps_weighted(d.d1, d.d2, b, k);
                const double mse = validation_mse(sol.beta_hat, dval);
                if (mse < best_mse) {
                    best_mse = mse;
                    hps = sol.beta_hat;
                }
            }
        }

        per_rep[j] = {excess_risk(hps, d.beta2, s2), excess_risk(ols2, d.beta2, s2),
                      excess_risk(ridge, d.beta2, s2), excess_risk(avg, d.beta2, s2)};
        return 0.0;
    });
    for (int e = 0; e < 4; ++e) {
        risks[e].resize(c.replicates);
        for (int j = 0; j < c.replicates; ++j) risks[e][j] = per_rep[j][e];
    }

    for (int e = 0; e < 4; ++e) {
        SweepRow row;
        row.grid_param = std::string("estimator_") + names[e];
        row.grid_value = e;
        row.seed_base = seed_base;
        row.replicates = c.replicates;
        if (e == 1) row.theory = c.sigma * c.sigma * c.p / (c.n2 - c.p);
        if (e == 0 && c.sigma1.kind == SpectrumSpec::Kind::Identity &&
            c.sigma2.kind == SpectrumSpec::Kind::Identity)
            row.theory = model_shift_risk_limit(n1, c.mu, c.sigma, c.p, c.n2);
        row.empirical = detail::reduce(risks[e]);
        res.rows.push_back(row);
    }
    res.csv = detail::render_csv(res.rows);
    return res;
}

// Sweep over the shared-layer width r in the multi-source model; the theory
// column is the averaged limit computed from each realized task gram.
inline SweepResult run_multitask(const ExperimentConfig& c, int threads) {
    SweepResult res;
    CovarianceSpec s = c.sigma2.realize(c.p);
    CovarianceFactor sf(s);
    const int n = c.n2;
    Mat sigma_dense = sf.materialize(1.0);

    for (std::size_t gi = 0; gi < c.r_values.size(); ++gi) {
        const int r = c.r_values[gi];
        if (r < 1 || r > c.t) throw ConfigError("dimensions.r out of range");
        SweepRow row;
        row.grid_param = "r";
        row.grid_value = r;
        row.seed_base = derive_stream(c.master_seed, gi);
        row.replicates = c.replicates;

        std::vector<double> emp(c.replicates), theo(c.replicates);
        detail::parallel_map(c.replicates, threads, [&](int j) {
            const std::uint64_t seed = derive_stream(row.seed_base, j);
            RandomEffectSpec re{detail::spread_beta0(c.p, c.beta0_norm), c.mu, c.t};
            auto betas = sample_random_effect(re, derive_stream(seed, 0));
            TaskSpec tx{s, Vec::Zero(c.p), 0.0, n, c.student_df};
            Dataset dx = generate_dataset(tx, c.noise_law, derive_stream(seed, 1));

            Rng noise_rng(derive_stream(seed, 2));
            std::vector<Vec> ys(c.t);
            for (int i = 0; i < c.t; ++i) {
                ys[i] = dx.X * betas[i];
                for (int k = 0; k < n; ++k)
                    ys[i][k] += c.sigma * sample_noise(noise_rng, c.noise_law, c.student_df);
            }

            MultiTaskFit fit = fit_multitask_hps(dx.X, ys, r);
            Mat bstar(c.p, c.t);
            for (int i = 0; i < c.t; ++i) bstar.col(i) = betas[i];
            Mat gram = bstar.transpose() * sigma_dense * bstar;
            Mat projector = fit.u_hat * fit.u_hat.transpose();
            emp[j] = multitask_bias_variance(dx.X, gram, projector, s, c.sigma).averaged;
            theo[j] = multitask_risk_limit(gram, r, c.p, n, c.sigma).averaged;
            return 0.0;
        });
        row.empirical = detail::reduce(emp);
        row.theory = detail::reduce(theo).mean;
        res.rows.push_back(row);
    }
    res.csv = detail::render_csv(res.rows);
    return res;
}

// Progressive source enlargement; one CSV row per (replicate, stage).
inline SweepResult run_progressive(const ExperimentConfig& c, int threads) {
    SweepResult res;
    CovarianceSpec s2 = c.sigma2.realize(c.p);
    const int pool = c.n1_values.front();
    const std::uint64_t seed_base = derive_stream(c.master_seed, 0);

    struct Trace {
        ProgressiveTrace t;
    };
    std::vector<Trace> traces(c.replicates);
    detail::parallel_map(c.replicates, threads, [&](int j) {
        const std::uint64_t seed = derive_stream(seed_base, j);
        auto d = detail::draw_two_task(c, pool, seed);
        TaskSpec tval{s2, d.beta2, c.sigma, c.n_val > 0 ? c.n_val : c.n2, c.student_df};
        Dataset dval = generate_dataset(tval, c.noise_law, derive_stream(seed, 3));
        ProgressiveOptions opts;
        opts.tau = c.tau;
        if (c.tau_ols) opts.tau = validation_mse(fit_ols(d.d2), dval);
        traces[j].t = progressive_hps(d.d1, d.d2, dval, c.batches, derive_stream(seed, 4), opts)
                          .trace;
        return 0.0;
    });

    std::string csv = "replicate,stage,cumulative_n1,val_risk,stop_stage,best_stage,"
                      "stop_reason,seed_base\n";
    for (int j = 0; j < c.replicates; ++j) {
        const auto& t = traces[j].t;
        const char* reason = t.stop_reason == StopReason::Exhausted        ? "exhausted"
                             : t.stop_reason == StopReason::RiskIncrease   ? "risk_increase"
                                                                           : "threshold_reached";
        for (std::size_t s = 0; s < t.stage_sizes.size(); ++s) {
            csv += std::to_string(j) + ',' + std::to_string(s + 1) + ',' +
                   std::to_string(t.stage_sizes[s]) + ',' +
                   detail::format_double(t.stage_risks[s]) + ',' +
                   std::to_string(t.stop_stage) + ',' + std::to_string(t.best_stage) + ',' +
                   reason + ',' + std::to_string(derive_stream(seed_base, j)) + '\n';
        }
    }
    res.csv = csv;
    return res;
}

struct RegimeReport {
    RegimeVerdict verdict;
    std::optional<double> crossing_n1;  // limit-curve crossing, by root-finding
    Json json;
    std::string text;
};

inline RegimeReport report_regimes(const ExperimentConfig& c) {
    RegimeReport rep;
    rep.verdict = classify_model_shift(c.mu, c.sigma, c.p, c.n2);
    rep.crossing_n1 = limit_curve_crossing(c.mu, c.sigma, c.p, c.n2);

    const char* name = rep.verdict.regime == Regime::AlwaysPositive  ? "always_positive"
                       : rep.verdict.regime == Regime::Crossover     ? "crossover"
                                                                     : "always_negative";
    rep.json = Json{{"schema_version", 1},
                    {"p", c.p},
                    {"n2", c.n2},
                    {"mu", c.mu},
                    {"sigma", c.sigma},
                    {"regime", name},
                    {"mu2_low", rep.verdict.mu2_low},
                    {"mu2_high", rep.verdict.mu2_high},
                    {"outside_proven_range", rep.verdict.outside_proven_range}};
    if (rep.verdict.rho) {
        rep.json["rho"] = *rep.verdict.rho;
        rep.json["rho_times_p"] = *rep.verdict.rho * c.p;
    } else {
        rep.json["rho"] = nullptr;
    }
    if (rep.crossing_n1) rep.json["limit_curve_crossing_n1"] = *rep.crossing_n1;

    std::ostringstream os;
    os << "transfer regime report (p=" << c.p << ", n2=" << c.n2 << ", sigma=" << c.sigma
       << ", mu=" << c.mu << ")\n";
    os << "  mu^2 thresholds: low=" << rep.verdict.mu2_low << " high=" << rep.verdict.mu2_high
       << "\n";
    os << "  regime: " << name << "\n";
    if (rep.verdict.rho)
        os << "  crossover at n1 = rho*p = " << *rep.verdict.rho * c.p
           << " (rho = " << *rep.verdict.rho << ")\n";
    if (rep.crossing_n1 && rep.verdict.regime == Regime::Crossover)
        os << "  limit-curve crossing at n1 = " << *rep.crossing_n1 << "\n";
    if (rep.verdict.outside_proven_range)
        os << "  note: p < n2 < 3p lies outside the proven classification range\n";
    rep.text = os.str();
    return rep;
}

// Dispatch on the configured experiment kind, write CSV plus the resolved
// config sidecar, and return the rows for inspection.
inline SweepResult run_experiment(const ExperimentConfig& c, int threads = 1) {
    SweepResult res;
    switch (c.kind) {
        case ExperimentKind::VarianceCovshift:
            res = run_variance_covshift(c, threads);
            break;
        case ExperimentKind::ModelShift:
            res = run_model_shift(c, threads);
            break;
        case ExperimentKind::CombinedShift:
            res = run_combined_shift(c, threads);
            break;
        case ExperimentKind::Baselines:
            res = run_baselines(c, threads);
            break;
        case ExperimentKind::Multitask:
            res = run_multitask(c, threads);
            break;
        case ExperimentKind::Progressive:
            res = run_progressive(c, threads);
            break;
        case ExperimentKind::Regimes: {
            RegimeReport rep = report_regimes(c);
            detail::write_file(c.output, rep.json.dump(2) + "\n");
            detail::write_sidecar(c);
            res.csv = rep.text;
            return res;
        }
    }
    detail::write_file(c.output, res.csv);
    detail::write_sidecar(c);
    return res;
}

}  // namespace hpslab

#endif  // HPSLAB_EXPERIMENT_HPP
