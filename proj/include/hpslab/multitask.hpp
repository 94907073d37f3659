// Multi-source extension with a shared design: the closed-form HPS fit via a
// top-r eigenspace of the projected label Gram matrix, and the matching risk
// limits under model shift.

#ifndef HPSLAB_MULTITASK_HPP
#define HPSLAB_MULTITASK_HPP

#include "hpslab/common.hpp"
#include "hpslab/estimators.hpp"

#include <Eigen/Eigenvalues>

#include <vector>

namespace hpslab {

struct RankRProjection {
    Mat u;            // t x r partial orthonormal basis
    Mat projector;    // U U', t x t
    Vec spectrum;     // eigenvalues of the input, descending
    bool degenerate_gap = false;  // lambda_r == lambda_{r+1} within tolerance
};

struct MultiTaskFit {
    Mat u_hat;                   // t x r
    std::vector<Vec> beta_hats;  // per-task estimators
    Vec gram_spectrum;           // eigenvalues of Y' P Y, descending (diagnostic)
    double objective = 0.0;      // residual of the profile objective at u_hat
    bool degenerate_gap = false;
};

namespace detail {

// Deterministic sign convention: first coordinate with |v_i| > 1e-9 ||v||
// is made positive.
inline void fix_column_signs(Mat& u) {
    for (int c = 0; c < u.cols(); ++c) {
        const double tol = 1e-9 * u.col(c).norm();
        for (int i = 0; i < u.rows(); ++i) {
            if (std::abs(u(i, c)) > tol) {
                if (u(i, c) < 0.0) u.col(c) = -u.col(c);
                break;
            }
        }
    }
}

}  // namespace detail

// Top-r eigenspace of a symmetric PSD matrix; a degenerate spectral gap is
// reported, not rejected, with ties broken by the sign convention.
inline RankRProjection rank_r_projection(const Mat& gram, int r) {
    const int t = static_cast<int>(gram.rows());
    if (gram.cols() != t) throw ConfigError("rank_r_projection: matrix must be square");
    if (r < 1 || r > t) throw ConfigError("rank_r_projection: r out of range");
    if ((gram - gram.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, gram.norm()))
        throw ConfigError("rank_r_projection: matrix must be symmetric");

    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (gram + gram.transpose()));
    if (es.info() != Eigen::Success) throw NumericError("rank_r_projection: eigensolve failed");

    RankRProjection out;
    out.spectrum = es.eigenvalues().reverse();
    out.u = es.eigenvectors().rightCols(r).rowwise().reverse();
    detail::fix_column_signs(out.u);
    out.projector = out.u * out.u.transpose();
    if (r < t) {
        const double scale = std::max(std::abs(out.spectrum[0]), 1.0);
        out.degenerate_gap = (out.spectrum[r - 1] - out.spectrum[r]) <= 1e-10 * scale;
    }
    return out;
}

// Shared-design HPS: beta_i = (X'X)^{-1} X'Y U U' e_i with U the top-r
// eigenbasis of Y' X (X'X)^{-1} X' Y. This is the exact global minimizer of
// the rank-r profile objective.
inline MultiTaskFit fit_multitask_hps(const Mat& x, const std::vector<Vec>& ys, int r) {
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    const int t = static_cast<int>(ys.size());
    if (n <= p) throw ConfigError("fit_multitask_hps: requires n > p");
    if (r < 1 || r > t) throw ConfigError("fit_multitask_hps: r out of range");
    Mat y(n, t);
    for (int j = 0; j < t; ++j) {
        if (ys[j].size() != n) throw ConfigError("fit_multitask_hps: label length mismatch");
        y.col(j) = ys[j];
    }

    Mat gram = x.transpose() * x;
    auto llt = detail::factor_spd(gram, "fit_multitask_hps");
    Mat xty = x.transpose() * y;          // p x t
    Mat coef = llt.solve(xty);            // (X'X)^{-1} X'Y, p x t
    Mat label_gram = xty.transpose() * coef;  // Y' P Y, t x t

    RankRProjection proj = rank_r_projection(label_gram, r);

    MultiTaskFit fit;
    fit.u_hat = proj.u;
    fit.gram_spectrum = proj.spectrum;
    fit.degenerate_gap = proj.degenerate_gap;
    Mat betas = coef * proj.projector;    // p x t
    fit.beta_hats.resize(t);
    for (int j = 0; j < t; ++j) fit.beta_hats[j] = betas.col(j);
    fit.objective = y.squaredNorm() - (proj.u.transpose() * label_gram * proj.u).trace();
    return fit;
}

// Profile objective ||P Y U U' - Y||_F^2 for an arbitrary rank-r basis;
// used to certify optimality of the eigenspace characterization.
inline double multitask_objective(const Mat& x, const std::vector<Vec>& ys, const Mat& u) {
    const int n = static_cast<int>(x.rows());
    const int t = static_cast<int>(ys.size());
    Mat y(n, t);
    for (int j = 0; j < t; ++j) y.col(j) = ys[j];
    Mat gram = x.transpose() * x;
    auto llt = detail::factor_spd(gram, "multitask_objective");
    Mat py = x * llt.solve(x.transpose() * y);
    return (py * u * u.transpose() - y).squaredNorm();
}

struct MultitaskRiskLimit {
    Vec per_task;      // L_i(B* a_i*) + sigma^2 p/(n-p) ||a_i*||^2
    double averaged = 0.0;
    double averaged_bias = 0.0;      // (1/t) sum of the t-r smallest eigenvalues
    double averaged_variance = 0.0;  // sigma^2 p/(n-p) * r/t
};

struct MultitaskRiskMeasurement {
    Vec per_task;
    double averaged = 0.0;
};

// Partial noise expectation of each task's excess risk at a fitted projector:
// bias through the realized population gram plus the exact variance term
// sigma^2 ||a_i||^2 tr[Sigma (X'X)^{-1}]. This is the measured quantity the
// width sweeps compare against the limit; it integrates out the label noise
// the same way the two-task decomposition path does.
inline MultitaskRiskMeasurement multitask_bias_variance(const Mat& x, const Mat& gram,
                                                        const Mat& projector,
                                                        const CovarianceSpec& sigma_cov,
                                                        double sigma) {
    const int t = static_cast<int>(gram.rows());
    const int p = static_cast<int>(x.cols());
    Mat xtx = x.transpose() * x;
    auto llt = detail::factor_spd(xtx, "multitask_bias_variance");
    Mat inv = llt.solve(Mat::Identity(p, p));
    double tr;
    switch (sigma_cov.kind) {
        case CovKind::Identity:
            tr = inv.trace();
            break;
        case CovKind::Diagonal:
            tr = (sigma_cov.spectrum.array() * inv.diagonal().array()).sum();
            break;
        default:
            tr = (sigma_cov.dense.array() * inv.array()).sum();
    }
    MultitaskRiskMeasurement out;
    out.per_task = Vec(t);
    Mat residual = projector - Mat::Identity(t, t);
    for (int i = 0; i < t; ++i) {
        const Vec d = residual.col(i);
        out.per_task[i] =
            d.dot(gram * d) + sigma * sigma * projector.col(i).squaredNorm() * tr;
    }
    out.averaged = out.per_task.sum() / t;
    return out;
}

// Risk limits from the population gram B*' Sigma B*: per-task and averaged.
inline MultitaskRiskLimit multitask_risk_limit(const Mat& gram, int r, double p, double n,
                                               double sigma) {
    if (!(n > p)) throw ConfigError("multitask_risk_limit: requires n > p");
    const int t = static_cast<int>(gram.rows());
    RankRProjection proj = rank_r_projection(gram, r);
    const double var_unit = sigma * sigma * p / (n - p);

    MultitaskRiskLimit out;
    out.per_task = Vec(t);
    Mat residual = proj.projector - Mat::Identity(t, t);
    for (int i = 0; i < t; ++i) {
        const Vec d = residual.col(i);  // a_i* - e_i
        const Vec a_i = proj.projector.col(i);
        out.per_task[i] = d.dot(gram * d) + var_unit * a_i.squaredNorm();
    }
    out.averaged_bias = proj.spectrum.tail(t - r).sum() / t;
    out.averaged_variance = var_unit * static_cast<double>(r) / t;
    out.averaged = out.averaged_bias + out.averaged_variance;
    return out;
}

}  // namespace hpslab

#endif  // HPSLAB_MULTITASK_HPP
