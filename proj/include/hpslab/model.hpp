// Domain types and seeded synthetic data generation for the two-task linear
// models: population covariances, task specs, design/label sampling, the
// random-effect model, and the covariate shift spectrum.

#ifndef HPSLAB_MODEL_HPP
#define HPSLAB_MODEL_HPP

#include "hpslab/common.hpp"
#include "hpslab/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <utility>
#include <vector>

namespace hpslab {

enum class CovKind { Identity, Diagonal, Dense };

enum class NoiseLaw { Gaussian, Rademacher, StudentT };

// Population covariance: identity, diagonal spectrum, or dense SPD matrix.
struct CovarianceSpec {
    CovKind kind = CovKind::Identity;
    int dim = 0;
    Vec spectrum;   // Diagonal kind
    Mat dense;      // Dense kind

    static CovarianceSpec identity(int p) {
        CovarianceSpec c;
        c.kind = CovKind::Identity;
        c.dim = p;
        return c;
    }

    static CovarianceSpec diagonal(Vec spec) {
        CovarianceSpec c;
        c.kind = CovKind::Diagonal;
        c.dim = static_cast<int>(spec.size());
        c.spectrum = std::move(spec);
        return c;
    }

    static CovarianceSpec from_dense(Mat m) {
        CovarianceSpec c;
        c.kind = CovKind::Dense;
        c.dim = static_cast<int>(m.rows());
        c.dense = std::move(m);
        return c;
    }

    // Eigenvalue bounds [tau, 1/tau]; warn by default, throw in strict mode.
    // Non-symmetric or non-SPD dense matrices are always an error.
    void validate(double tau = kDefaultTau, bool strict = false) const {
        if (dim <= 0) throw ConfigError("covariance dimension must be positive");
        double lo = 1.0, hi = 1.0;
        switch (kind) {
            case CovKind::Identity:
                break;
            case CovKind::Diagonal: {
                if (spectrum.size() != dim)
                    throw ConfigError("covariance spectrum length != dimension");
                if ((spectrum.array() <= 0.0).any())
                    throw NumericError("covariance not positive definite");
                lo = spectrum.minCoeff();
                hi = spectrum.maxCoeff();
                break;
            }
            case CovKind::Dense: {
                if (dense.rows() != dim || dense.cols() != dim)
                    throw ConfigError("covariance matrix shape != dimension");
                if ((dense - dense.transpose()).cwiseAbs().maxCoeff() > 1e-10)
                    throw ConfigError("covariance matrix is not symmetric");
                Eigen::SelfAdjointEigenSolver<Mat> es(dense, Eigen::EigenvaluesOnly);
                lo = es.eigenvalues().minCoeff();
                hi = es.eigenvalues().maxCoeff();
                if (lo <= 1e-12 * std::max(hi, 1.0))
                    throw NumericError("covariance not positive definite");
                break;
            }
        }
        if (lo < tau || hi > 1.0 / tau) {
            if (strict)
                throw ConfigError("covariance eigenvalues outside [tau, 1/tau]");
            std::cerr << "warning: covariance eigenvalues outside [" << tau << ", "
                      << 1.0 / tau << "] (got [" << lo << ", " << hi << "])\n";
        }
    }
};

// Symmetric eigendecomposition of a covariance; one factorization serves
// Sigma^{1/2}, Sigma^{-1/2}, and Sigma^{-1}.
class CovarianceFactor {
public:
    explicit CovarianceFactor(const CovarianceSpec& spec) : kind_(spec.kind), dim_(spec.dim) {
        switch (spec.kind) {
            case CovKind::Identity:
                break;
            case CovKind::Diagonal:
                if ((spec.spectrum.array() <= 0.0).any())
                    throw NumericError("covariance not positive definite");
                eigvals_ = spec.spectrum;
                break;
            case CovKind::Dense: {
                Eigen::SelfAdjointEigenSolver<Mat> es(spec.dense);
                if (es.info() != Eigen::Success)
                    throw NumericError("covariance eigendecomposition failed");
                eigvals_ = es.eigenvalues();
                eigvecs_ = es.eigenvectors();
                const double cutoff = 1e-12 * std::max(eigvals_.maxCoeff(), 1.0);
                if (eigvals_.minCoeff() <= cutoff)
                    throw NumericError("covariance not positive definite");
                break;
            }
        }
    }

    int dim() const { return dim_; }

    // X * Sigma^{power} for row-sample matrices X (n x p); power in {1, 1/2, -1/2, -1}.
    Mat right_apply_power(const Mat& x, double power) const {
        switch (kind_) {
            case CovKind::Identity:
                return x;
            case CovKind::Diagonal:
                return x * eigvals_.array().pow(power).matrix().asDiagonal();
            case CovKind::Dense:
                return ((x * eigvecs_) * eigvals_.array().pow(power).matrix().asDiagonal()) *
                       eigvecs_.transpose();
        }
        return x;  // unreachable
    }

    Vec apply_power(const Vec& v, double power) const {
        switch (kind_) {
            case CovKind::Identity:
                return v;
            case CovKind::Diagonal:
                return eigvals_.array().pow(power).matrix().cwiseProduct(v);
            case CovKind::Dense:
                return eigvecs_ *
                       (eigvals_.array().pow(power) * (eigvecs_.transpose() * v).array()).matrix();
        }
        return v;  // unreachable
    }

    Mat materialize(double power = 1.0) const {
        Mat id = Mat::Identity(dim_, dim_);
        return right_apply_power(id, power);
    }

    // v' Sigma v
    double quadratic(const Vec& v) const {
        switch (kind_) {
            case CovKind::Identity:
                return v.squaredNorm();
            case CovKind::Diagonal:
                return (eigvals_.array() * v.array().square()).sum();
            case CovKind::Dense: {
                Vec w = eigvecs_.transpose() * v;
                return (eigvals_.array() * w.array().square()).sum();
            }
        }
        return 0.0;  // unreachable
    }

    double trace() const {
        return kind_ == CovKind::Identity ? static_cast<double>(dim_) : eigvals_.sum();
    }

    const Vec& eigenvalues_or_empty() const { return eigvals_; }

private:
    CovKind kind_;
    int dim_;
    Vec eigvals_;
    Mat eigvecs_;
};

// One task's population: covariance, model vector, noise level, sample size.
struct TaskSpec {
    CovarianceSpec covariance;
    Vec beta;
    double noise_sigma = 0.0;
    int n = 0;
    double student_df = 6.0;  // only used when sampling with NoiseLaw::StudentT

    void validate(double tau = kDefaultTau, bool strict = false,
                  bool is_target = false) const {
        covariance.validate(tau, strict);
        if (beta.size() != covariance.dim)
            throw ConfigError("beta length != covariance dimension");
        if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be nonnegative");
        if (n <= 0) throw ConfigError("sample size must be positive");
        if (is_target && n < (1.0 + tau) * covariance.dim) {
            if (strict)
                throw ConfigError("target task requires n >= (1+tau)*p");
            std::cerr << "warning: target sample size below (1+tau)*p\n";
        }
    }
};

// Realized design matrix and labels.
struct Dataset {
    Mat X;
    Vec Y;

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }
};

// Shared vector plus i.i.d. N(0, mu^2/p) task-specific effects.
struct RandomEffectSpec {
    Vec beta0;
    double mu = 0.0;
    int num_tasks = 2;
};

// Descending singular values of the covariate shift matrix
// (Sigma1)^{1/2} (Sigma2)^{-1/2}.
struct ShiftMatrix {
    Vec lambdas;

    static ShiftMatrix all_ones(int p) {
        ShiftMatrix s;
        s.lambdas = Vec::Ones(p);
        return s;
    }

    // Half lam, half 1/lam (descending); the determinant-one paired family.
    static ShiftMatrix paired(int p, double lam) {
        if (p % 2 != 0) throw ConfigError("paired spectrum requires even p");
        if (lam < 1.0) lam = 1.0 / lam;
        ShiftMatrix s;
        s.lambdas = Vec(p);
        s.lambdas.head(p / 2).setConstant(lam);
        s.lambdas.tail(p / 2).setConstant(1.0 / lam);
        return s;
    }

    int p() const { return static_cast<int>(lambdas.size()); }
};

inline double sample_noise(Rng& rng, NoiseLaw law, double student_df) {
    switch (law) {
        case NoiseLaw::Gaussian:
            return rng.gaussian();
        case NoiseLaw::Rademacher:
            return rng.rademacher();
        case NoiseLaw::StudentT:
            return rng.student_t_unit(student_df);
    }
    return 0.0;  // unreachable
}

// X = Z Sigma^{1/2} with i.i.d. unit-variance Z entries; Y = X beta + eps.
// Pure function of (spec, law, seed): fill order is row-major for Z, then eps.
inline Dataset generate_dataset(const TaskSpec& spec, NoiseLaw law, std::uint64_t seed) {
    const int n = spec.n;
    const int p = spec.covariance.dim;
    if (spec.beta.size() != p) throw ConfigError("beta length != covariance dimension");
    if (law == NoiseLaw::StudentT && !(spec.student_df > 4.0))
        throw ConfigError("student_t noise law requires df > 4");

    CovarianceFactor factor(spec.covariance);
    Rng rng(seed);

    Mat z(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) z(i, j) = sample_noise(rng, law, spec.student_df);

    Dataset d;
    d.X = factor.right_apply_power(z, 0.5);
    d.Y = d.X * spec.beta;
    if (spec.noise_sigma > 0.0) {
        for (int i = 0; i < n; ++i)
            d.Y[i] += spec.noise_sigma * sample_noise(rng, law, spec.student_df);
    }
    if (!d.X.allFinite() || !d.Y.allFinite())
        throw NumericError("generated dataset contains non-finite entries");
    return d;
}

// t model vectors beta0 + tilde beta^(i), independent across tasks.
inline std::vector<Vec> sample_random_effect(const RandomEffectSpec& spec, std::uint64_t seed) {
    if (spec.mu < 0.0) throw ConfigError("mu must be nonnegative");
    if (spec.num_tasks < 1) throw ConfigError("num_tasks must be >= 1");
    const int p = static_cast<int>(spec.beta0.size());
    const double sd = spec.mu / std::sqrt(static_cast<double>(p));
    Rng rng(seed);
    std::vector<Vec> betas(spec.num_tasks);
    for (int t = 0; t < spec.num_tasks; ++t) {
        betas[t] = spec.beta0;
        if (spec.mu > 0.0)
            for (int j = 0; j < p; ++j) betas[t][j] += sd * rng.gaussian();
    }
    return betas;
}

// lambda_i = sqrt of eigenvalues of Sigma2^{-1/2} Sigma1 Sigma2^{-1/2}, descending.
inline ShiftMatrix shift_spectrum(const CovarianceSpec& sigma1, const CovarianceSpec& sigma2) {
    if (sigma1.dim != sigma2.dim) throw ConfigError("shift_spectrum: dimension mismatch");
    const int p = sigma1.dim;
    ShiftMatrix s;

    if (sigma1.kind != CovKind::Dense && sigma2.kind != CovKind::Dense) {
        Vec d1 = sigma1.kind == CovKind::Identity ? Vec::Ones(p) : sigma1.spectrum;
        Vec d2 = sigma2.kind == CovKind::Identity ? Vec::Ones(p) : sigma2.spectrum;
        if ((d1.array() <= 0.0).any() || (d2.array() <= 0.0).any())
            throw NumericError("covariance not positive definite");
        s.lambdas = (d1.array() / d2.array()).sqrt();
        std::sort(s.lambdas.data(), s.lambdas.data() + p, std::greater<double>());
        return s;
    }

    CovarianceFactor f1(sigma1);
    CovarianceFactor f2(sigma2);
    Mat sigma1_dense = f1.materialize(1.0);
    Mat m = f2.right_apply_power(f2.right_apply_power(sigma1_dense, -0.5).transpose(), -0.5);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    Vec ev = es.eigenvalues().cwiseMax(0.0);
    s.lambdas = ev.array().sqrt();
    std::reverse(s.lambdas.data(), s.lambdas.data() + p);
    return s;
}

}  // namespace hpslab

#endif  // HPSLAB_MODEL_HPP
