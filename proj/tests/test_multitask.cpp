#include "hpslab/estimators.hpp"
#include "hpslab/model.hpp"
#include "hpslab/multitask.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace hpslab;

namespace {

struct MultiDraw {
    Mat x;
    std::vector<Vec> betas;
    std::vector<Vec> ys;
};

MultiDraw draw_multitask(int n, int p, int t, double mu, double sigma, std::uint64_t seed) {
    MultiDraw d;
    RandomEffectSpec re{Vec::Constant(p, 1.0 / std::sqrt(double(p))), mu, t};
    d.betas = sample_random_effect(re, derive_stream(seed, 0));
    TaskSpec tx{CovarianceSpec::identity(p), Vec::Zero(p), 0.0, n};
    d.x = generate_dataset(tx, NoiseLaw::Gaussian, derive_stream(seed, 1)).X;
    Rng rng(derive_stream(seed, 2));
    d.ys.resize(t);
    for (int i = 0; i < t; ++i) {
        d.ys[i] = d.x * d.betas[i];
        for (int k = 0; k < n; ++k) d.ys[i][k] += sigma * rng.gaussian();
    }
    return d;
}

}  // namespace

TEST_CASE("full width reproduces per-task least squares") {
    MultiDraw d = draw_multitask(60, 12, 4, 0.3, 0.5, 11);
    MultiTaskFit fit = fit_multitask_hps(d.x, d.ys, 4);
    for (int i = 0; i < 4; ++i) {
        Dataset task{d.x, d.ys[i]};
        REQUIRE((fit.beta_hats[i] - fit_ols(task)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("identical labels collapse to the common fit at width one") {
    MultiDraw d = draw_multitask(50, 10, 2, 0.0, 0.4, 21);
    d.ys[1] = d.ys[0];
    MultiTaskFit fit = fit_multitask_hps(d.x, d.ys, 1);
    Dataset task{d.x, d.ys[0]};
    Vec common = fit_ols(task);
    REQUIRE((fit.beta_hats[0] - common).cwiseAbs().maxCoeff() < 1e-8);
    REQUIRE((fit.beta_hats[1] - common).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("u_hat is orthonormal and beats random projections") {
    const int t = 10;
    MultiDraw d = draw_multitask(300, 100, t, 0.05, 0.5, 31);
    MultiTaskFit fit = fit_multitask_hps(d.x, d.ys, 3);
    REQUIRE((fit.u_hat.transpose() * fit.u_hat - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() <
            1e-10);

    const double opt = multitask_objective(d.x, d.ys, fit.u_hat);
    REQUIRE(opt == Catch::Approx(fit.objective).epsilon(1e-9));
    Rng rng(32);
    for (int rep = 0; rep < 50; ++rep) {
        Mat g(t, 3);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < 3; ++j) g(i, j) = rng.gaussian();
        Mat q = Eigen::HouseholderQR<Mat>(g).householderQ() * Mat::Identity(t, 3);
        REQUIRE(opt <= multitask_objective(d.x, d.ys, q) + 1e-9);
    }
}

TEST_CASE("rank one gram projects onto its span") {
    Rng rng(41);
    Vec v(6);
    for (int i = 0; i < 6; ++i) v[i] = rng.gaussian();
    RankRProjection proj = rank_r_projection(v * v.transpose(), 1);
    Mat expected = v * v.transpose() / v.squaredNorm();
    REQUIRE((proj.projector - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("projector column norms sum to the rank") {
    Rng rng(51);
    for (int t : {5, 10}) {
        Mat a(t, t);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j) a(i, j) = rng.gaussian();
        Mat gram = a * a.transpose();
        for (int r = 1; r <= t; ++r) {
            RankRProjection proj = rank_r_projection(gram, r);
            double sum = 0.0;
            for (int i = 0; i < t; ++i) sum += proj.projector.col(i).squaredNorm();
            REQUIRE(sum == Catch::Approx(double(r)).margin(1e-10));
        }
    }
}

TEST_CASE("degenerate spectral gaps are flagged, not rejected") {
    RankRProjection flat = rank_r_projection(Mat::Identity(6, 6), 2);
    REQUIRE(flat.degenerate_gap);
    REQUIRE((flat.u.transpose() * flat.u - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);

    Mat asym = Mat::Zero(3, 3);
    asym(0, 1) = 1.0;
    REQUIRE_THROWS_AS(rank_r_projection(asym, 1), ConfigError);
}

TEST_CASE("random-effect gram concentrates on the shared direction") {
    const int p = 100, t = 10;
    const double mu = 0.05;
    RandomEffectSpec re{Vec::Constant(p, 1.0 / std::sqrt(double(p))), mu, t};
    auto betas = sample_random_effect(re, 61);
    Mat bstar(p, t);
    for (int i = 0; i < t; ++i) bstar.col(i) = betas[i];
    Mat gram = bstar.transpose() * bstar;  // Sigma = I
    RankRProjection proj = rank_r_projection(gram, 1);
    Vec ones = Vec::Constant(t, 1.0 / std::sqrt(double(t)));
    const double cosine = std::abs(proj.u.col(0).dot(ones));
    REQUIRE(std::acos(std::min(cosine, 1.0)) < 0.05);
}

TEST_CASE("per-task limits add up to the averaged identity") {
    Rng rng(71);
    for (int rep = 0; rep < 10; ++rep) {
        const int t = 8, r = 3;
        Mat a(t, t);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j) a(i, j) = rng.gaussian();
        Mat gram = a * a.transpose();
        MultitaskRiskLimit lim = multitask_risk_limit(gram, r, 100, 300, 0.5);
        const double var_unit = 0.25 * 100 / 200.0;
        const double lhs = lim.per_task.sum();
        RankRProjection proj = rank_r_projection(gram, r);
        const double frob = proj.spectrum.tail(t - r).sum();
        REQUIRE(lhs == Catch::Approx(frob + var_unit * r).margin(1e-8));
        REQUIRE(lim.averaged == Catch::Approx(lhs / t).margin(1e-10));
        // averaged bias equals the sum of the t-r smallest eigenvalues
        Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
        double smallest = 0.0;
        for (int i = 0; i < t - r; ++i) smallest += es.eigenvalues()[i];
        REQUIRE(lim.averaged_bias == Catch::Approx(smallest / t).margin(1e-9));
    }
}

TEST_CASE("full width makes the averaged bias vanish") {
    Rng rng(81);
    Mat a(6, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) a(i, j) = rng.gaussian();
    MultitaskRiskLimit lim = multitask_risk_limit(a * a.transpose(), 6, 100, 300, 0.5);
    REQUIRE(lim.averaged_bias == 0.0);
    REQUIRE(lim.averaged == Catch::Approx(0.25 * 100 / 200.0).margin(1e-12));
}

TEST_CASE("random-effect width sweep matches the limits and prefers width one") {
    const int p = 100, n = 300, t = 10, seeds = 5;
    const double mu = 0.05, sigma = 0.5;
    CovarianceSpec id = CovarianceSpec::identity(p);

    std::vector<double> emp(t - 1, 0.0), theo(t - 1, 0.0);
    for (int s = 0; s < seeds; ++s) {
        MultiDraw d = draw_multitask(n, p, t, mu, sigma, 4000 + s);
        Mat bstar(p, t);
        for (int i = 0; i < t; ++i) bstar.col(i) = d.betas[i];
        Mat gram = bstar.transpose() * bstar;
        for (int r = 1; r <= t - 1; ++r) {
            MultiTaskFit fit = fit_multitask_hps(d.x, d.ys, r);
            Mat projector = fit.u_hat * fit.u_hat.transpose();
            emp[r - 1] +=
                multitask_bias_variance(d.x, gram, projector, id, sigma).averaged / seeds;
            theo[r - 1] += multitask_risk_limit(gram, r, p, n, sigma).averaged / seeds;
        }
    }
    for (int r = 1; r <= t - 1; ++r) {
        INFO("r = " << r);
        REQUIRE(emp[r - 1] == Catch::Approx(theo[r - 1]).epsilon(0.10));
        if (r > 1) REQUIRE(emp[0] < emp[r - 1]);
    }
}

TEST_CASE("random-effect averaged limit follows the width identity") {
    // g_r(n, mu) - sigma^2 p/(n-p) tracks (1 - r/t)(mu^2 tr(Sigma)/p - sigma^2 p/(n-p))
    // with an O(p^{-1/2}) relative error; measured worst case is ~0.012 at p=100.
    const int p = 100, n = 300, t = 10;
    const double mu = 0.05, sigma = 0.5;
    const double var_unit = sigma * sigma * p / (n - p);
    for (int s = 0; s < 20; ++s) {
        RandomEffectSpec re{Vec::Constant(p, 1.0 / std::sqrt(double(p))), mu, t};
        auto betas = sample_random_effect(re, 600 + s);
        Mat bstar(p, t);
        for (int i = 0; i < t; ++i) bstar.col(i) = betas[i];
        Mat gram = bstar.transpose() * bstar;
        for (int r = 1; r < t; ++r) {
            MultitaskRiskLimit lim = multitask_risk_limit(gram, r, p, n, sigma);
            const double lhs = lim.averaged - var_unit;
            const double rhs = (1.0 - double(r) / t) * (mu * mu - var_unit);
            REQUIRE(lhs == Catch::Approx(rhs).epsilon(0.05));
        }
    }
}

TEST_CASE("decomposition path tracks realized risk across noise redraws") {
    // mean over fresh noise draws of the realized averaged risk approaches
    // the decomposition value at the same design and projector
    const int p = 30, n = 90, t = 5, r = 2, redraws = 2000;
    const double sigma = 0.5, mu = 0.3;
    CovarianceSpec id = CovarianceSpec::identity(p);
    MultiDraw base = draw_multitask(n, p, t, mu, sigma, 555);
    Mat bstar(p, t);
    for (int i = 0; i < t; ++i) bstar.col(i) = base.betas[i];
    Mat gram = bstar.transpose() * bstar;

    MultiTaskFit fit = fit_multitask_hps(base.x, base.ys, r);
    Mat projector = fit.u_hat * fit.u_hat.transpose();
    const double decomposed =
        multitask_bias_variance(base.x, gram, projector, id, sigma).averaged;

    // same projector applied across redraws; the ls coefficients refresh
    Rng rng(556);
    Mat gram_x = base.x.transpose() * base.x;
    Eigen::LLT<Mat> llt(gram_x);
    double sum = 0.0, sumsq = 0.0;
    for (int d = 0; d < redraws; ++d) {
        Mat y(n, t);
        for (int i = 0; i < t; ++i) {
            y.col(i) = base.x * base.betas[i];
            for (int k = 0; k < n; ++k) y(k, i) += sigma * rng.gaussian();
        }
        Mat betas_hat = llt.solve(base.x.transpose() * y) * projector;
        double risk = 0.0;
        for (int i = 0; i < t; ++i)
            risk += (betas_hat.col(i) - base.betas[i]).squaredNorm();
        risk /= t;
        sum += risk;
        sumsq += risk * risk;
    }
    const double mean = sum / redraws;
    const double se = std::sqrt((sumsq / redraws - mean * mean) / redraws);
    REQUIRE(std::abs(mean - decomposed) <= 3.0 * se);
}
