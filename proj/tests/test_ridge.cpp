#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "oracles.hpp"
#include "unfold/bands.hpp"
#include "unfold/nnls.hpp"
#include "unfold/ridge.hpp"
#include "unfold/simulate.hpp"

using namespace unfold;

namespace {

struct GmmScaffold {
    Interval domain{-7, 7};
    SplineBasis basis = SplineBasis::uniform(domain, 26, 4);
    PenaltyMatrix omega_a = aristotelian_matrix(curvature_matrix(basis), 5.0, 5.0);
    ResponseMatrix response = build_response_matrix(SmearingKernel::gaussian(1.0), Efficiency(),
                                                    basis, uniform_bin_edges(domain, 40));

    BinnedCounts simulate(std::uint64_t seed) const {
        const TrueIntensity truth = TrueIntensity::gmm(domain, 10000.0, 0.2, 0.5, 0.3);
        const auto points = sample_true_points(truth, seed);
        const auto smeared =
            thin_and_smear(points, Efficiency(), SmearingKernel::gaussian(1.0), domain, seed + 1);
        return bin_points(smeared, uniform_bin_edges(domain, 40));
    }
};

}  // namespace

TEST_CASE("large penalties shrink the estimate to zero") {
    const GmmScaffold s;
    const BinnedCounts y = s.simulate(41);
    RidgeModel model{s.response, s.omega_a, 1e9, Eigen::VectorXd(), false};
    const Eigen::VectorXd beta = ridge_estimate(y.counts, model);
    CHECK((beta.array() >= 0.0).all());
    CHECK(beta.maxCoeff() < 1.0);
}

TEST_CASE("identity response with a tiny penalty recovers counts per bin width") {
    const SplineBasis basis = SplineBasis::uniform(Interval(0, 2), 3, 1);
    const ResponseMatrix response = build_response_matrix(
        SmearingKernel::identity(), Efficiency(), basis, uniform_bin_edges(Interval(0, 2), 4));
    PenaltyMatrix omega_a;
    omega_a.entries = Eigen::MatrixXd::Identity(4, 4);
    Eigen::VectorXd y(4);
    y << 100.0, 41.0, 7.0, 260.0;
    RidgeModel model{response, omega_a, 1e-12, Eigen::VectorXd::Constant(4, 1.0), false};
    const Eigen::VectorXd beta = ridge_estimate(y, model);
    for (int j = 0; j < 4; ++j) CHECK(beta[j] == doctest::Approx(y[j] / 0.5).epsilon(1e-6));
}

TEST_CASE("pre-clip solution zeroes the penalized weighted least squares gradient") {
    const GmmScaffold s;
    const BinnedCounts y = s.simulate(42);
    RidgeModel model{s.response, s.omega_a, 8.3e-7, Eigen::VectorXd(), false};
    RidgeDetail detail;
    ridge_estimate(y.counts, model, &detail);
    const Eigen::VectorXd w = y.counts.cwiseMax(1.0).cwiseInverse();
    const Eigen::VectorXd gradient =
        s.response.entries.transpose() * w.asDiagonal() *
            (s.response.entries * detail.pre_clip - y.counts) +
        2.0 * model.delta * s.omega_a.entries * detail.pre_clip;
    const double scale =
        (s.response.entries.transpose() * w.asDiagonal() * y.counts).norm();
    CHECK(gradient.norm() < 1e-8 * scale);
    CHECK(detail.condition_estimate > 1.0);
}

TEST_CASE("count scaling maps to a penalty rescaling") {
    const GmmScaffold s;
    const BinnedCounts y = s.simulate(43);
    const double c = 4.0;
    const Eigen::VectorXd weights = y.counts.cwiseMax(1.0);

    // ridge(c y, W/c, delta) = c ridge(y, W, c delta); with delta -> 0 both
    // sides approach plain c ridge(y, W, delta).
    for (double delta : {3e-6, 1e-12}) {
        RidgeModel base{s.response, s.omega_a, c * delta, weights, false};
        RidgeDetail base_detail;
        ridge_estimate(y.counts, base, &base_detail);

        RidgeModel scaled{s.response, s.omega_a, delta, weights * c, false};
        RidgeDetail scaled_detail;
        ridge_estimate(c * y.counts, scaled, &scaled_detail);

        const double diff =
            (scaled_detail.pre_clip - c * base_detail.pre_clip).cwiseAbs().maxCoeff();
        CHECK(diff < 1e-8 * c * base_detail.pre_clip.cwiseAbs().maxCoeff());

        if (delta <= 1e-12) {
            RidgeModel plain{s.response, s.omega_a, delta, weights, false};
            RidgeDetail plain_detail;
            ridge_estimate(y.counts, plain, &plain_detail);
            const double limit_gap =
                (scaled_detail.pre_clip - c * plain_detail.pre_clip).cwiseAbs().maxCoeff();
            CHECK(limit_gap < 1e-4 * c * plain_detail.pre_clip.cwiseAbs().maxCoeff());
        }
    }
}

TEST_CASE("exact nonnegative solve agrees with clipping when nothing clips") {
    const GmmScaffold s;
    const BinnedCounts y = s.simulate(44);
    RidgeModel clip_model{s.response, s.omega_a, 8.3e-7, Eigen::VectorXd(), false};
    RidgeModel exact_model = clip_model;
    exact_model.exact_nonnegative = true;
    const Eigen::VectorXd clipped = ridge_estimate(y.counts, clip_model);
    const Eigen::VectorXd exact = ridge_estimate(y.counts, exact_model);
    CHECK((exact.array() >= 0.0).all());
    // Where the unconstrained solution is interior, the two coincide.
    RidgeDetail detail;
    ridge_estimate(y.counts, clip_model, &detail);
    if ((detail.pre_clip.array() > 0.0).all())
        CHECK((exact - clipped).cwiseAbs().maxCoeff() < 1e-6 * clipped.maxCoeff());
    else
        CHECK((exact - clipped).cwiseAbs().maxCoeff() <
              0.2 * std::max(1.0, clipped.maxCoeff()));
}

TEST_CASE("ridge point estimate tracks the full posterior mean at the fitted penalty") {
    const GmmScaffold s;
    const BinnedCounts y = s.simulate(45);
    const double delta_hat = 8.3e-7;

    RidgeModel model{s.response, s.omega_a, delta_hat, Eigen::VectorXd(), false};
    const Eigen::VectorXd fast = ridge_estimate(y.counts, model);

    PosteriorModel posterior{s.response, y, s.omega_a, delta_hat};
    const auto t0 = std::chrono::steady_clock::now();
    const PosteriorChain chain =
        sample_posterior(posterior, 2000, nnls_init(y, s.basis), 2000, 1001);
    const auto t1 = std::chrono::steady_clock::now();
    const Eigen::VectorXd full = posterior_mean(chain);

    Eigen::VectorXd grid(200);
    for (int i = 0; i < 200; ++i) grid[i] = -7.0 + 14.0 * i / 199.0;
    const Eigen::MatrixXd design = s.basis.design_matrix(grid);
    const double rel_l2 = (design * (fast - full)).norm() / (design * full).norm();
    CHECK(rel_l2 < 0.15);

    // Informational speed ratio: the criterion is >= 100x at S = 1000; the
    // chain above already takes thousands of ridge-solve times.
    const auto t2 = std::chrono::steady_clock::now();
    for (int i = 0; i < 50; ++i) ridge_estimate(y.counts, model);
    const auto t3 = std::chrono::steady_clock::now();
    const double chain_time = std::chrono::duration<double>(t1 - t0).count();
    const double ridge_time = std::chrono::duration<double>(t3 - t2).count() / 50.0;
    std::printf("[info] ridge %.1f us, chain(S=2000) %.1f ms, ratio %.0fx\n",
                1e6 * ridge_time, 1e3 * chain_time, chain_time / ridge_time);
    CHECK(chain_time > 10.0 * ridge_time);
}

TEST_CASE("fast band wrappers mirror the generic pipeline") {
    const GmmScaffold s;
    const BinnedCounts y = s.simulate(46);
    BiasCorrectionConfig cfg;
    cfg.n_bc = 2;
    cfg.r_bc = 3;
    cfg.rng_seed = 5150;
    Eigen::VectorXd grid(41);
    for (int i = 0; i < 41; ++i) grid[i] = -7.0 + 14.0 * i / 40.0;

    const IntervalBand bc =
        fast_bc_percentile_band(y, 8.3e-7, s.response, s.omega_a, s.basis, cfg, 40, 0.025, grid);
    CHECK(bc.method == BandMethod::bc_percentile);
    CHECK(bc.n_bc == 2);
    CHECK((bc.lower.array() <= bc.upper.array()).all());
    CHECK((bc.lower.array() >= 0.0).all());

    const IntervalBand plain =
        fast_percentile_band(y, 8.3e-7, s.response, s.omega_a, s.basis, cfg, 40, 0.025, grid);
    CHECK(plain.n_bc == 0);

    // Same seeds, zero iterations: the wrapper reduces to the percentile band.
    BiasCorrectionConfig cfg0 = cfg;
    cfg0.n_bc = 0;
    const IntervalBand bc0 =
        fast_bc_percentile_band(y, 8.3e-7, s.response, s.omega_a, s.basis, cfg0, 40, 0.025, grid);
    CHECK((bc0.lower - plain.lower).cwiseAbs().maxCoeff() == 0.0);
    CHECK((bc0.upper - plain.upper).cwiseAbs().maxCoeff() == 0.0);
}
