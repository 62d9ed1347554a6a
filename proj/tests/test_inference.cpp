#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "oracles.hpp"
#include "unfold/inference.hpp"
#include "unfold/nnls.hpp"

using namespace unfold;

namespace {

// Minimal handmade models; the response matrix is assembled directly.
ResponseMatrix manual_response(const Eigen::MatrixXd& K, Interval smeared) {
    const int p = static_cast<int>(K.cols());
    SplineBasis basis = SplineBasis::uniform(Interval(0, 1), std::max(0, p - 1), 1);
    Eigen::VectorXd edges(K.rows() + 1);
    for (int i = 0; i <= K.rows(); ++i)
        edges[i] = smeared.lo + smeared.length() * i / K.rows();
    return ResponseMatrix{K, edges, basis, 1.0, 8};
}

PosteriorModel one_dim_model(double y_count, double delta, double penalty) {
    Eigen::MatrixXd K(1, 1);
    K << 1.0;
    ResponseMatrix response = manual_response(K, Interval(0, 1));
    Eigen::VectorXd y(1);
    y << y_count;
    PenaltyMatrix omega_a;
    omega_a.entries = Eigen::MatrixXd::Constant(1, 1, penalty);
    omega_a.kind = PenaltyMatrix::Kind::aristotelian;
    return PosteriorModel{std::move(response), BinnedCounts{y, response.bin_edges}, omega_a,
                          delta};
}

PosteriorModel two_dim_model() {
    Eigen::MatrixXd K(2, 2);
    K << 1.0, 0.35, 0.25, 0.9;
    ResponseMatrix response = manual_response(K, Interval(0, 2));
    Eigen::VectorXd y(2);
    y << 7.0, 4.0;
    PenaltyMatrix omega_a;
    omega_a.entries.resize(2, 2);
    omega_a.entries << 0.5, -0.2, -0.2, 0.4;
    omega_a.kind = PenaltyMatrix::Kind::aristotelian;
    return PosteriorModel{std::move(response), BinnedCounts{y, response.bin_edges}, omega_a,
                          0.08};
}

}  // namespace

TEST_CASE("log likelihood matches the Poisson form") {
    PosteriorModel model = one_dim_model(0.0, 1.0, 1.0);

    SUBCASE("all-zero data gives minus the total mean") {
        Eigen::VectorXd beta(1);
        beta << 2.5;
        CHECK(log_likelihood(model, beta) == doctest::Approx(-2.5).epsilon(1e-14));
    }
    SUBCASE("1x1 likelihood is maximized at the observed count") {
        model.data.counts[0] = 3.0;
        Eigen::VectorXd beta(1);
        auto ll = [&](double x) {
            beta << x;
            return log_likelihood(model, beta);
        };
        CHECK(ll(3.0) > ll(3.0 + 1e-4));
        CHECK(ll(3.0) > ll(3.0 - 1e-4));
    }
    SUBCASE("zero mean with positive counts is impossible") {
        model.data.counts[0] = 2.0;
        Eigen::VectorXd beta(1);
        beta << 0.0;
        CHECK(log_likelihood(model, beta) == -std::numeric_limits<double>::infinity());
        beta << -0.5;
        CHECK_THROWS_AS(log_likelihood(model, beta), std::invalid_argument);
    }
}

TEST_CASE("log likelihood differences match the literal product of Poisson pmfs") {
    Eigen::MatrixXd K(3, 2);
    K << 0.8, 0.1, 0.3, 0.6, 0.05, 0.9;
    ResponseMatrix response = manual_response(K, Interval(0, 3));
    Eigen::VectorXd y(3);
    y << 4.0, 0.0, 7.0;
    PenaltyMatrix omega_a;
    omega_a.entries = Eigen::MatrixXd::Identity(2, 2);
    PosteriorModel model{std::move(response), BinnedCounts{y, response.bin_edges}, omega_a, 1.0};

    const auto literal_log_pmf = [&](const Eigen::VectorXd& beta) {
        const Eigen::VectorXd mu = K * beta;
        double v = 0.0;
        for (int i = 0; i < 3; ++i)
            v += y[i] * std::log(mu[i]) - mu[i] - std::lgamma(y[i] + 1.0);
        return v;
    };
    Eigen::VectorXd beta1(2), beta2(2);
    beta1 << 3.0, 5.0;
    beta2 << 6.5, 1.25;
    const double impl_diff = log_likelihood(model, beta1) - log_likelihood(model, beta2);
    const double literal_diff = literal_log_pmf(beta1) - literal_log_pmf(beta2);
    CHECK(impl_diff == doctest::Approx(literal_diff).epsilon(1e-12));
}

TEST_CASE("log prior follows (p/2) log delta - delta quad form") {
    PenaltyMatrix omega_a;
    omega_a.entries.resize(2, 2);
    omega_a.entries << 2.0, 0.5, 0.5, 1.0;

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    CHECK(log_prior(zero, omega_a, 0.3) == doctest::Approx(std::log(0.3)).epsilon(1e-14));

    Eigen::VectorXd beta(2);
    beta << 1.0, 2.0;
    const double quad = beta.dot(omega_a.entries * beta);
    const double at_beta = log_prior(beta, omega_a, 0.3);
    const double at_2beta = log_prior(2.0 * beta, omega_a, 0.3);
    CHECK(at_2beta - at_beta == doctest::Approx(-0.3 * 3.0 * quad).epsilon(1e-12));

    const double delta_doubled = log_prior(beta, omega_a, 0.6);
    CHECK(delta_doubled - at_beta ==
          doctest::Approx(std::log(2.0) - 0.3 * quad).epsilon(1e-12));

    beta << -1.0, 1.0;
    CHECK_THROWS_AS(log_prior(beta, omega_a, 0.3), std::invalid_argument);
    beta << 1.0, 1.0;
    CHECK_THROWS_AS(log_prior(beta, omega_a, 0.0), std::invalid_argument);
}

TEST_CASE("sampler matches the 1-d quadrature oracle") {
    PosteriorModel model = one_dim_model(5.0, 1e-12, 2.0);
    Eigen::VectorXd init(1);
    init << 1.0;
    const PosteriorChain chain = sample_posterior(model, 100000, init, 2000, 99);
    CHECK((chain.draws.array() >= 0.0).all());
    CHECK(chain.acceptance_rates[0] > 0.0);

    const oracles::GridPosterior oracle = oracles::grid_posterior(
        model.response.entries, model.data.counts, model.omega_a.entries, model.delta, 60.0);
    std::vector<double> path(chain.draws.data(), chain.draws.data() + chain.size());
    const double se = oracles::batch_means_se(path);
    CHECK(std::fabs(posterior_mean(chain)[0] - oracle.mean(0)) < 3.0 * se);
}

TEST_CASE("sampler matches the 2-d tensor quadrature oracle") {
    const PosteriorModel model = two_dim_model();
    Eigen::VectorXd init(2);
    init << 3.0, 3.0;
    const PosteriorChain chain = sample_posterior(model, 100000, init, 2000, 1234);
    CHECK((chain.draws.array() >= 0.0).all());

    const oracles::GridPosterior oracle = oracles::grid_posterior(
        model.response.entries, model.data.counts, model.omega_a.entries, model.delta, 40.0,
        900);
    for (int coord = 0; coord < 2; ++coord) {
        std::vector<double> path(chain.size());
        for (int s = 0; s < chain.size(); ++s) path[s] = chain.draws(s, coord);
        const double se = oracles::batch_means_se(path);
        CHECK(std::fabs(posterior_mean(chain)[coord] - oracle.mean(coord)) < 3.0 * se);
    }
}

TEST_CASE("one sweep from an exact posterior draw preserves the marginals") {
    PosteriorModel model = one_dim_model(5.0, 0.05, 2.0);
    const oracles::GridPosterior oracle = oracles::grid_posterior(
        model.response.entries, model.data.counts, model.omega_a.entries, model.delta, 50.0);

    const int n_rep = 2000;
    RngStream uniforms(2024);
    std::vector<double> after_one_sweep(n_rep), exact(n_rep);
    for (int rep = 0; rep < n_rep; ++rep) {
        const Eigen::VectorXd start = oracle.sample(uniforms.uniform(), uniforms.uniform());
        const PosteriorChain chain = sample_posterior(model, 1, start, 0, 555000 + rep);
        after_one_sweep[rep] = chain.draws(0, 0);
        exact[rep] = oracle.sample(uniforms.uniform(), uniforms.uniform())[0];
    }
    CHECK(oracles::ks_two_sample_accepts(after_one_sweep, exact, 0.01));
}

TEST_CASE("posterior mean reductions") {
    PosteriorChain chain;
    chain.draws.resize(2, 2);
    chain.draws << 0.0, 4.0, 2.0, 4.0;
    const Eigen::VectorXd mean = posterior_mean(chain);
    CHECK(mean[0] == doctest::Approx(1.0));
    CHECK(mean[1] == doctest::Approx(4.0));
    PosteriorChain empty;
    empty.draws.resize(0, 2);
    CHECK_THROWS_AS(posterior_mean(empty), std::invalid_argument);
}

TEST_CASE("chains are reproducible from the seed") {
    const PosteriorModel model = two_dim_model();
    Eigen::VectorXd init(2);
    init << 1.0, 1.0;
    const PosteriorChain a = sample_posterior(model, 500, init, 100, 42);
    const PosteriorChain b = sample_posterior(model, 500, init, 100, 42);
    CHECK((a.draws - b.draws).cwiseAbs().maxCoeff() == 0.0);
    const PosteriorChain c = sample_posterior(model, 500, init, 100, 43);
    CHECK((a.draws - c.draws).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("degenerate data collapse the chain toward zero") {
    PosteriorModel model = one_dim_model(0.0, 1e4, 1.0);
    Eigen::VectorXd init(1);
    init << 3.0;
    const PosteriorChain chain = sample_posterior(model, 4000, init, 500, 7);
    CHECK((chain.draws.array() >= 0.0).all());
    CHECK(posterior_mean(chain)[0] < 0.05);
}

TEST_CASE("sampler validates inputs") {
    const PosteriorModel model = two_dim_model();
    Eigen::VectorXd init(2);
    init << 1.0, -1.0;
    CHECK_THROWS_AS(sample_posterior(model, 100, init, 10, 1), std::invalid_argument);
    init << 1.0, 1.0;
    CHECK_THROWS_AS(sample_posterior(model, 0, init, 10, 1), std::invalid_argument);
    PosteriorModel bad = model;
    bad.delta = 0.0;
    CHECK_THROWS_AS(sample_posterior(bad, 100, init, 10, 1), std::invalid_argument);
}
