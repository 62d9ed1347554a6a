#ifndef UNFOLD_INFERENCE_HPP_
#define UNFOLD_INFERENCE_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "unfold/response.hpp"
#include "unfold/simulate.hpp"
#include "unfold/splines.hpp"

namespace unfold {

/// Posterior p(beta | y, delta) for the Poisson regression y ~ Poisson(K beta)
/// with the boundary-augmented truncated Gaussian smoothness prior
/// p(beta | delta) ~ exp(-delta beta' Omega_A beta) on the nonnegative orthant.
struct PosteriorModel {
    ResponseMatrix response;
    BinnedCounts data;
    PenaltyMatrix omega_a;
    double delta = 0.0;

    int n_bins() const { return response.n_bins(); }
    int n_coeffs() const { return response.n_coeffs(); }

    void validate() const;
};

/// Poisson log-likelihood sum_i [y_i log mu_i - mu_i] with mu = K beta.
/// The log(y_i!) constants are omitted; they cancel in Metropolis-Hastings
/// ratios and in the M-step. Returns -inf when mu_i = 0 at a bin with
/// y_i > 0.
double log_likelihood(const PosteriorModel& model, const Eigen::VectorXd& beta);

/// delta-dependent part of the log prior: (p/2) log delta
/// - delta beta' Omega_A beta. The delta-free constant is omitted so the
/// M-step maximizer derivation applies verbatim.
double log_prior(const Eigen::VectorXd& beta, const PenaltyMatrix& omega_a, double delta);

/// Markov chain of posterior draws, one row per recorded sweep.
struct PosteriorChain {
    Eigen::MatrixXd draws;             // S x p, entrywise >= 0
    Eigen::VectorXd acceptance_rates;  // per coordinate, over recorded+burn-in sweeps
    std::uint64_t seed = 0;
    int burn_in_len = 0;

    int size() const { return static_cast<int>(draws.rows()); }
    int n_coeffs() const { return static_cast<int>(draws.cols()); }
};

/// Single-component Metropolis-Hastings sampler. Each sweep updates the
/// coordinates in ascending order; the proposal for a coordinate comes from
/// a second-order Taylor expansion of the log full conditional at the
/// current point: a truncated Gaussian when the approximating mean is
/// nonnegative, otherwise an exponential matching the Gaussian's log-slope
/// at zero. Records S post-burn-in sweeps.
PosteriorChain sample_posterior(const PosteriorModel& model, int n_samples,
                                const Eigen::VectorXd& beta_init, int burn_in,
                                std::uint64_t rng_seed);

/// Coordinate-wise empirical mean of the recorded draws.
Eigen::VectorXd posterior_mean(const PosteriorChain& chain);

/// Effective sample size per coordinate from Geyer's initial positive
/// sequence estimator; diagnostic only.
Eigen::VectorXd effective_sample_size(const PosteriorChain& chain);

/// CSV exchange: header "draw_index,beta_1,...,beta_p".
void write_chain_csv(const std::string& path, const PosteriorChain& chain);

}  // namespace unfold

#endif  // UNFOLD_INFERENCE_HPP_
