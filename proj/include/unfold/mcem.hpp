#ifndef UNFOLD_MCEM_HPP_
#define UNFOLD_MCEM_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "unfold/inference.hpp"

namespace unfold {

/// Monte Carlo EM settings for the marginal maximum likelihood estimate of
/// the smoothness hyperparameter delta.
struct McemConfig {
    double delta0 = 1e-5;      // initial hyperparameter
    int n_em = 30;             // EM iterations
    int mcmc_samples = 1000;   // MCMC sample size per E-step
    int burn_in = -1;          // per-chain burn-in; negative means mcmc_samples
    Eigen::VectorXd beta_init;
    std::uint64_t rng_seed = 0;

    // Hyperparameter guard rails; hitting them is surfaced as a warning.
    double delta_min = 1e-15;
    double delta_max = 1e+6;

    // Optional early stop: quit once |log delta change| stays below this for
    // three consecutive iterations (0 disables).
    double early_stop_tol = 0.0;

    void validate() const;
};

/// Per-iteration record of the EM path.
struct McemTrace {
    std::vector<double> deltas;                 // delta^(0) .. delta^(N)
    std::vector<Eigen::VectorXd> chain_means;   // posterior mean per E-step
    std::vector<double> mean_acceptance;        // sampler acceptance per E-step
    std::vector<double> log_delta_changes;      // |log delta^(i+1) - log delta^(i)|
    bool clamped = false;
    int iterations_run = 0;
};

/// Closed-form M-step maximizer of the Monte Carlo Q-function:
/// delta_next = p S / (2 sum_s beta_s' Omega_A beta_s). All-zero draws are
/// reported through *clamped and give delta_max.
double mstep_update(const PosteriorChain& chain, const PenaltyMatrix& omega_a,
                    double delta_max = 1e+6, bool* clamped = nullptr);

/// MCEM iteration: E-step samples S posterior draws at the current delta
/// (chain started from the previous posterior mean, the first iteration from
/// beta_init), M-step applies mstep_update. Returns delta_hat = the final
/// iterate together with the full trace.
std::pair<double, McemTrace> run_mcem(const BinnedCounts& data, const ResponseMatrix& response,
                                      const PenaltyMatrix& omega_a, const McemConfig& config);

/// CSV exchange: header "iter,delta,mean_acceptance".
void write_trace_csv(const std::string& path, const McemTrace& trace);

}  // namespace unfold

#endif  // UNFOLD_MCEM_HPP_
