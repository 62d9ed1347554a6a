#include "unfold/mcem.hpp"

#include <cmath>
#include <stdexcept>

#include "unfold/common.hpp"
#include "unfold/csv.hpp"

namespace unfold {

void McemConfig::validate() const {
    if (!(delta0 > 0.0)) throw std::invalid_argument("McemConfig: delta0 must be > 0");
    if (n_em < 1) throw std::invalid_argument("McemConfig: need at least one EM iteration");
    if (mcmc_samples < 1) throw std::invalid_argument("McemConfig: need mcmc_samples >= 1");
    if (!(delta_min > 0.0) || !(delta_max > delta_min))
        throw std::invalid_argument("McemConfig: invalid delta bounds");
}

double mstep_update(const PosteriorChain& chain, const PenaltyMatrix& omega_a, double delta_max,
                    bool* clamped) {
    if (chain.size() < 1) throw std::invalid_argument("mstep_update: empty chain");
    if (omega_a.size() != chain.n_coeffs())
        throw std::invalid_argument("mstep_update: penalty size mismatch");
    const int S = chain.size();
    const int p = chain.n_coeffs();
    double quad_sum = 0.0;
    for (int s = 0; s < S; ++s) {
        const Eigen::VectorXd beta = chain.draws.row(s).transpose();
        quad_sum += beta.dot(omega_a.entries * beta);
    }
    if (clamped) *clamped = false;
    if (quad_sum <= 0.0) {
        log_warn("mstep_update: all posterior draws are zero; clamping delta to " +
                 std::to_string(delta_max));
        if (clamped) *clamped = true;
        return delta_max;
    }
    return static_cast<double>(p) * S / (2.0 * quad_sum);
}

std::pair<double, McemTrace> run_mcem(const BinnedCounts& data, const ResponseMatrix& response,
                                      const PenaltyMatrix& omega_a, const McemConfig& config) {
    config.validate();
    if (config.beta_init.size() != response.n_coeffs())
        throw std::invalid_argument("run_mcem: beta_init length mismatch");

    const int burn_in = config.burn_in >= 0 ? config.burn_in : config.mcmc_samples;
    McemTrace trace;
    trace.deltas.push_back(config.delta0);

    PosteriorModel model{response, data, omega_a, config.delta0};
    Eigen::VectorXd beta_start = config.beta_init;
    const RngKey root{config.rng_seed};

    double delta = config.delta0;
    int stable_steps = 0;
    for (int iter = 0; iter < config.n_em; ++iter) {
        model.delta = delta;
        const std::uint64_t chain_seed =
            root.child(rng_tag::mcem_iter).child(static_cast<std::uint64_t>(iter)).state;
        PosteriorChain chain =
            sample_posterior(model, config.mcmc_samples, beta_start, burn_in, chain_seed);

        bool clamped = false;
        double delta_next = mstep_update(chain, omega_a, config.delta_max, &clamped);
        if (delta_next < config.delta_min) {
            log_warn("run_mcem: clamping delta to lower bound");
            delta_next = config.delta_min;
            clamped = true;
        }
        trace.clamped = trace.clamped || clamped;

        beta_start = posterior_mean(chain);
        trace.chain_means.push_back(beta_start);
        trace.mean_acceptance.push_back(chain.acceptance_rates.mean());
        trace.log_delta_changes.push_back(std::fabs(std::log(delta_next) - std::log(delta)));
        trace.deltas.push_back(delta_next);
        delta = delta_next;
        trace.iterations_run = iter + 1;

        if (config.early_stop_tol > 0.0) {
            stable_steps = trace.log_delta_changes.back() < config.early_stop_tol
                               ? stable_steps + 1
                               : 0;
            if (stable_steps >= 3) break;
        }
    }
    return {delta, trace};
}

void write_trace_csv(const std::string& path, const McemTrace& trace) {
    CsvWriter csv(path, "iter,delta,mean_acceptance");
    for (std::size_t i = 0; i + 1 < trace.deltas.size(); ++i)
        csv.row({static_cast<double>(i + 1), trace.deltas[i + 1],
                 i < trace.mean_acceptance.size() ? trace.mean_acceptance[i] : 0.0});
}

}  // namespace unfold
