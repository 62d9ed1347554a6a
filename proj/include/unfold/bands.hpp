#ifndef UNFOLD_BANDS_HPP_
#define UNFOLD_BANDS_HPP_

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "unfold/inference.hpp"
#include "unfold/nnls.hpp"

namespace unfold {

/// Point estimator abstraction: maps resampled counts (on the fixed binning)
/// to a nonnegative coefficient vector. The key seeds any randomness inside
/// the estimator (the posterior-mean estimator's chain); deterministic
/// estimators ignore it.
using PointEstimator = std::function<Eigen::VectorXd(const Eigen::VectorXd& counts, RngKey key)>;

/// Full-Poisson estimator: nonnegative least-squares initialization, then
/// the posterior mean of an MCMC chain at the fixed hyperparameter.
PointEstimator make_posterior_mean_estimator(const ResponseMatrix& response,
                                             const PenaltyMatrix& omega_a, double delta_hat,
                                             int mcmc_samples, int burn_in = -1);

/// Iterative bootstrap bias-correction settings.
struct BiasCorrectionConfig {
    int n_bc = 5;          // bias-correction iterations (0 disables)
    int r_bc = 10;         // bootstrap replicates per iteration
    int mcmc_samples = 1000;  // chain length per refit (full-Poisson path)
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Iterative bias-correction: per iteration draws r_bc datasets from
/// Poisson(K beta_i), refits each, subtracts the estimated bias from the
/// original estimate and clips negatives to zero. Returns the estimate
/// after every iteration count listed in checkpoints (ascending; entries in
/// [0, n_bc]).
std::vector<Eigen::VectorXd> bias_correct_path(const Eigen::VectorXd& beta_hat0,
                                               const PointEstimator& estimator,
                                               const Eigen::MatrixXd& K, int n_bc, int r_bc,
                                               RngKey key, const std::vector<int>& checkpoints);

/// Bias-corrected coefficients after cfg.n_bc iterations, refitting with the
/// posterior-mean estimator at the fixed hyperparameter.
Eigen::VectorXd bias_correct(const Eigen::VectorXd& beta_hat0, double delta_hat,
                             const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                             const BiasCorrectionConfig& cfg);

enum class BandMethod { bc_percentile, percentile, basic, stderr_band, credible };

std::string band_method_name(BandMethod method);
BandMethod band_method_from_name(const std::string& name);

/// Pointwise interval band on an evaluation grid. point is the uncorrected
/// intensity estimate, bc_point the bias-corrected one (equal when no
/// correction applies). The basic band is not clipped at zero.
struct IntervalBand {
    Eigen::VectorXd grid;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    Eigen::VectorXd point;
    Eigen::VectorXd bc_point;
    BandMethod method = BandMethod::bc_percentile;
    double alpha = 0.025;
    int n_bc = 0;  // bias-correction iterations behind this band
};

/// One shared bootstrap pass computing every requested band. The outer
/// bootstrap resamples y* ~ Poisson(y) and drives bc_percentile, percentile
/// and stderr bands; the basic band uses its own y* ~ Poisson(K beta_hat)
/// resampling. bc_percentile is emitted once per entry of nbc_values
/// (percentile is definitionally the nbc = 0 member). Deterministic for a
/// fixed cfg.rng_seed at any worker count.
std::vector<IntervalBand> bootstrap_bands(const BinnedCounts& data,
                                          const ResponseMatrix& response,
                                          const PenaltyMatrix& omega_a, const SplineBasis& basis,
                                          const PointEstimator& estimator,
                                          const BiasCorrectionConfig& cfg, int r_uq, double alpha,
                                          const Eigen::VectorXd& grid,
                                          const std::vector<BandMethod>& methods,
                                          const std::vector<int>& nbc_values, int workers = 1,
                                          const Eigen::VectorXd* beta_hat0 = nullptr);

/// 1-2alpha percentile band of the bias-corrected bootstrap sample
/// (full-Poisson refits at the fixed hyperparameter).
IntervalBand bc_percentile_band(const BinnedCounts& data, double delta_hat,
                                const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                                const SplineBasis& basis, const BiasCorrectionConfig& cfg,
                                int r_uq, double alpha, const Eigen::VectorXd& grid,
                                int workers = 1);

/// Percentile band without bias correction (the n_bc = 0 pipeline).
IntervalBand percentile_band(const BinnedCounts& data, double delta_hat,
                             const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                             const SplineBasis& basis, const BiasCorrectionConfig& cfg, int r_uq,
                             double alpha, const Eigen::VectorXd& grid, int workers = 1);

/// Basic (reflected) band [2 f_hat - q_{1-a}, 2 f_hat - q_a] from the
/// uncorrected bootstrap sample; may go negative.
IntervalBand basic_band(const BinnedCounts& data, double delta_hat,
                        const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                        const SplineBasis& basis, const BiasCorrectionConfig& cfg, int r_uq,
                        double alpha, const Eigen::VectorXd& grid, int workers = 1);

/// Normal-theory band f_hat_BC +/- z_{1-alpha} sd* from the bias-corrected
/// bootstrap sample.
IntervalBand stderr_band(const BinnedCounts& data, double delta_hat,
                         const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                         const SplineBasis& basis, const BiasCorrectionConfig& cfg, int r_uq,
                         double alpha, const Eigen::VectorXd& grid, int workers = 1);

/// Equal-tailed credible band: pointwise quantiles of the intensity over
/// posterior draws.
IntervalBand credible_band(const PosteriorChain& chain, const SplineBasis& basis, double alpha,
                           const Eigen::VectorXd& grid);

/// Order-statistic quantile at levels h = prob (R+1), linearly interpolated
/// and clamped to the sample extremes. Sorts a copy of the input.
double sample_quantile(std::vector<double> values, double prob);

/// Standard normal quantile, |error| < 1e-12.
double normal_quantile(double prob);

/// CSV exchange: header "s,lower,point,bc_point,upper,method,alpha"; bands
/// are appended in call order.
void write_bands_csv(const std::string& path, const std::vector<IntervalBand>& bands);

}  // namespace unfold

#endif  // UNFOLD_BANDS_HPP_
