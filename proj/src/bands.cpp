#include "unfold/bands.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "unfold/csv.hpp"
#include "unfold/parallel.hpp"

namespace unfold {

namespace {

// Poisson draws for every bin of a mean vector.
Eigen::VectorXd poisson_vector(const Eigen::VectorXd& mean, RngStream& rng) {
    Eigen::VectorXd out(mean.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i)
        out[i] = static_cast<double>(rng.poisson(std::max(mean[i], 0.0)));
    return out;
}

}  // namespace

void BiasCorrectionConfig::validate() const {
    if (n_bc < 0) throw std::invalid_argument("BiasCorrectionConfig: n_bc must be >= 0");
    if (r_bc < 1) throw std::invalid_argument("BiasCorrectionConfig: r_bc must be >= 1");
    if (mcmc_samples < 1)
        throw std::invalid_argument("BiasCorrectionConfig: mcmc_samples must be >= 1");
}

PointEstimator make_posterior_mean_estimator(const ResponseMatrix& response,
                                             const PenaltyMatrix& omega_a, double delta_hat,
                                             int mcmc_samples, int burn_in) {
    if (mcmc_samples < 1)
        throw std::invalid_argument("posterior_mean_estimator: mcmc_samples must be >= 1");
    const int actual_burn_in = burn_in >= 0 ? burn_in : mcmc_samples;
    return [response, omega_a, delta_hat, mcmc_samples, actual_burn_in](
               const Eigen::VectorXd& counts, RngKey key) {
        BinnedCounts data{counts, response.bin_edges};
        PosteriorModel model{response, data, omega_a, delta_hat};
        const Eigen::VectorXd beta0 = nnls_init(data, response.basis);
        PosteriorChain chain = sample_posterior(model, mcmc_samples, beta0, actual_burn_in,
                                                key.child(rng_tag::chain).state);
        return posterior_mean(chain);
    };
}

std::vector<Eigen::VectorXd> bias_correct_path(const Eigen::VectorXd& beta_hat0,
                                               const PointEstimator& estimator,
                                               const Eigen::MatrixXd& K, int n_bc, int r_bc,
                                               RngKey key, const std::vector<int>& checkpoints) {
    if ((beta_hat0.array() < 0.0).any())
        throw std::invalid_argument("bias_correct: initial estimate must be nonnegative");
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        if (checkpoints[c] < 0 || checkpoints[c] > n_bc)
            throw std::invalid_argument("bias_correct: checkpoint outside [0, n_bc]");
        if (c > 0 && checkpoints[c] <= checkpoints[c - 1])
            throw std::invalid_argument("bias_correct: checkpoints must be ascending");
    }

    std::vector<Eigen::VectorXd> out;
    out.reserve(checkpoints.size());
    std::size_t next_cp = 0;
    Eigen::VectorXd beta_i = beta_hat0;
    if (next_cp < checkpoints.size() && checkpoints[next_cp] == 0) {
        out.push_back(beta_i);
        ++next_cp;
    }

    for (int i = 0; i < n_bc && next_cp < checkpoints.size(); ++i) {
        const RngKey iter_key = key.child(rng_tag::bc_iter).child(static_cast<std::uint64_t>(i));
        const Eigen::VectorXd mu = K * beta_i;
        Eigen::VectorXd refit_mean = Eigen::VectorXd::Zero(beta_i.size());
        for (int r = 0; r < r_bc; ++r) {
            const RngKey inner = iter_key.child(rng_tag::bc_inner).child(
                static_cast<std::uint64_t>(r));
            RngStream draw_stream(inner);
            const Eigen::VectorXd y_star = poisson_vector(mu, draw_stream);
            refit_mean += estimator(y_star, inner.child(rng_tag::refit));
        }
        refit_mean /= static_cast<double>(r_bc);
        const Eigen::VectorXd bias = refit_mean - beta_i;
        beta_i = (beta_hat0 - bias).cwiseMax(0.0);
        if (checkpoints[next_cp] == i + 1) {
            out.push_back(beta_i);
            ++next_cp;
        }
    }
    return out;
}

Eigen::VectorXd bias_correct(const Eigen::VectorXd& beta_hat0, double delta_hat,
                             const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                             const BiasCorrectionConfig& cfg) {
    cfg.validate();
    const PointEstimator estimator =
        make_posterior_mean_estimator(response, omega_a, delta_hat, cfg.mcmc_samples);
    return bias_correct_path(beta_hat0, estimator, response.entries, cfg.n_bc, cfg.r_bc,
                             RngKey{cfg.rng_seed}, {cfg.n_bc})
        .front();
}

std::string band_method_name(BandMethod method) {
    switch (method) {
        case BandMethod::bc_percentile: return "bc_percentile";
        case BandMethod::percentile: return "percentile";
        case BandMethod::basic: return "basic";
        case BandMethod::stderr_band: return "stderr";
        case BandMethod::credible: return "credible";
    }
    return "unknown";
}

BandMethod band_method_from_name(const std::string& name) {
    if (name == "bc_percentile") return BandMethod::bc_percentile;
    if (name == "percentile") return BandMethod::percentile;
    if (name == "basic") return BandMethod::basic;
    if (name == "stderr") return BandMethod::stderr_band;
    if (name == "credible") return BandMethod::credible;
    throw std::invalid_argument("unknown band method: " + name);
}

double sample_quantile(std::vector<double> values, double prob) {
    if (values.empty()) throw std::invalid_argument("sample_quantile: empty sample");
    std::sort(values.begin(), values.end());
    const int n = static_cast<int>(values.size());
    const double h = prob * (n + 1);
    if (h <= 1.0) return values.front();
    if (h >= n) return values.back();
    const int i = static_cast<int>(h);
    const double frac = h - i;
    return values[i - 1] + frac * (values[i] - values[i - 1]);
}

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0))
        throw std::invalid_argument("normal_quantile: probability must lie in (0,1)");
    // Acklam's rational approximation, polished with one Halley step.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (prob < p_low) {
        const double q = std::sqrt(-2.0 * std::log(prob));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (prob <= 1.0 - p_low) {
        const double q = prob - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - prob));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - prob;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

namespace {

struct BootstrapSamples {
    // samples[c](r, g): intensity of outer replicate r at grid point g for
    // checkpoint c.
    std::vector<Eigen::MatrixXd> samples;
    std::vector<Eigen::VectorXd> observed;  // bias-corrected path of the observed fit
    Eigen::VectorXd observed_raw;           // uncorrected observed intensity
};

BootstrapSamples run_bootstrap(const Eigen::VectorXd& resample_mean,
                               const ResponseMatrix& response, const Eigen::MatrixXd& design,
                               const PointEstimator& estimator, const BiasCorrectionConfig& cfg,
                               int r_uq, const std::vector<int>& checkpoints, RngKey root,
                               int workers, const Eigen::VectorXd& beta_hat0) {
    const int n_cp = static_cast<int>(checkpoints.size());
    const int n_grid = static_cast<int>(design.rows());

    BootstrapSamples out;
    out.samples.assign(n_cp, Eigen::MatrixXd::Zero(r_uq, n_grid));
    out.observed_raw = design * beta_hat0;
    const std::vector<Eigen::VectorXd> observed_path =
        bias_correct_path(beta_hat0, estimator, response.entries, cfg.n_bc, cfg.r_bc,
                          root.child(rng_tag::observed_fit), checkpoints);
    for (const Eigen::VectorXd& beta : observed_path)
        out.observed.push_back(design * beta);

    run_parallel(r_uq, workers, [&](int r) {
        const RngKey rep_key = root.child(rng_tag::outer_boot).child(static_cast<std::uint64_t>(r));
        RngStream draw_stream(rep_key);
        const Eigen::VectorXd y_star = poisson_vector(resample_mean, draw_stream);
        const Eigen::VectorXd beta_star = estimator(y_star, rep_key.child(rng_tag::refit));
        const std::vector<Eigen::VectorXd> path = bias_correct_path(
            beta_star, estimator, response.entries, cfg.n_bc, cfg.r_bc, rep_key, checkpoints);
        for (int c = 0; c < n_cp; ++c) out.samples[c].row(r) = (design * path[c]).transpose();
    });
    return out;
}

IntervalBand percentile_from_sample(const Eigen::MatrixXd& sample, const Eigen::VectorXd& grid,
                                    const Eigen::VectorXd& point, const Eigen::VectorXd& bc_point,
                                    double alpha, BandMethod method, int n_bc) {
    const int n_grid = static_cast<int>(grid.size());
    IntervalBand band;
    band.grid = grid;
    band.lower.resize(n_grid);
    band.upper.resize(n_grid);
    band.point = point;
    band.bc_point = bc_point;
    band.method = method;
    band.alpha = alpha;
    band.n_bc = n_bc;
    std::vector<double> column(sample.rows());
    for (int g = 0; g < n_grid; ++g) {
        for (int r = 0; r < sample.rows(); ++r) column[r] = sample(r, g);
        band.lower[g] = sample_quantile(column, alpha);
        band.upper[g] = sample_quantile(column, 1.0 - alpha);
    }
    return band;
}

}  // namespace

std::vector<IntervalBand> bootstrap_bands(const BinnedCounts& data,
                                          const ResponseMatrix& response,
                                          const PenaltyMatrix& omega_a, const SplineBasis& basis,
                                          const PointEstimator& estimator,
                                          const BiasCorrectionConfig& cfg, int r_uq, double alpha,
                                          const Eigen::VectorXd& grid,
                                          const std::vector<BandMethod>& methods,
                                          const std::vector<int>& nbc_values, int workers,
                                          const Eigen::VectorXd* beta_hat0_in) {
    cfg.validate();
    if (!(alpha > 0.0 && alpha < 0.5))
        throw std::invalid_argument("bootstrap_bands: alpha must lie in (0, 0.5)");
    if (r_uq < 20)
        throw std::invalid_argument(
            "bootstrap_bands: need at least 20 bootstrap replicates for quantiles");
    (void)omega_a;

    bool want_bc = false, want_percentile = false, want_basic = false, want_stderr = false;
    for (BandMethod m : methods) {
        switch (m) {
            case BandMethod::bc_percentile: want_bc = true; break;
            case BandMethod::percentile: want_percentile = true; break;
            case BandMethod::basic: want_basic = true; break;
            case BandMethod::stderr_band: want_stderr = true; break;
            case BandMethod::credible:
                throw std::invalid_argument(
                    "bootstrap_bands: the credible band comes from credible_band()");
        }
    }

    // Checkpoints: 0 when the percentile or basic band needs the raw sample,
    // plus every requested bias-correction count.
    std::vector<int> checkpoints;
    if (want_percentile || want_basic) checkpoints.push_back(0);
    if (want_bc || want_stderr) {
        if (nbc_values.empty()) checkpoints.push_back(cfg.n_bc);
        for (int nbc : nbc_values) checkpoints.push_back(nbc);
    }
    std::sort(checkpoints.begin(), checkpoints.end());
    checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
    if (checkpoints.empty()) return {};
    BiasCorrectionConfig run_cfg = cfg;
    run_cfg.n_bc = checkpoints.back();

    const Eigen::MatrixXd design = basis.design_matrix(grid);
    const RngKey root{cfg.rng_seed};
    const Eigen::VectorXd beta_hat0 =
        beta_hat0_in ? *beta_hat0_in
                     : estimator(data.counts, root.child(rng_tag::observed_fit).child(rng_tag::refit));

    auto checkpoint_index = [&](int nbc) {
        return static_cast<int>(std::lower_bound(checkpoints.begin(), checkpoints.end(), nbc) -
                                checkpoints.begin());
    };

    // Main bootstrap: y* ~ Poisson(mu_hat) with mu_hat = y, the maximum
    // likelihood estimate of the smeared means.
    BootstrapSamples main = run_bootstrap(data.counts, response, design, estimator, run_cfg,
                                          r_uq, checkpoints, root, workers, beta_hat0);

    std::vector<IntervalBand> bands;
    for (BandMethod m : methods) {
        switch (m) {
            case BandMethod::bc_percentile: {
                for (int nbc : nbc_values) {
                    const int c = checkpoint_index(nbc);
                    bands.push_back(percentile_from_sample(main.samples[c], grid,
                                                           main.observed_raw, main.observed[c],
                                                           alpha, BandMethod::bc_percentile,
                                                           nbc));
                }
                break;
            }
            case BandMethod::percentile: {
                const int c = checkpoint_index(0);
                bands.push_back(percentile_from_sample(main.samples[c], grid, main.observed_raw,
                                                       main.observed[c], alpha,
                                                       BandMethod::percentile, 0));
                break;
            }
            case BandMethod::stderr_band: {
                const int nbc = nbc_values.empty() ? cfg.n_bc : nbc_values.back();
                const int c = checkpoint_index(nbc);
                const Eigen::MatrixXd& sample = main.samples[c];
                const double z = normal_quantile(1.0 - alpha);
                IntervalBand band;
                band.grid = grid;
                band.point = main.observed_raw;
                band.bc_point = main.observed[c];
                band.method = BandMethod::stderr_band;
                band.alpha = alpha;
                band.n_bc = nbc;
                band.lower.resize(grid.size());
                band.upper.resize(grid.size());
                for (int g = 0; g < grid.size(); ++g) {
                    const Eigen::VectorXd col = sample.col(g);
                    const double mean = col.mean();
                    const double sd = std::sqrt((col.array() - mean).square().sum() /
                                                std::max<int>(1, sample.rows() - 1));
                    band.lower[g] = band.bc_point[g] - z * sd;
                    band.upper[g] = band.bc_point[g] + z * sd;
                }
                bands.push_back(std::move(band));
                break;
            }
            case BandMethod::basic: {
                // Parametric resampling from the fitted means Poisson(K beta_hat),
                // no bias correction.
                BiasCorrectionConfig basic_cfg = cfg;
                basic_cfg.n_bc = 0;
                const Eigen::VectorXd fitted = response.entries * beta_hat0;
                BootstrapSamples fit_boot =
                    run_bootstrap(fitted, response, design, estimator, basic_cfg, r_uq, {0},
                                  root.child(rng_tag::reference), workers, beta_hat0);
                IntervalBand band = percentile_from_sample(
                    fit_boot.samples[0], grid, main.observed_raw, main.observed_raw, alpha,
                    BandMethod::basic, 0);
                const Eigen::VectorXd lo = band.lower, hi = band.upper;
                band.lower = 2.0 * main.observed_raw - hi;
                band.upper = 2.0 * main.observed_raw - lo;
                bands.push_back(std::move(band));
                break;
            }
            case BandMethod::credible:
                break;
        }
    }
    return bands;
}

namespace {

std::vector<IntervalBand> single_band(const BinnedCounts& data, double delta_hat,
                                      const ResponseMatrix& response,
                                      const PenaltyMatrix& omega_a, const SplineBasis& basis,
                                      const BiasCorrectionConfig& cfg, int r_uq, double alpha,
                                      const Eigen::VectorXd& grid, BandMethod method,
                                      int workers) {
    const PointEstimator estimator =
        make_posterior_mean_estimator(response, omega_a, delta_hat, cfg.mcmc_samples);
    const std::vector<int> nbc_values = {method == BandMethod::percentile ||
                                                 method == BandMethod::basic
                                             ? 0
                                             : cfg.n_bc};
    return bootstrap_bands(data, response, omega_a, basis, estimator, cfg, r_uq, alpha, grid,
                           {method}, nbc_values, workers);
}

}  // namespace

IntervalBand bc_percentile_band(const BinnedCounts& data, double delta_hat,
                                const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                                const SplineBasis& basis, const BiasCorrectionConfig& cfg,
                                int r_uq, double alpha, const Eigen::VectorXd& grid,
                                int workers) {
    return single_band(data, delta_hat, response, omega_a, basis, cfg, r_uq, alpha, grid,
                       BandMethod::bc_percentile, workers)
        .front();
}

IntervalBand percentile_band(const BinnedCounts& data, double delta_hat,
                             const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                             const SplineBasis& basis, const BiasCorrectionConfig& cfg, int r_uq,
                             double alpha, const Eigen::VectorXd& grid, int workers) {
    BiasCorrectionConfig no_bc = cfg;
    no_bc.n_bc = 0;
    return single_band(data, delta_hat, response, omega_a, basis, no_bc, r_uq, alpha, grid,
                       BandMethod::percentile, workers)
        .front();
}

IntervalBand basic_band(const BinnedCounts& data, double delta_hat,
                        const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                        const SplineBasis& basis, const BiasCorrectionConfig& cfg, int r_uq,
                        double alpha, const Eigen::VectorXd& grid, int workers) {
    return single_band(data, delta_hat, response, omega_a, basis, cfg, r_uq, alpha, grid,
                       BandMethod::basic, workers)
        .front();
}

IntervalBand stderr_band(const BinnedCounts& data, double delta_hat,
                         const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                         const SplineBasis& basis, const BiasCorrectionConfig& cfg, int r_uq,
                         double alpha, const Eigen::VectorXd& grid, int workers) {
    return single_band(data, delta_hat, response, omega_a, basis, cfg, r_uq, alpha, grid,
                       BandMethod::stderr_band, workers)
        .front();
}

IntervalBand credible_band(const PosteriorChain& chain, const SplineBasis& basis, double alpha,
                           const Eigen::VectorXd& grid) {
    if (chain.size() < 1) throw std::invalid_argument("credible_band: empty chain");
    if (!(alpha > 0.0 && alpha < 0.5))
        throw std::invalid_argument("credible_band: alpha must lie in (0, 0.5)");
    const Eigen::MatrixXd design = basis.design_matrix(grid);
    const Eigen::MatrixXd intensities = chain.draws * design.transpose();  // S x n_grid
    const Eigen::VectorXd mean_beta = posterior_mean(chain);

    IntervalBand band;
    band.grid = grid;
    band.method = BandMethod::credible;
    band.alpha = alpha;
    band.point = design * mean_beta;
    band.bc_point = band.point;
    band.lower.resize(grid.size());
    band.upper.resize(grid.size());
    std::vector<double> column(chain.size());
    for (int g = 0; g < grid.size(); ++g) {
        for (int s = 0; s < chain.size(); ++s) column[s] = intensities(s, g);
        band.lower[g] = sample_quantile(column, alpha);
        band.upper[g] = sample_quantile(column, 1.0 - alpha);
    }
    return band;
}

void write_bands_csv(const std::string& path, const std::vector<IntervalBand>& bands) {
    CsvWriter csv(path, "s,lower,point,bc_point,upper,method,alpha");
    for (const IntervalBand& band : bands) {
        const std::string method = band_method_name(band.method);
        for (int g = 0; g < band.grid.size(); ++g) {
            csv.raw_row(format_double(band.grid[g]) + "," + format_double(band.lower[g]) + "," +
                        format_double(band.point[g]) + "," + format_double(band.bc_point[g]) +
                        "," + format_double(band.upper[g]) + "," + method + "," +
                        format_double(band.alpha));
        }
    }
}

}  // namespace unfold
