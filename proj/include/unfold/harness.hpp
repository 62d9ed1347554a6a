#ifndef UNFOLD_HARNESS_HPP_
#define UNFOLD_HARNESS_HPP_

#include <Eigen/Core>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "unfold/bands.hpp"
#include "unfold/mcem.hpp"
#include "unfold/ridge.hpp"
#include "unfold/simulate.hpp"

#include <json.hpp>

namespace unfold {

struct TruthSpec {
    enum class Kind { gmm, breit_wigner, spline };
    Kind kind = Kind::gmm;
    // gmm
    double lambda_tot = 10000.0;
    std::array<double, 3> weights = {0.2, 0.5, 0.3};
    // breit_wigner
    double scale = 1.0;
    double mass = 91.1876;
    double width = 2.4952;
    // spline (on the experiment's basis)
    Eigen::VectorXd coefficients;
};

struct KernelSpec {
    enum class Kind { gaussian, crystal_ball, identity, tabulated };
    Kind kind = Kind::gaussian;
    double sigma = 1.0;
    double delta_m = 0.0;
    double alpha = 0.0;
    double tail_gamma = 0.0;
    std::string table_path;

    SmearingKernel build() const;
};

struct ZbosonSpec {
    Interval fit_domain{65.0, 115.0};
    int fit_bins = 100;
    double keep_fraction = 0.7;  // share of events routed to the unfolding sample
    double target_events = 67778.0;
    bool fit_cb = true;  // estimate CB parameters from the held-out sample
};

/// Complete experiment description; serializes to a single JSON document
/// (field names carry units).
struct ExperimentConfig {
    std::string name = "experiment";
    TruthSpec truth;
    KernelSpec kernel;
    double efficiency_value = 1.0;
    Interval true_domain{-7.0, 7.0};
    Interval smeared_domain{-7.0, 7.0};
    int n_bins = 40;
    int interior_knots = 26;
    int spline_order = 4;
    double gamma_left = 5.0;
    double gamma_right = 5.0;

    // MCEM
    double mcem_delta_init = 1e-5;
    int mcem_iterations = 30;
    int mcmc_samples = 1000;
    int mcmc_burn_in = -1;  // negative: equal to mcmc_samples
    double mcem_early_stop_tol = 0.0;
    double delta_override = 0.0;  // > 0 skips MCEM and fixes delta_hat

    // uncertainty quantification
    int bc_iterations = 5;
    int bc_bootstrap_size = 10;
    int uq_bootstrap_size = 200;
    double alpha = 0.025;
    std::vector<std::string> band_methods = {"bc_percentile"};

    int grid_size = 200;
    std::string estimator = "full";  // "full" | "fast"
    std::uint64_t seed = 1;

    std::optional<ZbosonSpec> zboson;

    void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& config);

/// FNV-1a hash of the canonical serialization; stable across round trips.
std::uint64_t config_hash(const ExperimentConfig& config);

/// Assembled pipeline stages shared by every experiment entry point.
struct Pipeline {
    SplineBasis basis;
    PenaltyMatrix omega;
    PenaltyMatrix omega_a;
    SmearingKernel kernel;
    Efficiency efficiency;
    Eigen::VectorXd bin_edges;
    ResponseMatrix response;
    Eigen::VectorXd grid;

    TrueIntensity make_truth(const ExperimentConfig& config) const;
};

Pipeline build_pipeline(const ExperimentConfig& config);

/// Simulates one smeared histogram from the configured truth.
BinnedCounts simulate_observation(const ExperimentConfig& config, const Pipeline& pipeline,
                                  std::uint64_t seed);

struct UnfoldResult {
    double delta_hat = 0.0;
    McemTrace trace;
    Eigen::VectorXd beta_hat;      // posterior-mean (or ridge) estimate
    Eigen::VectorXd beta_hat_bc;   // bias-corrected estimate
    Eigen::VectorXd grid;
    Eigen::VectorXd intensity;     // f_hat on the grid
    Eigen::VectorXd intensity_bc;  // f_hat_BC on the grid
    std::vector<IntervalBand> bands;
    BinnedCounts data;
    double response_condition = 0.0;
    double mean_acceptance = 0.0;
    Eigen::VectorXd ess;
    PosteriorChain final_chain;  // chain at delta_hat (full path)
};

/// Full pipeline: response matrix, NNLS initialization, MCEM, point
/// estimate, bias correction and the configured bands. Supplied data must
/// match the configured binning; absent data is simulated from the truth.
UnfoldResult run_unfolding(const ExperimentConfig& config,
                           const std::optional<BinnedCounts>& data = std::nullopt,
                           int workers = 1);

/// Pointwise empirical coverage of the true intensity.
struct CoverageReport {
    Eigen::VectorXd grid;
    Eigen::VectorXd coverage;    // fraction of replicates covering f(s)
    Eigen::VectorXd mean_width;  // average band width
    int n_replicates = 0;
    int n_failures = 0;
    BandMethod method = BandMethod::bc_percentile;
    int n_bc = 0;
    double alpha = 0.025;

    double average_coverage() const { return coverage.mean(); }
    double coverage_at(double s) const;
    double min_coverage() const { return coverage.minCoeff(); }
};

/// Repeated-observation coverage study: per replicate, simulates a smeared
/// histogram, builds every requested band at the fixed hyperparameter and
/// records pointwise coverage of the truth. The hyperparameter is estimated
/// once (full MCEM on a reference realization) unless config.delta_override
/// is set. Replicates run in parallel on deterministic substreams. More
/// than 1% replicate failures aborts.
std::vector<CoverageReport> run_coverage_study(const ExperimentConfig& config, int n_replicates,
                                               const std::vector<BandMethod>& methods,
                                               int workers = 1,
                                               const std::vector<int>& nbc_values = {});

/// Coverage of the bias-corrected percentile band for each requested
/// bias-correction count, sharing one bootstrap pass per replicate.
std::vector<CoverageReport> coverage_vs_nbc(const ExperimentConfig& config,
                                            const std::vector<int>& nbc_values,
                                            int n_replicates, int workers = 1);

/// CSV exchange: header "s,coverage,mean_width,method,n_rep".
void write_coverage_csv(const std::string& path, const CoverageReport& report);

/// Crystal Ball response fit by binned Poisson maximum likelihood against a
/// Breit-Wigner truth of unknown scale: per-bin means are
/// scale * int_bin (BW (*) CB). Five-parameter Nelder-Mead with
/// deterministic multi-starts around moment-based initial values.
struct CrystalBallFit {
    double delta_m = 0.0;
    double sigma = 1.0;
    double alpha = 1.0;
    double tail_gamma = 2.0;
    double scale = 1.0;
    double log_likelihood = 0.0;
    int evaluations = 0;
    bool converged = false;
};

CrystalBallFit fit_crystal_ball(const BinnedCounts& fit_data, double bw_mass, double bw_width,
                                Interval fit_domain);

/// Expected bin contents scale * int_bin (BW (*) CB) for the fitted model.
Eigen::VectorXd crystal_ball_bin_means(const CrystalBallFit& fit, double bw_mass,
                                       double bw_width, Interval fit_domain,
                                       const Eigen::VectorXd& bin_edges);

/// Synthetic invariant-mass histogram at a target observed-event scale:
/// Breit-Wigner truth on the fit window, Crystal Ball smearing, uniform
/// binning.
BinnedCounts synthesize_zboson_histogram(double bw_mass, double bw_width,
                                         const SmearingKernel& cb_kernel, Interval fit_domain,
                                         int n_bins, double target_events, std::uint64_t seed);

struct ZbosonResult {
    CrystalBallFit fit;
    UnfoldResult unfold;
    BinnedCounts full_histogram;   // fit-window histogram before splitting
    BinnedCounts unfold_sample;    // kept subsample restricted to the unfold window
    BinnedCounts cb_fit_sample;    // held-out subsample used for the CB fit
    Eigen::VectorXd truth_on_grid; // scaled Breit-Wigner intensity of the unfold sample
    double truth_scale = 0.0;      // multiplier of the BW density
    bool synthetic = false;
};

/// Invariant-mass analysis: binomial split of the fit-window histogram, CB
/// parameter estimation on the held-out sample (unless fixed in the config),
/// then the full unfolding pipeline on the kept sample with the CB response.
ZbosonResult run_zboson(const ExperimentConfig& config,
                        const std::optional<BinnedCounts>& data = std::nullopt,
                        int workers = 1);

}  // namespace unfold

#endif  // UNFOLD_HARNESS_HPP_
