#include "unfold/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "unfold/csv.hpp"
#include "unfold/optim.hpp"
#include "unfold/parallel.hpp"
#include "unfold/quadrature.hpp"

namespace unfold {

using nlohmann::json;

namespace {

// Substream tags local to the harness layer.
namespace htag {
constexpr std::uint64_t data = 101;
constexpr std::uint64_t mcem = 102;
constexpr std::uint64_t final_chain = 103;
constexpr std::uint64_t bias = 104;
constexpr std::uint64_t bands = 105;
constexpr std::uint64_t replicate = 106;
constexpr std::uint64_t reference = 107;
constexpr std::uint64_t synth = 108;
constexpr std::uint64_t split = 109;
constexpr std::uint64_t smear = 110;
}  // namespace htag

double bw_pdf(double m, double mass, double width) {
    const double d = m - mass;
    return width / (2.0 * M_PI * (d * d + 0.25 * width * width));
}

}  // namespace

SmearingKernel KernelSpec::build() const {
    switch (kind) {
        case Kind::gaussian: return SmearingKernel::gaussian(sigma);
        case Kind::crystal_ball:
            return SmearingKernel::crystal_ball(delta_m, sigma, alpha, tail_gamma);
        case Kind::identity: return SmearingKernel::identity();
        case Kind::tabulated: return read_kernel_csv(table_path);
    }
    throw std::logic_error("KernelSpec: unknown kind");
}

void ExperimentConfig::validate() const {
    if (n_bins < 1) throw std::invalid_argument("config: n_bins must be >= 1");
    if (interior_knots < 0) throw std::invalid_argument("config: interior_knots must be >= 0");
    if (spline_order < 1) throw std::invalid_argument("config: spline_order must be >= 1");
    if (gamma_left < 0.0 || gamma_right < 0.0)
        throw std::invalid_argument("config: boundary weights must be >= 0");
    if (!(mcem_delta_init > 0.0)) throw std::invalid_argument("config: mcem.delta_init must be > 0");
    if (mcem_iterations < 1) throw std::invalid_argument("config: mcem.n_iterations must be >= 1");
    if (mcmc_samples < 1) throw std::invalid_argument("config: mcem.mcmc_samples must be >= 1");
    if (bc_iterations < 0) throw std::invalid_argument("config: bias_correction.n_iterations must be >= 0");
    if (bc_bootstrap_size < 1)
        throw std::invalid_argument("config: bias_correction.bootstrap_size must be >= 1");
    if (uq_bootstrap_size < 20)
        throw std::invalid_argument("config: uq.bootstrap_size must be >= 20");
    if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("config: uq.alpha must lie in (0,0.5)");
    if (grid_size < 2) throw std::invalid_argument("config: grid_size must be >= 2");
    if (estimator != "full" && estimator != "fast")
        throw std::invalid_argument("config: estimator must be \"full\" or \"fast\"");
    if (efficiency_value < 0.0 || efficiency_value > 1.0)
        throw std::invalid_argument("config: efficiency value must lie in [0,1]");
    for (const std::string& m : band_methods) band_method_from_name(m);
    if (truth.kind == TruthSpec::Kind::spline &&
        truth.coefficients.size() != interior_knots + spline_order)
        throw std::invalid_argument("config: spline truth coefficient count must equal p");
}

namespace {

json interval_to_json(const Interval& iv) { return json::array({iv.lo, iv.hi}); }

Interval interval_from_json(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2)
        throw std::invalid_argument("config: field '" + field + "' must be [lo, hi]");
    return Interval(j[0].get<double>(), j[1].get<double>());
}

const json& require(const json& doc, const std::string& field) {
    auto it = doc.find(field);
    if (it == doc.end())
        throw std::invalid_argument("config: missing required field '" + field + "'");
    return *it;
}

}  // namespace

json config_to_json(const ExperimentConfig& config) {
    json truth;
    switch (config.truth.kind) {
        case TruthSpec::Kind::gmm:
            truth = {{"kind", "gmm"},
                     {"lambda_tot", config.truth.lambda_tot},
                     {"weights", config.truth.weights}};
            break;
        case TruthSpec::Kind::breit_wigner:
            truth = {{"kind", "breit_wigner"},
                     {"scale", config.truth.scale},
                     {"mass_gev", config.truth.mass},
                     {"width_gev", config.truth.width}};
            break;
        case TruthSpec::Kind::spline: {
            std::vector<double> coeffs(config.truth.coefficients.begin(),
                                       config.truth.coefficients.end());
            truth = {{"kind", "spline"}, {"coefficients", coeffs}};
            break;
        }
    }
    json kernel;
    switch (config.kernel.kind) {
        case KernelSpec::Kind::gaussian:
            kernel = {{"kind", "gaussian"}, {"sigma_gev", config.kernel.sigma}};
            break;
        case KernelSpec::Kind::crystal_ball:
            kernel = {{"kind", "crystal_ball"},
                      {"delta_m_gev", config.kernel.delta_m},
                      {"sigma_gev", config.kernel.sigma},
                      {"alpha", config.kernel.alpha},
                      {"tail_gamma", config.kernel.tail_gamma}};
            break;
        case KernelSpec::Kind::identity:
            kernel = {{"kind", "identity"}};
            break;
        case KernelSpec::Kind::tabulated:
            kernel = {{"kind", "tabulated"}, {"path", config.kernel.table_path}};
            break;
    }
    json doc{
        {"name", config.name},
        {"truth", truth},
        {"kernel", kernel},
        {"efficiency", {{"kind", "constant"}, {"value", config.efficiency_value}}},
        {"true_domain_gev", interval_to_json(config.true_domain)},
        {"smeared_domain_gev", interval_to_json(config.smeared_domain)},
        {"n_bins", config.n_bins},
        {"interior_knots", config.interior_knots},
        {"spline_order", config.spline_order},
        {"gamma_left", config.gamma_left},
        {"gamma_right", config.gamma_right},
        {"mcem",
         {{"delta_init", config.mcem_delta_init},
          {"n_iterations", config.mcem_iterations},
          {"mcmc_samples", config.mcmc_samples},
          {"burn_in", config.mcmc_burn_in},
          {"early_stop_tol", config.mcem_early_stop_tol},
          {"delta_override", config.delta_override}}},
        {"bias_correction",
         {{"n_iterations", config.bc_iterations}, {"bootstrap_size", config.bc_bootstrap_size}}},
        {"uq",
         {{"bootstrap_size", config.uq_bootstrap_size},
          {"alpha", config.alpha},
          {"methods", config.band_methods}}},
        {"grid_size", config.grid_size},
        {"estimator", config.estimator},
        {"seed", config.seed},
    };
    if (config.zboson) {
        doc["zboson"] = {{"fit_domain_gev", interval_to_json(config.zboson->fit_domain)},
                         {"fit_bins", config.zboson->fit_bins},
                         {"keep_fraction", config.zboson->keep_fraction},
                         {"target_events", config.zboson->target_events},
                         {"fit_cb", config.zboson->fit_cb}};
    }
    return doc;
}

ExperimentConfig config_from_json(const json& doc) {
    ExperimentConfig config;
    config.name = require(doc, "name").get<std::string>();

    const json& truth = require(doc, "truth");
    const std::string truth_kind = require(truth, "kind").get<std::string>();
    if (truth_kind == "gmm") {
        config.truth.kind = TruthSpec::Kind::gmm;
        config.truth.lambda_tot = require(truth, "lambda_tot").get<double>();
        const json& w = require(truth, "weights");
        if (!w.is_array() || w.size() != 3)
            throw std::invalid_argument("config: truth.weights must have three entries");
        for (int i = 0; i < 3; ++i) config.truth.weights[i] = w[i].get<double>();
    } else if (truth_kind == "breit_wigner") {
        config.truth.kind = TruthSpec::Kind::breit_wigner;
        config.truth.scale = require(truth, "scale").get<double>();
        config.truth.mass = require(truth, "mass_gev").get<double>();
        config.truth.width = require(truth, "width_gev").get<double>();
    } else if (truth_kind == "spline") {
        config.truth.kind = TruthSpec::Kind::spline;
        const auto coeffs = require(truth, "coefficients").get<std::vector<double>>();
        config.truth.coefficients =
            Eigen::Map<const Eigen::VectorXd>(coeffs.data(), coeffs.size());
    } else {
        throw std::invalid_argument("config: unknown truth.kind '" + truth_kind + "'");
    }

    const json& kernel = require(doc, "kernel");
    const std::string kernel_kind = require(kernel, "kind").get<std::string>();
    if (kernel_kind == "gaussian") {
        config.kernel.kind = KernelSpec::Kind::gaussian;
        config.kernel.sigma = require(kernel, "sigma_gev").get<double>();
    } else if (kernel_kind == "crystal_ball") {
        config.kernel.kind = KernelSpec::Kind::crystal_ball;
        config.kernel.delta_m = require(kernel, "delta_m_gev").get<double>();
        config.kernel.sigma = require(kernel, "sigma_gev").get<double>();
        config.kernel.alpha = require(kernel, "alpha").get<double>();
        config.kernel.tail_gamma = require(kernel, "tail_gamma").get<double>();
    } else if (kernel_kind == "identity") {
        config.kernel.kind = KernelSpec::Kind::identity;
    } else if (kernel_kind == "tabulated") {
        config.kernel.kind = KernelSpec::Kind::tabulated;
        config.kernel.table_path = require(kernel, "path").get<std::string>();
    } else {
        throw std::invalid_argument("config: unknown kernel.kind '" + kernel_kind + "'");
    }

    if (doc.contains("efficiency"))
        config.efficiency_value = require(doc["efficiency"], "value").get<double>();
    config.true_domain = interval_from_json(require(doc, "true_domain_gev"), "true_domain_gev");
    config.smeared_domain =
        interval_from_json(require(doc, "smeared_domain_gev"), "smeared_domain_gev");
    config.n_bins = require(doc, "n_bins").get<int>();
    config.interior_knots = require(doc, "interior_knots").get<int>();
    config.spline_order = require(doc, "spline_order").get<int>();
    config.gamma_left = require(doc, "gamma_left").get<double>();
    config.gamma_right = require(doc, "gamma_right").get<double>();

    const json& mcem = require(doc, "mcem");
    config.mcem_delta_init = require(mcem, "delta_init").get<double>();
    config.mcem_iterations = require(mcem, "n_iterations").get<int>();
    config.mcmc_samples = require(mcem, "mcmc_samples").get<int>();
    if (mcem.contains("burn_in")) config.mcmc_burn_in = mcem["burn_in"].get<int>();
    if (mcem.contains("early_stop_tol"))
        config.mcem_early_stop_tol = mcem["early_stop_tol"].get<double>();
    if (mcem.contains("delta_override"))
        config.delta_override = mcem["delta_override"].get<double>();

    const json& bc = require(doc, "bias_correction");
    config.bc_iterations = require(bc, "n_iterations").get<int>();
    config.bc_bootstrap_size = require(bc, "bootstrap_size").get<int>();

    const json& uq = require(doc, "uq");
    config.uq_bootstrap_size = require(uq, "bootstrap_size").get<int>();
    config.alpha = require(uq, "alpha").get<double>();
    if (uq.contains("methods"))
        config.band_methods = uq["methods"].get<std::vector<std::string>>();

    config.grid_size = require(doc, "grid_size").get<int>();
    config.estimator = require(doc, "estimator").get<std::string>();
    config.seed = require(doc, "seed").get<std::uint64_t>();

    if (doc.contains("zboson")) {
        const json& zb = doc["zboson"];
        ZbosonSpec spec;
        spec.fit_domain = interval_from_json(require(zb, "fit_domain_gev"), "zboson.fit_domain_gev");
        spec.fit_bins = require(zb, "fit_bins").get<int>();
        spec.keep_fraction = require(zb, "keep_fraction").get<double>();
        spec.target_events = require(zb, "target_events").get<double>();
        if (zb.contains("fit_cb")) spec.fit_cb = zb["fit_cb"].get<bool>();
        config.zboson = spec;
    }
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& err) {
        throw std::runtime_error("config parse error in " + path + ": " + err.what());
    }
    try {
        return config_from_json(doc);
    } catch (const json::exception& err) {
        throw std::runtime_error("config error in " + path + ": " + err.what());
    }
}

void save_config(const std::string& path, const ExperimentConfig& config) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << config_to_json(config).dump(2) << '\n';
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    const std::string canonical = config_to_json(config).dump();
    std::uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : canonical) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

Pipeline build_pipeline(const ExperimentConfig& config) {
    config.validate();
    SplineBasis basis =
        SplineBasis::uniform(config.true_domain, config.interior_knots, config.spline_order);
    PenaltyMatrix omega = curvature_matrix(basis);
    PenaltyMatrix omega_a = aristotelian_matrix(omega, config.gamma_left, config.gamma_right);
    SmearingKernel kernel = config.kernel.build();
    Efficiency efficiency(config.efficiency_value);
    Eigen::VectorXd bin_edges = uniform_bin_edges(config.smeared_domain, config.n_bins);
    ResponseMatrix response = build_response_matrix(kernel, efficiency, basis, bin_edges);
    Eigen::VectorXd grid(config.grid_size);
    for (int i = 0; i < config.grid_size; ++i)
        grid[i] = config.true_domain.lo +
                  config.true_domain.length() * i / (config.grid_size - 1.0);
    return Pipeline{std::move(basis),      std::move(omega),    std::move(omega_a),
                    std::move(kernel),     std::move(efficiency), std::move(bin_edges),
                    std::move(response),   std::move(grid)};
}

TrueIntensity Pipeline::make_truth(const ExperimentConfig& config) const {
    switch (config.truth.kind) {
        case TruthSpec::Kind::gmm:
            return TrueIntensity::gmm(config.true_domain, config.truth.lambda_tot,
                                      config.truth.weights[0], config.truth.weights[1],
                                      config.truth.weights[2]);
        case TruthSpec::Kind::breit_wigner:
            return TrueIntensity::breit_wigner(config.true_domain, config.truth.scale,
                                               config.truth.mass, config.truth.width);
        case TruthSpec::Kind::spline:
            return TrueIntensity::spline(basis, config.truth.coefficients);
    }
    throw std::logic_error("unknown truth kind");
}

BinnedCounts simulate_observation(const ExperimentConfig& config, const Pipeline& pipeline,
                                  std::uint64_t seed) {
    const TrueIntensity truth = pipeline.make_truth(config);
    const RngKey key{seed};
    const std::vector<double> points =
        sample_true_points(truth, key.child(htag::data).state);
    const std::vector<double> smeared = thin_and_smear(
        points, pipeline.efficiency, pipeline.kernel, config.smeared_domain,
        key.child(htag::smear).state);
    return bin_points(smeared, pipeline.bin_edges);
}

namespace {

PointEstimator make_estimator(const ExperimentConfig& config, const Pipeline& pipeline,
                              double delta_hat) {
    if (config.estimator == "fast") {
        RidgeModel model{pipeline.response, pipeline.omega_a, delta_hat, Eigen::VectorXd(),
                         false};
        return make_ridge_estimator(model);
    }
    return make_posterior_mean_estimator(pipeline.response, pipeline.omega_a, delta_hat,
                                         config.mcmc_samples, config.mcmc_burn_in);
}

double estimate_delta(const ExperimentConfig& config, const Pipeline& pipeline,
                      const BinnedCounts& data, McemTrace* trace_out) {
    if (config.delta_override > 0.0) return config.delta_override;
    McemConfig mcem;
    mcem.delta0 = config.mcem_delta_init;
    mcem.n_em = config.mcem_iterations;
    mcem.mcmc_samples = config.mcmc_samples;
    mcem.burn_in = config.mcmc_burn_in;
    mcem.early_stop_tol = config.mcem_early_stop_tol;
    mcem.beta_init = nnls_init(data, pipeline.basis);
    mcem.rng_seed = RngKey{config.seed}.child(htag::mcem).state;
    auto [delta_hat, trace] = run_mcem(data, pipeline.response, pipeline.omega_a, mcem);
    if (trace_out) *trace_out = std::move(trace);
    return delta_hat;
}

std::vector<BandMethod> parse_methods(const std::vector<std::string>& names) {
    std::vector<BandMethod> methods;
    methods.reserve(names.size());
    for (const std::string& name : names) methods.push_back(band_method_from_name(name));
    return methods;
}

UnfoldResult run_unfolding_with(const ExperimentConfig& config, const Pipeline& pipeline,
                                const BinnedCounts& data, int workers) {
    if (data.n_bins() != config.n_bins)
        throw std::invalid_argument("unfold: data has " + std::to_string(data.n_bins()) +
                                    " bins, config expects " + std::to_string(config.n_bins));
    for (int i = 0; i <= config.n_bins; ++i)
        if (std::fabs(data.bin_edges[i] - pipeline.bin_edges[i]) >
            1e-9 * std::max(1.0, std::fabs(pipeline.bin_edges[i])))
            throw std::invalid_argument("unfold: data binning does not match the configured domain");

    const RngKey key{config.seed};
    UnfoldResult result;
    result.data = data;
    result.grid = pipeline.grid;
    result.response_condition = pipeline.response.condition_number;

    result.delta_hat = estimate_delta(config, pipeline, data, &result.trace);

    const std::vector<BandMethod> methods = parse_methods(config.band_methods);
    const bool want_credible =
        std::find(methods.begin(), methods.end(), BandMethod::credible) != methods.end();

    // Point estimate. The full path runs a fresh chain at delta_hat; the
    // fast path solves the ridge system. A chain is still needed for the
    // credible band.
    const PointEstimator estimator = make_estimator(config, pipeline, result.delta_hat);
    if (config.estimator == "full" || want_credible) {
        PosteriorModel model{pipeline.response, data, pipeline.omega_a, result.delta_hat};
        const Eigen::VectorXd start = result.trace.chain_means.empty()
                                          ? nnls_init(data, pipeline.basis)
                                          : result.trace.chain_means.back();
        const int burn_in =
            config.mcmc_burn_in >= 0 ? config.mcmc_burn_in : config.mcmc_samples;
        result.final_chain = sample_posterior(model, config.mcmc_samples, start, burn_in,
                                              key.child(htag::final_chain).state);
        result.mean_acceptance = result.final_chain.acceptance_rates.mean();
        result.ess = effective_sample_size(result.final_chain);
    }
    result.beta_hat = config.estimator == "full"
                          ? posterior_mean(result.final_chain)
                          : estimator(data.counts, key.child(htag::final_chain));

    BiasCorrectionConfig bc_cfg;
    bc_cfg.n_bc = config.bc_iterations;
    bc_cfg.r_bc = config.bc_bootstrap_size;
    bc_cfg.mcmc_samples = config.mcmc_samples;
    bc_cfg.rng_seed = key.child(htag::bands).state;
    result.beta_hat_bc = bias_correct_path(result.beta_hat, estimator,
                                           pipeline.response.entries, bc_cfg.n_bc, bc_cfg.r_bc,
                                           RngKey{key.child(htag::bias).state}, {bc_cfg.n_bc})
                             .front();

    result.intensity = eval_intensity(pipeline.basis, result.beta_hat, pipeline.grid);
    result.intensity_bc = eval_intensity(pipeline.basis, result.beta_hat_bc, pipeline.grid);

    std::vector<BandMethod> bootstrap_methods;
    for (BandMethod m : methods)
        if (m != BandMethod::credible) bootstrap_methods.push_back(m);
    if (!bootstrap_methods.empty()) {
        result.bands = bootstrap_bands(data, pipeline.response, pipeline.omega_a, pipeline.basis,
                                       estimator, bc_cfg, config.uq_bootstrap_size, config.alpha,
                                       pipeline.grid, bootstrap_methods, {config.bc_iterations},
                                       workers, &result.beta_hat);
    }
    if (want_credible)
        result.bands.push_back(
            credible_band(result.final_chain, pipeline.basis, config.alpha, pipeline.grid));
    return result;
}

}  // namespace

UnfoldResult run_unfolding(const ExperimentConfig& config,
                           const std::optional<BinnedCounts>& data, int workers) {
    const Pipeline pipeline = build_pipeline(config);
    const BinnedCounts y = data.has_value()
                               ? *data
                               : simulate_observation(config, pipeline, config.seed);
    return run_unfolding_with(config, pipeline, y, workers);
}

double CoverageReport::coverage_at(double s) const {
    int best = 0;
    double best_dist = std::fabs(grid[0] - s);
    for (int i = 1; i < grid.size(); ++i) {
        const double d = std::fabs(grid[i] - s);
        if (d < best_dist) {
            best_dist = d;
            best = i;
        }
    }
    return coverage[best];
}

std::vector<CoverageReport> run_coverage_study(const ExperimentConfig& config, int n_replicates,
                                               const std::vector<BandMethod>& methods,
                                               int workers, const std::vector<int>& nbc_values) {
    if (n_replicates < 1) throw std::invalid_argument("coverage study: need replicates >= 1");
    if (config.estimator == "full" && n_replicates > 50)
        throw std::invalid_argument(
            "coverage study: the full-Poisson estimator is limited to 50 replicates; "
            "use the fast estimator");
    const Pipeline pipeline = build_pipeline(config);
    const TrueIntensity truth = pipeline.make_truth(config);
    Eigen::VectorXd truth_values(pipeline.grid.size());
    for (int i = 0; i < pipeline.grid.size(); ++i) truth_values[i] = truth(pipeline.grid[i]);

    const RngKey key{config.seed};

    // Hyperparameter fixed across replicates: estimated once on a reference
    // realization by full-Poisson MCEM unless overridden.
    double delta_hat = config.delta_override;
    if (!(delta_hat > 0.0)) {
        const BinnedCounts reference =
            simulate_observation(config, pipeline, key.child(htag::reference).state);
        delta_hat = estimate_delta(config, pipeline, reference, nullptr);
        log_info("coverage study: reference delta_hat = " + std::to_string(delta_hat));
    }

    const std::vector<int> bc_counts =
        nbc_values.empty() ? std::vector<int>{config.bc_iterations} : nbc_values;
    std::vector<BandMethod> bootstrap_methods;
    bool want_credible = false;
    for (BandMethod m : methods) {
        if (m == BandMethod::credible)
            want_credible = true;
        else
            bootstrap_methods.push_back(m);
    }

    const PointEstimator estimator = make_estimator(config, pipeline, delta_hat);
    const int burn_in = config.mcmc_burn_in >= 0 ? config.mcmc_burn_in : config.mcmc_samples;

    struct ReplicateOutcome {
        bool failed = false;
        std::vector<Eigen::ArrayXd> covered;  // per band slot, 0/1 per grid point
        std::vector<Eigen::ArrayXd> width;
    };
    std::vector<ReplicateOutcome> outcomes(n_replicates);

    BiasCorrectionConfig bc_cfg;
    bc_cfg.n_bc = *std::max_element(bc_counts.begin(), bc_counts.end());
    bc_cfg.r_bc = config.bc_bootstrap_size;
    bc_cfg.mcmc_samples = config.mcmc_samples;

    run_parallel(n_replicates, workers, [&](int rep) {
        ReplicateOutcome& outcome = outcomes[rep];
        const RngKey rep_key = key.child(htag::replicate).child(static_cast<std::uint64_t>(rep));
        try {
            const BinnedCounts y = simulate_observation(config, pipeline, rep_key.state);
            BiasCorrectionConfig cfg = bc_cfg;
            cfg.rng_seed = rep_key.child(htag::bands).state;
            std::vector<IntervalBand> bands;
            if (!bootstrap_methods.empty())
                bands = bootstrap_bands(y, pipeline.response, pipeline.omega_a, pipeline.basis,
                                        estimator, cfg, config.uq_bootstrap_size, config.alpha,
                                        pipeline.grid, bootstrap_methods, bc_counts, 1);
            if (want_credible) {
                PosteriorModel model{pipeline.response, y, pipeline.omega_a, delta_hat};
                PosteriorChain chain =
                    sample_posterior(model, config.mcmc_samples, nnls_init(y, pipeline.basis),
                                     burn_in, rep_key.child(htag::final_chain).state);
                bands.push_back(
                    credible_band(chain, pipeline.basis, config.alpha, pipeline.grid));
            }
            for (const IntervalBand& band : bands) {
                outcome.covered.push_back(
                    ((band.lower.array() <= truth_values.array()) &&
                     (truth_values.array() <= band.upper.array()))
                        .cast<double>());
                outcome.width.push_back(band.upper.array() - band.lower.array());
            }
        } catch (const std::exception& err) {
            outcome.failed = true;
            log_warn("coverage replicate " + std::to_string(rep) + " failed: " + err.what());
        }
    });

    int n_failed = 0;
    for (const ReplicateOutcome& outcome : outcomes)
        if (outcome.failed) ++n_failed;
    if (n_failed * 100 > n_replicates)
        throw std::runtime_error("coverage study: " + std::to_string(n_failed) + " of " +
                                 std::to_string(n_replicates) + " replicates failed (> 1%)");

    // Band slots are identical across replicates; describe them from the
    // requested method list.
    std::vector<std::pair<BandMethod, int>> slots;
    for (BandMethod m : bootstrap_methods) {
        if (m == BandMethod::bc_percentile)
            for (int nbc : bc_counts) slots.emplace_back(m, nbc);
        else if (m == BandMethod::stderr_band)
            slots.emplace_back(m, bc_counts.back());
        else
            slots.emplace_back(m, 0);
    }
    if (want_credible) slots.emplace_back(BandMethod::credible, 0);

    std::vector<CoverageReport> reports(slots.size());
    const int n_grid = static_cast<int>(pipeline.grid.size());
    const int n_used = n_replicates - n_failed;
    for (std::size_t slot = 0; slot < slots.size(); ++slot) {
        CoverageReport& report = reports[slot];
        report.grid = pipeline.grid;
        report.coverage = Eigen::VectorXd::Zero(n_grid);
        report.mean_width = Eigen::VectorXd::Zero(n_grid);
        report.n_replicates = n_used;
        report.n_failures = n_failed;
        report.method = slots[slot].first;
        report.n_bc = slots[slot].second;
        report.alpha = config.alpha;
        for (const ReplicateOutcome& outcome : outcomes) {
            if (outcome.failed) continue;
            report.coverage += outcome.covered[slot].matrix();
            report.mean_width += outcome.width[slot].matrix();
        }
        if (n_used > 0) {
            report.coverage /= n_used;
            report.mean_width /= n_used;
        }
    }
    return reports;
}

std::vector<CoverageReport> coverage_vs_nbc(const ExperimentConfig& config,
                                            const std::vector<int>& nbc_values, int n_replicates,
                                            int workers) {
    if (nbc_values.empty()) throw std::invalid_argument("coverage_vs_nbc: empty n_bc list");
    std::vector<int> sorted = nbc_values;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    return run_coverage_study(config, n_replicates, {BandMethod::bc_percentile}, workers,
                              sorted);
}

void write_coverage_csv(const std::string& path, const CoverageReport& report) {
    CsvWriter csv(path, "s,coverage,mean_width,method,n_rep");
    const std::string method = band_method_name(report.method);
    for (int i = 0; i < report.grid.size(); ++i)
        csv.raw_row(format_double(report.grid[i]) + "," + format_double(report.coverage[i]) +
                    "," + format_double(report.mean_width[i]) + "," + method + "," +
                    std::to_string(report.n_replicates));
}

namespace {

struct CbObjective {
    const BinnedCounts& data;
    double bw_mass;
    double bw_width;
    Interval fit_domain;
    int nodes;

    // theta = (delta_m, log sigma, log alpha, log(tail_gamma - 1), log scale)
    double operator()(const Eigen::VectorXd& theta) const {
        const double delta_m = theta[0];
        const double sigma = std::exp(theta[1]);
        const double alpha = std::exp(theta[2]);
        const double tail_gamma = 1.0 + std::exp(theta[3]);
        const double scale = std::exp(theta[4]);
        if (!(sigma > 1e-6 && sigma < 1e3) || !(alpha < 1e3) || !(tail_gamma < 1e3))
            return 1e300;
        const SmearingKernel kernel =
            SmearingKernel::crystal_ball(delta_m, sigma, alpha, tail_gamma);
        const Eigen::VectorXd shape =
            bin_means(kernel, [&](double s) { return bw_pdf(s, bw_mass, bw_width); },
                      fit_domain, data.bin_edges, nodes);
        double loglik = 0.0;
        for (int i = 0; i < data.n_bins(); ++i) {
            const double nu = scale * shape[i];
            const double y = data.counts[i];
            if (y > 0.0) {
                if (nu <= 0.0) return 1e300;
                loglik += y * std::log(nu);
            }
            loglik -= nu;
        }
        return -loglik;
    }
};

}  // namespace

CrystalBallFit fit_crystal_ball(const BinnedCounts& fit_data, double bw_mass, double bw_width,
                                Interval fit_domain) {
    if (fit_data.total() <= 0.0)
        throw std::invalid_argument("fit_crystal_ball: empty histogram");

    // Moment-style summaries guiding the initial simplex: the histogram
    // median locates delta_m (the truncated Breit-Wigner median is bw_mass),
    // and the excess core variance over the Breit-Wigner core gauges sigma.
    const int n = fit_data.n_bins();
    Eigen::VectorXd centers(n);
    for (int i = 0; i < n; ++i)
        centers[i] = 0.5 * (fit_data.bin_edges[i] + fit_data.bin_edges[i + 1]);
    const double total = fit_data.total();
    double acc = 0.0;
    double median = centers[n - 1];
    for (int i = 0; i < n; ++i) {
        acc += fit_data.counts[i];
        if (acc >= 0.5 * total) {
            median = centers[i];
            break;
        }
    }
    const double dm0 = median - bw_mass;

    int mode_bin = 0;
    fit_data.counts.maxCoeff(&mode_bin);
    const double mode = centers[mode_bin];
    const double core_half_width = 3.0 * bw_width;
    double core_mass = 0.0, core_mean = 0.0;
    for (int i = 0; i < n; ++i) {
        if (std::fabs(centers[i] - mode) > core_half_width) continue;
        core_mass += fit_data.counts[i];
        core_mean += fit_data.counts[i] * centers[i];
    }
    core_mean = core_mass > 0.0 ? core_mean / core_mass : mode;
    double core_var = 0.0;
    for (int i = 0; i < n; ++i) {
        if (std::fabs(centers[i] - mode) > core_half_width) continue;
        core_var += fit_data.counts[i] * (centers[i] - core_mean) * (centers[i] - core_mean);
    }
    core_var = core_mass > 0.0 ? core_var / core_mass : 1.0;
    // Same core variance for the pure Breit-Wigner around its own mode.
    double bw_mass_core = 0.0, bw_var_core = 0.0;
    {
        const int steps = 4000;
        const double h = 2.0 * core_half_width / steps;
        double mean_acc = 0.0;
        for (int i = 0; i <= steps; ++i) {
            const double x = bw_mass - core_half_width + i * h;
            const double w = bw_pdf(x, bw_mass, bw_width) * ((i == 0 || i == steps) ? 0.5 : 1.0);
            bw_mass_core += w;
            mean_acc += w * x;
        }
        mean_acc /= bw_mass_core;
        for (int i = 0; i <= steps; ++i) {
            const double x = bw_mass - core_half_width + i * h;
            const double w = bw_pdf(x, bw_mass, bw_width) * ((i == 0 || i == steps) ? 0.5 : 1.0);
            bw_var_core += w * (x - mean_acc) * (x - mean_acc);
        }
        bw_var_core /= bw_mass_core;
    }
    const double sigma0 = std::sqrt(std::max(core_var - bw_var_core, 1e-4));

    const CbObjective objective{fit_data, bw_mass, bw_width, fit_domain, 4};
    auto profiled_scale = [&](double dm, double sg, double al, double gm) {
        const SmearingKernel kernel = SmearingKernel::crystal_ball(dm, sg, al, gm);
        const Eigen::VectorXd shape =
            bin_means(kernel, [&](double s) { return bw_pdf(s, bw_mass, bw_width); }, fit_domain,
                      fit_data.bin_edges, 4);
        return total / std::max(shape.sum(), 1e-12);
    };

    const double starts[5][4] = {
        {dm0, sigma0, 1.8, 1.6},
        {dm0, std::max(0.3 * sigma0, 0.05), 1.2, 1.3},
        {dm0, 2.0 * sigma0 + 0.2, 2.4, 3.0},
        {dm0 + 0.3, sigma0, 1.5, 2.0},
        {dm0 - 0.3, sigma0, 2.0, 1.4},
    };

    CrystalBallFit best;
    best.log_likelihood = -std::numeric_limits<double>::infinity();
    int total_evals = 0;
    for (const double* start : starts) {
        Eigen::VectorXd x0(5);
        x0 << start[0], std::log(start[1]), std::log(start[2]), std::log(start[3] - 1.0),
            std::log(profiled_scale(start[0], start[1], start[2], start[3]));
        Eigen::VectorXd step(5);
        step << 0.2, 0.25, 0.3, 0.4, 0.05;
        SimplexResult run = nelder_mead(objective, x0, step, 1e-10, 1200);
        total_evals += run.evaluations;
        if (-run.value > best.log_likelihood) {
            best.delta_m = run.x[0];
            best.sigma = std::exp(run.x[1]);
            best.alpha = std::exp(run.x[2]);
            best.tail_gamma = 1.0 + std::exp(run.x[3]);
            best.scale = std::exp(run.x[4]);
            best.log_likelihood = -run.value;
            best.converged = run.converged;
        }
    }
    best.evaluations = total_evals;
    if (!std::isfinite(best.log_likelihood))
        throw std::runtime_error("fit_crystal_ball: no start converged to a finite likelihood");

    // Final likelihood at production quadrature so the reported optimum is
    // comparable across parameter sets.
    const CbObjective fine{fit_data, bw_mass, bw_width, fit_domain, 8};
    Eigen::VectorXd xbest(5);
    xbest << best.delta_m, std::log(best.sigma), std::log(best.alpha),
        std::log(best.tail_gamma - 1.0), std::log(best.scale);
    best.log_likelihood = -fine(xbest);
    return best;
}

Eigen::VectorXd crystal_ball_bin_means(const CrystalBallFit& fit, double bw_mass,
                                       double bw_width, Interval fit_domain,
                                       const Eigen::VectorXd& bin_edges) {
    const SmearingKernel kernel =
        SmearingKernel::crystal_ball(fit.delta_m, fit.sigma, fit.alpha, fit.tail_gamma);
    return fit.scale * bin_means(kernel,
                                 [&](double s) { return bw_pdf(s, bw_mass, bw_width); },
                                 fit_domain, bin_edges, 8);
}

BinnedCounts synthesize_zboson_histogram(double bw_mass, double bw_width,
                                         const SmearingKernel& cb_kernel, Interval fit_domain,
                                         int n_bins, double target_events, std::uint64_t seed) {
    const Eigen::VectorXd edges = uniform_bin_edges(fit_domain, n_bins);
    const Eigen::VectorXd capture =
        bin_means(cb_kernel, [&](double s) { return bw_pdf(s, bw_mass, bw_width); }, fit_domain,
                  edges, 8);
    const double lambda = target_events / std::max(capture.sum(), 1e-12);
    const TrueIntensity truth =
        TrueIntensity::breit_wigner(fit_domain, lambda, bw_mass, bw_width);
    const RngKey key{seed};
    const std::vector<double> points = sample_true_points(truth, key.child(htag::synth).state);
    const std::vector<double> smeared =
        thin_and_smear(points, Efficiency(), cb_kernel, fit_domain, key.child(htag::smear).state);
    return bin_points(smeared, edges);
}

ZbosonResult run_zboson(const ExperimentConfig& config, const std::optional<BinnedCounts>& data,
                        int workers) {
    ExperimentConfig cfg = config;
    if (!cfg.zboson) cfg.zboson = ZbosonSpec{};
    const ZbosonSpec& zb = *cfg.zboson;
    if (cfg.truth.kind != TruthSpec::Kind::breit_wigner)
        throw std::invalid_argument("run_zboson: truth must be breit_wigner");
    const RngKey key{cfg.seed};

    ZbosonResult result;
    result.synthetic = !data.has_value();

    double lambda_gen = 0.0;
    if (data.has_value()) {
        result.full_histogram = *data;
        if (result.full_histogram.n_bins() != zb.fit_bins)
            throw std::invalid_argument("run_zboson: data must have " +
                                        std::to_string(zb.fit_bins) + " bins on the fit window");
    } else {
        const SmearingKernel cb = cfg.kernel.build();
        if (cb.kind() != SmearingKernel::Kind::crystal_ball)
            throw std::invalid_argument("run_zboson: synthetic generation needs a crystal_ball kernel");
        const Eigen::VectorXd edges = uniform_bin_edges(zb.fit_domain, zb.fit_bins);
        const Eigen::VectorXd capture = bin_means(
            cb, [&](double s) { return bw_pdf(s, cfg.truth.mass, cfg.truth.width); },
            zb.fit_domain, edges, 8);
        lambda_gen = zb.target_events / std::max(capture.sum(), 1e-12);
        result.full_histogram =
            synthesize_zboson_histogram(cfg.truth.mass, cfg.truth.width, cb, zb.fit_domain,
                                        zb.fit_bins, zb.target_events, key.child(htag::synth).state);
    }

    auto [kept, held_out] =
        binomial_split(result.full_histogram, zb.keep_fraction, key.child(htag::split).state);
    result.cb_fit_sample = held_out;

    // Restrict the kept sample to the unfolding window; edges must align.
    const Eigen::VectorXd unfold_edges = uniform_bin_edges(cfg.smeared_domain, cfg.n_bins);
    Eigen::VectorXd sub_counts(cfg.n_bins);
    {
        int pos = 0;
        const Eigen::VectorXd& full_edges = kept.bin_edges;
        for (int i = 0; i < cfg.n_bins; ++i) {
            while (pos < kept.n_bins() &&
                   full_edges[pos] < unfold_edges[i] - 1e-9 * std::fabs(unfold_edges[i]) - 1e-12)
                ++pos;
            if (pos >= kept.n_bins() ||
                std::fabs(full_edges[pos] - unfold_edges[i]) > 1e-6 ||
                std::fabs(full_edges[pos + 1] - unfold_edges[i + 1]) > 1e-6)
                throw std::invalid_argument(
                    "run_zboson: unfolding bins do not align with the fit histogram");
            sub_counts[i] = kept.counts[pos];
            ++pos;
        }
    }
    result.unfold_sample = make_binned_counts(sub_counts, unfold_edges);

    if (zb.fit_cb) {
        result.fit = fit_crystal_ball(held_out, cfg.truth.mass, cfg.truth.width, zb.fit_domain);
    } else {
        if (cfg.kernel.kind != KernelSpec::Kind::crystal_ball)
            throw std::invalid_argument("run_zboson: fixed CB parameters need a crystal_ball kernel");
        result.fit.delta_m = cfg.kernel.delta_m;
        result.fit.sigma = cfg.kernel.sigma;
        result.fit.alpha = cfg.kernel.alpha;
        result.fit.tail_gamma = cfg.kernel.tail_gamma;
        result.fit.converged = true;
        const SmearingKernel kernel = cfg.kernel.build();
        const Eigen::VectorXd shape = bin_means(
            kernel, [&](double s) { return bw_pdf(s, cfg.truth.mass, cfg.truth.width); },
            zb.fit_domain, held_out.bin_edges, 8);
        result.fit.scale = held_out.total() / std::max(shape.sum(), 1e-12);
    }

    // Unfold with the estimated response.
    ExperimentConfig unfold_cfg = cfg;
    unfold_cfg.kernel.kind = KernelSpec::Kind::crystal_ball;
    unfold_cfg.kernel.delta_m = result.fit.delta_m;
    unfold_cfg.kernel.sigma = result.fit.sigma;
    unfold_cfg.kernel.alpha = result.fit.alpha;
    unfold_cfg.kernel.tail_gamma = result.fit.tail_gamma;
    const Pipeline pipeline = build_pipeline(unfold_cfg);
    result.unfold = run_unfolding_with(unfold_cfg, pipeline, result.unfold_sample, workers);

    result.truth_scale = result.synthetic
                             ? lambda_gen * zb.keep_fraction
                             : result.fit.scale * zb.keep_fraction / (1.0 - zb.keep_fraction);
    result.truth_on_grid.resize(result.unfold.grid.size());
    for (int i = 0; i < result.unfold.grid.size(); ++i)
        result.truth_on_grid[i] =
            result.truth_scale * bw_pdf(result.unfold.grid[i], cfg.truth.mass, cfg.truth.width);
    return result;
}

}  // namespace unfold
