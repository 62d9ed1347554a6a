// Command-line front end: config parsing, data ingestion, experiment
// dispatch, result persistence and plot emission.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "unfold/csv.hpp"
#include "unfold/harness.hpp"
#include "unfold/svg.hpp"
#include "unfold/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace unfold;

namespace {

using Clock = std::chrono::system_clock;

std::string iso_timestamp(Clock::time_point tp) {
    const std::time_t t = Clock::to_time_t(tp);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Collects stage timings and the output inventory, then writes
/// manifest.json. Every listed file must exist at completion.
class RunManifest {
  public:
    RunManifest(const ExperimentConfig& config, const std::string& command, fs::path out_dir)
        : out_dir_(std::move(out_dir)), started_(Clock::now()) {
        doc_["tool_version"] = kVersion;
        doc_["command"] = command;
        doc_["config_name"] = config.name;
        doc_["config_hash"] = hex64(config_hash(config));
        doc_["seed"] = config.seed;
        doc_["started"] = iso_timestamp(started_);
    }

    template <typename Fn>
    void stage(const std::string& name, Fn&& fn) {
        const auto start = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const std::exception& err) {
            throw std::runtime_error("stage '" + name + "': " + err.what());
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        durations_.push_back({name, seconds});
    }

    void record_output(const fs::path& path) { outputs_.push_back(path); }

    void finalize() {
        json stages = json::array();
        for (const auto& [name, seconds] : durations_)
            stages.push_back({{"stage", name}, {"seconds", seconds}});
        doc_["stages"] = stages;
        json files = json::array();
        for (const fs::path& path : outputs_) {
            if (!fs::exists(path))
                throw std::runtime_error("manifest: declared output missing: " + path.string());
            files.push_back({{"path", fs::relative(path, out_dir_).string()},
                             {"bytes", static_cast<std::uint64_t>(fs::file_size(path))}});
        }
        doc_["outputs"] = files;
        doc_["finished"] = iso_timestamp(Clock::now());
        std::ofstream out(out_dir_ / "manifest.json");
        if (!out) throw std::runtime_error("cannot write manifest in " + out_dir_.string());
        out << doc_.dump(2) << '\n';
    }

  private:
    fs::path out_dir_;
    Clock::time_point started_;
    json doc_;
    std::vector<std::pair<std::string, double>> durations_;
    std::vector<fs::path> outputs_;
};

ExperimentConfig load_config_with_overrides(const std::string& config_path,
                                            std::optional<std::uint64_t> seed,
                                            std::optional<std::string> estimator) {
    ExperimentConfig config = load_config(config_path);
    if (seed) config.seed = *seed;
    if (estimator) config.estimator = *estimator;
    config.validate();
    return config;
}

void plot_bands(const fs::path& path, const UnfoldResult& result,
                const Eigen::VectorXd* truth) {
    SvgFigure fig("Unfolded intensity", "s", "intensity");
    for (const IntervalBand& band : result.bands) {
        if (band.method != BandMethod::bc_percentile && result.bands.size() > 1) continue;
        fig.add_band(band.grid, band.lower, band.upper, "#7aa6d9",
                     band_method_name(band.method) + " band");
        break;
    }
    if (truth) fig.add_line(result.grid, *truth, "#222222", "true intensity", true);
    fig.add_line(result.grid, result.intensity, "#c0392b", "estimate");
    fig.add_line(result.grid, result.intensity_bc, "#27ae60", "bias-corrected");
    fig.save(path.string());
}

void plot_trace(const fs::path& path, const McemTrace& trace) {
    const int n = static_cast<int>(trace.deltas.size());
    Eigen::VectorXd iters(n), logdelta(n);
    for (int i = 0; i < n; ++i) {
        iters[i] = i;
        logdelta[i] = std::log10(trace.deltas[i]);
    }
    SvgFigure fig("Hyperparameter path", "iteration", "log10 delta");
    fig.add_line(iters, logdelta, "#2c3e50", "delta");
    fig.save(path.string());
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
    const ExperimentConfig config = load_config_with_overrides(config_path, seed, std::nullopt);
    fs::create_directories(out_dir);
    RunManifest manifest(config, "simulate", out_dir);

    BinnedCounts counts{Eigen::VectorXd(), Eigen::VectorXd()};
    manifest.stage("simulate", [&] {
        const Pipeline pipeline = build_pipeline(config);
        counts = simulate_observation(config, pipeline, config.seed);
    });
    const fs::path csv_path = fs::path(out_dir) / "counts.csv";
    manifest.stage("write", [&] { write_counts_csv(csv_path.string(), counts); });
    manifest.record_output(csv_path);
    manifest.finalize();
    std::printf("simulate: %d bins, %.0f events -> %s\n", counts.n_bins(), counts.total(),
                csv_path.c_str());
    return 0;
}

int cmd_unfold(const std::string& config_path, const std::string& data_path,
               const std::string& out_dir, std::optional<std::uint64_t> seed,
               std::optional<std::string> estimator, int workers) {
    const ExperimentConfig config = load_config_with_overrides(config_path, seed, estimator);
    fs::create_directories(out_dir);
    RunManifest manifest(config, "unfold", out_dir);

    std::optional<BinnedCounts> data;
    if (!data_path.empty()) {
        manifest.stage("ingest", [&] { data = read_counts_csv(data_path); });
    }
    UnfoldResult result;
    manifest.stage("unfold", [&] { result = run_unfolding(config, data, workers); });

    const fs::path bands_path = fs::path(out_dir) / "bands.csv";
    const fs::path trace_path = fs::path(out_dir) / "mcem_trace.csv";
    const fs::path chain_path = fs::path(out_dir) / "chain.csv";
    const fs::path plot_path = fs::path(out_dir) / "unfolded.svg";
    const fs::path trace_plot_path = fs::path(out_dir) / "mcem_trace.svg";
    manifest.stage("write", [&] {
        write_bands_csv(bands_path.string(), result.bands);
        write_trace_csv(trace_path.string(), result.trace);
        if (result.final_chain.size() > 0)
            write_chain_csv(chain_path.string(), result.final_chain);
        plot_bands(plot_path, result, nullptr);
        plot_trace(trace_plot_path, result.trace);
    });
    manifest.record_output(bands_path);
    manifest.record_output(trace_path);
    if (result.final_chain.size() > 0) manifest.record_output(chain_path);
    manifest.record_output(plot_path);
    manifest.record_output(trace_plot_path);
    manifest.finalize();
    std::printf("unfold: delta_hat = %.6e, cond(K) = %.3e, %zu band(s) -> %s\n",
                result.delta_hat, result.response_condition, result.bands.size(),
                out_dir.c_str());
    return 0;
}

int cmd_coverage(const std::string& config_path, const std::string& out_dir,
                 std::vector<std::string> method_names, int n_replicates,
                 std::vector<int> nbc_values, std::optional<std::uint64_t> seed,
                 std::optional<std::string> estimator, int workers) {
    const ExperimentConfig config = load_config_with_overrides(config_path, seed, estimator);
    fs::create_directories(out_dir);
    RunManifest manifest(config, "coverage", out_dir);

    if (method_names.empty()) method_names = config.band_methods;
    std::vector<BandMethod> methods;
    for (const std::string& name : method_names) methods.push_back(band_method_from_name(name));

    std::vector<CoverageReport> reports;
    manifest.stage("coverage", [&] {
        reports = run_coverage_study(config, n_replicates, methods, workers, nbc_values);
    });

    SvgFigure fig("Empirical coverage", "s", "coverage");
    const char* palette[] = {"#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#f39c12"};
    int color = 0;
    manifest.stage("write", [&] {
        for (const CoverageReport& report : reports) {
            std::string name = "coverage_" + band_method_name(report.method);
            if (report.method == BandMethod::bc_percentile)
                name += "_nbc" + std::to_string(report.n_bc);
            const fs::path path = fs::path(out_dir) / (name + ".csv");
            write_coverage_csv(path.string(), report);
            manifest.record_output(path);
            std::string label = band_method_name(report.method);
            if (report.method == BandMethod::bc_percentile)
                label += " (n_bc=" + std::to_string(report.n_bc) + ")";
            fig.add_line(report.grid, report.coverage, palette[color++ % 5], label);
        }
        fig.add_hline(1.0 - 2.0 * config.alpha, "#555555", "nominal");
        const fs::path plot_path = fs::path(out_dir) / "coverage.svg";
        fig.save(plot_path.string());
        manifest.record_output(plot_path);
    });
    manifest.finalize();
    for (const CoverageReport& report : reports)
        std::printf("coverage %-13s n_bc=%-2d avg=%.3f min=%.3f (n=%d)\n",
                    band_method_name(report.method).c_str(), report.n_bc,
                    report.average_coverage(), report.min_coverage(), report.n_replicates);
    return 0;
}

int cmd_zboson(const std::string& config_path, const std::string& data_path,
               const std::string& out_dir, std::optional<std::uint64_t> seed,
               std::optional<std::string> estimator, int workers) {
    const ExperimentConfig config = load_config_with_overrides(config_path, seed, estimator);
    fs::create_directories(out_dir);
    RunManifest manifest(config, "zboson", out_dir);

    std::optional<BinnedCounts> data;
    if (!data_path.empty()) manifest.stage("ingest", [&] { data = read_counts_csv(data_path); });

    ZbosonResult result;
    manifest.stage("analysis", [&] { result = run_zboson(config, data, workers); });

    const fs::path bands_path = fs::path(out_dir) / "bands.csv";
    const fs::path trace_path = fs::path(out_dir) / "mcem_trace.csv";
    const fs::path overlay_path = fs::path(out_dir) / "overlay.csv";
    const fs::path smeared_path = fs::path(out_dir) / "smeared_estimate.csv";
    const fs::path data_path_out = fs::path(out_dir) / "unfold_counts.csv";
    const fs::path fit_path = fs::path(out_dir) / "cb_fit.json";
    const fs::path plot_path = fs::path(out_dir) / "zboson.svg";
    manifest.stage("write", [&] {
        write_bands_csv(bands_path.string(), result.unfold.bands);
        write_trace_csv(trace_path.string(), result.unfold.trace);
        write_counts_csv(data_path_out.string(), result.unfold_sample);
        {
            CsvWriter csv(overlay_path.string(), "s,truth_intensity");
            for (int i = 0; i < result.unfold.grid.size(); ++i)
                csv.row({result.unfold.grid[i], result.truth_on_grid[i]});
        }
        {
            CsvWriter csv(smeared_path.string(), "bin_mid,smeared_intensity_estimate");
            const BinnedCounts& y = result.unfold_sample;
            for (int i = 0; i < y.n_bins(); ++i)
                csv.row({0.5 * (y.bin_edges[i] + y.bin_edges[i + 1]),
                         y.counts[i] / y.bin_width(i)});
        }
        {
            json fit{{"delta_m_gev", result.fit.delta_m},
                     {"sigma_gev", result.fit.sigma},
                     {"alpha", result.fit.alpha},
                     {"tail_gamma", result.fit.tail_gamma},
                     {"scale", result.fit.scale},
                     {"log_likelihood", result.fit.log_likelihood},
                     {"synthetic_data", result.synthetic}};
            std::ofstream out(fit_path);
            out << fit.dump(2) << '\n';
        }
        plot_bands(plot_path, result.unfold, &result.truth_on_grid);
    });
    for (const fs::path& p :
         {bands_path, trace_path, overlay_path, smeared_path, data_path_out, fit_path, plot_path})
        manifest.record_output(p);
    manifest.finalize();
    std::printf("zboson: CB fit (dm=%.3f, sigma=%.3f, alpha=%.3f, gamma=%.3f), "
                "delta_hat = %.3e -> %s\n",
                result.fit.delta_m, result.fit.sigma, result.fit.alpha, result.fit.tail_gamma,
                result.unfold.delta_hat, out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Empirical-Bayes unfolding of Poisson-smeared spectra"};
    app.set_version_flag("--version", std::string("unfold ") + kVersion);
    app.require_subcommand(1);

    std::string config_path, data_path, out_dir = "out";
    std::optional<std::uint64_t> seed;
    int workers = 1, n_replicates = 100;
    std::vector<std::string> methods;
    std::vector<int> nbc_values;
    bool use_fast = false, use_full = false;

    auto add_common = [&](CLI::App* cmd, bool with_data) {
        cmd->add_option("--config", config_path, "experiment config (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--workers", workers, "worker threads (results are invariant)")
            ->check(CLI::PositiveNumber);
        cmd->add_flag("--fast", use_fast, "use the Gaussian-approximation estimator");
        cmd->add_flag("--full", use_full, "use the full-Poisson estimator");
        if (with_data)
            cmd->add_option("--data", data_path, "input histogram CSV (bin_lo,bin_hi,count)")
                ->check(CLI::ExistingFile);
    };

    CLI::App* simulate = app.add_subcommand("simulate", "generate a smeared histogram");
    add_common(simulate, false);

    CLI::App* unfold_cmd = app.add_subcommand("unfold", "run the unfolding pipeline");
    add_common(unfold_cmd, true);

    CLI::App* coverage = app.add_subcommand("coverage", "repeated-observation coverage study");
    add_common(coverage, false);
    coverage->add_option("--method", methods, "band methods (repeatable)");
    coverage->add_option("--n-replicates", n_replicates, "number of replicates")
        ->check(CLI::PositiveNumber);
    coverage->add_option("--nbc", nbc_values, "bias-correction counts for bc_percentile");

    CLI::App* zboson = app.add_subcommand("zboson", "invariant-mass analysis");
    add_common(zboson, true);

    CLI11_PARSE(app, argc, argv);

    std::optional<std::string> estimator;
    if (use_fast && use_full) {
        std::fprintf(stderr, "error: --fast and --full are mutually exclusive\n");
        return 2;
    }
    if (use_fast) estimator = "fast";
    if (use_full) estimator = "full";

    try {
        if (simulate->parsed()) return cmd_simulate(config_path, out_dir, seed);
        if (unfold_cmd->parsed())
            return cmd_unfold(config_path, data_path, out_dir, seed, estimator, workers);
        if (coverage->parsed())
            return cmd_coverage(config_path, out_dir, methods, n_replicates, nbc_values, seed,
                                estimator, workers);
        if (zboson->parsed())
            return cmd_zboson(config_path, data_path, out_dir, seed, estimator, workers);
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
    return 2;
}
