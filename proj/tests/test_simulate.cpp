#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <thread>

#include "oracles.hpp"
#include "unfold/parallel.hpp"
#include "unfold/response.hpp"
#include "unfold/simulate.hpp"

using namespace unfold;

namespace {

double normal_cdf(double z) { return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("zero intensity yields no points") {
    const TrueIntensity truth = TrueIntensity::gmm(Interval(-7, 7), 0.0, 0.2, 0.5, 0.3);
    CHECK(sample_true_points(truth, 1).empty());
}

TEST_CASE("mixture point counts are Poisson with the configured mean") {
    const TrueIntensity truth = TrueIntensity::gmm(Interval(-7, 7), 10000.0, 0.2, 0.5, 0.3);
    const int n_seeds = 500;
    double total = 0.0;
    for (int seed = 0; seed < n_seeds; ++seed)
        total += static_cast<double>(sample_true_points(truth, 1000 + seed).size());
    const double mean_count = total / n_seeds;
    // lambda(E) is marginally below lambda_tot (gaussian mass outside E).
    const double expected = truth.total_mass();
    CHECK(expected < 10000.0);
    CHECK(expected == doctest::Approx(10000.0).epsilon(1e-4));
    const double se = std::sqrt(expected / n_seeds);
    CHECK(std::fabs(mean_count - expected) < 3.0 * se);
}

TEST_CASE("breit-wigner sampling peaks at the resonance mass") {
    const TrueIntensity truth =
        TrueIntensity::breit_wigner(Interval(65, 115), 1.0, 91.1876, 2.4952);
    RngStream rng(77);
    const int n = 1000000;
    // Parabolic fit to binned log-counts around the peak estimates the mode.
    const double lo = 88.0, hi = 94.5, bw = 0.1;
    const int nb = static_cast<int>((hi - lo) / bw);
    std::vector<double> counts(nb, 0.0);
    for (int i = 0; i < n; ++i) {
        const double m = truth.sample_point(rng);
        if (m >= lo && m < hi) counts[static_cast<int>((m - lo) / bw)] += 1.0;
    }
    Eigen::MatrixXd design(nb, 3);
    Eigen::VectorXd target(nb);
    for (int i = 0; i < nb; ++i) {
        const double x = lo + (i + 0.5) * bw;
        design.row(i) << 1.0, x, x * x;
        target[i] = std::log(counts[i] + 1.0);
    }
    const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(target);
    const double mode = -coef[1] / (2.0 * coef[2]);
    CHECK(std::fabs(mode - 91.1876) < 0.05);
}

TEST_CASE("thinning and smearing edge cases") {
    const std::vector<double> points{-1.0, 0.0, 0.5, 2.0};
    CHECK(thin_and_smear(points, Efficiency(0.0), SmearingKernel::identity(), Interval(-7, 7), 3)
              .empty());
    const std::vector<double> same =
        thin_and_smear(points, Efficiency(), SmearingKernel::identity(), Interval(-7, 7), 3);
    CHECK(same == points);
    CHECK(thin_and_smear({}, Efficiency(), SmearingKernel::gaussian(1.0), Interval(-7, 7), 3)
              .empty());
}

TEST_CASE("discarded fraction matches the smeared-mass deficit") {
    const Interval domain(-7, 7);
    const TrueIntensity truth = TrueIntensity::gmm(domain, 10000.0, 0.2, 0.5, 0.3);
    // Expected keep probability: int f(s) P(s + Z in F) ds / lambda(E), with
    // the inner probability a normal CDF difference.
    const double kept_mass = oracles::adaptive_simpson(
        [&](double s) { return truth(s) * (normal_cdf(7.0 - s) - normal_cdf(-7.0 - s)); }, -7.0,
        7.0, 1e-8);
    const double expected_fraction = 1.0 - kept_mass / truth.total_mass();

    const int n_seeds = 200;
    std::vector<double> fractions(n_seeds);
    for (int seed = 0; seed < n_seeds; ++seed) {
        const auto points = sample_true_points(truth, 50 + seed);
        const auto smeared =
            thin_and_smear(points, Efficiency(), SmearingKernel::gaussian(1.0), domain,
                           9000 + seed);
        fractions[seed] =
            1.0 - static_cast<double>(smeared.size()) / static_cast<double>(points.size());
    }
    double mean = 0.0;
    for (double f : fractions) mean += f;
    mean /= n_seeds;
    double var = 0.0;
    for (double f : fractions) var += (f - mean) * (f - mean);
    const double se = std::sqrt(var / (n_seeds - 1) / n_seeds);
    CHECK(std::fabs(mean - expected_fraction) < 3.0 * se);
}

TEST_CASE("binning follows the half-open convention with a closed last bin") {
    Eigen::VectorXd edges(4);
    edges << 0.0, 1.0, 2.0, 3.0;
    CHECK(bin_points({}, edges).counts.sum() == 0.0);

    const BinnedCounts at_edges = bin_points({0.0, 1.0, 3.0, -0.1, 3.1}, edges);
    CHECK(at_edges.counts[0] == 1.0);  // 0.0 lands in bin 1
    CHECK(at_edges.counts[1] == 1.0);  // 1.0 lands in bin 2, not bin 1
    CHECK(at_edges.counts[2] == 1.0);  // right endpoint is included
    CHECK(at_edges.counts.sum() == 3.0);
}

TEST_CASE("uniform points distribute binomially over equal bins") {
    RngStream rng(123);
    std::vector<double> points(100000);
    for (double& x : points) x = rng.uniform();
    const BinnedCounts counts = bin_points(points, uniform_bin_edges(Interval(0, 1), 10));
    const double sd = std::sqrt(100000 * 0.1 * 0.9);
    for (int i = 0; i < 10; ++i) CHECK(std::fabs(counts.counts[i] - 10000.0) < 5.0 * sd);
}

TEST_CASE("binomial split is an exact complementary partition") {
    Eigen::VectorXd y(4);
    y << 0.0, 3.0, 141.0, 2056.0;
    const BinnedCounts counts{y, uniform_bin_edges(Interval(0, 4), 4)};
    const auto [kept, rest] = binomial_split(counts, 0.7, 99);
    CHECK(((kept.counts + rest.counts) - y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((kept.counts.array() >= 0.0).all());
    CHECK((rest.counts.array() >= 0.0).all());

    const auto [zero_a, zero_b] =
        binomial_split(BinnedCounts{Eigen::VectorXd::Zero(4), counts.bin_edges}, 0.7, 99);
    CHECK(zero_a.counts.sum() == 0.0);
    CHECK(zero_b.counts.sum() == 0.0);
    CHECK_THROWS_AS(binomial_split(counts, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(binomial_split(counts, 1.0, 1), std::invalid_argument);
}

TEST_CASE("split means follow the keep probability across seeds") {
    Eigen::VectorXd y(3);
    y << 520.0, 4100.0, 37.0;
    const BinnedCounts counts{y, uniform_bin_edges(Interval(0, 3), 3)};
    const int n_seeds = 500;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
    for (int seed = 0; seed < n_seeds; ++seed)
        mean += binomial_split(counts, 0.7, 777 + seed).first.counts;
    mean /= n_seeds;
    for (int i = 0; i < 3; ++i) {
        const double se = std::sqrt(y[i] * 0.7 * 0.3 / n_seeds);
        CHECK(std::fabs(mean[i] - 0.7 * y[i]) < 3.0 * se);
    }
}

TEST_CASE("simulated histograms are consistent with the discretized forward model") {
    const Interval domain(-7, 7);
    const SplineBasis basis = SplineBasis::uniform(domain, 26, 4);
    const SmearingKernel kernel = SmearingKernel::gaussian(1.0);
    const Eigen::VectorXd edges = uniform_bin_edges(domain, 40);
    const ResponseMatrix response = build_response_matrix(kernel, Efficiency(), basis, edges);
    const TrueIntensity truth = TrueIntensity::gmm(domain, 10000.0, 0.2, 0.5, 0.3);

    // Least-squares spline projection of the truth via the Gram system.
    const int p = basis.size();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd moment = Eigen::VectorXd::Zero(p);
    const int n_quad = 2000;
    const double h = domain.length() / n_quad;
    for (int q = 0; q <= n_quad; ++q) {
        const double s = domain.lo + q * h;
        const double w = (q == 0 || q == n_quad) ? 0.5 * h : h;
        const Eigen::VectorXd b = basis.eval(s);
        gram += w * b * b.transpose();
        moment += w * truth(s) * b;
    }
    const Eigen::VectorXd beta_truth = gram.ldlt().solve(moment).cwiseMax(0.0);
    const Eigen::VectorXd mu = smeared_mean(response, beta_truth);

    const int n_seeds = 500;
    Eigen::VectorXd mean_counts = Eigen::VectorXd::Zero(40);
    Eigen::VectorXd mean_squares = Eigen::VectorXd::Zero(40);
    for (int seed = 0; seed < n_seeds; ++seed) {
        const auto points = sample_true_points(truth, 10000 + seed);
        const auto smeared = thin_and_smear(points, Efficiency(), kernel, domain, 20000 + seed);
        const BinnedCounts y = bin_points(smeared, edges);
        mean_counts += y.counts;
        mean_squares += y.counts.cwiseProduct(y.counts);
    }
    mean_counts /= n_seeds;
    mean_squares /= n_seeds;

    for (int i = 0; i < 40; ++i) {
        const double se = std::sqrt(mu[i] / n_seeds);
        CHECK(std::fabs(mean_counts[i] - mu[i]) < 3.0 * se + 0.5);
        // Thinned and binned processes stay Poisson: dispersion near one.
        const double variance = mean_squares[i] - mean_counts[i] * mean_counts[i];
        const double dispersion = variance / mean_counts[i];
        CHECK(dispersion > 0.8);
        CHECK(dispersion < 1.2);
    }
}

TEST_CASE("identical seeds reproduce identical samples at any thread count") {
    const TrueIntensity truth = TrueIntensity::gmm(Interval(-7, 7), 2000.0, 0.2, 0.5, 0.3);
    const auto reference_points = sample_true_points(truth, 31337);
    const auto reference_smeared = thin_and_smear(
        reference_points, Efficiency(0.9), SmearingKernel::gaussian(1.0), Interval(-7, 7), 555);

    std::vector<std::vector<double>> results(8);
    run_parallel(8, 4, [&](int i) {
        const auto points = sample_true_points(truth, 31337);
        results[i] = thin_and_smear(points, Efficiency(0.9), SmearingKernel::gaussian(1.0),
                                    Interval(-7, 7), 555);
    });
    for (const auto& r : results) CHECK(r == reference_smeared);
}

TEST_CASE("counts CSV round trip and validation") {
    Eigen::VectorXd y(3);
    y << 4.0, 0.0, 19.0;
    const BinnedCounts counts{y, uniform_bin_edges(Interval(-1, 2), 3)};
    const std::string path = "counts_roundtrip_test.csv";
    write_counts_csv(path, counts);
    const BinnedCounts reread = read_counts_csv(path);
    CHECK((reread.counts - counts.counts).cwiseAbs().maxCoeff() == 0.0);
    CHECK((reread.bin_edges - counts.bin_edges).cwiseAbs().maxCoeff() == 0.0);
    std::remove(path.c_str());

    // Corrupt rows are reported with their row number.
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("bin_lo,bin_hi,count\n0,1,3\n1,2,oops\n", f);
        std::fclose(f);
        CHECK_THROWS_WITH_AS(read_counts_csv(path), doctest::Contains("row 2"),
                             std::runtime_error);
        std::remove(path.c_str());
    }
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("bin_lo,bin_hi,count\n0,1,3\n1,2,-4\n", f);
        std::fclose(f);
        CHECK_THROWS_AS(read_counts_csv(path), std::runtime_error);
        std::remove(path.c_str());
    }
}
