#ifndef UNFOLD_SIMULATE_HPP_
#define UNFOLD_SIMULATE_HPP_

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "unfold/common.hpp"
#include "unfold/kernels.hpp"
#include "unfold/rng.hpp"
#include "unfold/splines.hpp"

namespace unfold {

/// True Poisson intensity on a compact domain E. The gmm variant is the
/// two-bump benchmark: lambda_tot * (pi1 N(-2,1) + pi2 N(2,1) + pi3/|E|).
/// The breit_wigner variant is scale times the Cauchy mass density with
/// location m_Z and full width Gamma, restricted to E.
class TrueIntensity {
  public:
    static TrueIntensity gmm(Interval domain, double lambda_tot, double pi1, double pi2,
                             double pi3);
    static TrueIntensity breit_wigner(Interval domain, double scale, double mass, double width);
    static TrueIntensity spline(const SplineBasis& basis, const Eigen::VectorXd& beta);
    /// Arbitrary nonnegative intensity; sampling uses inverse-CDF on a dense
    /// tabulation.
    static TrueIntensity custom(Interval domain, std::function<double(double)> fn);

    const Interval& domain() const { return domain_; }

    /// Intensity value f(s), s in E.
    double operator()(double s) const { return fn_(s); }

    /// Integral of f over [lo, hi] intersected with E (closed form for gmm
    /// and breit_wigner).
    double integral(double lo, double hi) const;

    /// Total mass lambda(E).
    double total_mass() const { return integral(domain_.lo, domain_.hi); }

    /// One draw from the normalized density f / lambda(E).
    double sample_point(RngStream& rng) const;

  private:
    TrueIntensity() = default;

    Interval domain_;
    std::function<double(double)> fn_;
    std::function<double(double, double)> integral_;
    std::function<double(RngStream&)> sampler_;
};

/// Histogram of smeared observations.
struct BinnedCounts {
    Eigen::VectorXd counts;     // integer-valued, >= 0
    Eigen::VectorXd bin_edges;  // n+1 strictly increasing

    int n_bins() const { return static_cast<int>(counts.size()); }
    double total() const { return counts.sum(); }
    double bin_width(int i) const { return bin_edges[i + 1] - bin_edges[i]; }
};

BinnedCounts make_binned_counts(Eigen::VectorXd counts, Eigen::VectorXd bin_edges);

/// Poisson point sample: the point count is Poisson(lambda(E)) and the
/// points are i.i.d. with density f / lambda(E). Empty when lambda(E) = 0.
std::vector<double> sample_true_points(const TrueIntensity& intensity, std::uint64_t rng_seed);

/// Keeps each point with probability eps(x), smears kept points with the
/// kernel, and drops results outside F.
std::vector<double> thin_and_smear(const std::vector<double>& points,
                                   const Efficiency& efficiency, const SmearingKernel& kernel,
                                   Interval smeared_domain, std::uint64_t rng_seed);

/// Histogram with half-open bins [lo, hi); the final bin is closed.
/// Points outside [first edge, last edge] are ignored.
BinnedCounts bin_points(const std::vector<double>& points, const Eigen::VectorXd& bin_edges);

/// Splits a histogram bin-by-bin: first ~ Binomial(y_i, keep_prob),
/// second = y_i - first.
std::pair<BinnedCounts, BinnedCounts> binomial_split(const BinnedCounts& counts,
                                                     double keep_prob, std::uint64_t rng_seed);

/// Uniform bin edges.
Eigen::VectorXd uniform_bin_edges(Interval domain, int n_bins);

/// CSV exchange: header "bin_lo,bin_hi,count", one row per bin. Also the
/// ingestion format for externally measured histograms.
void write_counts_csv(const std::string& path, const BinnedCounts& counts);
BinnedCounts read_counts_csv(const std::string& path);

}  // namespace unfold

#endif  // UNFOLD_SIMULATE_HPP_
