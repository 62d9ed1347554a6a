#include "unfold/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "unfold/csv.hpp"

namespace unfold {

namespace {

double normal_cdf(double z) { return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))); }

// Cauchy CDF with location m and full width at half maximum w.
double bw_cdf(double x, double m, double w) {
    return 0.5 + std::atan(2.0 * (x - m) / w) / M_PI;
}

}  // namespace

TrueIntensity TrueIntensity::gmm(Interval domain, double lambda_tot, double pi1, double pi2,
                                 double pi3) {
    if (!(lambda_tot >= 0.0)) throw std::invalid_argument("gmm intensity: lambda_tot must be >= 0");
    if (pi1 < 0.0 || pi2 < 0.0 || pi3 < 0.0 ||
        std::fabs(pi1 + pi2 + pi3 - 1.0) > 1e-12)
        throw std::invalid_argument("gmm intensity: weights must be nonnegative and sum to 1");
    const double mu1 = -2.0, mu2 = 2.0, sd = 1.0;
    const double inv_len = 1.0 / domain.length();

    TrueIntensity f;
    f.domain_ = domain;
    f.fn_ = [=](double s) {
        const double g1 = std::exp(-0.5 * (s - mu1) * (s - mu1)) * 0.3989422804014327;
        const double g2 = std::exp(-0.5 * (s - mu2) * (s - mu2)) * 0.3989422804014327;
        return lambda_tot * (pi1 * g1 + pi2 * g2 + pi3 * inv_len);
    };
    f.integral_ = [=](double lo, double hi) {
        const double c1 = normal_cdf(hi - mu1) - normal_cdf(lo - mu1);
        const double c2 = normal_cdf(hi - mu2) - normal_cdf(lo - mu2);
        return lambda_tot * (pi1 * c1 + pi2 * c2 + pi3 * (hi - lo) * inv_len);
    };
    // Component masses restricted to the domain drive an exact categorical
    // draw; normal components are rejection-sampled into the domain.
    const double w1 = pi1 * (normal_cdf(domain.hi - mu1) - normal_cdf(domain.lo - mu1));
    const double w2 = pi2 * (normal_cdf(domain.hi - mu2) - normal_cdf(domain.lo - mu2));
    const double w3 = pi3;
    const double wsum = w1 + w2 + w3;
    f.sampler_ = [=](RngStream& rng) {
        while (true) {
            const double u = rng.uniform() * wsum;
            double x;
            if (u < w1)
                x = mu1 + sd * rng.normal();
            else if (u < w1 + w2)
                x = mu2 + sd * rng.normal();
            else
                return rng.uniform(domain.lo, domain.hi);
            if (domain.contains(x)) return x;
        }
    };
    return f;
}

TrueIntensity TrueIntensity::breit_wigner(Interval domain, double scale, double mass,
                                          double width) {
    if (!(scale >= 0.0)) throw std::invalid_argument("breit_wigner intensity: scale must be >= 0");
    if (!(width > 0.0)) throw std::invalid_argument("breit_wigner intensity: width must be > 0");
    TrueIntensity f;
    f.domain_ = domain;
    f.fn_ = [=](double s) {
        const double d = s - mass;
        return scale * width / (2.0 * M_PI * (d * d + 0.25 * width * width));
    };
    f.integral_ = [=](double lo, double hi) {
        return scale * (bw_cdf(hi, mass, width) - bw_cdf(lo, mass, width));
    };
    const double c_lo = bw_cdf(domain.lo, mass, width);
    const double c_hi = bw_cdf(domain.hi, mass, width);
    f.sampler_ = [=](RngStream& rng) {
        // Inverse CDF of the Cauchy restricted to the domain.
        const double u = c_lo + (c_hi - c_lo) * rng.uniform();
        return mass + 0.5 * width * std::tan(M_PI * (u - 0.5));
    };
    return f;
}

TrueIntensity TrueIntensity::spline(const SplineBasis& basis, const Eigen::VectorXd& beta) {
    if (beta.size() != basis.size())
        throw std::invalid_argument("spline intensity: coefficient length mismatch");
    if ((beta.array() < 0.0).any())
        throw std::invalid_argument("spline intensity: coefficients must be nonnegative");
    SplineBasis basis_copy = basis;
    Eigen::VectorXd beta_copy = beta;
    return custom(basis.domain(), [basis_copy = std::move(basis_copy),
                                   beta_copy = std::move(beta_copy)](double s) {
        Eigen::VectorXd grid(1);
        grid[0] = s;
        return eval_intensity(basis_copy, beta_copy, grid)[0];
    });
}

TrueIntensity TrueIntensity::custom(Interval domain, std::function<double(double)> fn) {
    if (!fn) throw std::invalid_argument("custom intensity: null function");
    TrueIntensity f;
    f.domain_ = domain;
    f.fn_ = std::move(fn);

    // Dense tabulation of the CDF for both integration and inverse-CDF
    // sampling.
    constexpr int kTabSize = 100000;
    auto grid = std::make_shared<std::vector<double>>(kTabSize + 1);
    auto cdf = std::make_shared<std::vector<double>>(kTabSize + 1, 0.0);
    const double h = domain.length() / kTabSize;
    double prev = f.fn_(domain.lo);
    if (prev < 0.0) throw std::invalid_argument("custom intensity: negative value");
    (*grid)[0] = domain.lo;
    for (int i = 1; i <= kTabSize; ++i) {
        const double x = domain.lo + h * i;
        const double cur = f.fn_(x);
        if (cur < 0.0) throw std::invalid_argument("custom intensity: negative value");
        (*grid)[i] = x;
        (*cdf)[i] = (*cdf)[i - 1] + 0.5 * (prev + cur) * h;
        prev = cur;
    }
    f.integral_ = [grid, cdf, domain, h](double lo, double hi) {
        auto value_at = [&](double x) {
            x = std::clamp(x, domain.lo, domain.hi);
            const double pos = (x - domain.lo) / h;
            const int i = std::min(static_cast<int>(pos), kTabSize - 1);
            const double frac = pos - i;
            return (*cdf)[i] + frac * ((*cdf)[i + 1] - (*cdf)[i]);
        };
        return value_at(hi) - value_at(lo);
    };
    f.sampler_ = [grid, cdf](RngStream& rng) {
        const double target = rng.uniform() * cdf->back();
        const auto it = std::lower_bound(cdf->begin(), cdf->end(), target);
        const std::size_t hi = std::max<std::size_t>(it - cdf->begin(), 1);
        const double seg = (*cdf)[hi] - (*cdf)[hi - 1];
        const double frac = seg > 0.0 ? (target - (*cdf)[hi - 1]) / seg : 0.5;
        return (*grid)[hi - 1] + frac * ((*grid)[hi] - (*grid)[hi - 1]);
    };
    return f;
}

double TrueIntensity::integral(double lo, double hi) const {
    lo = std::max(lo, domain_.lo);
    hi = std::min(hi, domain_.hi);
    if (!(hi > lo)) return 0.0;
    return integral_(lo, hi);
}

double TrueIntensity::sample_point(RngStream& rng) const { return sampler_(rng); }

BinnedCounts make_binned_counts(Eigen::VectorXd counts, Eigen::VectorXd bin_edges) {
    if (bin_edges.size() != counts.size() + 1)
        throw std::invalid_argument("BinnedCounts: need one more edge than bins");
    for (Eigen::Index i = 1; i < bin_edges.size(); ++i)
        if (!(bin_edges[i] > bin_edges[i - 1]))
            throw std::invalid_argument("BinnedCounts: edges must be strictly increasing");
    for (Eigen::Index i = 0; i < counts.size(); ++i)
        if (counts[i] < 0.0 || counts[i] != std::floor(counts[i]))
            throw std::invalid_argument("BinnedCounts: counts must be nonnegative integers");
    return BinnedCounts{std::move(counts), std::move(bin_edges)};
}

std::vector<double> sample_true_points(const TrueIntensity& intensity, std::uint64_t rng_seed) {
    const double mass = intensity.total_mass();
    std::vector<double> points;
    if (mass <= 0.0) return points;
    RngKey key{rng_seed};
    RngStream count_stream(key.child(rng_tag::point_count));
    const long long n = count_stream.poisson(mass);
    points.reserve(static_cast<std::size_t>(n));
    RngStream point_stream(key.child(rng_tag::points));
    for (long long i = 0; i < n; ++i) points.push_back(intensity.sample_point(point_stream));
    return points;
}

std::vector<double> thin_and_smear(const std::vector<double>& points,
                                   const Efficiency& efficiency, const SmearingKernel& kernel,
                                   Interval smeared_domain, std::uint64_t rng_seed) {
    RngKey key{rng_seed};
    RngStream thin_stream(key.child(rng_tag::thinning));
    RngStream smear_stream(key.child(rng_tag::smearing));
    std::vector<double> out;
    out.reserve(points.size());
    for (double x : points) {
        if (thin_stream.uniform() >= efficiency(x)) continue;
        const double t = kernel.smear(x, smear_stream);
        if (smeared_domain.contains(t)) out.push_back(t);
    }
    return out;
}

BinnedCounts bin_points(const std::vector<double>& points, const Eigen::VectorXd& bin_edges) {
    const int n = static_cast<int>(bin_edges.size()) - 1;
    if (n < 1) throw std::invalid_argument("bin_points: need at least one bin");
    for (Eigen::Index i = 1; i < bin_edges.size(); ++i)
        if (!(bin_edges[i] > bin_edges[i - 1]))
            throw std::invalid_argument("bin_points: edges must be strictly increasing");
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(n);
    const double* begin = bin_edges.data();
    const double* end = begin + bin_edges.size();
    for (double x : points) {
        if (x < bin_edges[0] || x > bin_edges[n]) continue;
        // Half-open bins [lo, hi); the final bin also includes its right edge.
        int idx = static_cast<int>(std::upper_bound(begin, end, x) - begin) - 1;
        if (idx == n) idx = n - 1;
        counts[idx] += 1.0;
    }
    return BinnedCounts{std::move(counts), bin_edges};
}

std::pair<BinnedCounts, BinnedCounts> binomial_split(const BinnedCounts& counts,
                                                     double keep_prob, std::uint64_t rng_seed) {
    if (!(keep_prob > 0.0 && keep_prob < 1.0))
        throw std::invalid_argument("binomial_split: keep probability must lie in (0,1)");
    RngStream stream(RngKey{rng_seed}.child(rng_tag::split));
    Eigen::VectorXd kept(counts.n_bins()), rest(counts.n_bins());
    for (int i = 0; i < counts.n_bins(); ++i) {
        const long long y = static_cast<long long>(counts.counts[i]);
        const long long a = stream.binomial(y, keep_prob);
        kept[i] = static_cast<double>(a);
        rest[i] = static_cast<double>(y - a);
    }
    return {BinnedCounts{std::move(kept), counts.bin_edges},
            BinnedCounts{std::move(rest), counts.bin_edges}};
}

Eigen::VectorXd uniform_bin_edges(Interval domain, int n_bins) {
    if (n_bins < 1) throw std::invalid_argument("uniform_bin_edges: need at least one bin");
    Eigen::VectorXd edges(n_bins + 1);
    for (int i = 0; i <= n_bins; ++i)
        edges[i] = domain.lo + domain.length() * i / n_bins;
    return edges;
}

void write_counts_csv(const std::string& path, const BinnedCounts& counts) {
    CsvWriter csv(path, "bin_lo,bin_hi,count");
    for (int i = 0; i < counts.n_bins(); ++i)
        csv.row({counts.bin_edges[i], counts.bin_edges[i + 1], counts.counts[i]});
}

BinnedCounts read_counts_csv(const std::string& path) {
    CsvReader csv(path, {"bin_lo", "bin_hi", "count"});
    std::vector<double> lo, hi, y;
    std::vector<double> row;
    while (csv.next(row)) {
        if (row[2] < 0.0 || row[2] != std::floor(row[2]))
            throw std::runtime_error(path + ": row " + std::to_string(csv.rows_read()) +
                                     ": count must be a nonnegative integer");
        lo.push_back(row[0]);
        hi.push_back(row[1]);
        y.push_back(row[2]);
    }
    if (lo.empty()) throw std::runtime_error(path + ": no bins");
    Eigen::VectorXd edges(lo.size() + 1), counts(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
        edges[i] = lo[i];
        counts[i] = y[i];
        if (i > 0 && std::fabs(lo[i] - hi[i - 1]) > 1e-9 * std::max(1.0, std::fabs(hi[i - 1])))
            throw std::runtime_error(path + ": row " + std::to_string(i + 1) +
                                     ": bins are not contiguous");
    }
    edges[lo.size()] = hi.back();
    return make_binned_counts(std::move(counts), std::move(edges));
}

}  // namespace unfold
