#include "unfold/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "unfold/csv.hpp"

namespace unfold {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}

struct KernelTable {
    std::vector<double> t_grid;
    std::vector<double> s_grid;
    std::vector<std::vector<double>> values;  // values[ti][si]

    double interpolate(double t, double s) const {
        if (t < t_grid.front() || t > t_grid.back() || s < s_grid.front() || s > s_grid.back())
            return 0.0;
        auto cell = [](const std::vector<double>& g, double x) {
            auto it = std::upper_bound(g.begin(), g.end(), x);
            std::size_t hi = std::min<std::size_t>(it - g.begin(), g.size() - 1);
            return std::max<std::size_t>(hi, 1) - 1;
        };
        std::size_t i = cell(t_grid, t), j = cell(s_grid, s);
        double ft = (t - t_grid[i]) / (t_grid[i + 1] - t_grid[i]);
        double fs = (s - s_grid[j]) / (s_grid[j + 1] - s_grid[j]);
        return (1 - ft) * (1 - fs) * values[i][j] + ft * (1 - fs) * values[i + 1][j] +
               (1 - ft) * fs * values[i][j + 1] + ft * fs * values[i + 1][j + 1];
    }
};

SmearingKernel SmearingKernel::gaussian(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian kernel: sigma must be > 0");
    SmearingKernel k;
    k.kind_ = Kind::gaussian;
    k.sigma_ = sigma;
    return k;
}

SmearingKernel SmearingKernel::crystal_ball(double delta_m, double sigma, double alpha,
                                            double tail_gamma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("crystal ball kernel: sigma must be > 0");
    if (!(alpha > 0.0)) throw std::invalid_argument("crystal ball kernel: alpha must be > 0");
    if (!(tail_gamma > 1.0))
        throw std::invalid_argument("crystal ball kernel: tail exponent must be > 1");
    SmearingKernel k;
    k.kind_ = Kind::crystal_ball;
    k.delta_m_ = delta_m;
    k.sigma_ = sigma;
    k.alpha_ = alpha;
    k.tail_gamma_ = tail_gamma;
    // Total mass = sigma * (gaussian branch + power-law branch), both closed
    // form; C makes the density integrate to one.
    const double gauss_branch = std::sqrt(M_PI / 2.0) * (1.0 + std::erf(alpha / std::sqrt(2.0)));
    const double tail_branch =
        (tail_gamma / alpha) * std::exp(-0.5 * alpha * alpha) / (tail_gamma - 1.0);
    k.cb_norm_ = 1.0 / (sigma * (gauss_branch + tail_branch));
    k.cb_gauss_mass_ = gauss_branch / (gauss_branch + tail_branch);
    return k;
}

SmearingKernel SmearingKernel::identity() {
    SmearingKernel k;
    k.kind_ = Kind::identity;
    return k;
}

SmearingKernel SmearingKernel::tabulated(std::vector<double> t_grid, std::vector<double> s_grid,
                                         std::vector<std::vector<double>> values) {
    if (t_grid.size() < 2 || s_grid.size() < 2)
        throw std::invalid_argument("tabulated kernel: need at least a 2x2 grid");
    if (values.size() != t_grid.size())
        throw std::invalid_argument("tabulated kernel: value rows must match t grid");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != s_grid.size())
            throw std::invalid_argument("tabulated kernel: value columns must match s grid");
        for (double v : values[i])
            if (v < 0.0) throw std::invalid_argument("tabulated kernel: negative density value");
    }
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1]))
            throw std::invalid_argument("tabulated kernel: t grid not strictly increasing");
    for (std::size_t i = 1; i < s_grid.size(); ++i)
        if (!(s_grid[i] > s_grid[i - 1]))
            throw std::invalid_argument("tabulated kernel: s grid not strictly increasing");
    SmearingKernel k;
    k.kind_ = Kind::tabulated;
    auto table = std::make_shared<KernelTable>();
    table->t_grid = std::move(t_grid);
    table->s_grid = std::move(s_grid);
    table->values = std::move(values);
    k.table_ = std::move(table);
    return k;
}

double SmearingKernel::cb_density_shifted(double m) const {
    // Density in m = t - s.
    const double z = (m - delta_m_) / sigma_;
    if (z > -alpha_) return cb_norm_ * std::exp(-0.5 * z * z);
    const double base = tail_gamma_ / alpha_ - alpha_ - z;
    return cb_norm_ * std::pow(tail_gamma_ / alpha_, tail_gamma_) *
           std::exp(-0.5 * alpha_ * alpha_) * std::pow(base, -tail_gamma_);
}

double SmearingKernel::density(double t, double s) const {
    switch (kind_) {
        case Kind::gaussian: {
            const double z = (t - s) / sigma_;
            if (std::fabs(z) > 38.0) return 0.0;
            return kInvSqrt2Pi / sigma_ * std::exp(-0.5 * z * z);
        }
        case Kind::crystal_ball:
            return cb_density_shifted(t - s);
        case Kind::tabulated:
            return table_->interpolate(t, s);
        case Kind::identity:
            throw std::logic_error("identity kernel has no pointwise density");
    }
    return 0.0;
}

double SmearingKernel::smear(double s, RngStream& rng) const {
    switch (kind_) {
        case Kind::identity:
            return s;
        case Kind::gaussian:
            return s + sigma_ * rng.normal();
        case Kind::crystal_ball: {
            if (rng.uniform() < cb_gauss_mass_) {
                // Gaussian branch truncated to z > -alpha; rejection is cheap
                // since the acceptance probability is Phi(alpha).
                double z;
                do {
                    z = rng.normal();
                } while (z <= -alpha_);
                return s + delta_m_ + sigma_ * z;
            }
            // Power-law branch by inverse CDF in u = gamma/alpha - alpha - z.
            const double u = (tail_gamma_ / alpha_) *
                             std::pow(rng.uniform_pos(), -1.0 / (tail_gamma_ - 1.0));
            const double z = tail_gamma_ / alpha_ - alpha_ - u;
            return s + delta_m_ + sigma_ * z;
        }
        case Kind::tabulated: {
            // Inverse CDF along the t axis of the interpolated density at
            // fixed s, using a trapezoid CDF on the t grid.
            const KernelTable& tab = *table_;
            const std::size_t nt = tab.t_grid.size();
            std::vector<double> dens(nt), cdf(nt, 0.0);
            for (std::size_t i = 0; i < nt; ++i) dens[i] = tab.interpolate(tab.t_grid[i], s);
            for (std::size_t i = 1; i < nt; ++i)
                cdf[i] = cdf[i - 1] +
                         0.5 * (dens[i] + dens[i - 1]) * (tab.t_grid[i] - tab.t_grid[i - 1]);
            const double total = cdf.back();
            if (!(total > 0.0))
                throw std::runtime_error("tabulated kernel: zero mass at requested s");
            const double target = rng.uniform() * total;
            const auto it = std::lower_bound(cdf.begin(), cdf.end(), target);
            const std::size_t hi = std::max<std::size_t>(it - cdf.begin(), 1);
            const double seg = cdf[hi] - cdf[hi - 1];
            const double frac = seg > 0.0 ? (target - cdf[hi - 1]) / seg : 0.5;
            return tab.t_grid[hi - 1] + frac * (tab.t_grid[hi] - tab.t_grid[hi - 1]);
        }
    }
    return s;
}

double SmearingKernel::core_sigma() const {
    switch (kind_) {
        case Kind::gaussian:
        case Kind::crystal_ball:
            return sigma_;
        case Kind::identity:
            return 0.0;
        case Kind::tabulated:
            return -1.0;
    }
    return -1.0;
}

double SmearingKernel::core_center(double s) const { return s + delta_m_; }

std::vector<double> SmearingKernel::smoothness_breaks(double t, double s_lo, double s_hi) const {
    if (kind_ != Kind::crystal_ball) return {};
    // Branch point (t - s - delta_m)/sigma = -alpha.
    const double s_star = t - delta_m_ + alpha_ * sigma_;
    if (s_star > s_lo && s_star < s_hi) return {s_star};
    return {};
}

Efficiency::Efficiency(double constant) {
    if (constant < 0.0 || constant > 1.0)
        throw std::invalid_argument("Efficiency: constant must lie in [0,1]");
    is_unit_ = (constant == 1.0);
    fn_ = [constant](double) { return constant; };
}

Efficiency::Efficiency(std::function<double(double)> fn) : fn_(std::move(fn)), is_unit_(false) {
    if (!fn_) throw std::invalid_argument("Efficiency: null function");
}

double Efficiency::operator()(double s) const {
    double value = fn_(s);
    if (value < 0.0 || value > 1.0)
        throw std::runtime_error("Efficiency: value outside [0,1] at s = " + std::to_string(s));
    return value;
}

void write_kernel_csv(const std::string& path, const SmearingKernel& kernel) {
    if (kernel.kind() != SmearingKernel::Kind::tabulated)
        throw std::invalid_argument("write_kernel_csv: only tabulated kernels are serialized");
    CsvWriter csv(path, "t,s,value");
    const KernelTable& tab = *kernel.table_;
    for (std::size_t i = 0; i < tab.t_grid.size(); ++i)
        for (std::size_t j = 0; j < tab.s_grid.size(); ++j)
            csv.row({tab.t_grid[i], tab.s_grid[j], tab.values[i][j]});
}

SmearingKernel read_kernel_csv(const std::string& path) {
    CsvReader csv(path, {"t", "s", "value"});
    std::vector<double> ts, ss, vs;
    std::vector<double> row;
    while (csv.next(row)) {
        ts.push_back(row[0]);
        ss.push_back(row[1]);
        vs.push_back(row[2]);
    }
    std::vector<double> t_grid = ts, s_grid = ss;
    std::sort(t_grid.begin(), t_grid.end());
    t_grid.erase(std::unique(t_grid.begin(), t_grid.end()), t_grid.end());
    std::sort(s_grid.begin(), s_grid.end());
    s_grid.erase(std::unique(s_grid.begin(), s_grid.end()), s_grid.end());
    if (t_grid.size() * s_grid.size() != vs.size())
        throw std::runtime_error("read_kernel_csv: rows do not form a complete grid in " + path);
    std::vector<std::vector<double>> values(t_grid.size(),
                                            std::vector<double>(s_grid.size(), 0.0));
    auto index_of = [](const std::vector<double>& g, double x) {
        return std::size_t(std::lower_bound(g.begin(), g.end(), x) - g.begin());
    };
    for (std::size_t r = 0; r < vs.size(); ++r)
        values[index_of(t_grid, ts[r])][index_of(s_grid, ss[r])] = vs[r];
    return SmearingKernel::tabulated(std::move(t_grid), std::move(s_grid), std::move(values));
}

}  // namespace unfold
