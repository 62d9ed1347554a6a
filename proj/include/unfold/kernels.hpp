#ifndef UNFOLD_KERNELS_HPP_
#define UNFOLD_KERNELS_HPP_

#include <memory>
#include <functional>
#include <string>
#include <vector>

#include "unfold/common.hpp"
#include "unfold/rng.hpp"

namespace unfold {

/// Smearing kernel k(t,s): density of observing t given a true point at s.
/// Gaussian and Crystal Ball are translation kernels k(t,s) = k(t-s);
/// the identity kernel is the Dirac delta (no smearing) and is handled
/// analytically by consumers; tabulated kernels interpolate a user grid
/// bilinearly.
class SmearingKernel {
  public:
    enum class Kind { gaussian, crystal_ball, identity, tabulated };

    static SmearingKernel gaussian(double sigma);

    /// Crystal Ball density in m = t - s: Gaussian with mean delta_m and
    /// variance sigma^2 for (m - delta_m)/sigma > -alpha, power-law tail
    /// with exponent tail_gamma otherwise. Normalized in closed form.
    static SmearingKernel crystal_ball(double delta_m, double sigma, double alpha,
                                       double tail_gamma);

    static SmearingKernel identity();

    /// Tabulated k(t,s) on a rectangular grid (strictly increasing axes),
    /// interpolated bilinearly, zero outside the grid.
    static SmearingKernel tabulated(std::vector<double> t_grid, std::vector<double> s_grid,
                                    std::vector<std::vector<double>> values);

    Kind kind() const { return kind_; }
    bool is_translation() const { return kind_ == Kind::gaussian || kind_ == Kind::crystal_ball; }
    bool is_identity() const { return kind_ == Kind::identity; }

    /// Density value k(t,s) >= 0. Not defined for the identity kernel.
    double density(double t, double s) const;

    /// Draw the observed value for a true point at s.
    double smear(double s, RngStream& rng) const;

    /// Characteristic width of the kernel core (sigma for gaussian/CB);
    /// used to size quadrature panels. Returns 0 for identity and a
    /// negative value (meaning "no core") for tabulated kernels.
    double core_sigma() const;

    /// Center of the kernel in t for a true point at s (s + delta_m for CB).
    double core_center(double s) const;

    /// s-locations in [s_lo, s_hi] where t -> k(t, s) fixed-t smoothness
    /// breaks (the Crystal Ball power-law branch point); empty otherwise.
    std::vector<double> smoothness_breaks(double t, double s_lo, double s_hi) const;

    double param_delta_m() const { return delta_m_; }
    double param_sigma() const { return sigma_; }
    double param_alpha() const { return alpha_; }
    double param_tail_gamma() const { return tail_gamma_; }

  private:
    SmearingKernel() = default;

    friend void write_kernel_csv(const std::string& path, const SmearingKernel& kernel);

    Kind kind_ = Kind::identity;
    // gaussian / crystal ball parameters
    double delta_m_ = 0.0;
    double sigma_ = 1.0;
    double alpha_ = 0.0;
    double tail_gamma_ = 0.0;
    double cb_norm_ = 0.0;        // C in the CB density
    double cb_gauss_mass_ = 0.0;  // probability of the Gaussian branch
    // tabulated grid
    std::shared_ptr<const struct KernelTable> table_;

    double cb_density_shifted(double m) const;
};

/// Detection efficiency on the true space, with values in [0,1].
class Efficiency {
  public:
    Efficiency() : Efficiency(1.0) {}
    explicit Efficiency(double constant);
    explicit Efficiency(std::function<double(double)> fn);

    double operator()(double s) const;
    bool is_unit() const { return is_unit_; }

  private:
    std::function<double(double)> fn_;
    bool is_unit_ = true;
};

/// CSV exchange format for tabulated kernels: header "t,s,value", one row
/// per grid node.
void write_kernel_csv(const std::string& path, const SmearingKernel& kernel);
SmearingKernel read_kernel_csv(const std::string& path);

}  // namespace unfold

#endif  // UNFOLD_KERNELS_HPP_
