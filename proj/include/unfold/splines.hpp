#ifndef UNFOLD_SPLINES_HPP_
#define UNFOLD_SPLINES_HPP_

#include <Eigen/Core>
#include <vector>

#include "unfold/common.hpp"

namespace unfold {

/// Clamped B-spline basis of order m (degree m-1) on a compact interval,
/// with L interior knots and p = L + m basis functions. Boundary knots are
/// replicated with multiplicity m, so the first/last basis functions
/// interpolate at the endpoints. Immutable after construction.
class SplineBasis {
  public:
    /// Basis with explicitly placed interior knots (strictly increasing,
    /// strictly inside the domain).
    SplineBasis(Interval domain, const std::vector<double>& interior_knots, int order);

    /// Basis with L uniformly placed interior knots.
    static SplineBasis uniform(Interval domain, int n_interior_knots, int order);

    const Interval& domain() const { return domain_; }
    int order() const { return order_; }
    int size() const { return p_; }
    int interior_knot_count() const { return p_ - order_; }

    /// Full clamped knot vector, length p + m.
    const std::vector<double>& knots() const { return knots_; }

    /// Distinct knot values s_0 < s_1 < ... < s_{L+1} delimiting the
    /// polynomial pieces.
    std::vector<double> breakpoints() const;

    /// Greville abscissae t*_j = (t_{j+1} + ... + t_{j+m-1}) / (m-1);
    /// coefficients beta_j = a + b t*_j represent f(s) = a + b s exactly.
    Eigen::VectorXd greville_abscissae() const;

    /// All p basis function values at s in the domain. Nonnegative, at most
    /// m nonzero entries, summing to one.
    Eigen::VectorXd eval(double s) const;

    /// Derivative of given order for all p basis functions at s.
    Eigen::VectorXd eval_derivative(double s, int deriv) const;

    /// Nonzero band only: fills values[0..m-1] with B_{first}(s)..B_{first+m-1}(s).
    void eval_local(double s, int deriv, int& first, double* values) const;

    /// Design matrix (one row of basis values per grid point).
    Eigen::MatrixXd design_matrix(const Eigen::VectorXd& grid) const;

    /// Exact integral of B_j over the domain: (t_{j+m} - t_j) / m.
    double basis_integral(int j) const;

  private:
    Interval domain_;
    int order_;
    int p_;
    std::vector<double> knots_;

    int find_span(double s) const;
};

/// Intensity f(s) = sum_j beta_j B_j(s) for nonnegative coefficients,
/// evaluated on a grid.
Eigen::VectorXd eval_intensity(const SplineBasis& basis, const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& grid);

/// Symmetric p x p penalty matrix.
struct PenaltyMatrix {
    enum class Kind { curvature, aristotelian };

    Eigen::MatrixXd entries;
    Kind kind = Kind::curvature;
    double gamma_left = 0.0;
    double gamma_right = 0.0;

    int size() const { return static_cast<int>(entries.rows()); }
};

/// Curvature penalty Omega_{ij} = int B_i''(s) B_j''(s) ds, integrated
/// exactly by per-span Gauss-Legendre (the integrand is piecewise
/// polynomial). Requires order >= 3. Positive semidefinite with rank p-2
/// for cubic bases.
PenaltyMatrix curvature_matrix(const SplineBasis& basis);

/// Boundary-augmented penalty: gamma_left added at (1,1), gamma_right at
/// (p,p). Positive definite for positive gammas; gamma = 0 leaves the
/// curvature matrix unchanged.
PenaltyMatrix aristotelian_matrix(const PenaltyMatrix& omega, double gamma_left,
                                  double gamma_right);

/// Numerical rank: singular values below tol_rel times the largest count as
/// zero.
int numerical_rank(const Eigen::MatrixXd& mat, double tol_rel = 1e-8);

}  // namespace unfold

#endif  // UNFOLD_SPLINES_HPP_
