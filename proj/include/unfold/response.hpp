#ifndef UNFOLD_RESPONSE_HPP_
#define UNFOLD_RESPONSE_HPP_

#include <Eigen/Core>
#include <string>

#include "unfold/kernels.hpp"
#include "unfold/splines.hpp"

namespace unfold {

/// Discretized forward operator: K_{ij} = int_{F_i} int_E k(t,s) eps(s)
/// B_j(s) ds dt, mapping spline coefficients on the true space to expected
/// histogram counts on the smeared space.
struct ResponseMatrix {
    Eigen::MatrixXd entries;    // n x p, entrywise >= 0
    Eigen::VectorXd bin_edges;  // n+1 strictly increasing
    SplineBasis basis;
    double condition_number = 0.0;  // 2-norm, computed at build time
    int quadrature_nodes = 0;       // per-dimension node count that passed refinement

    int n_bins() const { return static_cast<int>(entries.rows()); }
    int n_coeffs() const { return static_cast<int>(entries.cols()); }
    double bin_width(int i) const { return bin_edges[i + 1] - bin_edges[i]; }
};

/// Assembles the response matrix by iterated Gauss-Legendre quadrature per
/// (bin x knot span) cell, splitting the inner integral at kernel smoothness
/// breaks and refining panels near the kernel core. Node counts start at 8
/// per dimension and double until no entry changes by more than 1e-8
/// relative; non-convergence throws.
ResponseMatrix build_response_matrix(const SmearingKernel& kernel, const Efficiency& efficiency,
                                     const SplineBasis& basis, const Eigen::VectorXd& bin_edges);

/// Expected smeared histogram mu = K beta for nonnegative coefficients.
Eigen::VectorXd smeared_mean(const ResponseMatrix& response, const Eigen::VectorXd& beta);

/// Expected bin contents for a general (non-spline) true intensity:
/// nu_i = int_{F_i} int_{s_domain} k(t,s) f(s) ds dt, with the same
/// quadrature scheme as the response matrix at the given node count.
Eigen::VectorXd bin_means(const SmearingKernel& kernel,
                          const std::function<double(double)>& intensity, Interval s_domain,
                          const Eigen::VectorXd& bin_edges, int nodes = 8);

/// CSV exchange: header "i,j,value", 1-based indices, row-major order.
void write_response_csv(const std::string& path, const ResponseMatrix& response);
Eigen::MatrixXd read_response_csv(const std::string& path);

}  // namespace unfold

#endif  // UNFOLD_RESPONSE_HPP_
