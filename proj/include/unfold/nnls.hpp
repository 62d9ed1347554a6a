#ifndef UNFOLD_NNLS_HPP_
#define UNFOLD_NNLS_HPP_

#include <Eigen/Core>

#include "unfold/simulate.hpp"
#include "unfold/splines.hpp"

namespace unfold {

/// Nonnegative least squares: argmin_{x >= 0} ||A x - b||_2^2 by the
/// Lawson-Hanson active set method, iterated until the KKT conditions hold
/// to kkt_tol relative to ||A' b||_inf.
Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                     double kkt_tol = 1e-8, int max_iter = 0);

/// Chain starting point: nonnegative least-squares spline fit to the
/// smeared histogram, using the identity-kernel response (no smearing, unit
/// efficiency). Zero data gives the zero vector.
Eigen::VectorXd nnls_init(const BinnedCounts& data, const SplineBasis& basis);

}  // namespace unfold

#endif  // UNFOLD_NNLS_HPP_
