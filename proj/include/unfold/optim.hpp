#ifndef UNFOLD_OPTIM_HPP_
#define UNFOLD_OPTIM_HPP_

#include <Eigen/Core>
#include <functional>

namespace unfold {

struct SimplexResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int evaluations = 0;
    bool converged = false;
};

/// Nelder-Mead simplex minimizer. Deterministic: the initial simplex comes
/// from coordinate steps around x0. Stops when the simplex function spread
/// falls below ftol (relative) or after max_evals evaluations.
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                          double ftol = 1e-10, int max_evals = 4000);

}  // namespace unfold

#endif  // UNFOLD_OPTIM_HPP_
