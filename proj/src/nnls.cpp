#include "unfold/nnls.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "unfold/response.hpp"

namespace unfold {

namespace {

Eigen::VectorXd solve_passive(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                              const std::vector<int>& passive) {
    Eigen::MatrixXd Ap(A.rows(), passive.size());
    for (std::size_t j = 0; j < passive.size(); ++j) Ap.col(j) = A.col(passive[j]);
    return Ap.colPivHouseholderQr().solve(b);
}

}  // namespace

Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double kkt_tol,
                     int max_iter) {
    if (A.rows() != b.size()) throw std::invalid_argument("nnls: dimension mismatch");
    const int p = static_cast<int>(A.cols());
    if (max_iter <= 0) max_iter = 3 * p + 30;

    Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
    std::vector<bool> in_passive(p, false);
    std::vector<int> passive;

    const double grad_scale = std::max((A.transpose() * b).cwiseAbs().maxCoeff(), 1e-300);
    Eigen::VectorXd w = A.transpose() * (b - A * x);

    for (int iter = 0; iter < max_iter; ++iter) {
        // Most violated KKT multiplier among active constraints.
        int best = -1;
        double best_w = kkt_tol * grad_scale;
        for (int j = 0; j < p; ++j)
            if (!in_passive[j] && w[j] > best_w) {
                best_w = w[j];
                best = j;
            }
        if (best < 0) break;  // KKT satisfied
        in_passive[best] = true;
        passive.push_back(best);

        // Inner loop: restore feasibility of the passive-set LS solution.
        while (true) {
            Eigen::VectorXd z = solve_passive(A, b, passive);
            double alpha = 1.0;
            for (std::size_t j = 0; j < passive.size(); ++j)
                if (z[j] <= 0.0) {
                    const double xj = x[passive[j]];
                    alpha = std::min(alpha, xj / (xj - z[j]));
                }
            if (alpha >= 1.0) {
                for (std::size_t j = 0; j < passive.size(); ++j) x[passive[j]] = z[j];
                break;
            }
            for (std::size_t j = 0; j < passive.size(); ++j) {
                const int col = passive[j];
                x[col] += alpha * (z[j] - x[col]);
            }
            std::vector<int> keep;
            for (int col : passive) {
                if (x[col] <= 1e-14 * grad_scale || x[col] <= 0.0) {
                    x[col] = 0.0;
                    in_passive[col] = false;
                } else {
                    keep.push_back(col);
                }
            }
            passive.swap(keep);
            if (passive.empty()) break;
        }
        w = A.transpose() * (b - A * x);
    }
    return x;
}

Eigen::VectorXd nnls_init(const BinnedCounts& data, const SplineBasis& basis) {
    if (data.total() == 0.0) return Eigen::VectorXd::Zero(basis.size());
    ResponseMatrix identity_response =
        build_response_matrix(SmearingKernel::identity(), Efficiency(), basis, data.bin_edges);
    return nnls(identity_response.entries, data.counts);
}

}  // namespace unfold
