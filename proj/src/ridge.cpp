#include "unfold/ridge.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

#include "unfold/common.hpp"

namespace unfold {

namespace {

// Hager-style 1-norm condition estimate from an LLT factorization.
double condition_estimate_1norm(const Eigen::MatrixXd& A, const Eigen::LLT<Eigen::MatrixXd>& llt) {
    const int n = static_cast<int>(A.rows());
    const double norm_a = A.cwiseAbs().colwise().sum().maxCoeff();
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / n);
    double est = 0.0;
    for (int iter = 0; iter < 5; ++iter) {
        const Eigen::VectorXd y = llt.solve(x);
        const double norm_y = y.cwiseAbs().sum();
        if (norm_y <= est) break;
        est = norm_y;
        const Eigen::VectorXd sign = y.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
        const Eigen::VectorXd z = llt.solve(sign);
        int best = 0;
        z.cwiseAbs().maxCoeff(&best);
        x.setZero();
        x[best] = 1.0;
    }
    return est * norm_a;
}

}  // namespace

void RidgeModel::validate() const {
    if (omega_a.size() != response.n_coeffs())
        throw std::invalid_argument("RidgeModel: penalty size does not match response");
    if (!(delta > 0.0)) throw std::invalid_argument("RidgeModel: delta must be > 0");
    if (variance_weights.size() != 0 && variance_weights.size() != response.n_bins())
        throw std::invalid_argument("RidgeModel: weight length does not match bins");
    if ((variance_weights.array() <= 0.0).any() && variance_weights.size() != 0)
        throw std::invalid_argument("RidgeModel: variance weights must be positive");
}

Eigen::VectorXd ridge_estimate(const Eigen::VectorXd& counts, const RidgeModel& model,
                               RidgeDetail* detail) {
    model.validate();
    if (counts.size() != model.response.n_bins())
        throw std::invalid_argument("ridge_estimate: data length does not match response");

    const Eigen::MatrixXd& K = model.response.entries;
    const Eigen::VectorXd w_inv_var =
        model.variance_weights.size() != 0
            ? Eigen::VectorXd(model.variance_weights.cwiseInverse())
            : Eigen::VectorXd(counts.cwiseMax(1.0).cwiseInverse());

    const Eigen::MatrixXd KtW = K.transpose() * w_inv_var.asDiagonal();
    Eigen::MatrixXd system = KtW * K + 2.0 * model.delta * model.omega_a.entries;
    const Eigen::VectorXd rhs = KtW * counts;

    Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("ridge_estimate: normal equations are not positive definite");
    const Eigen::VectorXd pre_clip = llt.solve(rhs);

    const double cond = condition_estimate_1norm(system, llt);
    if (cond > 1e15)
        log_warn("ridge_estimate: system condition estimate " + std::to_string(cond) +
                 " exceeds 1e15; solution may be unreliable");
    if (detail) {
        detail->pre_clip = pre_clip;
        detail->condition_estimate = cond;
    }

    if (!model.exact_nonnegative) return pre_clip.cwiseMax(0.0);

    // Exact nonnegative solve on the equivalent augmented least-squares
    // system [sqrt(W) K; sqrt(2 delta) L'] with Omega_A = L L'.
    Eigen::LLT<Eigen::MatrixXd> penalty_llt(model.omega_a.entries);
    if (penalty_llt.info() != Eigen::Success)
        throw std::runtime_error("ridge_estimate: penalty matrix is not positive definite");
    const int n = model.response.n_bins();
    const int p = model.response.n_coeffs();
    Eigen::MatrixXd augmented(n + p, p);
    augmented.topRows(n) = w_inv_var.cwiseSqrt().asDiagonal() * K;
    augmented.bottomRows(p) =
        std::sqrt(2.0 * model.delta) * Eigen::MatrixXd(penalty_llt.matrixL()).transpose();
    Eigen::VectorXd target(n + p);
    target.head(n) = w_inv_var.cwiseSqrt().asDiagonal() * counts;
    target.tail(p).setZero();
    return nnls(augmented, target);
}

PointEstimator make_ridge_estimator(const RidgeModel& model) {
    model.validate();
    return [model](const Eigen::VectorXd& counts, RngKey) {
        return ridge_estimate(counts, model);
    };
}

namespace {

std::vector<IntervalBand> fast_band(const BinnedCounts& data, double delta_hat,
                                    const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                                    const SplineBasis& basis, const BiasCorrectionConfig& cfg,
                                    int r_uq, double alpha, const Eigen::VectorXd& grid,
                                    BandMethod method, int workers) {
    RidgeModel model{response, omega_a, delta_hat, Eigen::VectorXd(), false};
    const PointEstimator estimator = make_ridge_estimator(model);
    const int nbc = method == BandMethod::percentile ? 0 : cfg.n_bc;
    return bootstrap_bands(data, response, omega_a, basis, estimator, cfg, r_uq, alpha, grid,
                           {method}, {nbc}, workers);
}

}  // namespace

IntervalBand fast_bc_percentile_band(const BinnedCounts& data, double delta_hat,
                                     const ResponseMatrix& response,
                                     const PenaltyMatrix& omega_a, const SplineBasis& basis,
                                     const BiasCorrectionConfig& cfg, int r_uq, double alpha,
                                     const Eigen::VectorXd& grid, int workers) {
    return fast_band(data, delta_hat, response, omega_a, basis, cfg, r_uq, alpha, grid,
                     BandMethod::bc_percentile, workers)
        .front();
}

IntervalBand fast_percentile_band(const BinnedCounts& data, double delta_hat,
                                  const ResponseMatrix& response, const PenaltyMatrix& omega_a,
                                  const SplineBasis& basis, const BiasCorrectionConfig& cfg,
                                  int r_uq, double alpha, const Eigen::VectorXd& grid,
                                  int workers) {
    BiasCorrectionConfig no_bc = cfg;
    no_bc.n_bc = 0;
    return fast_band(data, delta_hat, response, omega_a, basis, no_bc, r_uq, alpha, grid,
                     BandMethod::percentile, workers)
        .front();
}

}  // namespace unfold
