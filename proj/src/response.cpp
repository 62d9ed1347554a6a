#include "unfold/response.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "unfold/csv.hpp"
#include "unfold/quadrature.hpp"

namespace unfold {

namespace {

void check_bin_edges(const Eigen::VectorXd& edges) {
    if (edges.size() < 2) throw std::invalid_argument("response: need at least one bin");
    for (Eigen::Index i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw std::invalid_argument("response: bin edges must be strictly increasing");
}

// Subdivision of one inner-integral base panel [a,b] for a fixed smeared
// point t: split at kernel smoothness breaks, then refine pieces that
// overlap the kernel core so no piece is wider than half the core sigma.
void inner_panels(const SmearingKernel& kernel, double t, double a, double b,
                  std::vector<double>& edges) {
    edges.clear();
    edges.push_back(a);
    for (double brk : kernel.smoothness_breaks(t, a, b)) edges.push_back(brk);
    edges.push_back(b);

    const double sigma = kernel.core_sigma();
    if (sigma <= 0.0) return;  // no core information (identity handled elsewhere)
    // For translation kernels the s-core for fixed t sits at t - delta_m.
    const double center = t - kernel.param_delta_m();
    const double core_lo = center - 10.0 * sigma;
    const double core_hi = center + 10.0 * sigma;
    std::vector<double> refined;
    refined.push_back(edges.front());
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double lo = edges[i], hi = edges[i + 1];
        int pieces = 1;
        if (hi > core_lo && lo < core_hi) {
            pieces = static_cast<int>(std::ceil((hi - lo) / (0.5 * sigma)));
            pieces = std::min(std::max(pieces, 1), 512);
        }
        for (int k = 1; k <= pieces; ++k) refined.push_back(lo + (hi - lo) * k / pieces);
    }
    edges.swap(refined);
}

Eigen::MatrixXd assemble(const SmearingKernel& kernel, const Efficiency& efficiency,
                         const SplineBasis& basis, const Eigen::VectorXd& bin_edges, int nodes) {
    const int n = static_cast<int>(bin_edges.size()) - 1;
    const int p = basis.size();
    const int m = basis.order();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, p);

    if (kernel.is_identity()) {
        // K_{ij} = int_{F_i ∩ E} eps(s) B_j(s) ds.
        const GaussLegendreRule& rule = gauss_legendre(nodes);
        std::vector<double> bvals(m);
        const std::vector<double> bp = basis.breakpoints();
        for (int i = 0; i < n; ++i) {
            for (std::size_t span = 0; span + 1 < bp.size(); ++span) {
                const double lo = std::max(bin_edges[i], bp[span]);
                const double hi = std::min(bin_edges[i + 1], bp[span + 1]);
                if (!(hi > lo)) continue;
                const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
                for (int q = 0; q < nodes; ++q) {
                    const double s = mid + half * rule.nodes[q];
                    const double w = half * rule.weights[q] * efficiency(s);
                    int first = 0;
                    basis.eval_local(s, 0, first, bvals.data());
                    for (int j = 0; j < m; ++j) K(i, first + j) += w * bvals[j];
                }
            }
        }
        return K;
    }

    const GaussLegendreRule& rule = gauss_legendre(nodes);
    const std::vector<double> spans = basis.breakpoints();
    std::vector<double> bvals(m);
    std::vector<double> panels;
    for (int i = 0; i < n; ++i) {
        const double t_mid = 0.5 * (bin_edges[i] + bin_edges[i + 1]);
        const double t_half = 0.5 * (bin_edges[i + 1] - bin_edges[i]);
        for (int qt = 0; qt < nodes; ++qt) {
            const double t = t_mid + t_half * rule.nodes[qt];
            const double wt = t_half * rule.weights[qt];
            for (std::size_t span = 0; span + 1 < spans.size(); ++span) {
                inner_panels(kernel, t, spans[span], spans[span + 1], panels);
                for (std::size_t c = 0; c + 1 < panels.size(); ++c) {
                    const double mid = 0.5 * (panels[c] + panels[c + 1]);
                    const double half = 0.5 * (panels[c + 1] - panels[c]);
                    for (int qs = 0; qs < nodes; ++qs) {
                        const double s = mid + half * rule.nodes[qs];
                        const double k_ts = kernel.density(t, s);
                        if (k_ts == 0.0) continue;
                        const double w = wt * half * rule.weights[qs] * k_ts * efficiency(s);
                        int first = 0;
                        basis.eval_local(s, 0, first, bvals.data());
                        for (int j = 0; j < m; ++j) K(i, first + j) += w * bvals[j];
                    }
                }
            }
        }
    }
    return K;
}

double max_relative_change(const Eigen::MatrixXd& coarse, const Eigen::MatrixXd& fine) {
    const double scale_floor = 1e-12 * fine.cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < fine.rows(); ++i)
        for (Eigen::Index j = 0; j < fine.cols(); ++j) {
            const double denom = std::max(std::fabs(fine(i, j)), scale_floor);
            if (denom == 0.0) continue;
            worst = std::max(worst, std::fabs(fine(i, j) - coarse(i, j)) / denom);
        }
    return worst;
}

}  // namespace

ResponseMatrix build_response_matrix(const SmearingKernel& kernel, const Efficiency& efficiency,
                                     const SplineBasis& basis, const Eigen::VectorXd& bin_edges) {
    check_bin_edges(bin_edges);

    constexpr double kRefineTol = 1e-8;
    constexpr int kMaxNodes = 128;
    Eigen::MatrixXd K = assemble(kernel, efficiency, basis, bin_edges, 8);
    int nodes = 8;
    bool converged = false;
    while (nodes < kMaxNodes) {
        Eigen::MatrixXd fine = assemble(kernel, efficiency, basis, bin_edges, 2 * nodes);
        const double change = max_relative_change(K, fine);
        K = std::move(fine);
        nodes *= 2;
        if (change < kRefineTol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw std::runtime_error(
            "build_response_matrix: quadrature did not stabilize to 1e-8 relative at " +
            std::to_string(kMaxNodes) + " nodes per dimension");

    // Clamp the roundoff negatives that tensor quadrature of a nonnegative
    // integrand can produce at the underflow floor.
    K = K.cwiseMax(0.0);

    ResponseMatrix out{std::move(K), bin_edges, basis, 0.0, nodes};
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.entries);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double smin = sv[sv.size() - 1];
    out.condition_number =
        smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity();
    return out;
}

Eigen::VectorXd smeared_mean(const ResponseMatrix& response, const Eigen::VectorXd& beta) {
    if (beta.size() != response.n_coeffs())
        throw std::invalid_argument("smeared_mean: coefficient length does not match response");
    if ((beta.array() < 0.0).any())
        throw std::invalid_argument("smeared_mean: coefficients must be nonnegative");
    return response.entries * beta;
}

Eigen::VectorXd bin_means(const SmearingKernel& kernel,
                          const std::function<double(double)>& intensity, Interval s_domain,
                          const Eigen::VectorXd& bin_edges, int nodes) {
    check_bin_edges(bin_edges);
    const int n = static_cast<int>(bin_edges.size()) - 1;
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(n);
    const GaussLegendreRule& rule = gauss_legendre(nodes);

    if (kernel.is_identity()) {
        for (int i = 0; i < n; ++i) {
            const double lo = std::max(bin_edges[i], s_domain.lo);
            const double hi = std::min(bin_edges[i + 1], s_domain.hi);
            if (hi > lo) nu[i] = gl_integrate(intensity, lo, hi, nodes);
        }
        return nu;
    }

    // Base panels of roughly unit kernel width over the s domain.
    const double sigma = kernel.core_sigma();
    const double base_width = sigma > 0.0 ? std::max(sigma, s_domain.length() / 512.0)
                                          : s_domain.length() / 64.0;
    const int n_base = std::max(1, static_cast<int>(std::ceil(s_domain.length() / base_width)));
    std::vector<double> panels;
    for (int i = 0; i < n; ++i) {
        const double t_mid = 0.5 * (bin_edges[i] + bin_edges[i + 1]);
        const double t_half = 0.5 * (bin_edges[i + 1] - bin_edges[i]);
        for (int qt = 0; qt < nodes; ++qt) {
            const double t = t_mid + t_half * rule.nodes[qt];
            const double wt = t_half * rule.weights[qt];
            for (int b = 0; b < n_base; ++b) {
                const double a = s_domain.lo + s_domain.length() * b / n_base;
                const double c = s_domain.lo + s_domain.length() * (b + 1) / n_base;
                inner_panels(kernel, t, a, c, panels);
                for (std::size_t pc = 0; pc + 1 < panels.size(); ++pc) {
                    const double mid = 0.5 * (panels[pc] + panels[pc + 1]);
                    const double half = 0.5 * (panels[pc + 1] - panels[pc]);
                    for (int qs = 0; qs < nodes; ++qs) {
                        const double s = mid + half * rule.nodes[qs];
                        const double k_ts = kernel.density(t, s);
                        if (k_ts == 0.0) continue;
                        nu[i] += wt * half * rule.weights[qs] * k_ts * intensity(s);
                    }
                }
            }
        }
    }
    return nu;
}

void write_response_csv(const std::string& path, const ResponseMatrix& response) {
    CsvWriter csv(path, "i,j,value");
    for (int i = 0; i < response.n_bins(); ++i)
        for (int j = 0; j < response.n_coeffs(); ++j)
            csv.row({static_cast<double>(i + 1), static_cast<double>(j + 1),
                     response.entries(i, j)});
}

Eigen::MatrixXd read_response_csv(const std::string& path) {
    CsvReader csv(path, {"i", "j", "value"});
    std::vector<double> row;
    int max_i = 0, max_j = 0;
    std::vector<std::tuple<int, int, double>> cells;
    while (csv.next(row)) {
        int i = static_cast<int>(row[0]), j = static_cast<int>(row[1]);
        if (i < 1 || j < 1)
            throw std::runtime_error(path + ": row " + std::to_string(csv.rows_read()) +
                                     ": indices must be 1-based positive");
        max_i = std::max(max_i, i);
        max_j = std::max(max_j, j);
        cells.emplace_back(i, j, row[2]);
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(max_i, max_j);
    for (const auto& [i, j, v] : cells) K(i - 1, j - 1) = v;
    return K;
}

}  // namespace unfold
