#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracles {

namespace {

double simpson(double a, double fa, double b, double fb, double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_step(const std::function<double(double)>& f, double a, double fa, double b,
                     double fb, double m, double fm, double whole, double tol, int depth) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(a, fa, m, fm, flm);
    const double right = simpson(m, fm, b, fb, frm);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           adaptive_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fm = f(m);
    return adaptive_step(f, a, fa, b, fb, m, fm, simpson(a, fa, b, fb, fm), tol, max_depth);
}

double cox_de_boor(const std::vector<double>& knots, int j, int order, double x,
                   double domain_hi) {
    if (order == 1) {
        const bool closed_end = x == domain_hi && knots[j + 1] == domain_hi &&
                                knots[j] < knots[j + 1];
        return (x >= knots[j] && x < knots[j + 1]) || closed_end ? 1.0 : 0.0;
    }
    double left = 0.0, right = 0.0;
    const double denom_l = knots[j + order - 1] - knots[j];
    if (denom_l > 0.0)
        left = (x - knots[j]) / denom_l * cox_de_boor(knots, j, order - 1, x, domain_hi);
    const double denom_r = knots[j + order] - knots[j + 1];
    if (denom_r > 0.0)
        right = (knots[j + order] - x) / denom_r *
                cox_de_boor(knots, j + 1, order - 1, x, domain_hi);
    return left + right;
}

GridPosterior grid_posterior(const Eigen::MatrixXd& K, const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& omega_a, double delta, double hi,
                             int n_nodes) {
    const int p = static_cast<int>(K.cols());
    if (p < 1 || p > 2) throw std::invalid_argument("grid_posterior: only p <= 2 supported");
    GridPosterior out;
    out.dim = p;
    out.nodes.resize(n_nodes);
    const double h = hi / (n_nodes - 1);
    for (int i = 0; i < n_nodes; ++i) out.nodes[i] = i * h;

    auto log_pi = [&](const Eigen::VectorXd& beta) {
        const Eigen::VectorXd mu = K * beta;
        double v = 0.0;
        for (int i = 0; i < y.size(); ++i) {
            if (y[i] > 0.0) {
                if (mu[i] <= 0.0) return -1e308;
                v += y[i] * std::log(mu[i]);
            }
            v -= mu[i];
        }
        v -= delta * beta.dot(omega_a * beta);
        return v;
    };

    double log_max = -1e308;
    if (p == 1) {
        out.weight.resize(n_nodes, 1);
        Eigen::VectorXd beta(1);
        for (int i = 0; i < n_nodes; ++i) {
            beta[0] = out.nodes[i];
            out.weight(i, 0) = log_pi(beta);
            log_max = std::max(log_max, out.weight(i, 0));
        }
        double total = 0.0;
        for (int i = 0; i < n_nodes; ++i) {
            const double trap = (i == 0 || i == n_nodes - 1) ? 0.5 : 1.0;
            out.weight(i, 0) = std::exp(out.weight(i, 0) - log_max) * trap;
            total += out.weight(i, 0);
        }
        out.weight /= total;
        out.log_marginal = log_max + std::log(total * h) + 0.5 * p * std::log(delta);
    } else {
        out.weight.resize(n_nodes, n_nodes);
        Eigen::VectorXd beta(2);
        for (int i = 0; i < n_nodes; ++i)
            for (int j = 0; j < n_nodes; ++j) {
                beta << out.nodes[i], out.nodes[j];
                out.weight(i, j) = log_pi(beta);
                log_max = std::max(log_max, out.weight(i, j));
            }
        double total = 0.0;
        for (int i = 0; i < n_nodes; ++i)
            for (int j = 0; j < n_nodes; ++j) {
                const double trap = ((i == 0 || i == n_nodes - 1) ? 0.5 : 1.0) *
                                    ((j == 0 || j == n_nodes - 1) ? 0.5 : 1.0);
                out.weight(i, j) = std::exp(out.weight(i, j) - log_max) * trap;
                total += out.weight(i, j);
            }
        out.weight /= total;
        out.log_marginal = log_max + std::log(total * h * h) + 0.5 * p * std::log(delta);
    }
    return out;
}

double GridPosterior::mean(int coord) const {
    double m = 0.0;
    if (dim == 1) {
        for (std::size_t i = 0; i < nodes.size(); ++i) m += weight(i, 0) * nodes[i];
        return m;
    }
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t j = 0; j < nodes.size(); ++j)
            m += weight(i, j) * (coord == 0 ? nodes[i] : nodes[j]);
    return m;
}

double GridPosterior::quantile_linear(const Eigen::VectorXd& c, double prob) const {
    std::vector<std::pair<double, double>> vals;
    if (dim == 1) {
        vals.reserve(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i)
            vals.emplace_back(c[0] * nodes[i], weight(i, 0));
    } else {
        vals.reserve(nodes.size() * nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i)
            for (std::size_t j = 0; j < nodes.size(); ++j)
                vals.emplace_back(c[0] * nodes[i] + c[1] * nodes[j], weight(i, j));
    }
    std::sort(vals.begin(), vals.end());
    double acc = 0.0;
    for (const auto& [v, w] : vals) {
        acc += w;
        if (acc >= prob) return v;
    }
    return vals.back().first;
}

Eigen::VectorXd GridPosterior::sample(double u1, double u2) const {
    Eigen::VectorXd beta(dim);
    if (dim == 1) {
        double acc = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            acc += weight(i, 0);
            if (acc >= u1) {
                beta[0] = nodes[i];
                return beta;
            }
        }
        beta[0] = nodes.back();
        return beta;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t j = 0; j < nodes.size(); ++j) {
            acc += weight(i, j);
            if (acc >= u1) {
                beta << nodes[i], nodes[j];
                return beta;
            }
        }
    (void)u2;
    beta << nodes.back(), nodes.back();
    return beta;
}

bool ks_two_sample_accepts(std::vector<double> a, std::vector<double> b, double level) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        d = std::max(d, std::fabs(i / na - j / nb));
    }
    const double c = level == 0.01 ? 1.628 : 1.358;
    return d <= c * std::sqrt((na + nb) / (na * nb));
}

Eigen::VectorXd nnls_coordinate_descent(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                        int sweeps, double tol) {
    const int p = static_cast<int>(A.cols());
    const Eigen::MatrixXd G = A.transpose() * A;
    const Eigen::VectorXd c = A.transpose() * b;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        double change = 0.0;
        for (int k = 0; k < p; ++k) {
            if (G(k, k) <= 0.0) continue;
            const double grad = c[k] - G.row(k).dot(x);
            const double next = std::max(0.0, x[k] + grad / G(k, k));
            change = std::max(change, std::fabs(next - x[k]));
            x[k] = next;
        }
        if (change < tol) break;
    }
    return x;
}

double batch_means_se(const std::vector<double>& x, int n_batches) {
    const int bs = static_cast<int>(x.size()) / n_batches;
    std::vector<double> means(n_batches, 0.0);
    for (int b = 0; b < n_batches; ++b) {
        for (int i = 0; i < bs; ++i) means[b] += x[b * bs + i];
        means[b] /= bs;
    }
    double grand = 0.0;
    for (double m : means) grand += m;
    grand /= n_batches;
    double var = 0.0;
    for (double m : means) var += (m - grand) * (m - grand);
    var /= (n_batches - 1);
    return std::sqrt(var / n_batches);
}

double batch_statistic_se(const std::vector<double>& x,
                          const std::function<double(const std::vector<double>&)>& stat,
                          int n_batches) {
    const int bs = static_cast<int>(x.size()) / n_batches;
    std::vector<double> stats(n_batches);
    for (int b = 0; b < n_batches; ++b) {
        std::vector<double> batch(x.begin() + b * bs, x.begin() + (b + 1) * bs);
        stats[b] = stat(batch);
    }
    double grand = 0.0;
    for (double s : stats) grand += s;
    grand /= n_batches;
    double var = 0.0;
    for (double s : stats) var += (s - grand) * (s - grand);
    var /= (n_batches - 1);
    return std::sqrt(var / n_batches);
}

}  // namespace oracles
