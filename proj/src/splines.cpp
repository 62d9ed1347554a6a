#include "unfold/splines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "unfold/quadrature.hpp"

namespace unfold {

SplineBasis::SplineBasis(Interval domain, const std::vector<double>& interior_knots, int order)
    : domain_(domain), order_(order) {
    if (order < 1) throw std::invalid_argument("SplineBasis: order must be >= 1");
    for (std::size_t i = 0; i < interior_knots.size(); ++i) {
        if (!domain.contains_open(interior_knots[i]))
            throw std::invalid_argument("SplineBasis: interior knot outside the open domain");
        if (i > 0 && !(interior_knots[i] > interior_knots[i - 1]))
            throw std::invalid_argument("SplineBasis: knot sequence not strictly increasing");
    }
    const int L = static_cast<int>(interior_knots.size());
    p_ = L + order;
    knots_.reserve(p_ + order);
    for (int i = 0; i < order; ++i) knots_.push_back(domain.lo);
    knots_.insert(knots_.end(), interior_knots.begin(), interior_knots.end());
    for (int i = 0; i < order; ++i) knots_.push_back(domain.hi);
}

SplineBasis SplineBasis::uniform(Interval domain, int n_interior_knots, int order) {
    if (n_interior_knots < 0)
        throw std::invalid_argument("SplineBasis: interior knot count must be >= 0");
    std::vector<double> interior(n_interior_knots);
    for (int i = 0; i < n_interior_knots; ++i)
        interior[i] = domain.lo + domain.length() * (i + 1) / (n_interior_knots + 1.0);
    return SplineBasis(domain, interior, order);
}

std::vector<double> SplineBasis::breakpoints() const {
    std::vector<double> out;
    out.push_back(domain_.lo);
    for (int i = order_; i < p_; ++i) out.push_back(knots_[i]);
    out.push_back(domain_.hi);
    return out;
}

Eigen::VectorXd SplineBasis::greville_abscissae() const {
    Eigen::VectorXd g(p_);
    if (order_ == 1) {
        for (int j = 0; j < p_; ++j) g[j] = 0.5 * (knots_[j] + knots_[j + 1]);
        return g;
    }
    for (int j = 0; j < p_; ++j) {
        double sum = 0.0;
        for (int k = 1; k < order_; ++k) sum += knots_[j + k];
        g[j] = sum / (order_ - 1);
    }
    return g;
}

int SplineBasis::find_span(double s) const {
    // Index i with knots_[i] <= s < knots_[i+1]; the right endpoint maps to
    // the last nondegenerate span.
    if (s >= domain_.hi) return p_ - 1;
    int lo = order_ - 1, hi = p_;
    while (hi - lo > 1) {
        int mid = (lo + hi) / 2;
        if (s < knots_[mid])
            hi = mid;
        else
            lo = mid;
    }
    return lo;
}

void SplineBasis::eval_local(double s, int deriv, int& first, double* values) const {
    if (!domain_.contains(s))
        throw std::invalid_argument("SplineBasis: evaluation point outside the domain");
    const int m = order_;
    const int i = find_span(s);
    first = i - m + 1;

    // Cox-de Boor triangle (The NURBS Book, A2.2/A2.3).
    std::vector<double> left(m), right(m);
    std::vector<std::vector<double>> ndu(m, std::vector<double>(m));
    ndu[0][0] = 1.0;
    for (int j = 1; j < m; ++j) {
        left[j] = s - knots_[i + 1 - j];
        right[j] = knots_[i + j] - s;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    if (deriv == 0) {
        for (int j = 0; j < m; ++j) values[j] = ndu[j][m - 1];
        return;
    }
    if (deriv >= m) {
        for (int j = 0; j < m; ++j) values[j] = 0.0;
        return;
    }
    std::vector<std::vector<double>> a(2, std::vector<double>(m));
    for (int r = 0; r < m; ++r) {
        int s1 = 0, s2 = 1;
        a[0][0] = 1.0;
        double d = 0.0;
        for (int k = 1; k <= deriv; ++k) {
            d = 0.0;
            int rk = r - k, pk = m - 1 - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            int j1 = (rk >= -1) ? 1 : -rk;
            int j2 = (r - 1 <= pk) ? k - 1 : m - 1 - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            std::swap(s1, s2);
        }
        values[r] = d;
    }
    double factor = static_cast<double>(m - 1);
    for (int k = 2; k <= deriv; ++k) factor *= (m - k);
    for (int j = 0; j < m; ++j) values[j] *= factor;
}

Eigen::VectorXd SplineBasis::eval(double s) const { return eval_derivative(s, 0); }

Eigen::VectorXd SplineBasis::eval_derivative(double s, int deriv) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p_);
    int first = 0;
    std::vector<double> vals(order_);
    eval_local(s, deriv, first, vals.data());
    for (int j = 0; j < order_; ++j) {
        int idx = first + j;
        if (idx >= 0 && idx < p_) out[idx] = vals[j];
    }
    return out;
}

Eigen::MatrixXd SplineBasis::design_matrix(const Eigen::VectorXd& grid) const {
    Eigen::MatrixXd design(grid.size(), p_);
    for (Eigen::Index i = 0; i < grid.size(); ++i) design.row(i) = eval(grid[i]).transpose();
    return design;
}

double SplineBasis::basis_integral(int j) const {
    if (j < 0 || j >= p_) throw std::invalid_argument("basis_integral: index out of range");
    return (knots_[j + order_] - knots_[j]) / order_;
}

Eigen::VectorXd eval_intensity(const SplineBasis& basis, const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& grid) {
    if (beta.size() != basis.size())
        throw std::invalid_argument("eval_intensity: coefficient length does not match basis");
    if ((beta.array() < 0.0).any())
        throw std::invalid_argument("eval_intensity: coefficients must be nonnegative");
    Eigen::VectorXd out(grid.size());
    int first = 0;
    std::vector<double> vals(basis.order());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        basis.eval_local(grid[i], 0, first, vals.data());
        double acc = 0.0;
        for (int j = 0; j < basis.order(); ++j) acc += vals[j] * beta[first + j];
        out[i] = acc;
    }
    return out;
}

PenaltyMatrix curvature_matrix(const SplineBasis& basis) {
    const int m = basis.order();
    if (m < 3)
        throw std::invalid_argument(
            "curvature_matrix: order must be >= 3 for a second-derivative penalty");
    const int p = basis.size();
    // B''_i B''_j is polynomial of degree 2(m-3) on each span; m-1 nodes are
    // exact with margin.
    const int n_nodes = (2 * (m - 2) + 1 + 1) / 2;
    const GaussLegendreRule& rule = gauss_legendre(n_nodes);

    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(p, p);
    std::vector<double> d2(m);
    const std::vector<double> bp = basis.breakpoints();
    for (std::size_t span = 0; span + 1 < bp.size(); ++span) {
        double mid = 0.5 * (bp[span] + bp[span + 1]);
        double half = 0.5 * (bp[span + 1] - bp[span]);
        for (int q = 0; q < n_nodes; ++q) {
            double s = mid + half * rule.nodes[q];
            double w = half * rule.weights[q];
            int first = 0;
            basis.eval_local(s, 2, first, d2.data());
            for (int a = 0; a < m; ++a)
                for (int b = 0; b <= a; ++b)
                    omega(first + a, first + b) += w * d2[a] * d2[b];
        }
    }
    omega = omega.selfadjointView<Eigen::Lower>();

    PenaltyMatrix out;
    out.entries = std::move(omega);
    out.kind = PenaltyMatrix::Kind::curvature;
    return out;
}

PenaltyMatrix aristotelian_matrix(const PenaltyMatrix& omega, double gamma_left,
                                  double gamma_right) {
    if (omega.kind != PenaltyMatrix::Kind::curvature)
        throw std::invalid_argument("aristotelian_matrix: input must be a curvature matrix");
    if (gamma_left < 0.0 || gamma_right < 0.0)
        throw std::invalid_argument("aristotelian_matrix: boundary weights must be >= 0");
    PenaltyMatrix out = omega;
    out.kind = PenaltyMatrix::Kind::aristotelian;
    out.gamma_left = gamma_left;
    out.gamma_right = gamma_right;
    const int p = out.size();
    out.entries(0, 0) += gamma_left;
    out.entries(p - 1, p - 1) += gamma_right;
    return out;
}

int numerical_rank(const Eigen::MatrixXd& mat, double tol_rel) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    double tol = tol_rel * sv[0];
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > tol) ++rank;
    return rank;
}

}  // namespace unfold
