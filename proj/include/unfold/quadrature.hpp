#ifndef UNFOLD_QUADRATURE_HPP_
#define UNFOLD_QUADRATURE_HPP_

#include <functional>
#include <vector>

namespace unfold {

/// Gauss-Legendre rule on [-1,1]: nodes and weights for a given order.
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Rule of order n (exact for polynomials of degree 2n-1). Cached per n.
const GaussLegendreRule& gauss_legendre(int n);

/// Integrate f over [a,b] with a single n-node Gauss-Legendre panel.
double gl_integrate(const std::function<double(double)>& f, double a, double b, int n);

/// Integrate f over [a,b] split into the given panels (consecutive edges),
/// n nodes per panel.
double gl_integrate_panels(const std::function<double(double)>& f,
                           const std::vector<double>& edges, int n);

}  // namespace unfold

#endif  // UNFOLD_QUADRATURE_HPP_
