#include "unfold/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace unfold {

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& step, double ftol,
                          int max_evals) {
    const int n = static_cast<int>(x0.size());
    const double alpha = 1.0, gamma = 2.0, rho = 0.5, shrink = 0.5;

    std::vector<Eigen::VectorXd> xs(n + 1, x0);
    std::vector<double> fs(n + 1);
    int evals = 0;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++evals;
        const double v = objective(x);
        return std::isfinite(v) ? v : 1e300;
    };
    for (int i = 1; i <= n; ++i) xs[i][i - 1] += step[i - 1];
    for (int i = 0; i <= n; ++i) fs[i] = eval(xs[i]);

    std::vector<int> order(n + 1);
    SimplexResult result;
    while (evals < max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
        const int best = order[0], worst = order[n], second_worst = order[n - 1];

        const double spread =
            std::fabs(fs[worst] - fs[best]) /
            std::max(1e-300, std::fabs(fs[best]) + std::fabs(fs[worst]));
        if (spread < ftol) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i <= n; ++i)
            if (i != worst) centroid += xs[i];
        centroid /= n;

        const Eigen::VectorXd reflected = centroid + alpha * (centroid - xs[worst]);
        const double f_reflected = eval(reflected);
        if (f_reflected < fs[best]) {
            const Eigen::VectorXd expanded = centroid + gamma * (reflected - centroid);
            const double f_expanded = eval(expanded);
            if (f_expanded < f_reflected) {
                xs[worst] = expanded;
                fs[worst] = f_expanded;
            } else {
                xs[worst] = reflected;
                fs[worst] = f_reflected;
            }
        } else if (f_reflected < fs[second_worst]) {
            xs[worst] = reflected;
            fs[worst] = f_reflected;
        } else {
            const Eigen::VectorXd contracted = centroid + rho * (xs[worst] - centroid);
            const double f_contracted = eval(contracted);
            if (f_contracted < fs[worst]) {
                xs[worst] = contracted;
                fs[worst] = f_contracted;
            } else {
                for (int i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    xs[i] = xs[best] + shrink * (xs[i] - xs[best]);
                    fs[i] = eval(xs[i]);
                }
            }
        }
    }

    const int best = static_cast<int>(std::min_element(fs.begin(), fs.end()) - fs.begin());
    result.x = xs[best];
    result.value = fs[best];
    result.evaluations = evals;
    return result;
}

}  // namespace unfold
