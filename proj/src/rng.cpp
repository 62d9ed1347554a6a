#include "unfold/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace unfold {

double RngStream::normal() {
    // Box-Muller, caching the second variate.
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

double RngStream::exponential(double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be > 0");
    return -std::log(uniform_pos()) / rate;
}

long long RngStream::poisson(double mean) {
    if (mean < 0.0 || !std::isfinite(mean)) throw std::invalid_argument("poisson: invalid mean");
    if (mean == 0.0) return 0;
    if (mean < 30.0) {
        // Knuth product method.
        double limit = std::exp(-mean);
        double prod = uniform_pos();
        long long k = 0;
        while (prod > limit) {
            prod *= uniform_pos();
            ++k;
        }
        return k;
    }
    // Hormann's PTRS transformed rejection, valid for mean >= 10.
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    while (true) {
        double u = uniform() - 0.5;
        double v = uniform_pos();
        double us = 0.5 - std::fabs(u);
        double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<long long>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            k * loglam - mean - std::lgamma(k + 1.0)) {
            return static_cast<long long>(k);
        }
    }
}

long long RngStream::binomial(long long n, double prob) {
    if (n < 0 || prob < 0.0 || prob > 1.0)
        throw std::invalid_argument("binomial: invalid parameters");
    if (n == 0 || prob == 0.0) return 0;
    if (prob == 1.0) return n;
    // Exploit symmetry so the inversion loop runs on the smaller tail.
    if (prob > 0.5) return n - binomial(n, 1.0 - prob);
    if (n <= 64) {
        long long k = 0;
        for (long long i = 0; i < n; ++i)
            if (uniform() < prob) ++k;
        return k;
    }
    // Geometric-jump inversion; expected cost n*prob draws.
    const double log_q = std::log1p(-prob);
    long long k = 0;
    double pos = 0.0;
    while (true) {
        pos += std::floor(std::log(uniform_pos()) / log_q) + 1.0;
        if (pos > static_cast<double>(n)) return k;
        ++k;
    }
}

}  // namespace unfold
