#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "oracles.hpp"
#include "unfold/kernels.hpp"

using namespace unfold;

TEST_CASE("gaussian kernel is the normal density in t - s") {
    const SmearingKernel kernel = SmearingKernel::gaussian(1.0);
    CHECK(kernel.density(3.0, 3.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
    CHECK(kernel.density(1.0, 0.0) ==
          doctest::Approx(0.3989422804014327 * std::exp(-0.5)).epsilon(1e-12));
    CHECK(kernel.density(5.0, -5.0) == doctest::Approx(0.0));
    CHECK(kernel.is_translation());
    CHECK_THROWS_AS(SmearingKernel::gaussian(0.0), std::invalid_argument);
    CHECK_THROWS_AS(SmearingKernel::gaussian(-1.0), std::invalid_argument);
}

TEST_CASE("crystal ball branches agree at the transition point") {
    const double delta_m = 0.56, sigma = 1.01, alpha = 1.95, gamma = 1.40;
    const SmearingKernel kernel = SmearingKernel::crystal_ball(delta_m, sigma, alpha, gamma);
    // Branch point: (m - delta_m)/sigma = -alpha.
    const double m_star = delta_m - alpha * sigma;
    const double at_branch = kernel.density(m_star, 0.0);
    const double just_above = kernel.density(m_star + 1e-9, 0.0);
    const double just_below = kernel.density(m_star - 1e-9, 0.0);
    CHECK(just_above == doctest::Approx(at_branch).epsilon(1e-6));
    CHECK(just_below == doctest::Approx(at_branch).epsilon(1e-6));

    CHECK_THROWS_AS(SmearingKernel::crystal_ball(0.0, -1.0, 2.0, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(SmearingKernel::crystal_ball(0.0, 1.0, 0.0, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(SmearingKernel::crystal_ball(0.0, 1.0, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("crystal ball density integrates to one over the real line") {
    const double delta_m = 0.56, sigma = 1.01, alpha = 1.95, gamma = 1.40;
    const SmearingKernel kernel = SmearingKernel::crystal_ball(delta_m, sigma, alpha, gamma);
    // Adaptive quadrature over +-50 sigma; the slow power-law tail beyond
    // the left cutoff is integrated by the test's own antiderivative
    // (int u^-g du = u^(1-g)/(g-1)) since for gamma = 1.4 it still carries
    // about 1.5% of the mass.
    const double m_star = delta_m - alpha * sigma;
    const double cut = -50.0 * sigma;
    const auto density = [&](double m) { return kernel.density(m, 0.0); };
    const double numeric = oracles::adaptive_simpson(density, cut, m_star, 1e-9) +
                           oracles::adaptive_simpson(density, m_star, 50.0 * sigma, 1e-9);
    const double u_cut = gamma / alpha - alpha - (cut - delta_m) / sigma;
    const double density_at_cut = density(cut);
    // density(m) = c * u(m)^-gamma on the tail, so c = density(cut) * u_cut^gamma.
    const double tail = density_at_cut * std::pow(u_cut, gamma) * sigma *
                        std::pow(u_cut, 1.0 - gamma) / (gamma - 1.0);
    CHECK(numeric + tail == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(numeric + tail == doctest::Approx(1.0).epsilon(2e-6));
}

TEST_CASE("crystal ball tail is a power law with convex log-density") {
    const SmearingKernel kernel = SmearingKernel::crystal_ball(0.0, 1.0, 1.5, 1.7);
    const double h = 0.25;
    for (double t = -20.0; t < -3.0; t += 0.5) {
        const double l0 = std::log(kernel.density(t - h, 0.0));
        const double l1 = std::log(kernel.density(t, 0.0));
        const double l2 = std::log(kernel.density(t + h, 0.0));
        CHECK(l0 + l2 - 2.0 * l1 >= 0.0);
    }
}

TEST_CASE("crystal ball sampling matches the analytic branch masses") {
    const double alpha = 1.95, gamma = 1.40, sigma = 1.01, delta_m = 0.56;
    const SmearingKernel kernel = SmearingKernel::crystal_ball(delta_m, sigma, alpha, gamma);
    RngStream rng(5);
    const int n = 200000;
    int in_window = 0;
    double clamped_sum = 0.0;
    const double m_star = delta_m - alpha * sigma;
    for (int i = 0; i < n; ++i) {
        const double m = kernel.smear(0.0, rng);
        if (m >= -6.0 && m <= 2.0) ++in_window;
        clamped_sum += std::clamp(m, -10.0, 10.0);
    }
    // Window probability: the raw mean would diverge for gamma < 2, so the
    // checks use a bounded window and a clamped mean.
    const double window_mass = oracles::adaptive_simpson(
        [&](double m) { return kernel.density(m, 0.0); }, -6.0, m_star, 1e-10) +
        oracles::adaptive_simpson(
            [&](double m) { return kernel.density(m, 0.0); }, m_star, 2.0, 1e-10);
    const double window_se = std::sqrt(window_mass * (1.0 - window_mass) / n);
    CHECK(std::fabs(static_cast<double>(in_window) / n - window_mass) < 4.0 * window_se);

    double clamped_ref = oracles::adaptive_simpson(
        [&](double m) { return std::clamp(m, -10.0, 10.0) * kernel.density(m, 0.0); }, -10.0,
        10.0, 1e-9);
    // P(m < -10) from the power-law antiderivative, as in the
    // normalization test.
    const double u10 = gamma / alpha - alpha - (-10.0 - delta_m) / sigma;
    const double mass_below =
        kernel.density(-10.0, 0.0) * std::pow(u10, gamma) * sigma *
        std::pow(u10, 1.0 - gamma) / (gamma - 1.0);
    clamped_ref += -10.0 * mass_below;
    CHECK(clamped_sum / n == doctest::Approx(clamped_ref).epsilon(0.02));
}

TEST_CASE("efficiency values are validated") {
    CHECK(Efficiency()(0.3) == 1.0);
    CHECK(Efficiency(0.25)(1.0) == 0.25);
    CHECK_THROWS_AS(Efficiency(1.5), std::invalid_argument);
    Efficiency bad([](double) { return 2.0; });
    CHECK_THROWS_AS(bad(0.0), std::runtime_error);
}

TEST_CASE("tabulated kernels round-trip through CSV and interpolate bilinearly") {
    std::vector<double> t{0.0, 1.0, 2.0}, s{0.0, 1.0};
    std::vector<std::vector<double>> values{{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}};
    const SmearingKernel kernel = SmearingKernel::tabulated(t, s, values);
    CHECK(kernel.density(0.0, 0.0) == doctest::Approx(1.0));
    CHECK(kernel.density(2.0, 1.0) == doctest::Approx(6.0));
    CHECK(kernel.density(0.5, 0.5) == doctest::Approx(2.5));
    CHECK(kernel.density(-0.1, 0.5) == 0.0);

    const std::string path = "tabulated_kernel_test.csv";
    write_kernel_csv(path, kernel);
    const SmearingKernel reread = read_kernel_csv(path);
    CHECK(reread.density(0.5, 0.5) == doctest::Approx(2.5));
    CHECK(reread.density(1.7, 0.2) == doctest::Approx(kernel.density(1.7, 0.2)));
    std::remove(path.c_str());

    CHECK_THROWS_AS(SmearingKernel::tabulated({0.0}, {0.0, 1.0}, {{1.0, 1.0}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(SmearingKernel::tabulated({0.0, 1.0}, {0.0, 1.0}, {{1.0, -1.0}, {1.0, 1.0}}),
                    std::invalid_argument);
}
