#include "unfold/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "unfold/csv.hpp"

namespace unfold {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_normal_cdf_ratio_term(double mean, double sd) {
    // log Phi(mean / sd), the [0,inf) truncation mass of the proposal.
    const double z = mean / sd;
    if (z > -37.0) return std::log(0.5 * std::erfc(-z / std::sqrt(2.0)));
    // Asymptotic tail expansion; only reached by extreme proposals.
    return -0.5 * z * z - std::log(-z) - 0.5 * std::log(2.0 * M_PI);
}

// State-dependent proposal for one coordinate, built from the Taylor
// expansion of the log full conditional at the expansion point.
struct Proposal {
    bool exponential = false;
    double mean = 0.0;   // Gaussian mean (trunc. to [0,inf)) when !exponential
    double sd = 1.0;     //
    double rate = 1.0;   // Exp rate when exponential
};

}  // namespace

void PosteriorModel::validate() const {
    if (data.n_bins() != response.n_bins())
        throw std::invalid_argument("PosteriorModel: data length does not match response rows");
    if (omega_a.size() != response.n_coeffs())
        throw std::invalid_argument("PosteriorModel: penalty size does not match response cols");
    if (!(delta > 0.0)) throw std::invalid_argument("PosteriorModel: delta must be > 0");
}

double log_likelihood(const PosteriorModel& model, const Eigen::VectorXd& beta) {
    if (beta.size() != model.n_coeffs())
        throw std::invalid_argument("log_likelihood: coefficient length mismatch");
    if ((beta.array() < 0.0).any())
        throw std::invalid_argument("log_likelihood: coefficients must be nonnegative");
    const Eigen::VectorXd mu = model.response.entries * beta;
    double ll = 0.0;
    for (int i = 0; i < model.n_bins(); ++i) {
        const double y = model.data.counts[i];
        if (y > 0.0) {
            if (mu[i] <= 0.0) return kNegInf;
            ll += y * std::log(mu[i]);
        }
        ll -= mu[i];
    }
    return ll;
}

double log_prior(const Eigen::VectorXd& beta, const PenaltyMatrix& omega_a, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("log_prior: delta must be > 0");
    if (beta.size() != omega_a.size())
        throw std::invalid_argument("log_prior: coefficient length mismatch");
    if ((beta.array() < 0.0).any())
        throw std::invalid_argument("log_prior: coefficients must be nonnegative");
    const double quad = beta.dot(omega_a.entries * beta);
    return 0.5 * omega_a.size() * std::log(delta) - delta * quad;
}

namespace {

/// One-coordinate view of the full conditional, maintained incrementally.
class ConditionalSampler {
  public:
    ConditionalSampler(const PosteriorModel& model, const Eigen::VectorXd& beta_init)
        : model_(model),
          K_(model.response.entries),
          y_(model.data.counts),
          omega_(model.omega_a.entries),
          delta_(model.delta),
          beta_(beta_init),
          mu_(K_ * beta_init),
          omega_beta_(omega_ * beta_init),
          col_sums_(K_.colwise().sum()) {}

    const Eigen::VectorXd& beta() const { return beta_; }

    // Log full conditional for coordinate k at value x, up to terms not
    // depending on x (mu is evaluated at the candidate).
    double log_conditional(int k, double x, const Eigen::VectorXd& mu_cand) const {
        double val = 0.0;
        for (int i = 0; i < y_.size(); ++i) {
            if (y_[i] > 0.0) {
                if (mu_cand[i] <= 0.0) return kNegInf;
                val += y_[i] * std::log(mu_cand[i]);
            }
        }
        val -= x * col_sums_[k];
        const double b = omega_beta_[k] - omega_(k, k) * beta_[k];
        val -= delta_ * (omega_(k, k) * x * x + 2.0 * b * x);
        return val;
    }

    Proposal make_proposal(int k, double x, const Eigen::VectorXd& mu_at_x) const {
        // Taylor expansion of the log full conditional at x.
        double grad = -col_sums_[k];
        double curv = 0.0;
        for (int i = 0; i < y_.size(); ++i) {
            if (y_[i] <= 0.0) continue;
            const double kik = K_(i, k);
            if (kik == 0.0) continue;
            const double mu = std::max(mu_at_x[i], 1e-300);
            grad += y_[i] * kik / mu;
            curv -= y_[i] * kik * kik / (mu * mu);
        }
        const double b = omega_beta_[k] - omega_(k, k) * beta_[k];
        grad -= 2.0 * delta_ * (omega_(k, k) * x + b);
        curv -= 2.0 * delta_ * omega_(k, k);
        // The prior curvature floor keeps the proposal proper when the
        // likelihood term vanishes.
        if (curv >= -1e-12) curv = std::min(curv, -2.0 * delta_ * omega_(k, k));

        const double var = -1.0 / curv;
        const double mean = x + grad * var;
        Proposal prop;
        if (mean >= 0.0) {
            prop.exponential = false;
            prop.mean = mean;
            prop.sd = std::sqrt(var);
        } else {
            // Match the Gaussian's log-slope at zero: rate = -mean / var.
            prop.exponential = true;
            prop.rate = -mean / var;
        }
        return prop;
    }

    static double sample_from(const Proposal& prop, RngStream& rng) {
        if (prop.exponential) return rng.exponential(prop.rate);
        while (true) {
            const double x = prop.mean + prop.sd * rng.normal();
            if (x >= 0.0) return x;
        }
    }

    static double log_density(const Proposal& prop, double x) {
        if (prop.exponential) return std::log(prop.rate) - prop.rate * x;
        const double z = (x - prop.mean) / prop.sd;
        return -0.5 * z * z - std::log(prop.sd) - 0.5 * std::log(2.0 * M_PI) -
               log_normal_cdf_ratio_term(prop.mean, prop.sd);
    }

    // Metropolis-Hastings update of coordinate k; returns acceptance.
    bool update(int k, RngStream& rng) {
        const double x0 = beta_[k];
        const Proposal forward = make_proposal(k, x0, mu_);
        const double x1 = sample_from(forward, rng);

        mu_cand_ = mu_ + K_.col(k) * (x1 - x0);
        const double log_post_1 = log_conditional(k, x1, mu_cand_);
        if (log_post_1 == kNegInf) return false;
        const double log_post_0 = log_conditional(k, x0, mu_);

        const Proposal reverse = make_proposal(k, x1, mu_cand_);
        double log_ratio = log_post_1 - log_post_0 + log_density(reverse, x0) -
                           log_density(forward, x1);
        if (log_post_0 == kNegInf) log_ratio = std::numeric_limits<double>::infinity();

        if (log_ratio >= 0.0 || rng.uniform_pos() < std::exp(log_ratio)) {
            beta_[k] = x1;
            mu_.swap(mu_cand_);
            omega_beta_ += omega_.col(k) * (x1 - x0);
            return true;
        }
        return false;
    }

  private:
    const PosteriorModel& model_;
    const Eigen::MatrixXd& K_;
    const Eigen::VectorXd& y_;
    const Eigen::MatrixXd& omega_;
    double delta_;
    Eigen::VectorXd beta_;
    Eigen::VectorXd mu_;
    Eigen::VectorXd omega_beta_;
    Eigen::VectorXd col_sums_;
    Eigen::VectorXd mu_cand_;
};

}  // namespace

PosteriorChain sample_posterior(const PosteriorModel& model, int n_samples,
                                const Eigen::VectorXd& beta_init, int burn_in,
                                std::uint64_t rng_seed) {
    model.validate();
    if (n_samples < 1) throw std::invalid_argument("sample_posterior: need n_samples >= 1");
    if (burn_in < 0) throw std::invalid_argument("sample_posterior: burn_in must be >= 0");
    if (beta_init.size() != model.n_coeffs())
        throw std::invalid_argument("sample_posterior: beta_init length mismatch");
    if ((beta_init.array() < 0.0).any())
        throw std::invalid_argument("sample_posterior: beta_init must be nonnegative");

    const int p = model.n_coeffs();
    ConditionalSampler sampler(model, beta_init);
    RngStream rng(RngKey{rng_seed}.child(rng_tag::chain));

    PosteriorChain chain;
    chain.draws.resize(n_samples, p);
    chain.acceptance_rates = Eigen::VectorXd::Zero(p);
    chain.seed = rng_seed;
    chain.burn_in_len = burn_in;

    const int total_sweeps = burn_in + n_samples;
    for (int sweep = 0; sweep < total_sweeps; ++sweep) {
        for (int k = 0; k < p; ++k)
            if (sampler.update(k, rng)) chain.acceptance_rates[k] += 1.0;
        if (sweep >= burn_in) chain.draws.row(sweep - burn_in) = sampler.beta().transpose();
    }
    chain.acceptance_rates /= static_cast<double>(total_sweeps);
    return chain;
}

Eigen::VectorXd posterior_mean(const PosteriorChain& chain) {
    if (chain.size() < 1) throw std::invalid_argument("posterior_mean: empty chain");
    return chain.draws.colwise().mean().transpose();
}

Eigen::VectorXd effective_sample_size(const PosteriorChain& chain) {
    const int S = chain.size();
    const int p = chain.n_coeffs();
    Eigen::VectorXd ess(p);
    for (int k = 0; k < p; ++k) {
        const Eigen::VectorXd x = chain.draws.col(k);
        const double mean = x.mean();
        const Eigen::VectorXd c = x.array() - mean;
        const double var = c.squaredNorm() / S;
        if (var <= 0.0) {
            ess[k] = static_cast<double>(S);
            continue;
        }
        // Geyer initial positive sequence over lag pairs.
        double tau = 1.0;
        for (int lag = 1; lag + 1 < S; lag += 2) {
            double g0 = 0.0, g1 = 0.0;
            for (int t = 0; t + lag < S; ++t) g0 += c[t] * c[t + lag];
            for (int t = 0; t + lag + 1 < S; ++t) g1 += c[t] * c[t + lag + 1];
            g0 /= S * var;
            g1 /= S * var;
            const double pair = g0 + g1;
            if (pair <= 0.0) break;
            tau += 2.0 * pair;
        }
        ess[k] = S / tau;
    }
    return ess;
}

void write_chain_csv(const std::string& path, const PosteriorChain& chain) {
    std::string header = "draw_index";
    for (int j = 0; j < chain.n_coeffs(); ++j) header += ",beta_" + std::to_string(j + 1);
    CsvWriter csv(path, header);
    std::vector<double> row(chain.n_coeffs() + 1);
    for (int s = 0; s < chain.size(); ++s) {
        row[0] = s + 1;
        for (int j = 0; j < chain.n_coeffs(); ++j) row[j + 1] = chain.draws(s, j);
        csv.row(row);
    }
}

}  // namespace unfold
