#ifndef UNFOLD_RNG_HPP_
#define UNFOLD_RNG_HPP_

#include <cstdint>
#include <random>

namespace unfold {

// All randomness flows from a single root seed. Substreams are derived by
// hashing (seed, tag, index...) chains with splitmix64, so replicates get
// independent streams whose identity does not depend on execution order or
// thread count. Distribution sampling is hand-rolled on top of raw 64-bit
// draws: the std::* distributions are implementation-defined and would break
// byte-identical reproducibility across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Hierarchical stream key: child(tag) derives an independent sub-key.
struct RngKey {
    std::uint64_t state = 0;

    RngKey child(std::uint64_t tag) const { return RngKey{splitmix64(state ^ splitmix64(tag))}; }
};

// Fixed tags keeping substream derivations collision-free across call sites.
namespace rng_tag {
constexpr std::uint64_t point_count = 1;
constexpr std::uint64_t points = 2;
constexpr std::uint64_t thinning = 3;
constexpr std::uint64_t smearing = 4;
constexpr std::uint64_t split = 5;
constexpr std::uint64_t chain = 6;
constexpr std::uint64_t mcem_iter = 7;
constexpr std::uint64_t outer_boot = 8;
constexpr std::uint64_t bc_iter = 9;
constexpr std::uint64_t bc_inner = 10;
constexpr std::uint64_t refit = 11;
constexpr std::uint64_t replicate = 12;
constexpr std::uint64_t observed_fit = 13;
constexpr std::uint64_t reference = 14;
}  // namespace rng_tag

/// Deterministic random stream (mt19937_64 core, portable samplers).
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : engine_(splitmix64(seed ^ 0x853c49e6748fea9bULL)) {}
    explicit RngStream(RngKey key) : RngStream(key.state) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0,1], safe as a log() argument.
    double uniform_pos() { return 1.0 - uniform(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal();
    double exponential(double rate);
    long long poisson(double mean);
    long long binomial(long long n, double prob);

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace unfold

#endif  // UNFOLD_RNG_HPP_
