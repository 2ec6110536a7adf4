#ifndef MSGMRF_RNG_HPP
#define MSGMRF_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace msgmrf {

/// Scope tags for counter-based seed derivation. Each sampler step draws
/// from a stream identified by (chain seed, iteration, tag, block id), so
/// results cannot depend on how blocks are scheduled across workers.
enum class StepTag : std::uint32_t {
  init_theta = 1,
  init_eta = 2,
  theta0 = 3,
  theta_block = 4,
  eta_star = 5,
  tile_update = 6,
  theta_eps = 7,
  experiment = 8,
};

inline std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t chain_seed,
                                 std::uint64_t iteration, StepTag tag,
                                 std::uint64_t block) {
  std::uint64_t s = mix64(chain_seed);
  s = mix64(s ^ iteration);
  s = mix64(s ^ static_cast<std::uint64_t>(tag));
  s = mix64(s ^ block);
  return s;
}

/// Deterministic random stream. Gaussian draws use Box-Muller on explicit
/// 53-bit uniforms so the sequence is fixed by the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform draw on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
    return z;
  }

  std::uint64_t next_raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace msgmrf

#endif
