#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <string_view>

namespace dmasim {

std::uint64_t splitmix64(std::uint64_t state);
std::uint64_t fnv1a64(std::string_view text);

/// Deterministic random stream. All conversions from raw 64-bit draws are
/// pinned here (never via std::*_distribution) so that seeded results are
/// bit-reproducible across standard libraries and build modes.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t u64() { return gen_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Log-uniform on [lo, hi]; requires lo > 0.
  double log_uniform(double lo, double hi);

  /// Fair coin.
  int bit() { return static_cast<int>(gen_() >> 63); }

  /// Unbiased uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal (Box-Muller; no rejection, so draw count is fixed).
  double normal();

  /// Circularly symmetric complex normal with unit total variance.
  std::complex<double> complex_normal();

  /// Unit phase factor exp(i*phi), phi uniform in [0, 2*pi).
  std::complex<double> phase();

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Seed for the task stream identified by (master_seed, label). Distinct
/// labels give independent streams, so results cannot depend on the order
/// or parallelism in which tasks execute.
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view label);
RngStream derive_stream(std::uint64_t master_seed, std::string_view label);

}  // namespace dmasim
