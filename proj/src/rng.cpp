#include "dmasim/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dmasim {

std::uint64_t splitmix64(std::uint64_t state) {
  std::uint64_t z = state + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double RngStream::log_uniform(double lo, double hi) {
  if (!(lo > 0.0) || hi < lo) {
    throw std::invalid_argument("log_uniform requires 0 < lo <= hi");
  }
  return lo * std::exp(uniform() * std::log(hi / lo));
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("below(0)");
  }
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller; clamp u1 away from zero so log() stays finite.
  double u1 = uniform();
  if (u1 < 1e-300) {
    u1 = 1e-300;
  }
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

std::complex<double> RngStream::complex_normal() {
  const double re = normal();
  const double im = normal();
  return {re * std::numbers::sqrt2 / 2.0, im * std::numbers::sqrt2 / 2.0};
}

std::complex<double> RngStream::phase() {
  const double a = 2.0 * std::numbers::pi * uniform();
  return {std::cos(a), std::sin(a)};
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view label) {
  return splitmix64(splitmix64(master_seed) ^ fnv1a64(label));
}

RngStream derive_stream(std::uint64_t master_seed, std::string_view label) {
  return RngStream(derive_seed(master_seed, label));
}

}  // namespace dmasim
