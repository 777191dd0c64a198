#include "dmasim/dsp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dmasim::dsp {

void fft(std::span<std::complex<double>> x, bool inverse) {
  const std::size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw std::invalid_argument("fft size must be a power of two");
  }
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) {
      j ^= bit;
    }
    j ^= bit;
    if (i < j) {
      std::swap(x[i], x[j]);
    }
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& v : x) {
    v *= scale;
  }
}

cvec fft_copy(std::span<const std::complex<double>> x, bool inverse) {
  cvec out(x.begin(), x.end());
  fft(out, inverse);
  return out;
}

cvec convolve(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("convolve: empty input");
  }
  cvec out(a.size() + b.size() - 1, {0.0, 0.0});
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::complex<double> ai = a[i];
    for (std::size_t j = 0; j < b.size(); ++j) {
      out[i + j] += ai * b[j];
    }
  }
  return out;
}

double mean_power(std::span<const std::complex<double>> x) {
  if (x.empty()) {
    return 0.0;
  }
  double acc = 0.0;
  for (const auto& v : x) {
    acc += std::norm(v);
  }
  return acc / static_cast<double>(x.size());
}

}  // namespace dmasim::dsp
