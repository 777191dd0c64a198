#pragma once

#include <complex>
#include <span>
#include <vector>

namespace dmasim::dsp {

using cvec = std::vector<std::complex<double>>;

/// In-place unitary radix-2 FFT (scale 1/sqrt(n) both directions).
/// Size must be a power of two.
void fft(std::span<std::complex<double>> x, bool inverse);

cvec fft_copy(std::span<const std::complex<double>> x, bool inverse);

/// Full linear convolution; output length a.size() + b.size() - 1.
cvec convolve(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b);

double mean_power(std::span<const std::complex<double>> x);

}  // namespace dmasim::dsp
