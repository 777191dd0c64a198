#include "dmasim/ofdm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "dmasim/errors.hpp"

namespace dmasim::ofdm {

namespace {

constexpr double kErasureThreshold = 1e-12;
constexpr double kSyncRatioThreshold = 4.0;
constexpr double kCpEnergyWarnFraction = 0.01;

}  // namespace

void OfdmParams::validate() const {
  if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0) {
    throw std::invalid_argument("n_fft must be a power of two");
  }
  if (n_active < 2 || n_active % 2 != 0 || n_active > n_fft - 2) {
    throw std::invalid_argument("n_active must be even and leave the DC bin free");
  }
  if (cp_len < 1 || cp_len >= n_fft) {
    throw std::invalid_argument("cp_len must be in [1, n_fft)");
  }
  if (data_symbols < 1 || preamble_symbols != 1) {
    throw std::invalid_argument("need >= 1 data symbols and exactly one preamble symbol");
  }
  if (bits_per_symbol != 2) {
    throw std::invalid_argument("only QPSK (2 bits per symbol) is supported");
  }
  if (!(sample_rate_hz > 0.0) || !(bandwidth_hz > 0.0)) {
    throw std::invalid_argument("sample_rate and bandwidth must be positive");
  }
}

std::vector<int> OfdmParams::active_subcarriers() const {
  const int half = n_active / 2;
  std::vector<int> subs;
  subs.reserve(static_cast<std::size_t>(n_active));
  for (int k = -half; k <= -1; ++k) {
    subs.push_back(k);
  }
  for (int k = 1; k <= half; ++k) {
    subs.push_back(k);
  }
  return subs;
}

double OfdmParams::bin_frequency_hz(int bin) const {
  const int signed_bin = bin < n_fft / 2 ? bin : bin - n_fft;
  return signed_bin * subcarrier_spacing_hz();
}

std::complex<double> qpsk_map(int b0, int b1) {
  const double s = std::numbers::sqrt2 / 2.0;
  return {s * (1.0 - 2.0 * b0), s * (1.0 - 2.0 * b1)};
}

void qpsk_demap(std::complex<double> z, std::uint8_t& b0, std::uint8_t& b1) {
  b0 = z.real() < 0.0 ? 1 : 0;
  b1 = z.imag() < 0.0 ? 1 : 0;
}

namespace {

/// Frequency-domain preamble on the active carriers (logical order).
cvec preamble_points(const OfdmParams& params, std::uint64_t preamble_seed) {
  RngStream rng(derive_seed(preamble_seed, "ofdm/preamble"));
  cvec points(static_cast<std::size_t>(params.n_active));
  for (auto& p : points) {
    p = qpsk_map(rng.bit(), rng.bit());
  }
  return points;
}

/// One OFDM symbol (CP + body) from its frequency-domain active values.
void append_symbol(cvec& out, const OfdmParams& params, const std::vector<int>& subs,
                   const cvec& points) {
  cvec freq(static_cast<std::size_t>(params.n_fft), {0.0, 0.0});
  for (std::size_t a = 0; a < subs.size(); ++a) {
    freq[static_cast<std::size_t>(params.bin_of_subcarrier(subs[a]))] = points[a];
  }
  dsp::fft(freq, /*inverse=*/true);
  for (int i = params.n_fft - params.cp_len; i < params.n_fft; ++i) {
    out.push_back(freq[static_cast<std::size_t>(i)]);
  }
  out.insert(out.end(), freq.begin(), freq.end());
}

}  // namespace

cvec preamble_body(const OfdmParams& params, std::uint64_t preamble_seed) {
  params.validate();
  const auto subs = params.active_subcarriers();
  const cvec points = preamble_points(params, preamble_seed);
  cvec symbol;
  symbol.reserve(static_cast<std::size_t>(params.symbol_len()));
  append_symbol(symbol, params, subs, points);
  return cvec(symbol.begin() + params.cp_len, symbol.end());
}

Frame modulate_frame(const std::vector<std::uint8_t>& bits, const OfdmParams& params,
                     std::uint64_t preamble_seed) {
  params.validate();
  if (static_cast<int>(bits.size()) != params.bits_per_frame()) {
    throw std::invalid_argument("payload must have exactly " +
                                std::to_string(params.bits_per_frame()) + " bits");
  }
  for (auto b : bits) {
    if (b > 1) {
      throw std::invalid_argument("payload entries must be 0 or 1");
    }
  }

  const auto subs = params.active_subcarriers();
  Frame frame;
  frame.bits = bits;
  frame.preamble_seed = preamble_seed;
  frame.tx_samples.reserve(static_cast<std::size_t>(params.frame_len()));

  append_symbol(frame.tx_samples, params, subs, preamble_points(params, preamble_seed));

  cvec points(subs.size());
  std::size_t bit_idx = 0;
  for (int s = 0; s < params.data_symbols; ++s) {
    for (std::size_t a = 0; a < subs.size(); ++a) {
      const int b0 = bits[bit_idx++];
      const int b1 = bits[bit_idx++];
      points[a] = qpsk_map(b0, b1);
    }
    append_symbol(frame.tx_samples, params, subs, points);
  }
  return frame;
}

LinkCondition LinkCondition::flat(const OfdmParams& params, std::complex<double> h) {
  LinkCondition cond;
  cond.h_des_k.assign(static_cast<std::size_t>(params.n_fft), h);
  cond.jam_offset_hz = 2.5 * params.subcarrier_spacing_hz();
  return cond;
}

LinkOutput apply_link(const Frame& frame, const LinkCondition& cond, const OfdmParams& params,
                      RngStream& rng) {
  params.validate();
  if (static_cast<int>(cond.h_des_k.size()) != params.n_fft) {
    throw std::invalid_argument("h_des_k must have one entry per FFT bin");
  }
  if (cond.sample_delay < 0) {
    throw std::invalid_argument("sample_delay must be >= 0");
  }
  if (static_cast<int>(frame.tx_samples.size()) != params.frame_len()) {
    throw std::invalid_argument("frame sample count does not match the numerology");
  }
  if (std::isnan(cond.snr_db)) {
    throw std::invalid_argument("snr_db must not be NaN");
  }

  // Impulse response: plain inverse DFT of the per-bin channel, truncated to
  // the cyclic prefix length. The non-unitary scaling makes an all-ones
  // channel an exact identity.
  cvec g_full = dsp::fft_copy(cond.h_des_k, /*inverse=*/true);
  const double unit = 1.0 / std::sqrt(static_cast<double>(params.n_fft));
  for (auto& v : g_full) {
    v *= unit;  // combined 1/n scaling
  }
  double energy_full = 0.0;
  for (const auto& v : g_full) {
    energy_full += std::norm(v);
  }
  cvec g(g_full.begin(), g_full.begin() + params.cp_len);
  double energy_kept = 0.0;
  for (const auto& v : g) {
    energy_kept += std::norm(v);
  }

  LinkOutput out;
  out.truncated_energy_fraction =
      energy_full > 0.0 ? std::max(0.0, 1.0 - energy_kept / energy_full) : 0.0;
  out.cp_insufficiency_warning = out.truncated_energy_fraction > kCpEnergyWarnFraction;

  const cvec through = dsp::convolve(frame.tx_samples, g);
  const std::size_t total = static_cast<std::size_t>(cond.sample_delay) + through.size();
  out.samples.assign(total, {0.0, 0.0});
  std::copy(through.begin(), through.end(),
            out.samples.begin() + cond.sample_delay);

  // Jammer tone: port-level power jam_rel_db relative to the transmitted
  // signal, reaching the receiver through the undesired channel. The received
  // jammer-to-signal ratio then equals jam_rel_db plus the gain difference of
  // the two channels.
  const double p_tx = dsp::mean_power(frame.tx_samples);
  if (cond.jam_rel_db != -kInf) {
    const double amp =
        std::sqrt(p_tx) * std::pow(10.0, cond.jam_rel_db / 20.0) * std::abs(cond.h_und_jam);
    if (amp > 0.0) {
      const std::complex<double> phase0 = rng.phase();
      const double step = 2.0 * std::numbers::pi * cond.jam_offset_hz / params.sample_rate_hz;
      for (std::size_t n = 0; n < total; ++n) {
        const double a = step * static_cast<double>(n);
        out.samples[n] += amp * phase0 * std::complex<double>(std::cos(a), std::sin(a));
      }
    }
  }

  if (cond.snr_db != kInf) {
    // Reference power over the frame span; the convolution tail is excluded
    // so configured SNRs are realized exactly.
    const double p_rx = dsp::mean_power(
        std::span<const std::complex<double>>(through.data(),
                                              static_cast<std::size_t>(params.frame_len())));
    const double sigma2 = p_rx * std::pow(10.0, -cond.snr_db / 10.0);
    const double sigma_component = std::sqrt(sigma2 / 2.0);
    for (auto& v : out.samples) {
      v += std::complex<double>(sigma_component * rng.normal(), sigma_component * rng.normal());
    }
  }
  return out;
}

int synchronize(std::span<const std::complex<double>> rx, const OfdmParams& params,
                std::uint64_t preamble_seed, int search_lo, int search_hi) {
  params.validate();
  if (static_cast<int>(rx.size()) < params.frame_len()) {
    throw std::invalid_argument("rx shorter than one frame");
  }
  const cvec body = preamble_body(params, preamble_seed);
  const int n_body = static_cast<int>(body.size());
  const int max_start = static_cast<int>(rx.size()) - n_body;
  if (search_hi < 0) {
    search_hi = max_start;
  }
  search_lo = std::clamp(search_lo, 0, max_start);
  search_hi = std::clamp(search_hi, search_lo, max_start);

  std::vector<double> mags;
  mags.reserve(static_cast<std::size_t>(search_hi - search_lo + 1));
  int best = search_lo;
  double best_mag = -1.0;
  for (int d = search_lo; d <= search_hi; ++d) {
    std::complex<double> acc{0.0, 0.0};
    for (int n = 0; n < n_body; ++n) {
      acc += std::conj(body[static_cast<std::size_t>(n)]) * rx[static_cast<std::size_t>(d + n)];
    }
    const double mag = std::abs(acc);
    mags.push_back(mag);
    if (mag > best_mag) {
      best_mag = mag;
      best = d;
    }
  }

  std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
  const double median = mags[mags.size() / 2];
  const double ratio = median > 0.0 ? best_mag / median : kInf;
  if (!(ratio >= kSyncRatioThreshold)) {
    std::ostringstream oss;
    oss << "synchronization failed: correlation peak-to-median " << ratio << " below "
        << kSyncRatioThreshold;
    throw SyncError(oss.str(), ratio);
  }
  return best - params.cp_len;
}

DemodResult demodulate(std::span<const std::complex<double>> rx, int frame_start,
                       const OfdmParams& params, std::uint64_t preamble_seed,
                       const cvec* genie_channel) {
  params.validate();
  if (frame_start < 0 ||
      frame_start + params.frame_len() > static_cast<int>(rx.size())) {
    throw std::invalid_argument("frame does not fit the received samples at this offset");
  }
  if (genie_channel != nullptr && static_cast<int>(genie_channel->size()) != params.n_fft) {
    throw std::invalid_argument("genie channel must have one entry per FFT bin");
  }

  const auto subs = params.active_subcarriers();
  const std::size_t n_active = subs.size();

  auto symbol_bins = [&](int symbol_index) {
    cvec bins(rx.begin() + frame_start + symbol_index * params.symbol_len() + params.cp_len,
              rx.begin() + frame_start + symbol_index * params.symbol_len() + params.cp_len +
                  params.n_fft);
    dsp::fft(bins, /*inverse=*/false);
    return bins;
  };

  DemodResult out;
  out.estimate.subcarriers.assign(subs.begin(), subs.end());
  out.estimate.h.resize(n_active);

  // Least-squares channel estimate from the known preamble symbol, unless a
  // genie channel was supplied.
  const cvec pre_bins = symbol_bins(0);
  const cvec pre_points = preamble_points(params, preamble_seed);
  std::vector<bool> erased(n_active, false);
  for (std::size_t a = 0; a < n_active; ++a) {
    const auto bin = static_cast<std::size_t>(params.bin_of_subcarrier(subs[a]));
    out.estimate.h[a] =
        genie_channel != nullptr ? (*genie_channel)[bin] : pre_bins[bin] / pre_points[a];
    if (std::abs(out.estimate.h[a]) < kErasureThreshold) {
      erased[a] = true;
      out.erased_subcarriers.push_back(subs[a]);
    }
  }

  out.bits.reserve(static_cast<std::size_t>(params.bits_per_frame()));
  out.equalized.resize(static_cast<std::size_t>(params.data_symbols));
  for (int s = 0; s < params.data_symbols; ++s) {
    const cvec bins = symbol_bins(s + 1);
    auto& eq = out.equalized[static_cast<std::size_t>(s)];
    eq.resize(n_active);
    for (std::size_t a = 0; a < n_active; ++a) {
      if (erased[a]) {
        // Dead subcarrier: decide its bits from a seeded stream so reruns
        // reproduce the exact same (chance-level) decisions.
        std::ostringstream label;
        label << "ofdm/erasure/" << s << '/' << subs[a];
        RngStream er(derive_seed(preamble_seed, label.str()));
        eq[a] = {0.0, 0.0};
        out.bits.push_back(static_cast<std::uint8_t>(er.bit()));
        out.bits.push_back(static_cast<std::uint8_t>(er.bit()));
        continue;
      }
      const auto bin = static_cast<std::size_t>(params.bin_of_subcarrier(subs[a]));
      const std::complex<double> z = bins[bin] / out.estimate.h[a];  // zero forcing
      eq[a] = z;
      std::uint8_t b0 = 0;
      std::uint8_t b1 = 0;
      qpsk_demap(z, b0, b1);
      out.bits.push_back(b0);
      out.bits.push_back(b1);
    }
  }
  return out;
}

LinkRunResult run_link(std::int64_t bits_target, const OfdmParams& params,
                       const LinkCondition& cond, RngStream& rng, std::uint64_t preamble_seed,
                       int constellation_frames) {
  params.validate();
  if (bits_target < 1) {
    throw std::invalid_argument("bits_target must be >= 1");
  }
  const int bits_per_frame = params.bits_per_frame();
  const auto n_frames =
      static_cast<int>((bits_target + bits_per_frame - 1) / bits_per_frame);
  const auto subs = params.active_subcarriers();

  LinkRunResult out;
  out.report.bits_total = static_cast<std::int64_t>(n_frames) * bits_per_frame;

  std::vector<std::uint8_t> payload(static_cast<std::size_t>(bits_per_frame));
  for (int f = 0; f < n_frames; ++f) {
    for (auto& b : payload) {
      b = static_cast<std::uint8_t>(rng.bit());
    }
    const Frame frame = modulate_frame(payload, params, preamble_seed);
    const LinkOutput link = apply_link(frame, cond, params, rng);

    int offset = -1;
    try {
      offset = synchronize(link.samples, params, preamble_seed);
    } catch (const SyncError&) {
      offset = -1;
    }
    if (offset < 0 ||
        offset + params.frame_len() > static_cast<int>(link.samples.size())) {
      // Lost frame: every bit decided by a coin flip drawn from the stream.
      ++out.report.sync_failures;
      for (const auto b : payload) {
        if (b != static_cast<std::uint8_t>(rng.bit())) {
          ++out.report.bits_error;
        }
      }
      continue;
    }

    const DemodResult demod = demodulate(link.samples, offset, params, preamble_seed,
                                         cond.genie_csi ? &cond.h_des_k : nullptr);
    for (std::size_t i = 0; i < payload.size(); ++i) {
      if (payload[i] != demod.bits[i]) {
        ++out.report.bits_error;
      }
    }
    if (f < constellation_frames) {
      for (int s = 0; s < params.data_symbols; ++s) {
        const auto& eq = demod.equalized[static_cast<std::size_t>(s)];
        for (std::size_t a = 0; a < subs.size(); ++a) {
          out.constellation.push_back(
              {f, s, subs[a], eq[a].real(), eq[a].imag()});
        }
      }
    }
  }

  out.report.ber = static_cast<double>(out.report.bits_error) /
                   static_cast<double>(out.report.bits_total);
  out.report.statistically_valid = out.report.bits_error >= 100;
  return out;
}

void write_iq_f32(const std::filesystem::path& path, std::span<const std::complex<double>> x) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open IQ file for writing: " + path.string());
  }
  std::vector<float> buf;
  buf.reserve(2 * x.size());
  for (const auto& v : x) {
    buf.push_back(static_cast<float>(v.real()));
    buf.push_back(static_cast<float>(v.imag()));
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) {
    throw IoError("failed writing IQ file: " + path.string());
  }
}

}  // namespace dmasim::ofdm
