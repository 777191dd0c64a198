#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "dmasim/dsp.hpp"
#include "dmasim/rng.hpp"

namespace dmasim::ofdm {

using dsp::cvec;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr std::uint64_t kDefaultPreambleSeed = 0x0fd3a5eedULL;

struct OfdmParams {
  int n_fft = 256;
  int n_active = 152;
  int cp_len = 32;
  int data_symbols = 20;
  int preamble_symbols = 1;
  int bits_per_symbol = 2;  // QPSK
  double sample_rate_hz = 15e6;
  double bandwidth_hz = 15e6;

  int symbol_len() const { return n_fft + cp_len; }
  int frame_len() const { return (preamble_symbols + data_symbols) * symbol_len(); }
  int bits_per_frame() const { return data_symbols * n_active * bits_per_symbol; }
  double subcarrier_spacing_hz() const { return bandwidth_hz / n_fft; }

  void validate() const;  // throws std::invalid_argument

  /// Active data carriers +-1..+-(n_active/2); DC and the band edges stay
  /// empty. Returned in logical order: -half..-1 then +1..+half.
  std::vector<int> active_subcarriers() const;

  /// FFT bin for a signed subcarrier index.
  int bin_of_subcarrier(int k) const { return k >= 0 ? k : n_fft + k; }

  /// Baseband frequency of an FFT bin (bins above n_fft/2 alias negative).
  double bin_frequency_hz(int bin) const;
};

struct Frame {
  std::vector<std::uint8_t> bits;  // payload, length bits_per_frame()
  cvec tx_samples;                 // length frame_len()
  std::uint64_t preamble_seed = kDefaultPreambleSeed;
};

/// Gray QPSK, unit energy: (b0, b1) -> ((1-2*b0) + i*(1-2*b1)) / sqrt(2).
std::complex<double> qpsk_map(int b0, int b1);
void qpsk_demap(std::complex<double> z, std::uint8_t& b0, std::uint8_t& b1);

Frame modulate_frame(const std::vector<std::uint8_t>& bits, const OfdmParams& params,
                     std::uint64_t preamble_seed = kDefaultPreambleSeed);

/// Time-domain preamble symbol body (no cyclic prefix), as the receiver
/// regenerates it for correlation.
cvec preamble_body(const OfdmParams& params, std::uint64_t preamble_seed);

struct LinkCondition {
  cvec h_des_k;                       // desired channel per FFT bin (length n_fft)
  std::complex<double> h_und_jam{0.0, 0.0};  // undesired channel at the jammer frequency
  double jam_rel_db = -kInf;          // jammer-to-signal power ratio at the ports
  double snr_db = kInf;               // receiver SNR w.r.t. received signal power
  int sample_delay = 0;
  double jam_offset_hz = 2.5 * 15e6 / 256;  // jammer offset from the carrier
  // Hand the receiver the true per-bin channel instead of the preamble
  // estimate. Off in the experiment harness; theory-comparison tests use it
  // to isolate decision statistics from estimation noise.
  bool genie_csi = false;

  static LinkCondition flat(const OfdmParams& params, std::complex<double> h = {1.0, 0.0});
};

struct LinkOutput {
  cvec samples;
  double truncated_energy_fraction = 0.0;  // channel energy lost to CP-length truncation
  bool cp_insufficiency_warning = false;   // set when that loss exceeds 1%
};

/// Passes a frame through the frequency-selective desired channel, adds the
/// jammer tone and receiver noise, and prepends the propagation delay.
LinkOutput apply_link(const Frame& frame, const LinkCondition& cond, const OfdmParams& params,
                      RngStream& rng);

/// Correlation synchronizer: position of the frame start (the first cyclic
/// prefix sample), from the peak of |cross-correlation| with the known
/// preamble body. Throws SyncError when the peak-to-median ratio is < 4.
int synchronize(std::span<const std::complex<double>> rx, const OfdmParams& params,
                std::uint64_t preamble_seed = kDefaultPreambleSeed, int search_lo = 0,
                int search_hi = -1);

struct ChannelEstimate {
  std::vector<int> subcarriers;  // signed indices, logical order
  cvec h;                        // least-squares estimate per active subcarrier
};

struct DemodResult {
  std::vector<std::uint8_t> bits;
  ChannelEstimate estimate;
  std::vector<cvec> equalized;  // [data symbol][active subcarrier], logical order
  std::vector<int> erased_subcarriers;  // |H| below threshold; bits decided pseudorandomly
};

/// When `genie_channel` (per FFT bin, length n_fft) is given, equalization
/// divides by the true channel instead of the preamble estimate.
DemodResult demodulate(std::span<const std::complex<double>> rx, int frame_start,
                       const OfdmParams& params,
                       std::uint64_t preamble_seed = kDefaultPreambleSeed,
                       const cvec* genie_channel = nullptr);

struct BerReport {
  std::int64_t bits_total = 0;
  std::int64_t bits_error = 0;
  double ber = 0.0;
  bool statistically_valid = false;  // at least 100 erroneous bits observed
  int sync_failures = 0;             // frames lost to sync, logged separately
};

struct ConstellationPoint {
  int frame = 0;
  int symbol = 0;      // data symbol index within the frame
  int subcarrier = 0;  // signed subcarrier index
  double i = 0.0;
  double q = 0.0;
};

struct LinkRunResult {
  BerReport report;
  std::vector<ConstellationPoint> constellation;
};

/// Transmits ceil(bits_target / bits_per_frame) frames with random payloads
/// through the link and accumulates bit errors. Frames that fail to
/// synchronize count as erased: their bits are decided pseudorandomly.
/// Equalized constellation points are kept for the first
/// `constellation_frames` frames.
LinkRunResult run_link(std::int64_t bits_target, const OfdmParams& params,
                       const LinkCondition& cond, RngStream& rng,
                       std::uint64_t preamble_seed = kDefaultPreambleSeed,
                       int constellation_frames = 1);

/// Interleaved float32 I/Q export (one pair per sample).
void write_iq_f32(const std::filesystem::path& path, std::span<const std::complex<double>> x);

}  // namespace dmasim::ofdm
