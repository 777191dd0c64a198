#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dmasim/dma_config.hpp"

namespace dmasim {

using cplx = std::complex<double>;

struct FrequencyBand {
  double lo_hz = 18.5e9;
  double hi_hz = 20.0e9;
  bool contains(double f_hz) const { return f_hz >= lo_hz && f_hz <= hi_hz; }
  double width_hz() const { return hi_hz - lo_hz; }
};

/// Single-pole element response: chi(f) = base + strength * gamma / (f_res - f - i*gamma).
struct Polarizability {
  cplx base{0.0, 0.0};
  cplx strength{0.0, 0.0};
  double f_res_hz = 0.0;
  double gamma_hz = 1.0;

  cplx eval(double f_hz) const {
    return base + strength * (gamma_hz / cplx(f_res_hz - f_hz, -gamma_hz));
  }
};

/// Propagation term: w(f) = amplitude * exp(-i * 2*pi * f * delay).
struct CouplingTerm {
  cplx amplitude{0.0, 0.0};
  double delay_s = 0.0;
  cplx eval(double f_hz) const;
};

/// Rank-one cavity mode. Contributes kappa/(f - f_res + i*kappa) * (u u^T)
/// to the inter-element coupling operator, with the diagonal removed so the
/// operator stays zero-diagonal (self-response lives in the polarizability).
struct CavityMode {
  double f_res_hz = 0.0;
  double kappa_hz = 1.0;
  std::vector<cplx> u;
};

/// Complex voltage-transfer coefficients toward the desired and undesired
/// transmitters at one frequency.
struct ChannelPair {
  cplx h_des{0.0, 0.0};
  cplx h_und{0.0, 0.0};
};

struct PhysicsParams {
  std::uint64_t seed = 0;
  int n_atoms = 96;
  double mc_strength = 2.0;   // eta; 0 gives the exactly affine (coupling-free) limit
  double coupling_scale = 1.0;  // rescale applied to W so the resolvent stays invertible
  FrequencyBand band;
  std::vector<Polarizability> chi_off;
  std::vector<Polarizability> chi_on;
  std::vector<CouplingTerm> feed_coupling;  // meta-atom -> receiver feed
  std::vector<CouplingTerm> tx_des;         // desired transmitter -> meta-atoms
  std::vector<CouplingTerm> tx_und;         // undesired transmitter -> meta-atoms
  cplx direct_des{0.0, 0.0};                // feed<->transmitter leakage bypassing the atoms
  cplx direct_und{0.0, 0.0};
  std::vector<CavityMode> modes;
  // Geometry bookkeeping (meters); not used in evaluation, kept for the model file.
  std::vector<std::array<double, 2>> atom_positions_m;
  std::array<double, 3> tx_des_position_m{0.0, 0.0, 0.0};
  std::array<double, 3> tx_und_position_m{0.0, 0.0, 0.0};

  void validate() const;  // throws ModelError on inconsistent shapes/values
};

/// Immutable coupled-scatterer ground truth. Maps (configuration, frequency)
/// to the pair of receive channels:
///
///   h_t(c, f) = d_t + w_r(f)^T X(c,f) (I - eta*W(f)*X(c,f))^{-1} w_t(f)
///
/// with X the diagonal of per-element state polarizabilities. Evaluation has
/// no side effects, so concurrent use is safe.
class PhysicsModel {
 public:
  static PhysicsModel from_params(PhysicsParams params);

  int n_atoms() const { return params_.n_atoms; }
  const FrequencyBand& band() const { return params_.band; }
  const PhysicsParams& params() const { return params_; }

  /// Effective coupling eta * coupling_scale * W(f); symmetric, zero diagonal.
  Eigen::MatrixXcd scaled_coupling(double f_hz) const;

  /// Per-element state polarizabilities chi_{c_i, i}(f).
  Eigen::VectorXcd state_polarizability(const DmaConfiguration& config, double f_hz) const;

  ChannelPair channel(const DmaConfiguration& config, double f_hz) const;

  /// Same as channel() but with the coupling matrix supplied by the caller,
  /// so loops over configurations at a fixed frequency can reuse it.
  ChannelPair channel_with_coupling(const DmaConfiguration& config, double f_hz,
                                    const Eigen::MatrixXcd& scaled_w) const;

 private:
  PhysicsParams params_;
};

struct BuildOptions {
  int n_atoms = 96;
  double mc_strength = 2.0;
  FrequencyBand band{};
  int n_modes = 120;
  double aperture_m = 0.15;
  double min_spacing_m = 0.005;
  // Transmitter placement; free parameters of the emulated scene.
  double tx_des_distance_m = 1.0;
  double tx_des_azimuth_deg = 18.0;
  double tx_und_distance_m = 4.0;
  double tx_und_azimuth_deg = -27.0;
};

/// Synthesizes a model deterministically from (seed, options): element
/// positions, Lorentzian state responses, cavity modes, and transmitter
/// steering terms, then rescales the coupling so the resolvent is safely
/// invertible on a probe set.
PhysicsModel build_model(std::uint64_t seed, const BuildOptions& opt);
PhysicsModel build_model(std::uint64_t seed, int n_atoms, double mc_strength, FrequencyBand band);

/// 20*log10(|h|); returns -infinity for h == 0.
double gain_db(cplx h);

struct SpectrumSweep {
  std::vector<double> frequencies_hz;
  std::vector<double> gains_des_db;
  std::vector<double> gains_und_db;
};

SpectrumSweep sweep(const PhysicsModel& model, const DmaConfiguration& config,
                    std::span<const double> grid_hz);

std::vector<double> linspace(double lo, double hi, int n);

// Model file I/O (JSON; schema documented in the README).
void save_model(const PhysicsModel& model, const std::filesystem::path& path);
PhysicsModel load_model(const std::filesystem::path& path);
std::string model_to_json(const PhysicsModel& model);
PhysicsModel model_from_json(const std::string& text);

}  // namespace dmasim
