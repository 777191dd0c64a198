#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dmasim/oracle.hpp"
#include "dmasim/rng.hpp"

namespace dmasim {

enum class CostKind {
  BeamAndNull,  // undesired gain minus desired gain; drives beam + null steering
  BeamOnly,     // negative desired gain; ignores the undesired channel
};

struct CostSpec {
  CostKind kind = CostKind::BeamAndNull;
  double f_op_hz = 0.0;
};

/// Cost in dB; lower is better for both kinds.
double cost(const ChannelPair& channels, CostKind kind);
double cost(const ChannelOracle& oracle, const DmaConfiguration& config, const CostSpec& spec);

struct ChannelSample {
  DmaConfiguration config;
  ChannelPair channels;
};

/// k i.i.d. fair-coin configurations evaluated on the oracle at f_op.
std::vector<ChannelSample> draw_samples(const ChannelOracle& oracle, double f_op_hz, int k,
                                        RngStream& rng);

/// Index of the lowest-cost sample.
std::size_t best_of_samples(std::span<const ChannelSample> samples, CostKind kind);

/// Random search: evaluates k uniform configurations, returns the argmin.
std::pair<DmaConfiguration, double> random_search(const ChannelOracle& oracle,
                                                  const CostSpec& spec, int k, RngStream& rng);

struct OptimizationResult {
  DmaConfiguration config;
  double cost_db = 0.0;
  double init_cost_db = 0.0;
  // (oracle evaluation index, cost after the accepted move); first entry is
  // the initial cost. Non-increasing by construction.
  std::vector<std::pair<std::int64_t, double>> trace;
  std::int64_t oracle_calls = 0;
  int sweeps_executed = 0;
};

/// Greedy bit-flip descent: visits elements in index order, flips a bit iff
/// that strictly reduces the cost, and stops after max_sweeps sweeps or after
/// the first sweep without any accepted flip. Pass known_init_cost when the
/// initial configuration's cost has already been measured.
OptimizationResult coordinate_descent(const ChannelOracle& oracle, const CostSpec& spec,
                                      const DmaConfiguration& init, int max_sweeps = 5,
                                      std::optional<double> known_init_cost = std::nullopt);

struct SurrogateDiagnostics {
  double residual_rms_des = 0.0;
  double residual_rms_und = 0.0;
  double target_rms_des = 0.0;
  double target_rms_und = 0.0;
  int sample_count = 0;
  std::vector<int> degenerate_bits;  // bits constant across the fit samples
};

/// Coupling-unaware affine map from configuration bits to complex channels,
/// fitted by least squares. Valid only at its fit frequency.
class LinearSurrogate {
 public:
  LinearSurrogate() = default;
  LinearSurrogate(Eigen::VectorXcd beta_des, Eigen::VectorXcd beta_und, double f_op_hz,
                  SurrogateDiagnostics diag);

  ChannelPair predict(const DmaConfiguration& config) const;
  int n_atoms() const { return static_cast<int>(beta_des_.size()) - 1; }
  double f_op_hz() const { return f_op_hz_; }
  const SurrogateDiagnostics& diagnostics() const { return diag_; }

  cplx intercept_des() const { return beta_des_(0); }
  cplx intercept_und() const { return beta_und_(0); }
  cplx coefficient_des(int bit) const { return beta_des_(bit + 1); }
  cplx coefficient_und(int bit) const { return beta_und_(bit + 1); }

 private:
  Eigen::VectorXcd beta_des_;  // [intercept, per-bit coefficients]
  Eigen::VectorXcd beta_und_;
  double f_op_hz_ = 0.0;
  SurrogateDiagnostics diag_;
};

/// Least-squares fit of both channels as affine functions of the bits.
/// Requires at least n_atoms + 1 samples and non-identical configurations;
/// bits constant across the samples get zero coefficients and are flagged.
LinearSurrogate fit_linear_surrogate(std::span<const ChannelSample> samples, double f_op_hz);

/// Oracle view of a fitted surrogate; rejects frequencies other than the fit
/// frequency (the affine map has no frequency dependence to offer).
class SurrogateOracle final : public ChannelOracle {
 public:
  SurrogateOracle(const LinearSurrogate& surrogate, FrequencyBand band)
      : surrogate_(&surrogate), band_(band) {}

  ChannelPair eval(const DmaConfiguration& config, double f_hz) const override;
  int n_atoms() const override { return surrogate_->n_atoms(); }
  FrequencyBand band() const override { return band_; }

 private:
  const LinearSurrogate* surrogate_;
  FrequencyBand band_;
};

/// Model-based benchmark: fits the affine surrogate to pre-measured samples,
/// descends the surrogate-predicted cost from `init`, and reports the final
/// configuration's true oracle cost. The trace and init_cost are those of the
/// surrogate descent; oracle_calls counts true-oracle evaluations only
/// (the fit samples plus the single final verification).
OptimizationResult optimize_lin_from_samples(const ChannelOracle& oracle, const CostSpec& spec,
                                             std::span<const ChannelSample> samples,
                                             const DmaConfiguration& init, int max_sweeps = 5);

/// Convenience wrapper: draws k samples, uses the lowest-cost one as init.
OptimizationResult optimize_lin(const ChannelOracle& oracle, const CostSpec& spec, RngStream& rng,
                                int k = 500, int max_sweeps = 5);

/// i.i.d. fair-coin configuration.
DmaConfiguration rand_config(int n, RngStream& rng);

}  // namespace dmasim
