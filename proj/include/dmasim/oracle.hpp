#pragma once

#include <functional>
#include <unordered_map>

#include "dmasim/physics.hpp"

namespace dmasim {

/// Black-box channel oracle: evaluates the desired/undesired channels of a
/// configuration at a frequency. Stands in for the testbed's VNA mode.
class ChannelOracle {
 public:
  virtual ~ChannelOracle() = default;
  virtual ChannelPair eval(const DmaConfiguration& config, double f_hz) const = 0;
  virtual int n_atoms() const = 0;
  virtual FrequencyBand band() const = 0;
};

/// Physics-backed oracle with a per-frequency coupling-matrix cache. The
/// cache makes repeated fixed-frequency evaluation (the optimization loops)
/// cheap; instances are not thread safe, use one per thread.
class PhysicsOracle final : public ChannelOracle {
 public:
  explicit PhysicsOracle(const PhysicsModel& model) : model_(&model) {}

  ChannelPair eval(const DmaConfiguration& config, double f_hz) const override;
  int n_atoms() const override { return model_->n_atoms(); }
  FrequencyBand band() const override { return model_->band(); }

 private:
  const PhysicsModel* model_;
  mutable std::unordered_map<double, Eigen::MatrixXcd> coupling_cache_;
};

/// Oracle wrapping an arbitrary callable; used for toy cost landscapes in
/// tests and for driving the optimizer from Python.
class FunctionOracle final : public ChannelOracle {
 public:
  using Fn = std::function<ChannelPair(const DmaConfiguration&, double)>;

  FunctionOracle(Fn fn, int n_atoms, FrequencyBand band)
      : fn_(std::move(fn)), n_atoms_(n_atoms), band_(band) {}

  ChannelPair eval(const DmaConfiguration& config, double f_hz) const override {
    return fn_(config, f_hz);
  }
  int n_atoms() const override { return n_atoms_; }
  FrequencyBand band() const override { return band_; }

 private:
  Fn fn_;
  int n_atoms_;
  FrequencyBand band_;
};

/// Pass-through oracle that counts evaluations (instrumentation for budget
/// and early-stop assertions).
class CountingOracle final : public ChannelOracle {
 public:
  explicit CountingOracle(const ChannelOracle& inner) : inner_(&inner) {}

  ChannelPair eval(const DmaConfiguration& config, double f_hz) const override {
    ++calls_;
    return inner_->eval(config, f_hz);
  }
  int n_atoms() const override { return inner_->n_atoms(); }
  FrequencyBand band() const override { return inner_->band(); }

  long long calls() const { return calls_; }
  void reset() { calls_ = 0; }

 private:
  const ChannelOracle* inner_;
  mutable long long calls_ = 0;
};

}  // namespace dmasim
