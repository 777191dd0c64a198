#include "dmasim/optimize.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace dmasim {

double cost(const ChannelPair& channels, CostKind kind) {
  switch (kind) {
    case CostKind::BeamAndNull:
      return gain_db(channels.h_und) - gain_db(channels.h_des);
    case CostKind::BeamOnly:
      return -gain_db(channels.h_des);
  }
  throw std::logic_error("unknown cost kind");
}

double cost(const ChannelOracle& oracle, const DmaConfiguration& config, const CostSpec& spec) {
  return cost(oracle.eval(config, spec.f_op_hz), spec.kind);
}

DmaConfiguration rand_config(int n, RngStream& rng) {
  if (n < 1) {
    throw std::invalid_argument("rand_config: n must be >= 1");
  }
  DmaConfiguration c(static_cast<std::size_t>(n));
  for (auto& b : c.bits) {
    b = static_cast<std::uint8_t>(rng.bit());
  }
  return c;
}

std::vector<ChannelSample> draw_samples(const ChannelOracle& oracle, double f_op_hz, int k,
                                        RngStream& rng) {
  if (k < 1) {
    throw std::invalid_argument("draw_samples: k must be >= 1");
  }
  std::vector<ChannelSample> samples;
  samples.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    ChannelSample s;
    s.config = rand_config(oracle.n_atoms(), rng);
    s.channels = oracle.eval(s.config, f_op_hz);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::size_t best_of_samples(std::span<const ChannelSample> samples, CostKind kind) {
  if (samples.empty()) {
    throw std::invalid_argument("best_of_samples: empty sample set");
  }
  std::size_t best = 0;
  double best_cost = cost(samples[0].channels, kind);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double c = cost(samples[i].channels, kind);
    if (c < best_cost) {
      best_cost = c;
      best = i;
    }
  }
  return best;
}

std::pair<DmaConfiguration, double> random_search(const ChannelOracle& oracle,
                                                  const CostSpec& spec, int k, RngStream& rng) {
  const auto samples = draw_samples(oracle, spec.f_op_hz, k, rng);
  const std::size_t best = best_of_samples(samples, spec.kind);
  return {samples[best].config, cost(samples[best].channels, spec.kind)};
}

OptimizationResult coordinate_descent(const ChannelOracle& oracle, const CostSpec& spec,
                                      const DmaConfiguration& init, int max_sweeps,
                                      std::optional<double> known_init_cost) {
  init.check(static_cast<std::size_t>(oracle.n_atoms()));
  if (max_sweeps < 1) {
    throw std::invalid_argument("coordinate_descent: max_sweeps must be >= 1");
  }

  OptimizationResult res;
  res.config = init;
  std::int64_t calls = 0;
  double current;
  if (known_init_cost) {
    current = *known_init_cost;
  } else {
    ++calls;
    current = cost(oracle, res.config, spec);
  }
  res.init_cost_db = current;
  res.trace.emplace_back(calls, current);

  const std::size_t n = res.config.size();
  for (int s = 0; s < max_sweeps; ++s) {
    ++res.sweeps_executed;
    bool any_flip = false;
    for (std::size_t i = 0; i < n; ++i) {
      res.config.flip(i);
      ++calls;
      const double candidate = cost(oracle, res.config, spec);
      if (candidate < current) {  // strict decrease; ties rejected
        current = candidate;
        any_flip = true;
        res.trace.emplace_back(calls, current);
      } else {
        res.config.flip(i);
      }
    }
    if (!any_flip) {
      break;
    }
  }

  res.cost_db = current;
  res.oracle_calls = calls;
  return res;
}

// ---------------------------------------------------------------------------
// Linear surrogate
// ---------------------------------------------------------------------------

LinearSurrogate::LinearSurrogate(Eigen::VectorXcd beta_des, Eigen::VectorXcd beta_und,
                                 double f_op_hz, SurrogateDiagnostics diag)
    : beta_des_(std::move(beta_des)),
      beta_und_(std::move(beta_und)),
      f_op_hz_(f_op_hz),
      diag_(std::move(diag)) {}

ChannelPair LinearSurrogate::predict(const DmaConfiguration& config) const {
  config.check(static_cast<std::size_t>(n_atoms()));
  cplx des = beta_des_(0);
  cplx und = beta_und_(0);
  for (int i = 0; i < n_atoms(); ++i) {
    if (config.bits[static_cast<std::size_t>(i)]) {
      des += beta_des_(i + 1);
      und += beta_und_(i + 1);
    }
  }
  return {des, und};
}

ChannelPair SurrogateOracle::eval(const DmaConfiguration& config, double f_hz) const {
  if (f_hz != surrogate_->f_op_hz()) {
    throw std::domain_error("surrogate oracle queried away from its fit frequency");
  }
  return surrogate_->predict(config);
}

LinearSurrogate fit_linear_surrogate(std::span<const ChannelSample> samples, double f_op_hz) {
  if (samples.empty()) {
    throw std::invalid_argument("fit_linear_surrogate: empty sample set");
  }
  const int n = static_cast<int>(samples[0].config.size());
  const int m = static_cast<int>(samples.size());
  if (m < n + 1) {
    throw std::invalid_argument("fit_linear_surrogate: need at least n_atoms + 1 samples");
  }
  bool all_identical = true;
  for (const auto& s : samples) {
    s.config.check(static_cast<std::size_t>(n));
    if (!(s.config == samples[0].config)) {
      all_identical = false;
    }
  }
  if (all_identical) {
    throw std::invalid_argument("fit_linear_surrogate: configurations must not all be identical");
  }

  SurrogateDiagnostics diag;
  diag.sample_count = m;

  // Bits constant across the sample set carry no information; flag them and
  // pin their coefficients to zero instead of letting the solver pick one of
  // the infinitely many least-squares solutions.
  std::vector<int> active;
  active.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto first = samples[0].config.bits[static_cast<std::size_t>(i)];
    bool constant = true;
    for (const auto& s : samples) {
      if (s.config.bits[static_cast<std::size_t>(i)] != first) {
        constant = false;
        break;
      }
    }
    if (constant) {
      diag.degenerate_bits.push_back(i);
    } else {
      active.push_back(i);
    }
  }

  const int p = static_cast<int>(active.size()) + 1;
  Eigen::MatrixXd a(m, p);
  Eigen::VectorXcd y_des(m), y_und(m);
  for (int r = 0; r < m; ++r) {
    const auto& s = samples[static_cast<std::size_t>(r)];
    a(r, 0) = 1.0;
    for (int c = 0; c < p - 1; ++c) {
      a(r, c + 1) = s.config.bits[static_cast<std::size_t>(active[static_cast<std::size_t>(c)])];
    }
    y_des(r) = s.channels.h_des;
    y_und(r) = s.channels.h_und;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  auto solve_complex = [&](const Eigen::VectorXcd& y) -> Eigen::VectorXcd {
    const Eigen::VectorXd re = qr.solve(y.real());
    const Eigen::VectorXd im = qr.solve(y.imag());
    return re.cast<cplx>() + cplx(0.0, 1.0) * im.cast<cplx>();
  };
  const Eigen::VectorXcd sol_des = solve_complex(y_des);
  const Eigen::VectorXcd sol_und = solve_complex(y_und);

  Eigen::VectorXcd beta_des = Eigen::VectorXcd::Zero(n + 1);
  Eigen::VectorXcd beta_und = Eigen::VectorXcd::Zero(n + 1);
  beta_des(0) = sol_des(0);
  beta_und(0) = sol_und(0);
  for (int c = 0; c < p - 1; ++c) {
    beta_des(active[static_cast<std::size_t>(c)] + 1) = sol_des(c + 1);
    beta_und(active[static_cast<std::size_t>(c)] + 1) = sol_und(c + 1);
  }
  // A constantly-on bit is collinear with the intercept, which absorbs its
  // contribution; the pinned zero coefficient loses nothing on the fit set.

  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  diag.residual_rms_des = (a * sol_des - y_des).norm() * inv_sqrt_m;
  diag.residual_rms_und = (a * sol_und - y_und).norm() * inv_sqrt_m;
  diag.target_rms_des = y_des.norm() * inv_sqrt_m;
  diag.target_rms_und = y_und.norm() * inv_sqrt_m;

  return LinearSurrogate(std::move(beta_des), std::move(beta_und), f_op_hz, std::move(diag));
}

OptimizationResult optimize_lin_from_samples(const ChannelOracle& oracle, const CostSpec& spec,
                                             std::span<const ChannelSample> samples,
                                             const DmaConfiguration& init, int max_sweeps) {
  const LinearSurrogate surrogate = fit_linear_surrogate(samples, spec.f_op_hz);
  const SurrogateOracle in_software(surrogate, oracle.band());
  OptimizationResult res = coordinate_descent(in_software, spec, init, max_sweeps);
  res.cost_db = cost(oracle, res.config, spec);  // true cost of the final configuration
  res.oracle_calls = static_cast<std::int64_t>(samples.size()) + 1;
  return res;
}

OptimizationResult optimize_lin(const ChannelOracle& oracle, const CostSpec& spec, RngStream& rng,
                                int k, int max_sweeps) {
  const auto samples = draw_samples(oracle, spec.f_op_hz, k, rng);
  const std::size_t best = best_of_samples(samples, spec.kind);
  return optimize_lin_from_samples(oracle, spec, samples, samples[best].config, max_sweeps);
}

ChannelPair PhysicsOracle::eval(const DmaConfiguration& config, double f_hz) const {
  auto it = coupling_cache_.find(f_hz);
  if (it == coupling_cache_.end()) {
    it = coupling_cache_.emplace(f_hz, model_->scaled_coupling(f_hz)).first;
  }
  return model_->channel_with_coupling(config, f_hz, it->second);
}

}  // namespace dmasim
