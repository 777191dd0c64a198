#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmasim/ofdm.hpp"
#include "dmasim/optimize.hpp"

namespace dmasim::harness {

enum class Strategy { OPT, MAX, LIN, RAND };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);  // throws ConfigError

struct ModelSpec {
  int n_atoms = 96;
  double mc_strength = 2.0;
  double band_lo_hz = 18.5e9;
  double band_hi_hz = 20.0e9;
  int n_modes = 120;
  double tx_des_distance_m = 1.0;
  double tx_des_azimuth_deg = 18.0;
  double tx_und_distance_m = 4.0;
  double tx_und_azimuth_deg = -27.0;
};

struct Scenario {
  std::uint64_t master_seed = 1;
  std::vector<double> operating_freqs_hz{18.75e9, 19.25e9, 19.75e9};
  std::vector<Strategy> strategies{Strategy::OPT, Strategy::MAX, Strategy::LIN, Strategy::RAND};
  std::vector<double> jam_rel_db_grid{-36, -30, -24, -18, -12, -6, 0, 6, 12, 18, 24, 30};
  double snr_db = 25.0;
  std::int64_t bits_target = 167200;
  int sample_delay = 64;
  double jam_offset_subcarriers = 2.5;
  int random_search_k = 500;
  int max_sweeps = 5;
  int sweep_points = 1001;
  double sweep_span_hz = 500e6;  // total span, centered on the operating frequency
  int constellation_frames = 1;
  int threads = 1;
  std::string output_dir = "out";
  ModelSpec model;
  ofdm::OfdmParams ofdm;

  void validate() const;  // throws ConfigError
};

/// Parses the scenario config file (JSON; unknown keys rejected). Missing
/// keys fall back to the defaults above. The DMA_SIM_OUT environment
/// variable, when set, overrides output_dir.
Scenario load_scenario(const std::filesystem::path& path);
Scenario scenario_from_json_text(const std::string& text);
std::string scenario_to_json_text(const Scenario& s);

struct CodebookEntry {
  Strategy strategy = Strategy::OPT;
  double f_op_hz = 0.0;
  DmaConfiguration config;
  double cost_db = 0.0;
  std::int64_t oracle_calls = 0;
};

struct BerRow {
  double freq_ghz = 0.0;
  Strategy strategy = Strategy::OPT;
  double jam_rel_db = 0.0;
  std::int64_t bits_total = 0;
  std::int64_t bits_error = 0;
  double ber = 0.0;
  bool valid = false;
  int sync_failures = 0;  // logged in the manifest, not part of the CSV row
};

struct StrategyRun {
  Strategy strategy = Strategy::OPT;
  OptimizationResult result;         // for RAND: a single-evaluation record
  std::int64_t oracle_calls_total = 0;  // including shared random samples
};

/// Wires physics, optimization, and the OFDM link into the full evaluation;
/// every output lands under the scenario's output directory:
///   model.json, codebook.csv, traces/, spectrum.csv, ber.csv,
///   constellation_<f_op>GHz.csv, manifest.json.
class ExperimentRunner {
 public:
  explicit ExperimentRunner(Scenario scenario);

  const Scenario& scenario() const { return scenario_; }
  const std::filesystem::path& output_dir() const { return out_dir_; }

  /// Builds the model (and persists it), or reloads a previously saved one.
  const PhysicsModel& model();

  /// OPT/MAX/LIN/RAND at one operating frequency, sharing one 500-sample
  /// random-search set per frequency.
  std::vector<StrategyRun> optimize_frequency(double f_op_hz,
                                              const std::vector<Strategy>& strategies);

  /// Link condition for a configuration: per-subcarrier desired channels
  /// from the physics model around the carrier, the undesired channel at the
  /// jammer frequency, and the scenario's jammer/noise settings. The carrier
  /// sits jam_offset below f_op, so the (quasi-CW) jammer frequency is
  /// exactly the optimized frequency while remaining off the DC bin.
  ofdm::LinkCondition make_link_condition(const DmaConfiguration& config, double f_op_hz,
                                          double jam_rel_db);

  /// Same, for several configurations at once (shares the per-bin coupling
  /// matrices across configurations).
  std::vector<ofdm::LinkCondition> make_link_conditions(
      const std::vector<DmaConfiguration>& configs, double f_op_hz, double jam_rel_db);

  ofdm::LinkRunResult run_link_once(const DmaConfiguration& config, double f_op_hz,
                                    Strategy strategy, double jam_rel_db);

  // Stage entry points (each runnable independently from persisted artifacts).
  void stage_optimize(Strategy strategy, double f_op_hz);
  void stage_sweep_spectrum(Strategy strategy, double f_op_hz);
  void stage_run_link(Strategy strategy, double f_op_hz, double jam_rel_db,
                      const std::optional<std::filesystem::path>& iq_dump = std::nullopt);
  void run_full_experiment();

  /// Codebook lookup; throws ConfigError naming the `optimize` subcommand
  /// when the entry is missing.
  CodebookEntry require_codebook_entry(Strategy strategy, double f_op_hz);

  std::vector<BerRow> ber_rows() const;  // rows currently persisted

 private:
  Scenario scenario_;
  std::filesystem::path out_dir_;
  std::optional<PhysicsModel> model_;
  std::map<std::string, CodebookEntry> codebook_;
  std::map<std::string, BerRow> ber_;
  std::map<std::string, std::vector<std::string>> spectrum_rows_;
  std::vector<std::string> completed_stages_;
  bool codebook_loaded_ = false;
  bool ber_loaded_ = false;

  void load_codebook();
  void save_codebook();
  void load_ber();
  void save_ber();
  void record_stage(const std::string& name);
  void write_manifest(const std::string& status);
  std::string link_stream_label(double f_op_hz, Strategy strategy, double jam_rel_db) const;
};

std::string format_ghz(double f_hz);

}  // namespace dmasim::harness
