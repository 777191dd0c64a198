#include "dmasim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

#include "dmasim/errors.hpp"

namespace dmasim::harness {

using nlohmann::json;

namespace {

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string fmt_ber(double v) {
  return fmt(v, "%.12g");
}

std::string jam_key(double jam_rel_db) {
  return fmt(jam_rel_db, "%+010.3f");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  return out;
}

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& sink, std::string name)
      : sink_(sink), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    sink_[name_] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::map<std::string, double>& sink_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

std::map<std::string, double> g_timings;  // per-process stage timings for the manifest
std::vector<std::string> g_sync_events;

}  // namespace

std::string format_ghz(double f_hz) {
  return fmt(f_hz / 1e9);
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::OPT:
      return "OPT";
    case Strategy::MAX:
      return "MAX";
    case Strategy::LIN:
      return "LIN";
    case Strategy::RAND:
      return "RAND";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "OPT") return Strategy::OPT;
  if (name == "MAX") return Strategy::MAX;
  if (name == "LIN") return Strategy::LIN;
  if (name == "RAND") return Strategy::RAND;
  throw ConfigError("unknown strategy '" + name + "' (expected OPT, MAX, LIN or RAND)");
}

void Scenario::validate() const {
  if (operating_freqs_hz.empty()) {
    throw ConfigError("operating_freqs_ghz must be non-empty");
  }
  if (strategies.empty()) {
    throw ConfigError("strategies must be non-empty");
  }
  if (jam_rel_db_grid.empty()) {
    throw ConfigError("jam_rel_db_grid must be non-empty");
  }
  if (bits_target < 1) {
    throw ConfigError("bits_target must be >= 1");
  }
  if (sample_delay < 0) {
    throw ConfigError("sample_delay must be >= 0");
  }
  if (random_search_k < 1) {
    throw ConfigError("random_search_k must be >= 1");
  }
  if (max_sweeps < 1) {
    throw ConfigError("max_sweeps must be >= 1");
  }
  if (sweep_points < 1) {
    throw ConfigError("sweep_points must be >= 1");
  }
  if (threads < 1) {
    throw ConfigError("threads must be >= 1");
  }
  if (constellation_frames < 0) {
    throw ConfigError("constellation_frames must be >= 0");
  }
  if (model.n_atoms < 1) {
    throw ConfigError("model.n_atoms must be >= 1");
  }
  if (model.mc_strength < 0.0) {
    throw ConfigError("model.mc_strength must be >= 0");
  }
  if (!(model.band_lo_hz < model.band_hi_hz)) {
    throw ConfigError("model band must have lo < hi");
  }
  try {
    ofdm.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("ofdm: ") + e.what());
  }
  const double jam_off = jam_offset_subcarriers * ofdm.subcarrier_spacing_hz();
  for (double f : operating_freqs_hz) {
    const double needed_lo = std::min(f - sweep_span_hz / 2.0,
                                      f - jam_off - ofdm.bandwidth_hz / 2.0);
    const double needed_hi = std::max(f + sweep_span_hz / 2.0,
                                      f - jam_off + ofdm.bandwidth_hz / 2.0);
    if (needed_lo < model.band_lo_hz || needed_hi > model.band_hi_hz) {
      throw ConfigError("operating frequency " + format_ghz(f) +
                        " GHz needs samples outside the model band; widen the band or "
                        "shrink sweep_span_hz");
    }
  }
}

namespace {

void parse_model_spec(const json& j, ModelSpec& m) {
  for (const auto& [key, value] : j.items()) {
    if (key == "n_atoms") {
      m.n_atoms = value.get<int>();
    } else if (key == "mc_strength") {
      m.mc_strength = value.get<double>();
    } else if (key == "band_ghz") {
      m.band_lo_hz = value.at(0).get<double>() * 1e9;
      m.band_hi_hz = value.at(1).get<double>() * 1e9;
    } else if (key == "n_modes") {
      m.n_modes = value.get<int>();
    } else if (key == "tx_des_distance_m") {
      m.tx_des_distance_m = value.get<double>();
    } else if (key == "tx_des_azimuth_deg") {
      m.tx_des_azimuth_deg = value.get<double>();
    } else if (key == "tx_und_distance_m") {
      m.tx_und_distance_m = value.get<double>();
    } else if (key == "tx_und_azimuth_deg") {
      m.tx_und_azimuth_deg = value.get<double>();
    } else {
      throw ConfigError("unknown key in model section: " + key);
    }
  }
}

void parse_ofdm_spec(const json& j, ofdm::OfdmParams& p) {
  for (const auto& [key, value] : j.items()) {
    if (key == "n_fft") {
      p.n_fft = value.get<int>();
    } else if (key == "n_active") {
      p.n_active = value.get<int>();
    } else if (key == "cp_len") {
      p.cp_len = value.get<int>();
    } else if (key == "data_symbols") {
      p.data_symbols = value.get<int>();
    } else if (key == "sample_rate_hz") {
      p.sample_rate_hz = value.get<double>();
    } else if (key == "bandwidth_hz") {
      p.bandwidth_hz = value.get<double>();
    } else {
      throw ConfigError("unknown key in ofdm section: " + key);
    }
  }
}

}  // namespace

Scenario scenario_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario file is not valid JSON: ") + e.what());
  }
  Scenario s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "master_seed") {
        s.master_seed = value.get<std::uint64_t>();
      } else if (key == "operating_freqs_ghz") {
        s.operating_freqs_hz.clear();
        for (const auto& f : value) {
          s.operating_freqs_hz.push_back(f.get<double>() * 1e9);
        }
      } else if (key == "strategies") {
        s.strategies.clear();
        for (const auto& name : value) {
          s.strategies.push_back(strategy_from_string(name.get<std::string>()));
        }
      } else if (key == "jam_rel_db_grid") {
        s.jam_rel_db_grid.clear();
        for (const auto& v : value) {
          s.jam_rel_db_grid.push_back(v.get<double>());
        }
      } else if (key == "snr_db") {
        s.snr_db = value.get<double>();
      } else if (key == "bits_target") {
        s.bits_target = value.get<std::int64_t>();
      } else if (key == "sample_delay") {
        s.sample_delay = value.get<int>();
      } else if (key == "jam_offset_subcarriers") {
        s.jam_offset_subcarriers = value.get<double>();
      } else if (key == "random_search_k") {
        s.random_search_k = value.get<int>();
      } else if (key == "max_sweeps") {
        s.max_sweeps = value.get<int>();
      } else if (key == "sweep_points") {
        s.sweep_points = value.get<int>();
      } else if (key == "sweep_span_hz") {
        s.sweep_span_hz = value.get<double>();
      } else if (key == "constellation_frames") {
        s.constellation_frames = value.get<int>();
      } else if (key == "threads") {
        s.threads = value.get<int>();
      } else if (key == "output_dir") {
        s.output_dir = value.get<std::string>();
      } else if (key == "model") {
        parse_model_spec(value, s.model);
      } else if (key == "ofdm") {
        parse_ofdm_spec(value, s.ofdm);
      } else {
        throw ConfigError("unknown key in scenario file: " + key);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario file schema mismatch: ") + e.what());
  }
  if (const char* env = std::getenv("DMA_SIM_OUT"); env != nullptr && *env != '\0') {
    s.output_dir = env;
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open scenario file: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_json_text(buf.str());
}

std::string scenario_to_json_text(const Scenario& s) {
  json j;
  j["master_seed"] = s.master_seed;
  json freqs = json::array();
  for (double f : s.operating_freqs_hz) {
    freqs.push_back(f / 1e9);
  }
  j["operating_freqs_ghz"] = std::move(freqs);
  json strategies = json::array();
  for (Strategy st : s.strategies) {
    strategies.push_back(to_string(st));
  }
  j["strategies"] = std::move(strategies);
  j["jam_rel_db_grid"] = s.jam_rel_db_grid;
  j["snr_db"] = s.snr_db;
  j["bits_target"] = s.bits_target;
  j["sample_delay"] = s.sample_delay;
  j["jam_offset_subcarriers"] = s.jam_offset_subcarriers;
  j["random_search_k"] = s.random_search_k;
  j["max_sweeps"] = s.max_sweeps;
  j["sweep_points"] = s.sweep_points;
  j["sweep_span_hz"] = s.sweep_span_hz;
  j["constellation_frames"] = s.constellation_frames;
  j["threads"] = s.threads;
  j["output_dir"] = s.output_dir;
  j["model"] = json{{"n_atoms", s.model.n_atoms},
                    {"mc_strength", s.model.mc_strength},
                    {"band_ghz", json::array({s.model.band_lo_hz / 1e9, s.model.band_hi_hz / 1e9})},
                    {"n_modes", s.model.n_modes},
                    {"tx_des_distance_m", s.model.tx_des_distance_m},
                    {"tx_des_azimuth_deg", s.model.tx_des_azimuth_deg},
                    {"tx_und_distance_m", s.model.tx_und_distance_m},
                    {"tx_und_azimuth_deg", s.model.tx_und_azimuth_deg}};
  j["ofdm"] = json{{"n_fft", s.ofdm.n_fft},
                   {"n_active", s.ofdm.n_active},
                   {"cp_len", s.ofdm.cp_len},
                   {"data_symbols", s.ofdm.data_symbols},
                   {"sample_rate_hz", s.ofdm.sample_rate_hz},
                   {"bandwidth_hz", s.ofdm.bandwidth_hz}};
  return j.dump(1);
}

// ---------------------------------------------------------------------------
// ExperimentRunner
// ---------------------------------------------------------------------------

ExperimentRunner::ExperimentRunner(Scenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  out_dir_ = scenario_.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(out_dir_ / "traces", ec);
  if (ec) {
    throw IoError("cannot create output directory: " + out_dir_.string());
  }
}

const PhysicsModel& ExperimentRunner::model() {
  if (model_) {
    return *model_;
  }
  const auto path = out_dir_ / "model.json";
  if (std::filesystem::exists(path)) {
    model_ = load_model(path);
    if (model_->n_atoms() != scenario_.model.n_atoms) {
      throw ConfigError("persisted model at " + path.string() +
                        " does not match the scenario's n_atoms");
    }
    return *model_;
  }
  StageTimer t(g_timings, "build_model");
  BuildOptions opt;
  opt.n_atoms = scenario_.model.n_atoms;
  opt.mc_strength = scenario_.model.mc_strength;
  opt.band = FrequencyBand{scenario_.model.band_lo_hz, scenario_.model.band_hi_hz};
  opt.n_modes = scenario_.model.n_modes;
  opt.tx_des_distance_m = scenario_.model.tx_des_distance_m;
  opt.tx_des_azimuth_deg = scenario_.model.tx_des_azimuth_deg;
  opt.tx_und_distance_m = scenario_.model.tx_und_distance_m;
  opt.tx_und_azimuth_deg = scenario_.model.tx_und_azimuth_deg;
  model_ = build_model(scenario_.master_seed, opt);
  save_model(*model_, path);
  return *model_;
}

std::vector<StrategyRun> ExperimentRunner::optimize_frequency(
    double f_op_hz, const std::vector<Strategy>& strategies) {
  StageTimer t(g_timings, "optimize");
  const PhysicsModel& m = model();
  PhysicsOracle oracle(m);
  const std::string fkey = format_ghz(f_op_hz);
  const CostSpec beam_and_null{CostKind::BeamAndNull, f_op_hz};
  const CostSpec beam_only{CostKind::BeamOnly, f_op_hz};

  // One shared random-search sample set per (seed, frequency); OPT and MAX
  // pick their own lowest-cost member, LIN reuses OPT's init and the same
  // samples for its regression.
  std::vector<ChannelSample> samples;
  const bool needs_samples =
      std::any_of(strategies.begin(), strategies.end(), [](Strategy s) {
        return s == Strategy::OPT || s == Strategy::MAX || s == Strategy::LIN;
      });
  if (needs_samples) {
    auto rng = derive_stream(scenario_.master_seed, "optimize/samples/" + fkey);
    samples = draw_samples(oracle, f_op_hz, scenario_.random_search_k, rng);
  }
  const auto k = static_cast<std::int64_t>(samples.size());

  std::vector<StrategyRun> runs;
  for (Strategy s : strategies) {
    StrategyRun run;
    run.strategy = s;
    switch (s) {
      case Strategy::OPT: {
        const std::size_t init = best_of_samples(samples, CostKind::BeamAndNull);
        run.result = coordinate_descent(oracle, beam_and_null, samples[init].config,
                                        scenario_.max_sweeps,
                                        cost(samples[init].channels, CostKind::BeamAndNull));
        run.oracle_calls_total = k + run.result.oracle_calls;
        break;
      }
      case Strategy::MAX: {
        const std::size_t init = best_of_samples(samples, CostKind::BeamOnly);
        run.result = coordinate_descent(oracle, beam_only, samples[init].config,
                                        scenario_.max_sweeps,
                                        cost(samples[init].channels, CostKind::BeamOnly));
        run.oracle_calls_total = k + run.result.oracle_calls;
        break;
      }
      case Strategy::LIN: {
        const std::size_t init = best_of_samples(samples, CostKind::BeamAndNull);
        run.result = optimize_lin_from_samples(oracle, beam_and_null, samples,
                                               samples[init].config, scenario_.max_sweeps);
        run.oracle_calls_total = k + 1;
        break;
      }
      case Strategy::RAND: {
        auto rng = derive_stream(scenario_.master_seed, "optimize/rand/" + fkey);
        run.result.config = rand_config(m.n_atoms(), rng);
        run.result.cost_db = cost(oracle, run.result.config, beam_and_null);
        run.result.init_cost_db = run.result.cost_db;
        run.result.trace = {{1, run.result.cost_db}};
        run.result.oracle_calls = 1;
        run.oracle_calls_total = 1;
        break;
      }
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<ofdm::LinkCondition> ExperimentRunner::make_link_conditions(
    const std::vector<DmaConfiguration>& configs, double f_op_hz, double jam_rel_db) {
  StageTimer t(g_timings, "link_conditions");
  const PhysicsModel& m = model();
  const auto& params = scenario_.ofdm;
  const double spacing = params.subcarrier_spacing_hz();
  const double jam_offset_hz = scenario_.jam_offset_subcarriers * spacing;
  // Carrier below the optimized frequency by the jammer offset: the quasi-CW
  // jammer then sits exactly at f_op (where the null was steered) without
  // being swallowed by the unused DC bin.
  const double carrier_hz = f_op_hz - jam_offset_hz;

  std::vector<ofdm::LinkCondition> conds(configs.size());
  for (auto& c : conds) {
    c.h_des_k.resize(static_cast<std::size_t>(params.n_fft));
    c.jam_rel_db = jam_rel_db;
    c.snr_db = scenario_.snr_db;
    c.sample_delay = scenario_.sample_delay;
    c.jam_offset_hz = jam_offset_hz;
  }
  for (int bin = 0; bin < params.n_fft; ++bin) {
    const double f = carrier_hz + params.bin_frequency_hz(bin);
    const Eigen::MatrixXcd w = m.scaled_coupling(f);
    for (std::size_t i = 0; i < configs.size(); ++i) {
      conds[i].h_des_k[static_cast<std::size_t>(bin)] =
          m.channel_with_coupling(configs[i], f, w).h_des;
    }
  }
  const Eigen::MatrixXcd w_jam = m.scaled_coupling(f_op_hz);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    conds[i].h_und_jam = m.channel_with_coupling(configs[i], f_op_hz, w_jam).h_und;
  }
  return conds;
}

ofdm::LinkCondition ExperimentRunner::make_link_condition(const DmaConfiguration& config,
                                                          double f_op_hz, double jam_rel_db) {
  return make_link_conditions({config}, f_op_hz, jam_rel_db)[0];
}

std::string ExperimentRunner::link_stream_label(double f_op_hz, Strategy strategy,
                                                double jam_rel_db) const {
  return "link/" + format_ghz(f_op_hz) + "/" + to_string(strategy) + "/" + fmt(jam_rel_db);
}

ofdm::LinkRunResult ExperimentRunner::run_link_once(const DmaConfiguration& config,
                                                    double f_op_hz, Strategy strategy,
                                                    double jam_rel_db) {
  const ofdm::LinkCondition cond = make_link_condition(config, f_op_hz, jam_rel_db);
  auto rng = derive_stream(scenario_.master_seed, link_stream_label(f_op_hz, strategy, jam_rel_db));
  return ofdm::run_link(scenario_.bits_target, scenario_.ofdm, cond, rng,
                        ofdm::kDefaultPreambleSeed, scenario_.constellation_frames);
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

std::string codebook_key(Strategy s, const std::string& fkey) {
  return fkey + "|" + to_string(s);
}

}  // namespace

void ExperimentRunner::load_codebook() {
  if (codebook_loaded_) {
    return;
  }
  codebook_loaded_ = true;
  const auto path = out_dir_ / "codebook.csv";
  std::ifstream in(path);
  if (!in) {
    return;
  }
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 5) {
      throw IoError("malformed codebook row in " + path.string());
    }
    CodebookEntry e;
    e.strategy = strategy_from_string(fields[0]);
    e.f_op_hz = std::stod(fields[1]) * 1e9;
    e.config = DmaConfiguration::from_string(fields[2]);
    e.cost_db = std::stod(fields[3]);
    e.oracle_calls = std::stoll(fields[4]);
    codebook_[codebook_key(e.strategy, format_ghz(e.f_op_hz))] = std::move(e);
  }
}

void ExperimentRunner::save_codebook() {
  auto out = open_for_write(out_dir_ / "codebook.csv");
  out << "strategy,f_op_ghz,config,cost_db,oracle_calls\n";
  for (const auto& [key, e] : codebook_) {
    out << to_string(e.strategy) << ',' << format_ghz(e.f_op_hz) << ',' << e.config.to_string()
        << ',' << fmt(e.cost_db, "%.12g") << ',' << e.oracle_calls << '\n';
  }
}

void ExperimentRunner::load_ber() {
  if (ber_loaded_) {
    return;
  }
  ber_loaded_ = true;
  const auto path = out_dir_ / "ber.csv";
  std::ifstream in(path);
  if (!in) {
    return;
  }
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 7) {
      throw IoError("malformed ber row in " + path.string());
    }
    BerRow r;
    r.freq_ghz = std::stod(fields[0]);
    r.strategy = strategy_from_string(fields[1]);
    r.jam_rel_db = std::stod(fields[2]);
    r.bits_total = std::stoll(fields[3]);
    r.bits_error = std::stoll(fields[4]);
    r.ber = std::stod(fields[5]);
    r.valid = fields[6] == "1";
    ber_[fmt(r.freq_ghz) + "|" + to_string(r.strategy) + "|" + jam_key(r.jam_rel_db)] = r;
  }
}

void ExperimentRunner::save_ber() {
  auto out = open_for_write(out_dir_ / "ber.csv");
  out << "freq_ghz,strategy,jam_rel_db,bits_total,bits_error,ber,valid\n";
  for (const auto& [key, r] : ber_) {
    out << fmt(r.freq_ghz) << ',' << to_string(r.strategy) << ',' << fmt(r.jam_rel_db) << ','
        << r.bits_total << ',' << r.bits_error << ',' << fmt_ber(r.ber) << ','
        << (r.valid ? '1' : '0') << '\n';
  }
}

std::vector<BerRow> ExperimentRunner::ber_rows() const {
  auto* self = const_cast<ExperimentRunner*>(this);
  self->load_ber();
  std::vector<BerRow> rows;
  rows.reserve(ber_.size());
  for (const auto& [key, r] : ber_) {
    rows.push_back(r);
  }
  return rows;
}

CodebookEntry ExperimentRunner::require_codebook_entry(Strategy strategy, double f_op_hz) {
  load_codebook();
  const auto it = codebook_.find(codebook_key(strategy, format_ghz(f_op_hz)));
  if (it == codebook_.end()) {
    throw ConfigError("no codebook entry for " + to_string(strategy) + " at " +
                      format_ghz(f_op_hz) + " GHz under " + out_dir_.string() +
                      "; run the `optimize` subcommand first");
  }
  return it->second;
}

void ExperimentRunner::record_stage(const std::string& name) {
  completed_stages_.push_back(name);
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void ExperimentRunner::stage_optimize(Strategy strategy, double f_op_hz) {
  load_codebook();
  const auto runs = optimize_frequency(f_op_hz, {strategy});
  const auto& run = runs[0];
  CodebookEntry e;
  e.strategy = strategy;
  e.f_op_hz = f_op_hz;
  e.config = run.result.config;
  e.cost_db = run.result.cost_db;
  e.oracle_calls = run.oracle_calls_total;
  codebook_[codebook_key(strategy, format_ghz(f_op_hz))] = e;
  save_codebook();

  auto trace = open_for_write(out_dir_ / "traces" /
                              (to_string(strategy) + "_" + format_ghz(f_op_hz) + "GHz.csv"));
  trace << "evaluation,cost_db\n";
  for (const auto& [idx, c] : run.result.trace) {
    trace << idx << ',' << fmt(c, "%.12g") << '\n';
  }
  record_stage("optimize/" + to_string(strategy) + "/" + format_ghz(f_op_hz));
}

void ExperimentRunner::stage_sweep_spectrum(Strategy strategy, double f_op_hz) {
  StageTimer t(g_timings, "sweep_spectrum");
  const CodebookEntry entry = require_codebook_entry(strategy, f_op_hz);
  const auto grid = linspace(f_op_hz - scenario_.sweep_span_hz / 2.0,
                             f_op_hz + scenario_.sweep_span_hz / 2.0, scenario_.sweep_points);
  const SpectrumSweep sw = sweep(model(), entry.config, grid);

  const std::string fkey = format_ghz(f_op_hz);
  std::vector<std::string> rows;
  rows.reserve(sw.frequencies_hz.size());
  for (std::size_t i = 0; i < sw.frequencies_hz.size(); ++i) {
    rows.push_back(fmt(sw.frequencies_hz[i], "%.12g") + "," + fmt(sw.gains_des_db[i]) + "," +
                   fmt(sw.gains_und_db[i]) + "," + to_string(strategy) + "," + fkey);
  }
  spectrum_rows_[fkey + "|" + to_string(strategy)] = std::move(rows);

  auto out = open_for_write(out_dir_ / "spectrum.csv");
  out << "freq_hz,gain_des_db,gain_und_db,strategy,f_op_ghz\n";
  for (const auto& [key, lines] : spectrum_rows_) {
    for (const auto& line : lines) {
      out << line << '\n';
    }
  }
  record_stage("sweep-spectrum/" + to_string(strategy) + "/" + fkey);
}

void ExperimentRunner::stage_run_link(Strategy strategy, double f_op_hz, double jam_rel_db,
                                      const std::optional<std::filesystem::path>& iq_dump) {
  StageTimer t(g_timings, "run_link");
  load_ber();
  const CodebookEntry entry = require_codebook_entry(strategy, f_op_hz);

  if (iq_dump) {
    // Export the received baseband of one frame for external inspection.
    const auto cond = make_link_condition(entry.config, f_op_hz, jam_rel_db);
    auto rng = derive_stream(scenario_.master_seed,
                             link_stream_label(f_op_hz, strategy, jam_rel_db) + "/iq");
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(scenario_.ofdm.bits_per_frame()));
    for (auto& b : bits) {
      b = static_cast<std::uint8_t>(rng.bit());
    }
    const auto frame = ofdm::modulate_frame(bits, scenario_.ofdm);
    const auto link = ofdm::apply_link(frame, cond, scenario_.ofdm, rng);
    ofdm::write_iq_f32(*iq_dump, link.samples);
  }

  const auto result = run_link_once(entry.config, f_op_hz, strategy, jam_rel_db);
  BerRow row;
  row.freq_ghz = f_op_hz / 1e9;
  row.strategy = strategy;
  row.jam_rel_db = jam_rel_db;
  row.bits_total = result.report.bits_total;
  row.bits_error = result.report.bits_error;
  row.ber = result.report.ber;
  row.valid = result.report.statistically_valid;
  row.sync_failures = result.report.sync_failures;
  ber_[fmt(row.freq_ghz) + "|" + to_string(strategy) + "|" + jam_key(jam_rel_db)] = row;
  save_ber();

  const auto cpath = out_dir_ / ("constellation_" + format_ghz(f_op_hz) + "GHz.csv");
  const bool fresh = !std::filesystem::exists(cpath);
  std::ofstream out(cpath, std::ios::app);
  if (!out) {
    throw IoError("cannot open for writing: " + cpath.string());
  }
  if (fresh) {
    out << "strategy,jam_rel_db,frame,symbol,subcarrier,i,q\n";
  }
  for (const auto& p : result.constellation) {
    out << to_string(strategy) << ',' << fmt(jam_rel_db) << ',' << p.frame << ',' << p.symbol
        << ',' << p.subcarrier << ',' << fmt(p.i) << ',' << fmt(p.q) << '\n';
  }
  record_stage("run-link/" + to_string(strategy) + "/" + format_ghz(f_op_hz) + "/" +
               fmt(jam_rel_db));
}

void ExperimentRunner::run_full_experiment() {
  try {
    g_sync_events.clear();
    (void)model();
    record_stage("model");

    for (double f_op : scenario_.operating_freqs_hz) {
      const std::string fkey = format_ghz(f_op);
      const auto runs = optimize_frequency(f_op, scenario_.strategies);
      std::vector<DmaConfiguration> configs;
      for (const auto& run : runs) {
        CodebookEntry e;
        e.strategy = run.strategy;
        e.f_op_hz = f_op;
        e.config = run.result.config;
        e.cost_db = run.result.cost_db;
        e.oracle_calls = run.oracle_calls_total;
        codebook_[codebook_key(run.strategy, fkey)] = e;
        configs.push_back(run.result.config);

        auto trace = open_for_write(out_dir_ / "traces" /
                                    (to_string(run.strategy) + "_" + fkey + "GHz.csv"));
        trace << "evaluation,cost_db\n";
        for (const auto& [idx, c] : run.result.trace) {
          trace << idx << ',' << fmt(c, "%.12g") << '\n';
        }
      }
      record_stage("optimize/" + fkey);

      {
        StageTimer t(g_timings, "sweep_spectrum");
        const auto grid = linspace(f_op - scenario_.sweep_span_hz / 2.0,
                                   f_op + scenario_.sweep_span_hz / 2.0, scenario_.sweep_points);
        for (const auto& run : runs) {
          const SpectrumSweep sw = sweep(model(), run.result.config, grid);
          std::vector<std::string> rows;
          rows.reserve(sw.frequencies_hz.size());
          for (std::size_t i = 0; i < sw.frequencies_hz.size(); ++i) {
            rows.push_back(fmt(sw.frequencies_hz[i], "%.12g") + "," + fmt(sw.gains_des_db[i]) +
                           "," + fmt(sw.gains_und_db[i]) + "," + to_string(run.strategy) + "," +
                           fkey);
          }
          spectrum_rows_[fkey + "|" + to_string(run.strategy)] = std::move(rows);
        }
      }
      record_stage("sweep-spectrum/" + fkey);

      // Per-strategy link conditions once per frequency; the jammer level is
      // the only thing that changes across the grid.
      const auto base_conds = make_link_conditions(configs, f_op, 0.0);

      struct LinkTask {
        std::size_t strategy_idx;
        double jam_rel_db;
      };
      std::vector<LinkTask> tasks;
      for (std::size_t si = 0; si < runs.size(); ++si) {
        for (double jam : scenario_.jam_rel_db_grid) {
          tasks.push_back({si, jam});
        }
      }
      std::vector<ofdm::LinkRunResult> results(tasks.size());
      auto run_task = [&](std::size_t ti) {
        const auto& task = tasks[ti];
        ofdm::LinkCondition cond = base_conds[task.strategy_idx];
        cond.jam_rel_db = task.jam_rel_db;
        auto rng = derive_stream(
            scenario_.master_seed,
            link_stream_label(f_op, runs[task.strategy_idx].strategy, task.jam_rel_db));
        results[ti] = ofdm::run_link(scenario_.bits_target, scenario_.ofdm, cond, rng,
                                     ofdm::kDefaultPreambleSeed, scenario_.constellation_frames);
      };
      {
        StageTimer t(g_timings, "run_link");
        if (scenario_.threads <= 1) {
          for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
            run_task(ti);
          }
        } else {
          std::atomic<std::size_t> next{0};
          std::vector<std::future<void>> workers;
          const int n_workers = std::min<int>(scenario_.threads, static_cast<int>(tasks.size()));
          for (int w = 0; w < n_workers; ++w) {
            workers.push_back(std::async(std::launch::async, [&]() {
              for (std::size_t ti = next.fetch_add(1); ti < tasks.size();
                   ti = next.fetch_add(1)) {
                run_task(ti);
              }
            }));
          }
          for (auto& f : workers) {
            f.get();
          }
        }
      }

      auto cons = open_for_write(out_dir_ / ("constellation_" + fkey + "GHz.csv"));
      cons << "strategy,jam_rel_db,frame,symbol,subcarrier,i,q\n";
      for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const auto& task = tasks[ti];
        const auto& res = results[ti];
        const Strategy strategy = runs[task.strategy_idx].strategy;
        BerRow row;
        row.freq_ghz = f_op / 1e9;
        row.strategy = strategy;
        row.jam_rel_db = task.jam_rel_db;
        row.bits_total = res.report.bits_total;
        row.bits_error = res.report.bits_error;
        row.ber = res.report.ber;
        row.valid = res.report.statistically_valid;
        row.sync_failures = res.report.sync_failures;
        ber_[fmt(row.freq_ghz) + "|" + to_string(strategy) + "|" + jam_key(task.jam_rel_db)] = row;
        if (res.report.sync_failures > 0) {
          g_sync_events.push_back(fkey + " GHz " + to_string(strategy) + " jam " +
                                  fmt(task.jam_rel_db) + " dB: " +
                                  std::to_string(res.report.sync_failures) + " frames lost");
        }
        for (const auto& p : res.constellation) {
          cons << to_string(strategy) << ',' << fmt(task.jam_rel_db) << ',' << p.frame << ','
               << p.symbol << ',' << p.subcarrier << ',' << fmt(p.i) << ',' << fmt(p.q) << '\n';
        }
      }
      record_stage("run-link/" + fkey);
    }

    save_codebook();
    save_ber();
    auto out = open_for_write(out_dir_ / "spectrum.csv");
    out << "freq_hz,gain_des_db,gain_und_db,strategy,f_op_ghz\n";
    for (const auto& [key, lines] : spectrum_rows_) {
      for (const auto& line : lines) {
        out << line << '\n';
      }
    }
    write_manifest("complete");
  } catch (...) {
    try {
      write_manifest("aborted");
    } catch (...) {
      // keep the original error
    }
    throw;
  }
}

void ExperimentRunner::write_manifest(const std::string& status) {
  json j;
  j["artifact"] = "dmasim";
  j["version"] = "0.1.0";
  j["status"] = status;
  j["master_seed"] = scenario_.master_seed;
  j["scenario"] = json::parse(scenario_to_json_text(scenario_));
  j["completed_stages"] = completed_stages_;
  j["frames_per_link_run"] =
      (scenario_.bits_target + scenario_.ofdm.bits_per_frame() - 1) / scenario_.ofdm.bits_per_frame();
  j["bits_per_link_run"] = j["frames_per_link_run"].get<std::int64_t>() *
                           scenario_.ofdm.bits_per_frame();
  if (model_) {
    j["model_coupling_scale"] = model_->params().coupling_scale;
  }
  json timings = json::object();
  for (const auto& [name, seconds] : g_timings) {
    timings[name] = seconds;
  }
  j["timings_s"] = std::move(timings);
  j["sync_failure_events"] = g_sync_events;
  auto out = open_for_write(out_dir_ / "manifest.json");
  out << j.dump(1) << '\n';
}

}  // namespace dmasim::harness
