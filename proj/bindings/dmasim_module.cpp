// Python bindings for the DMA link simulator core.

#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dmasim/errors.hpp"
#include "dmasim/harness.hpp"
#include "dmasim/ofdm.hpp"
#include "dmasim/optimize.hpp"

namespace py = pybind11;
using namespace dmasim;

PYBIND11_MODULE(dmasim, m) {
  m.doc() = "Mutual-coupling-aware DMA link simulator: physics ground truth, "
            "configuration optimizers, QPSK-OFDM link and experiment harness.";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<ModelError>(m, "ModelError");
  py::register_exception<SyncError>(m, "SyncFailure");
  py::register_exception<IoError>(m, "IoError");

  // --- rng ---
  py::class_<RngStream>(m, "RngStream", "Deterministic seeded random stream.")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("uniform", py::overload_cast<>(&RngStream::uniform))
      .def("normal", &RngStream::normal)
      .def("bit", &RngStream::bit);
  m.def("derive_seed", &derive_seed, py::arg("master_seed"), py::arg("label"),
        "Seed of the (master_seed, label) task stream.");

  // --- physics ---
  py::class_<FrequencyBand>(m, "FrequencyBand")
      .def(py::init<>())
      .def(py::init([](double lo, double hi) { return FrequencyBand{lo, hi}; }), py::arg("lo_hz"),
           py::arg("hi_hz"))
      .def_readwrite("lo_hz", &FrequencyBand::lo_hz)
      .def_readwrite("hi_hz", &FrequencyBand::hi_hz)
      .def("contains", &FrequencyBand::contains);

  py::class_<DmaConfiguration>(m, "DmaConfiguration",
                               "Binary meta-atom states (0 = off, 1 = on).")
      .def(py::init<std::size_t>(), py::arg("n"))
      .def(py::init([](const std::vector<std::uint8_t>& bits) {
             return DmaConfiguration(bits);
           }),
           py::arg("bits"))
      .def_readwrite("bits", &DmaConfiguration::bits)
      .def("__len__", &DmaConfiguration::size)
      .def("flip", &DmaConfiguration::flip)
      .def("popcount", &DmaConfiguration::popcount)
      .def("ones_fraction", &DmaConfiguration::ones_fraction)
      .def("to_string", &DmaConfiguration::to_string)
      .def_static("from_string", &DmaConfiguration::from_string)
      .def_static("from_index", &DmaConfiguration::from_index, py::arg("index"), py::arg("n"))
      .def("__eq__", [](const DmaConfiguration& a, const DmaConfiguration& b) { return a == b; },
           py::is_operator())
      .def("__repr__", [](const DmaConfiguration& c) {
        return "DmaConfiguration('" + c.to_string() + "')";
      });

  py::class_<ChannelPair>(m, "ChannelPair")
      .def_readonly("h_des", &ChannelPair::h_des)
      .def_readonly("h_und", &ChannelPair::h_und);

  py::class_<SpectrumSweep>(m, "SpectrumSweep")
      .def_readonly("frequencies_hz", &SpectrumSweep::frequencies_hz)
      .def_readonly("gains_des_db", &SpectrumSweep::gains_des_db)
      .def_readonly("gains_und_db", &SpectrumSweep::gains_und_db);

  py::class_<BuildOptions>(m, "BuildOptions")
      .def(py::init<>())
      .def_readwrite("n_atoms", &BuildOptions::n_atoms)
      .def_readwrite("mc_strength", &BuildOptions::mc_strength)
      .def_readwrite("band", &BuildOptions::band)
      .def_readwrite("n_modes", &BuildOptions::n_modes);

  py::class_<PhysicsModel>(m, "PhysicsModel",
                           "Immutable coupled-scatterer ground truth (the software VNA).")
      .def_property_readonly("n_atoms", &PhysicsModel::n_atoms)
      .def_property_readonly("band", &PhysicsModel::band)
      .def_property_readonly("coupling_scale",
                             [](const PhysicsModel& mdl) { return mdl.params().coupling_scale; })
      .def("channel", &PhysicsModel::channel, py::arg("config"), py::arg("f_hz"));

  m.def("build_model",
        py::overload_cast<std::uint64_t, int, double, FrequencyBand>(&build_model),
        py::arg("seed"), py::arg("n_atoms") = 96, py::arg("mc_strength") = 2.0,
        py::arg("band") = FrequencyBand{});
  m.def("build_model_with_options",
        py::overload_cast<std::uint64_t, const BuildOptions&>(&build_model), py::arg("seed"),
        py::arg("options"));
  m.def("gain_db", &gain_db, py::arg("h"), "20*log10(|h|); -inf for h == 0.");
  m.def("sweep",
        [](const PhysicsModel& model, const DmaConfiguration& config,
           const std::vector<double>& grid) { return sweep(model, config, grid); },
        py::arg("model"), py::arg("config"), py::arg("grid_hz"));
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  // --- oracles ---
  py::class_<ChannelOracle>(m, "ChannelOracle");
  py::class_<PhysicsOracle, ChannelOracle>(m, "PhysicsOracle",
                                           "Caching oracle view of a physics model.")
      .def(py::init<const PhysicsModel&>(), py::arg("model"), py::keep_alive<1, 2>())
      .def("eval", &PhysicsOracle::eval, py::arg("config"), py::arg("f_hz"));
  py::class_<FunctionOracle, ChannelOracle>(m, "FunctionOracle",
                                            "Oracle backed by a Python callable "
                                            "(config, f_hz) -> (h_des, h_und).")
      .def(py::init([](const std::function<std::pair<cplx, cplx>(const DmaConfiguration&,
                                                                 double)>& fn,
                       int n_atoms, FrequencyBand band) {
             return FunctionOracle(
                 [fn](const DmaConfiguration& c, double f) {
                   const auto [d, u] = fn(c, f);
                   return ChannelPair{d, u};
                 },
                 n_atoms, band);
           }),
           py::arg("fn"), py::arg("n_atoms"), py::arg("band"));
  py::class_<SurrogateOracle, ChannelOracle>(m, "SurrogateOracle")
      .def(py::init<const LinearSurrogate&, FrequencyBand>(), py::arg("surrogate"),
           py::arg("band"), py::keep_alive<1, 2>());

  // --- optimize ---
  py::enum_<CostKind>(m, "CostKind")
      .value("BeamAndNull", CostKind::BeamAndNull)
      .value("BeamOnly", CostKind::BeamOnly);

  py::class_<CostSpec>(m, "CostSpec")
      .def(py::init([](CostKind kind, double f_op_hz) { return CostSpec{kind, f_op_hz}; }),
           py::arg("kind"), py::arg("f_op_hz"))
      .def_readwrite("kind", &CostSpec::kind)
      .def_readwrite("f_op_hz", &CostSpec::f_op_hz);

  m.def("cost",
        py::overload_cast<const ChannelOracle&, const DmaConfiguration&, const CostSpec&>(&cost),
        py::arg("oracle"), py::arg("config"), py::arg("spec"));
  m.def("cost_of_pair", py::overload_cast<const ChannelPair&, CostKind>(&cost),
        py::arg("channels"), py::arg("kind"));

  py::class_<ChannelSample>(m, "ChannelSample")
      .def_readonly("config", &ChannelSample::config)
      .def_readonly("channels", &ChannelSample::channels);

  m.def("draw_samples",
        [](const ChannelOracle& o, double f, int k, RngStream& rng) {
          return draw_samples(o, f, k, rng);
        },
        py::arg("oracle"), py::arg("f_op_hz"), py::arg("k"), py::arg("rng"));
  m.def("best_of_samples",
        [](const std::vector<ChannelSample>& samples, CostKind kind) {
          return best_of_samples(samples, kind);
        },
        py::arg("samples"), py::arg("kind"));
  m.def("random_search",
        [](const ChannelOracle& o, const CostSpec& spec, int k, RngStream& rng) {
          return random_search(o, spec, k, rng);
        },
        py::arg("oracle"), py::arg("spec"), py::arg("k") = 500, py::arg("rng"));

  py::class_<OptimizationResult>(m, "OptimizationResult")
      .def_readonly("config", &OptimizationResult::config)
      .def_readonly("cost_db", &OptimizationResult::cost_db)
      .def_readonly("init_cost_db", &OptimizationResult::init_cost_db)
      .def_readonly("trace", &OptimizationResult::trace)
      .def_readonly("oracle_calls", &OptimizationResult::oracle_calls)
      .def_readonly("sweeps_executed", &OptimizationResult::sweeps_executed);

  m.def("coordinate_descent",
        [](const ChannelOracle& o, const CostSpec& spec, const DmaConfiguration& init,
           int max_sweeps, std::optional<double> known_init_cost) {
          return coordinate_descent(o, spec, init, max_sweeps, known_init_cost);
        },
        py::arg("oracle"), py::arg("spec"), py::arg("init"), py::arg("max_sweeps") = 5,
        py::arg("known_init_cost") = std::nullopt);

  py::class_<SurrogateDiagnostics>(m, "SurrogateDiagnostics")
      .def_readonly("residual_rms_des", &SurrogateDiagnostics::residual_rms_des)
      .def_readonly("residual_rms_und", &SurrogateDiagnostics::residual_rms_und)
      .def_readonly("target_rms_des", &SurrogateDiagnostics::target_rms_des)
      .def_readonly("target_rms_und", &SurrogateDiagnostics::target_rms_und)
      .def_readonly("sample_count", &SurrogateDiagnostics::sample_count)
      .def_readonly("degenerate_bits", &SurrogateDiagnostics::degenerate_bits);

  py::class_<LinearSurrogate>(m, "LinearSurrogate",
                              "Coupling-unaware affine channel map fitted by least squares.")
      .def("predict", &LinearSurrogate::predict, py::arg("config"))
      .def_property_readonly("n_atoms", &LinearSurrogate::n_atoms)
      .def_property_readonly("f_op_hz", &LinearSurrogate::f_op_hz)
      .def_property_readonly("diagnostics", &LinearSurrogate::diagnostics)
      .def("intercept_des", &LinearSurrogate::intercept_des)
      .def("intercept_und", &LinearSurrogate::intercept_und)
      .def("coefficient_des", &LinearSurrogate::coefficient_des, py::arg("bit"))
      .def("coefficient_und", &LinearSurrogate::coefficient_und, py::arg("bit"));

  m.def("fit_linear_surrogate",
        [](const std::vector<ChannelSample>& samples, double f_op_hz) {
          return fit_linear_surrogate(samples, f_op_hz);
        },
        py::arg("samples"), py::arg("f_op_hz"));
  m.def("optimize_lin",
        [](const ChannelOracle& o, const CostSpec& spec, RngStream& rng, int k, int max_sweeps) {
          return optimize_lin(o, spec, rng, k, max_sweeps);
        },
        py::arg("oracle"), py::arg("spec"), py::arg("rng"), py::arg("k") = 500,
        py::arg("max_sweeps") = 5);
  m.def("optimize_lin_from_samples",
        [](const ChannelOracle& o, const CostSpec& spec,
           const std::vector<ChannelSample>& samples, const DmaConfiguration& init,
           int max_sweeps) {
          return optimize_lin_from_samples(o, spec, samples, init, max_sweeps);
        },
        py::arg("oracle"), py::arg("spec"), py::arg("samples"), py::arg("init"),
        py::arg("max_sweeps") = 5);
  m.def("rand_config", &rand_config, py::arg("n"), py::arg("rng"));

  // --- ofdm ---
  py::class_<ofdm::OfdmParams>(m, "OfdmParams")
      .def(py::init<>())
      .def_readwrite("n_fft", &ofdm::OfdmParams::n_fft)
      .def_readwrite("n_active", &ofdm::OfdmParams::n_active)
      .def_readwrite("cp_len", &ofdm::OfdmParams::cp_len)
      .def_readwrite("data_symbols", &ofdm::OfdmParams::data_symbols)
      .def_readwrite("sample_rate_hz", &ofdm::OfdmParams::sample_rate_hz)
      .def_readwrite("bandwidth_hz", &ofdm::OfdmParams::bandwidth_hz)
      .def_property_readonly("bits_per_frame", &ofdm::OfdmParams::bits_per_frame)
      .def_property_readonly("frame_len", &ofdm::OfdmParams::frame_len)
      .def_property_readonly("subcarrier_spacing_hz", &ofdm::OfdmParams::subcarrier_spacing_hz)
      .def("active_subcarriers", &ofdm::OfdmParams::active_subcarriers)
      .def("validate", &ofdm::OfdmParams::validate);

  py::class_<ofdm::Frame>(m, "Frame")
      .def_readonly("bits", &ofdm::Frame::bits)
      .def_readonly("tx_samples", &ofdm::Frame::tx_samples)
      .def_readonly("preamble_seed", &ofdm::Frame::preamble_seed);

  py::class_<ofdm::LinkCondition>(m, "LinkCondition")
      .def(py::init<>())
      .def_static("flat", &ofdm::LinkCondition::flat, py::arg("params"),
                  py::arg("h") = std::complex<double>(1.0, 0.0))
      .def_readwrite("h_des_k", &ofdm::LinkCondition::h_des_k)
      .def_readwrite("h_und_jam", &ofdm::LinkCondition::h_und_jam)
      .def_readwrite("jam_rel_db", &ofdm::LinkCondition::jam_rel_db)
      .def_readwrite("snr_db", &ofdm::LinkCondition::snr_db)
      .def_readwrite("sample_delay", &ofdm::LinkCondition::sample_delay)
      .def_readwrite("jam_offset_hz", &ofdm::LinkCondition::jam_offset_hz)
      .def_readwrite("genie_csi", &ofdm::LinkCondition::genie_csi);

  py::class_<ofdm::LinkOutput>(m, "LinkOutput")
      .def_readonly("samples", &ofdm::LinkOutput::samples)
      .def_readonly("truncated_energy_fraction", &ofdm::LinkOutput::truncated_energy_fraction)
      .def_readonly("cp_insufficiency_warning", &ofdm::LinkOutput::cp_insufficiency_warning);

  py::class_<ofdm::ChannelEstimate>(m, "ChannelEstimate")
      .def_readonly("subcarriers", &ofdm::ChannelEstimate::subcarriers)
      .def_readonly("h", &ofdm::ChannelEstimate::h);

  py::class_<ofdm::DemodResult>(m, "DemodResult")
      .def_readonly("bits", &ofdm::DemodResult::bits)
      .def_readonly("estimate", &ofdm::DemodResult::estimate)
      .def_readonly("equalized", &ofdm::DemodResult::equalized)
      .def_readonly("erased_subcarriers", &ofdm::DemodResult::erased_subcarriers);

  py::class_<ofdm::BerReport>(m, "BerReport")
      .def_readonly("bits_total", &ofdm::BerReport::bits_total)
      .def_readonly("bits_error", &ofdm::BerReport::bits_error)
      .def_readonly("ber", &ofdm::BerReport::ber)
      .def_readonly("statistically_valid", &ofdm::BerReport::statistically_valid)
      .def_readonly("sync_failures", &ofdm::BerReport::sync_failures);

  py::class_<ofdm::ConstellationPoint>(m, "ConstellationPoint")
      .def_readonly("frame", &ofdm::ConstellationPoint::frame)
      .def_readonly("symbol", &ofdm::ConstellationPoint::symbol)
      .def_readonly("subcarrier", &ofdm::ConstellationPoint::subcarrier)
      .def_readonly("i", &ofdm::ConstellationPoint::i)
      .def_readonly("q", &ofdm::ConstellationPoint::q);

  py::class_<ofdm::LinkRunResult>(m, "LinkRunResult")
      .def_readonly("report", &ofdm::LinkRunResult::report)
      .def_readonly("constellation", &ofdm::LinkRunResult::constellation);

  m.def("modulate_frame", &ofdm::modulate_frame, py::arg("bits"), py::arg("params"),
        py::arg("preamble_seed") = ofdm::kDefaultPreambleSeed);
  m.def("apply_link", &ofdm::apply_link, py::arg("frame"), py::arg("cond"), py::arg("params"),
        py::arg("rng"));
  m.def("synchronize",
        [](const std::vector<std::complex<double>>& rx, const ofdm::OfdmParams& params,
           std::uint64_t preamble_seed, int lo, int hi) {
          return ofdm::synchronize(rx, params, preamble_seed, lo, hi);
        },
        py::arg("rx"), py::arg("params"), py::arg("preamble_seed") = ofdm::kDefaultPreambleSeed,
        py::arg("search_lo") = 0, py::arg("search_hi") = -1);
  m.def("demodulate",
        [](const std::vector<std::complex<double>>& rx, int frame_start,
           const ofdm::OfdmParams& params, std::uint64_t preamble_seed) {
          return ofdm::demodulate(rx, frame_start, params, preamble_seed);
        },
        py::arg("rx"), py::arg("frame_start"), py::arg("params"),
        py::arg("preamble_seed") = ofdm::kDefaultPreambleSeed);
  m.def("run_link", &ofdm::run_link, py::arg("bits_target"), py::arg("params"), py::arg("cond"),
        py::arg("rng"), py::arg("preamble_seed") = ofdm::kDefaultPreambleSeed,
        py::arg("constellation_frames") = 1);

  // --- harness ---
  py::enum_<harness::Strategy>(m, "Strategy")
      .value("OPT", harness::Strategy::OPT)
      .value("MAX", harness::Strategy::MAX)
      .value("LIN", harness::Strategy::LIN)
      .value("RAND", harness::Strategy::RAND);

  py::class_<harness::ModelSpec>(m, "ModelSpec")
      .def(py::init<>())
      .def_readwrite("n_atoms", &harness::ModelSpec::n_atoms)
      .def_readwrite("mc_strength", &harness::ModelSpec::mc_strength)
      .def_readwrite("band_lo_hz", &harness::ModelSpec::band_lo_hz)
      .def_readwrite("band_hi_hz", &harness::ModelSpec::band_hi_hz)
      .def_readwrite("n_modes", &harness::ModelSpec::n_modes);

  py::class_<harness::Scenario>(m, "Scenario")
      .def(py::init<>())
      .def_readwrite("master_seed", &harness::Scenario::master_seed)
      .def_readwrite("operating_freqs_hz", &harness::Scenario::operating_freqs_hz)
      .def_readwrite("strategies", &harness::Scenario::strategies)
      .def_readwrite("jam_rel_db_grid", &harness::Scenario::jam_rel_db_grid)
      .def_readwrite("snr_db", &harness::Scenario::snr_db)
      .def_readwrite("bits_target", &harness::Scenario::bits_target)
      .def_readwrite("sample_delay", &harness::Scenario::sample_delay)
      .def_readwrite("jam_offset_subcarriers", &harness::Scenario::jam_offset_subcarriers)
      .def_readwrite("random_search_k", &harness::Scenario::random_search_k)
      .def_readwrite("max_sweeps", &harness::Scenario::max_sweeps)
      .def_readwrite("sweep_points", &harness::Scenario::sweep_points)
      .def_readwrite("sweep_span_hz", &harness::Scenario::sweep_span_hz)
      .def_readwrite("constellation_frames", &harness::Scenario::constellation_frames)
      .def_readwrite("threads", &harness::Scenario::threads)
      .def_readwrite("output_dir", &harness::Scenario::output_dir)
      .def_readwrite("model", &harness::Scenario::model)
      .def_readwrite("ofdm", &harness::Scenario::ofdm)
      .def("validate", &harness::Scenario::validate);

  m.def("load_scenario", &harness::load_scenario, py::arg("path"));
  m.def("scenario_from_json_text", &harness::scenario_from_json_text, py::arg("text"));

  py::class_<harness::BerRow>(m, "BerRow")
      .def_readonly("freq_ghz", &harness::BerRow::freq_ghz)
      .def_readonly("strategy", &harness::BerRow::strategy)
      .def_readonly("jam_rel_db", &harness::BerRow::jam_rel_db)
      .def_readonly("bits_total", &harness::BerRow::bits_total)
      .def_readonly("bits_error", &harness::BerRow::bits_error)
      .def_readonly("ber", &harness::BerRow::ber)
      .def_readonly("valid", &harness::BerRow::valid);

  py::class_<harness::StrategyRun>(m, "StrategyRun")
      .def_readonly("strategy", &harness::StrategyRun::strategy)
      .def_readonly("result", &harness::StrategyRun::result)
      .def_readonly("oracle_calls_total", &harness::StrategyRun::oracle_calls_total);

  py::class_<harness::ExperimentRunner>(m, "ExperimentRunner")
      .def(py::init<harness::Scenario>(), py::arg("scenario"))
      .def_property_readonly("output_dir",
                             [](const harness::ExperimentRunner& r) {
                               return r.output_dir().string();
                             })
      .def("model", &harness::ExperimentRunner::model,
           py::return_value_policy::reference_internal)
      .def("optimize_frequency", &harness::ExperimentRunner::optimize_frequency,
           py::arg("f_op_hz"), py::arg("strategies"))
      .def("make_link_condition", &harness::ExperimentRunner::make_link_condition,
           py::arg("config"), py::arg("f_op_hz"), py::arg("jam_rel_db"))
      .def("run_link_once", &harness::ExperimentRunner::run_link_once, py::arg("config"),
           py::arg("f_op_hz"), py::arg("strategy"), py::arg("jam_rel_db"))
      .def("stage_optimize", &harness::ExperimentRunner::stage_optimize, py::arg("strategy"),
           py::arg("f_op_hz"))
      .def("stage_sweep_spectrum", &harness::ExperimentRunner::stage_sweep_spectrum,
           py::arg("strategy"), py::arg("f_op_hz"))
      .def("stage_run_link",
           [](harness::ExperimentRunner& r, harness::Strategy s, double f, double jam) {
             r.stage_run_link(s, f, jam);
           },
           py::arg("strategy"), py::arg("f_op_hz"), py::arg("jam_rel_db"))
      .def("run_full_experiment", &harness::ExperimentRunner::run_full_experiment)
      .def("ber_rows", &harness::ExperimentRunner::ber_rows);

  m.def("run_full_experiment",
        [](const harness::Scenario& s) {
          harness::ExperimentRunner runner(s);
          runner.run_full_experiment();
          return runner.output_dir().string();
        },
        py::arg("scenario"),
        "Run the whole evaluation and return the output directory.");
}
