// dma-sim: command line runner for the DMA link experiment.
//
// Subcommands mirror the experiment stages; each one can run independently
// against artifacts persisted by earlier stages (model file, codebook).

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dmasim/errors.hpp"
#include "dmasim/harness.hpp"

namespace {

using dmasim::harness::ExperimentRunner;
using dmasim::harness::Scenario;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

Scenario make_scenario(const CommonArgs& args) {
  Scenario s = dmasim::harness::load_scenario(args.config_path);
  if (!args.out_dir.empty()) {
    s.output_dir = args.out_dir;
  }
  if (args.seed) {
    s.master_seed = *args.seed;
  }
  if (args.threads) {
    s.threads = *args.threads;
  }
  s.validate();
  return s;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Scenario config file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir,
                  "Output directory (overrides the config file and DMA_SIM_OUT)");
  cmd->add_option("--seed", args.seed, "Master seed override");
  cmd->add_option("--threads", args.threads, "Worker threads for link runs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic metasurface antenna link simulator"};
  app.require_subcommand(1);

  CommonArgs full_args;
  CLI::App* full = app.add_subcommand("full-experiment",
                                      "Optimize all strategies, sweep spectra and run the "
                                      "jamming BER grid for every operating frequency");
  add_common(full, full_args);

  CommonArgs opt_args;
  std::string opt_strategy;
  double opt_fop_ghz = 0.0;
  CLI::App* opt = app.add_subcommand("optimize",
                                     "Optimize one strategy at one operating frequency and "
                                     "record it in the codebook");
  add_common(opt, opt_args);
  opt->add_option("--strategy", opt_strategy, "OPT, MAX, LIN or RAND")->required();
  opt->add_option("--f-op-ghz", opt_fop_ghz, "Operating frequency in GHz")->required();

  CommonArgs sweep_args;
  std::string sweep_strategy;
  double sweep_fop_ghz = 0.0;
  CLI::App* sweep = app.add_subcommand("sweep-spectrum",
                                       "Sweep the optimized configuration's channels over "
                                       "frequency (requires a codebook entry)");
  add_common(sweep, sweep_args);
  sweep->add_option("--strategy", sweep_strategy, "OPT, MAX, LIN or RAND")->required();
  sweep->add_option("--f-op-ghz", sweep_fop_ghz, "Operating frequency in GHz")->required();

  CommonArgs link_args;
  std::string link_strategy;
  double link_fop_ghz = 0.0;
  double link_jam_db = 0.0;
  std::string link_iq_dump;
  CLI::App* link = app.add_subcommand("run-link",
                                      "Run the OFDM link for one (strategy, frequency, jammer "
                                      "power) point (requires a codebook entry)");
  add_common(link, link_args);
  link->add_option("--strategy", link_strategy, "OPT, MAX, LIN or RAND")->required();
  link->add_option("--f-op-ghz", link_fop_ghz, "Operating frequency in GHz")->required();
  link->add_option("--jam-rel-db", link_jam_db, "Jammer-to-signal power ratio at the ports, dB")
      ->required();
  link->add_option("--dump-iq", link_iq_dump,
                   "Also write one received frame as interleaved float32 I/Q");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return dmasim::kExitConfigError;
  }

  try {
    if (*full) {
      ExperimentRunner runner(make_scenario(full_args));
      runner.run_full_experiment();
      std::printf("full experiment written to %s\n", runner.output_dir().string().c_str());
    } else if (*opt) {
      ExperimentRunner runner(make_scenario(opt_args));
      runner.stage_optimize(dmasim::harness::strategy_from_string(opt_strategy),
                            opt_fop_ghz * 1e9);
      std::printf("codebook updated in %s\n", runner.output_dir().string().c_str());
    } else if (*sweep) {
      ExperimentRunner runner(make_scenario(sweep_args));
      runner.stage_sweep_spectrum(dmasim::harness::strategy_from_string(sweep_strategy),
                                  sweep_fop_ghz * 1e9);
      std::printf("spectrum written in %s\n", runner.output_dir().string().c_str());
    } else if (*link) {
      ExperimentRunner runner(make_scenario(link_args));
      std::optional<std::filesystem::path> iq;
      if (!link_iq_dump.empty()) {
        iq = link_iq_dump;
      }
      runner.stage_run_link(dmasim::harness::strategy_from_string(link_strategy),
                            link_fop_ghz * 1e9, link_jam_db, iq);
      std::printf("ber table updated in %s\n", runner.output_dir().string().c_str());
    }
  } catch (const dmasim::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return dmasim::kExitConfigError;
  } catch (const dmasim::ModelError& e) {
    std::fprintf(stderr, "model error: %s\n", e.what());
    return dmasim::kExitModelError;
  } catch (const dmasim::SyncError& e) {
    std::fprintf(stderr, "sync error: %s\n", e.what());
    return dmasim::kExitSyncError;
  } catch (const dmasim::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return dmasim::kExitIoError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return dmasim::kExitOk;
}
