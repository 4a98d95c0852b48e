// Command-line front end: one JSON config drives the pipeline stages
//   simulate -> identify -> update -> predict -> report
// with file-based handoffs inside the output directory.

#include <cstdint>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "framebayes/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitConvergence = 4;

struct CommonOptions {
  std::string config_path;
  std::string outdir = "out";
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
  int threads = 0;
  bool magnitude_phase = false;
  bool allow_unconverged = false;
  std::vector<std::string> run_dirs;
};

int resolve_threads(const CommonOptions& opt, int chains) {
  if (opt.threads > 0) return opt.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return std::max(1, std::min<int>(chains, hw ? static_cast<int>(hw) : 1));
}

int dispatch(const std::string& command, const CommonOptions& opt) {
  framebayes::PipelineConfig cfg = framebayes::load_pipeline_config(opt.config_path);
  if (opt.has_seed_override) cfg.override_seeds(opt.seed_override);
  const int threads = resolve_threads(opt, cfg.chains);

  if (command == "simulate") {
    framebayes::run_simulate(cfg, opt.outdir);
  } else if (command == "identify") {
    framebayes::run_identify(cfg, opt.outdir, opt.magnitude_phase);
  } else if (command == "update") {
    framebayes::run_update(cfg, opt.outdir, threads, opt.allow_unconverged);
  } else if (command == "predict") {
    framebayes::run_predict(cfg, opt.outdir, threads, opt.allow_unconverged);
  } else if (command == "report") {
    framebayes::run_report(cfg, opt.outdir, opt.run_dirs);
  } else if (command == "all") {
    framebayes::run_all(cfg, opt.outdir, threads, opt.allow_unconverged, opt.magnitude_phase);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian model updating of planar frames from modal displacement and "
               "stress-resultant data"};
  app.require_subcommand(1);

  CommonOptions opt;
  const std::vector<std::string> commands = {"simulate", "identify", "update",
                                             "predict",  "report",   "all"};
  const std::vector<std::string> help = {
      "synthesize ground motion and response time histories",
      "identify a modal dataset from the time histories",
      "sample the posterior of the structural and noise parameters",
      "posterior-predictive peak responses under a fresh excitation",
      "tabulate posterior means across one or more runs",
      "run every stage in order"};
  for (std::size_t i = 0; i < commands.size(); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i], help[i]);
    sub->add_option("--config", opt.config_path, "pipeline config JSON")->required();
    sub->add_option("--out", opt.outdir, "output directory (default: out)");
    sub->add_option("--seed-override", opt.seed_override,
                    "re-derive every stage seed from this master seed")
        ->each([&](const std::string&) { opt.has_seed_override = true; });
    sub->add_option("--threads", opt.threads, "worker threads (default: min(chains, cores))");
    sub->add_flag("--magnitude-phase", opt.magnitude_phase,
                  "use magnitude-with-sign mode shapes during identification");
    sub->add_flag("--allow-unconverged", opt.allow_unconverged,
                  "keep going when any R-hat is >= 1.1");
    if (commands[i] == "report")
      sub->add_option("--runs", opt.run_dirs, "extra run directories to aggregate");
  }

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, opt);
  } catch (const framebayes::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const framebayes::ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const framebayes::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
