#ifndef FRAMEBAYES_PIPELINE_HPP
#define FRAMEBAYES_PIPELINE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "framebayes/bayes.hpp"
#include "framebayes/dynamics.hpp"
#include "framebayes/errors.hpp"
#include "framebayes/excitation.hpp"
#include "framebayes/frame_core.hpp"
#include "framebayes/model.hpp"
#include "framebayes/predict.hpp"
#include "framebayes/sysid.hpp"
#include "framebayes/timeseries.hpp"

namespace framebayes {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// One JSON config drives every stage; all randomness flows from the named
/// seeds in here.
struct PipelineConfig {
  std::string model_path;
  FrameModel model;

  GroundMotionSpec ground_motion;
  NoiseSpec noise;
  std::string reference_accel = "a_5x";
  std::string reference_moment = "r_1i";

  std::map<std::string, double> target;  // parameter name -> value used for data generation
  double damping_ratio = 0.02;
  int substeps = 32;

  SysidConfig sysid;

  int chains = 4;
  int draws = 1000;
  int burn_in = 1000;
  double target_accept = 0.8;
  int max_depth = 10;
  std::uint64_t inference_seed = 0;
  double mass_upper = 5.0e4;
  double s_d = 0.05, s_r = 5.0e4, s_omega = 0.4 * M_PI;
  double log10_scale_upper = 3.0;
  double init_mass_fraction = 0.5;

  std::vector<std::string> qoi;
  int thinning = 40;
  std::uint64_t prediction_seed = 0;

  std::string config_hash;

  ParameterSet target_parameters() const {
    ParameterSet t;
    t.theta_K.resize(model.n_theta_k());
    t.theta_M.resize(model.n_theta_m());
    for (int i = 0; i < model.n_theta_k(); ++i) {
      const auto& name = model.stiffness_params[static_cast<std::size_t>(i)].name;
      auto it = target.find(name);
      if (it == target.end())
        throw ConfigError("simulate.target: missing value for parameter '" + name + "'");
      t.theta_K[i] = it->second;
    }
    for (int i = 0; i < model.n_theta_m(); ++i) {
      const auto& name = model.mass_params[static_cast<std::size_t>(i)];
      auto it = target.find(name);
      if (it == target.end())
        throw ConfigError("simulate.target: missing value for parameter '" + name + "'");
      t.theta_M[i] = it->second;
    }
    return t;
  }

  Priors priors() const {
    Priors p = Priors::defaults(model, mass_upper, log10_scale_upper);
    p.s_d = s_d;
    p.s_r = s_r;
    p.s_omega = s_omega;
    return p;
  }

  // Re-derive every stage seed from one master seed.
  void override_seeds(std::uint64_t master) {
    std::uint64_t s = master;
    ground_motion.seed = splitmix64(s);
    noise.seed = splitmix64(s);
    inference_seed = splitmix64(s);
    prediction_seed = splitmix64(s);
  }
};

inline PipelineConfig parse_pipeline_config(const nlohmann::json& j,
                                            const std::filesystem::path& base_dir) {
  using detail::require;
  PipelineConfig cfg;
  cfg.config_hash = hex64(fnv1a64(j.dump()));

  std::filesystem::path model_path = require(j, "model", "config").get<std::string>();
  if (model_path.is_relative()) model_path = base_dir / model_path;
  cfg.model_path = model_path.string();
  cfg.model = load_frame_model(cfg.model_path);

  {
    const auto& g = require(j, "ground_motion", "config");
    cfg.ground_motion.omega_g = require(g, "omega_g", "ground_motion").get<double>();
    cfg.ground_motion.zeta = require(g, "zeta", "ground_motion").get<double>();
    cfg.ground_motion.phi0 = require(g, "phi0", "ground_motion").get<double>();
    cfg.ground_motion.duration = require(g, "duration", "ground_motion").get<double>();
    cfg.ground_motion.dt = require(g, "dt", "ground_motion").get<double>();
    const auto& w = require(g, "stationary_window", "ground_motion");
    cfg.ground_motion.t_start = w.at(0).get<double>();
    cfg.ground_motion.t_end = w.at(1).get<double>();
    cfg.ground_motion.highpass_cutoff_hz = g.value("highpass_cutoff_hz", 0.5);
    cfg.ground_motion.seed = g.value("seed", 0ULL);
    cfg.ground_motion.validate();
  }

  {
    const auto& n = require(j, "noise", "config");
    if (n.contains("case")) {
      cfg.noise = noise_case(n.at("case").get<int>(), n.value("seed", 0ULL));
    } else {
      cfg.noise.accel_sigma_ratio = require(n, "accel_ratio", "noise").get<double>();
      cfg.noise.moment_sigma_ratio = require(n, "moment_ratio", "noise").get<double>();
      cfg.noise.seed = n.value("seed", 0ULL);
    }
    cfg.noise.validate();
    cfg.reference_accel = n.value("reference_accel", cfg.reference_accel);
    cfg.reference_moment = n.value("reference_moment", cfg.reference_moment);
  }

  {
    const auto& s = require(j, "simulate", "config");
    for (const auto& [key, value] : require(s, "target", "simulate").items())
      cfg.target[key] = value.get<double>();
    cfg.damping_ratio = s.value("damping_ratio", 0.02);
    cfg.substeps = s.value("substeps", 32);
    if (cfg.damping_ratio < 0.0) throw ConfigError("simulate.damping_ratio must be >= 0");
    if (cfg.substeps < 1) throw ConfigError("simulate.substeps must be >= 1");
    cfg.target_parameters();  // validates coverage of the parameter map
  }

  {
    const auto& s = require(j, "sysid", "config");
    cfg.sysid.block_rows = s.value("block_rows", 30);
    cfg.sysid.order = s.value("order", 10);
    cfg.sysid.n_modes = s.value("n_modes", 2);
    cfg.sysid.reference_d = require(s, "reference_d", "sysid").get<std::string>();
    cfg.sysid.reference_r = require(s, "reference_r", "sysid").get<std::string>();
    if (s.contains("inputs"))
      for (const auto& i : s.at("inputs")) cfg.sysid.input_channels.push_back(i.get<std::string>());
    else
      cfg.sysid.input_channels = cfg.model.input_channels_hint;
    if (cfg.sysid.block_rows < 2 || cfg.sysid.order < 2 || cfg.sysid.n_modes < 1)
      throw ConfigError("sysid: block_rows, order and n_modes must be positive (order >= 2)");
  }

  {
    const auto& inf = require(j, "inference", "config");
    cfg.chains = inf.value("chains", 4);
    cfg.draws = inf.value("draws", 1000);
    cfg.burn_in = inf.value("burn_in", 1000);
    cfg.target_accept = inf.value("target_accept", 0.8);
    cfg.max_depth = inf.value("max_depth", 10);
    cfg.inference_seed = inf.value("seed", 0ULL);
    cfg.init_mass_fraction = inf.value("init_mass_fraction", 0.5);
    if (cfg.chains < 2) throw ConfigError("inference.chains must be >= 2");
    if (cfg.draws < 1 || cfg.burn_in < 1) throw ConfigError("inference: draws and burn_in must be >= 1");
    if (!(cfg.target_accept > 0.0 && cfg.target_accept < 1.0))
      throw ConfigError("inference.target_accept must lie in (0,1)");
    const auto& p = require(inf, "priors", "inference");
    cfg.mass_upper = require(p, "mass_upper", "priors").get<double>();
    cfg.s_d = require(p, "s_d", "priors").get<double>();
    cfg.s_r = require(p, "s_r", "priors").get<double>();
    cfg.s_omega = require(p, "s_omega", "priors").get<double>();
    cfg.log10_scale_upper = p.value("log10_scale_upper", 3.0);
  }

  {
    const auto& pr = require(j, "prediction", "config");
    for (const auto& q : require(pr, "qoi", "prediction")) cfg.qoi.push_back(q.get<std::string>());
    cfg.thinning = pr.value("thinning", 40);
    cfg.prediction_seed = pr.value("seed", 0ULL);
    if (cfg.thinning < 1) throw ConfigError("prediction.thinning must be >= 1");
    for (const auto& q : cfg.qoi) parse_qoi(q, cfg.model);
  }

  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  try {
    return parse_pipeline_config(j, std::filesystem::path(path).parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Stage artifacts
// ---------------------------------------------------------------------------

namespace artifact {
inline constexpr const char* timehistory = "timehistory.csv";
inline constexpr const char* timehistory_clean = "timehistory_clean.csv";
inline constexpr const char* modal_dataset = "modal_dataset.json";
inline constexpr const char* draws = "draws.csv";
inline constexpr const char* diagnostics = "diagnostics.json";
inline constexpr const char* summary = "summary.json";
inline constexpr const char* predictive_summary = "predictive_summary.json";
inline constexpr const char* report = "report.md";
}  // namespace artifact

inline std::string artifact_path(const std::string& outdir, const char* name) {
  return (std::filesystem::path(outdir) / name).string();
}

inline void require_artifact(const std::string& outdir, const char* name, const char* producer) {
  if (!std::filesystem::exists(artifact_path(outdir, name)))
    throw ConfigError("missing input artifact '" + std::string(name) + "' in '" + outdir +
                      "'; run the '" + producer + "' stage first");
}

inline nlohmann::json provenance(const PipelineConfig& cfg, const std::string& stage) {
  return nlohmann::json{{"config_hash", cfg.config_hash},
                        {"stage", stage},
                        {"seeds",
                         {{"excitation", cfg.ground_motion.seed},
                          {"noise", cfg.noise.seed},
                          {"inference", cfg.inference_seed},
                          {"prediction", cfg.prediction_seed}}}};
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
  return j;
}

// ---------------------------------------------------------------------------
// simulate: ground motion -> time histories -> observation noise
// ---------------------------------------------------------------------------

/// Clean response channel set for a parameter point: ground channels first
/// (x channels carry the record, y channels are quiescent), then absolute
/// accelerations at the master DOFs, then the observed resultants.
inline ChannelSet simulate_channels(const FrameModel& model, const ParameterSet& theta,
                                    const GroundMotionSpec& gm, double damping_ratio,
                                    int substeps) {
  const Eigen::VectorXd ag = synthesize_record(gm);
  const TimeHistoryResult th = integrate(model, theta, damping_ratio, ag, gm.dt, substeps);

  ChannelSet set;
  set.dt = gm.dt;
  const Eigen::Index T = ag.size();
  const int n_ground = static_cast<int>(model.input_channels_hint.size());
  set.data.resize(n_ground + model.n_master + static_cast<int>(model.observed.size()), T);
  int row = 0;
  for (const auto& name : model.input_channels_hint) {
    set.names.push_back(name);
    if (!name.empty() && name.back() == 'x')
      set.data.row(row) = ag.transpose();
    else
      set.data.row(row).setZero();
    ++row;
  }
  for (int i = 0; i < model.n_master; ++i) {
    set.names.push_back(model.master_dofs[static_cast<std::size_t>(i)].channel);
    set.data.row(row++) = th.accel_abs.row(i);
  }
  for (std::size_t i = 0; i < model.observed.size(); ++i) {
    set.names.push_back(model.observed[i].channel);
    set.data.row(row++) = th.moments.row(static_cast<Eigen::Index>(i));
  }
  return set;
}

inline void run_simulate(const PipelineConfig& cfg, const std::string& outdir) {
  std::filesystem::create_directories(outdir);
  const ChannelSet clean = simulate_channels(cfg.model, cfg.target_parameters(),
                                             cfg.ground_motion, cfg.damping_ratio, cfg.substeps);
  const ChannelSet noisy =
      add_noise(clean, cfg.noise, cfg.reference_accel, cfg.reference_moment);
  const std::vector<std::string> comments = {
      "config_hash=" + cfg.config_hash,
      "excitation_seed=" + std::to_string(cfg.ground_motion.seed) +
          " noise_seed=" + std::to_string(cfg.noise.seed)};
  write_channels_csv(artifact_path(outdir, artifact::timehistory_clean), clean, comments);
  write_channels_csv(artifact_path(outdir, artifact::timehistory), noisy, comments);
}

// ---------------------------------------------------------------------------
// identify: time histories -> modal dataset
// ---------------------------------------------------------------------------

inline nlohmann::json modal_dataset_to_json(const ModalDataset& ds) {
  nlohmann::json j;
  j["reference_d"] = ds.reference_d;
  j["reference_r"] = ds.reference_r;
  j["d_channels"] = ds.d_channels;
  j["r_channels"] = ds.r_channels;
  j["modes"] = nlohmann::json::array();
  for (const auto& m : ds.modes) {
    nlohmann::json jm;
    jm["omega"] = m.omega;
    jm["damping"] = m.damping;
    jm["normalization"] = m.normalization;
    jm["d"] = std::vector<double>(m.d.data(), m.d.data() + m.d.size());
    jm["r"] = std::vector<double>(m.r.data(), m.r.data() + m.r.size());
    j["modes"].push_back(jm);
  }
  return j;
}

inline ModalDataset modal_dataset_from_json(const nlohmann::json& j) {
  ModalDataset ds;
  ds.reference_d = j.value("reference_d", std::string());
  ds.reference_r = j.value("reference_r", std::string());
  for (const auto& c : j.at("d_channels")) ds.d_channels.push_back(c.get<std::string>());
  for (const auto& c : j.at("r_channels")) ds.r_channels.push_back(c.get<std::string>());
  for (const auto& jm : j.at("modes")) {
    ModalModeData m;
    m.omega = jm.at("omega").get<double>();
    m.damping = jm.value("damping", 0.0);
    m.normalization = jm.value("normalization", 1.0);
    const auto dv = jm.at("d").get<std::vector<double>>();
    const auto rv = jm.at("r").get<std::vector<double>>();
    m.d = Eigen::Map<const Eigen::VectorXd>(dv.data(), static_cast<Eigen::Index>(dv.size()));
    m.r = Eigen::Map<const Eigen::VectorXd>(rv.data(), static_cast<Eigen::Index>(rv.size()));
    ds.modes.push_back(std::move(m));
  }
  return ds;
}

inline ModalDataset identify_from_channels(const PipelineConfig& cfg, const ChannelSet& data,
                                           bool magnitude_phase) {
  SysidConfig sc = cfg.sysid;
  sc.magnitude_phase = magnitude_phase;
  return identify_modal_dataset(data, cfg.model.master_channels(),
                                cfg.model.resultant_channels(), sc);
}

inline void run_identify(const PipelineConfig& cfg, const std::string& outdir,
                         bool magnitude_phase = false) {
  require_artifact(outdir, artifact::timehistory, "simulate");
  const ChannelSet data = read_channels_csv(artifact_path(outdir, artifact::timehistory));
  const ModalDataset ds = identify_from_channels(cfg, data, magnitude_phase);
  nlohmann::json j = modal_dataset_to_json(ds);
  j["provenance"] = provenance(cfg, "identify");
  write_json(artifact_path(outdir, artifact::modal_dataset), j);
}

// ---------------------------------------------------------------------------
// update: modal dataset -> posterior draws
// ---------------------------------------------------------------------------

inline void write_draws_csv(const std::string& path, const PosteriorSamples& s,
                            const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "chain,draw";
  for (const auto& n : s.names) out << "," << n;
  out << "\n";
  for (std::size_t c = 0; c < s.chains.size(); ++c)
    for (Eigen::Index d = 0; d < s.chains[c].rows(); ++d) {
      out << c << "," << d;
      for (Eigen::Index p = 0; p < s.chains[c].cols(); ++p)
        out << "," << format_double(s.chains[c](d, p));
      out << "\n";
    }
}

struct DrawsFile {
  std::vector<std::string> names;
  Eigen::MatrixXd draws;  // all chains stacked
  int n_chains = 0;
};

inline DrawsFile read_draws_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  do {
    if (!std::getline(in, line)) throw ConfigError("'" + path + "': empty file");
  } while (!line.empty() && line[0] == '#');
  DrawsFile f;
  {
    std::stringstream header(line);
    std::string cell;
    int k = 0;
    while (std::getline(header, cell, ',')) {
      if (k >= 2) f.names.push_back(cell);
      ++k;
    }
  }
  std::vector<std::vector<double>> rows;
  int max_chain = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<double> vals;
    int k = 0;
    while (std::getline(row, cell, ',')) {
      if (k == 0) max_chain = std::max(max_chain, std::stoi(cell));
      if (k >= 2) vals.push_back(std::stod(cell));
      ++k;
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ConfigError("'" + path + "': no draws");
  f.n_chains = max_chain + 1;
  f.draws.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(f.names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < f.names.size(); ++k)
      f.draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return f;
}

inline void run_update(const PipelineConfig& cfg, const std::string& outdir, int threads = 1,
                       bool allow_unconverged = false) {
  require_artifact(outdir, artifact::modal_dataset, "identify");
  const ModalDataset ds =
      modal_dataset_from_json(read_json(artifact_path(outdir, artifact::modal_dataset)));

  UpdateProblem problem(cfg.model, ds, cfg.priors());
  NutsConfig nc;
  nc.chains = cfg.chains;
  nc.draws = cfg.draws;
  nc.burn_in = cfg.burn_in;
  nc.target_accept = cfg.target_accept;
  nc.max_depth = cfg.max_depth;
  nc.seed = cfg.inference_seed;
  nc.threads = threads;
  const PosteriorSamples samples = sample_posterior(problem, nc, cfg.init_mass_fraction);

  write_draws_csv(artifact_path(outdir, artifact::draws), samples,
                  {"config_hash=" + cfg.config_hash,
                   "inference_seed=" + std::to_string(cfg.inference_seed)});

  nlohmann::json diag;
  diag["provenance"] = provenance(cfg, "update");
  for (std::size_t p = 0; p < samples.names.size(); ++p)
    diag["rhat"][samples.names[p]] = samples.rhat_values[static_cast<Eigen::Index>(p)];
  diag["divergences"] = samples.divergences;
  diag["step_sizes"] = samples.step_sizes;
  diag["mean_accept"] = samples.mean_accept;
  diag["max_rhat"] = samples.max_rhat();
  write_json(artifact_path(outdir, artifact::diagnostics), diag);

  nlohmann::json summary_json;
  summary_json["provenance"] = provenance(cfg, "update");
  const Eigen::MatrixXd all = samples.stacked();
  for (std::size_t p = 0; p < samples.names.size(); ++p) {
    const Eigen::VectorXd col = all.col(static_cast<Eigen::Index>(p));
    const Summary s = summarize(std::vector<double>(col.data(), col.data() + col.size()));
    summary_json["parameters"][samples.names[p]] = {{"mean", s.mean}, {"sd", s.sd},
                                                    {"cov", s.cov},   {"p5", s.p5},
                                                    {"p50", s.p50},   {"p95", s.p95}};
  }
  write_json(artifact_path(outdir, artifact::summary), summary_json);

  if (!allow_unconverged && samples.max_rhat() >= 1.1)
    throw ConvergenceError("chains failed to converge: max R-hat = " +
                           std::to_string(samples.max_rhat()) +
                           " (rerun with --allow-unconverged to keep the draws)");
}

// ---------------------------------------------------------------------------
// predict: posterior draws -> predictive peak distributions
// ---------------------------------------------------------------------------

inline void run_predict(const PipelineConfig& cfg, const std::string& outdir, int threads = 1,
                        bool allow_unconverged = false) {
  require_artifact(outdir, artifact::draws, "update");
  require_artifact(outdir, artifact::diagnostics, "update");
  const nlohmann::json diag = read_json(artifact_path(outdir, artifact::diagnostics));
  if (!allow_unconverged && diag.value("max_rhat", 0.0) >= 1.1)
    throw ConvergenceError("posterior is not converged (max R-hat = " +
                           std::to_string(diag.value("max_rhat", 0.0)) +
                           "); pass --allow-unconverged to predict anyway");

  const DrawsFile draws = read_draws_csv(artifact_path(outdir, artifact::draws));
  GroundMotionSpec gm = cfg.ground_motion;
  gm.seed = cfg.prediction_seed;
  const Eigen::VectorXd ag = synthesize_record(gm);

  std::vector<QuantityOfInterest> qois;
  for (const auto& q : cfg.qoi) qois.push_back(parse_qoi(q, cfg.model));
  const auto results = predict_peaks(cfg.model, draws.draws, cfg.thinning, ag, gm.dt,
                                     cfg.damping_ratio, cfg.substeps, qois, threads);

  nlohmann::json summary_json;
  summary_json["provenance"] = provenance(cfg, "predict");
  for (const auto& r : results) {
    {
      std::ofstream out(artifact_path(outdir, ("predictive_" + r.name + "_cdf.csv").c_str()));
      out << "# config_hash=" << cfg.config_hash << "\n";
      out << "value,probability\n";
      for (std::size_t i = 0; i < r.cdf.value.size(); ++i)
        out << format_double(r.cdf.value[i]) << "," << format_double(r.cdf.probability[i]) << "\n";
    }
    if (r.density.grid.size() > 0) {
      std::ofstream out(artifact_path(outdir, ("predictive_" + r.name + "_kde.csv").c_str()));
      out << "# config_hash=" << cfg.config_hash << "\n";
      out << "value,density\n";
      for (Eigen::Index i = 0; i < r.density.grid.size(); ++i)
        out << format_double(r.density.grid[i]) << "," << format_double(r.density.density[i])
            << "\n";
    }
    summary_json["qoi"][r.name] = {{"mean", r.summary.mean}, {"sd", r.summary.sd},
                                   {"cov", r.summary.cov},   {"p5", r.summary.p5},
                                   {"p50", r.summary.p50},   {"p95", r.summary.p95},
                                   {"skipped_draws", r.skipped_draws},
                                   {"n_samples", r.samples.size()}};
  }
  write_json(artifact_path(outdir, artifact::predictive_summary), summary_json);
}

// ---------------------------------------------------------------------------
// report: posterior means across one or more runs
// ---------------------------------------------------------------------------

inline std::string render_report(const PipelineConfig& cfg,
                                 const std::vector<std::string>& run_dirs) {
  std::vector<DrawsFile> runs;
  for (const auto& dir : run_dirs) {
    require_artifact(dir, artifact::draws, "update");
    runs.push_back(read_draws_csv(artifact_path(dir, artifact::draws)));
  }
  if (runs.empty()) throw ConfigError("report needs at least one run directory");
  const auto& names = runs.front().names;
  for (const auto& r : runs)
    if (r.names != names) throw ConfigError("report: run directories hold different parameters");

  std::ostringstream md;
  md << "# Posterior summary (" << runs.size() << " run" << (runs.size() > 1 ? "s" : "")
     << ")\n\n";
  md << "| Parameter | Target | Mean of posterior mean | CoV of posterior mean | Mean posterior s.d. |\n";
  md << "|---|---|---|---|---|\n";
  for (std::size_t p = 0; p < names.size(); ++p) {
    std::vector<double> means, sds;
    for (const auto& r : runs) {
      const Eigen::VectorXd col = r.draws.col(static_cast<Eigen::Index>(p));
      const Summary s = summarize(std::vector<double>(col.data(), col.data() + col.size()));
      means.push_back(s.mean);
      sds.push_back(s.sd);
    }
    const Summary across = summarize(means);
    const Summary sd_across = summarize(sds);
    const auto target_it = cfg.target.find(names[p]);
    md << "| " << names[p] << " | ";
    if (target_it != cfg.target.end())
      md << target_it->second;
    else
      md << "-";
    char buf[64];
    std::snprintf(buf, sizeof(buf), " | %.6g | %.3g | %.6g |\n", across.mean,
                  runs.size() > 1 ? across.cov : 0.0, sd_across.mean);
    md << buf;
  }
  return md.str();
}

inline void run_report(const PipelineConfig& cfg, const std::string& outdir,
                       std::vector<std::string> run_dirs = {}) {
  if (run_dirs.empty()) run_dirs.push_back(outdir);
  const std::string text = render_report(cfg, run_dirs);
  std::ofstream out(artifact_path(outdir, artifact::report));
  if (!out) throw ConfigError("cannot write report");
  out << text;
  std::cout << text;
}

inline void run_all(const PipelineConfig& cfg, const std::string& outdir, int threads = 1,
                    bool allow_unconverged = false, bool magnitude_phase = false) {
  run_simulate(cfg, outdir);
  run_identify(cfg, outdir, magnitude_phase);
  run_update(cfg, outdir, threads, allow_unconverged);
  run_predict(cfg, outdir, threads, allow_unconverged);
  run_report(cfg, outdir);
}

}  // namespace framebayes

#endif
