// Experiment harness: configuration, seeded Monte-Carlo runners for the
// single-user and multi-user modes, converter diagnostics, and CSV output.
//
// Determinism contract: a given (config, seed) produces byte-identical CSV
// regardless of the thread count. Every trial draws from its own RNG stream
// keyed by (seed, trial); all methods of a run share the trial stream so they
// see identical channels and noise (common random numbers).
#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdmimo/adc.hpp"
#include "sdmimo/channel.hpp"
#include "sdmimo/common.hpp"
#include "sdmimo/estimator.hpp"
#include "sdmimo/metrics.hpp"
#include "sdmimo/mumimo.hpp"
#include "sdmimo/noise_model.hpp"
#include "sdmimo/parallel.hpp"
#include "sdmimo/rng.hpp"

namespace sdmimo {

// A method is a front end plus optional policy overrides, written as a token:
//   unquantized | onebit | sigmadelta[:c=<clip>][:psi=0][:c-step1]
// ":c=<v>" fixes the clip level instead of the adaptive rule, ":psi=0" keeps
// the converter at broadside during Step 2, ":c-step1" reuses the Step-1 clip
// level in Step 2.
struct MethodSpec {
  std::string token;
  FrontEnd::Kind kind = FrontEnd::Kind::sigma_delta;
  VoltagePolicy voltage = VoltagePolicy::adaptive;
  double fixed_clip = 1.0;
  bool steer_step2 = true;
  bool use_step1_clip_in_step2 = false;

  static MethodSpec parse(const std::string& token) {
    MethodSpec m;
    m.token = token;
    std::vector<std::string> parts;
    std::stringstream ss(token);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.empty()) throw std::invalid_argument("method: empty token");

    if (parts[0] == "unquantized") m.kind = FrontEnd::Kind::unquantized;
    else if (parts[0] == "onebit") m.kind = FrontEnd::Kind::one_bit;
    else if (parts[0] == "sigmadelta") m.kind = FrontEnd::Kind::sigma_delta;
    else throw std::invalid_argument("method: unknown front end '" + parts[0] + "'");

    for (std::size_t i = 1; i < parts.size(); ++i) {
      const std::string& opt = parts[i];
      if (opt == "psi=0") m.steer_step2 = false;
      else if (opt == "c-step1") m.use_step1_clip_in_step2 = true;
      else if (opt.rfind("c=", 0) == 0) {
        m.voltage = VoltagePolicy::fixed_clip;
        m.fixed_clip = std::stod(opt.substr(2));
        if (!(m.fixed_clip > 0)) throw std::invalid_argument("method: clip must be > 0");
      } else {
        throw std::invalid_argument("method: unknown option '" + opt + "'");
      }
    }
    return m;
  }
};

enum class ExperimentMode { su, mu, noise_spectrum, input_corr, beampattern, codebook_dump };

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::su;
  std::vector<double> snr_db = {0.0};
  int trials = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  bool per_trial = false;
  std::string out;     // empty -> stdout
  std::string figure;  // free-form label echoed into the CSV header

  // Geometry and pilots
  int n_rx = 128;
  int n_tx = 32;
  double spacing = 0.125;
  int t1 = 10;
  int t2 = 1;
  int t_mu = 1;

  // Channel
  int n_paths = 1;
  int n_users = 8;
  int paths_per_user = 1;
  double aoa_sector_deg = 45.0;
  double aod_sector_deg = 75.0;
  double min_aoa_spacing_deg = 20.0;
  double min_aod_spacing_cos = 0.1;
  std::string gain_model = "unit_modulus";  // or truncated_gaussian
  double tau = 0.5;
  bool on_grid_aod = true;
  bool on_grid_aoa = false;
  bool noiseless = false;

  // Grids
  int aoa_grid_points = 181;
  int aod_grid_size = 128;

  std::vector<std::string> methods = {"unquantized", "sigmadelta"};

  // Diagnostics
  int snapshots = 10000;
  std::vector<double> steering_deg = {0.0};
  double quant_level_override = 0.0;  // > 0 replaces the adaptive level
  int beampattern_stage = 2;

  void validate() const {
    if (snr_db.empty()) throw std::invalid_argument("config: snr list must not be empty");
    if (trials < 1) throw std::invalid_argument("config: trials must be >= 1");
    if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
    if (n_rx < 1) throw std::invalid_argument("config: n_rx must be >= 1");
    if (n_tx < 1) throw std::invalid_argument("config: n_tx must be >= 1");
    if (!(spacing > 0)) throw std::invalid_argument("config: spacing must be > 0");
    if (t1 < 1 || t2 < 1 || t_mu < 1) throw std::invalid_argument("config: pilot lengths must be >= 1");
    if (n_paths < 1) throw std::invalid_argument("config: n_paths must be >= 1");
    if (n_users < 1) throw std::invalid_argument("config: n_users must be >= 1");
    if (paths_per_user < 1) throw std::invalid_argument("config: paths_per_user must be >= 1");
    if (aoa_grid_points < 2) throw std::invalid_argument("config: aoa_grid_points must be >= 2");
    if (aod_grid_size < 2 || (aod_grid_size & (aod_grid_size - 1)) != 0)
      throw std::invalid_argument("config: aod_grid_size must be a power of two");
    if (methods.empty()) throw std::invalid_argument("config: methods list must not be empty");
    if (gain_model != "unit_modulus" && gain_model != "truncated_gaussian")
      throw std::invalid_argument("config: gain_model must be unit_modulus or truncated_gaussian");
    if (snapshots < 2) throw std::invalid_argument("config: snapshots must be >= 2");
    for (const auto& m : methods) MethodSpec::parse(m);
  }

  AoaGrid arrival_grid() const {
    return AoaGrid::uniform_degrees(-90.0, 90.0, 180.0 / (aoa_grid_points - 1));
  }

  ChannelSamplerSpec sampler_spec() const {
    ChannelSamplerSpec s;
    s.aoa_sector = deg2rad(aoa_sector_deg);
    s.aod_sector = deg2rad(aod_sector_deg);
    s.min_aoa_spacing = deg2rad(min_aoa_spacing_deg);
    s.min_aod_spacing_cos = min_aod_spacing_cos;
    s.gain_model = gain_model == "unit_modulus" ? GainModel::unit_modulus : GainModel::truncated_gaussian;
    s.tau = tau;
    s.on_grid_aod = on_grid_aod;
    s.on_grid_aoa = on_grid_aoa;
    return s;
  }
};

// ---------------------------------------------------------------------------
// key=value config files ('#' starts a comment; booleans are true/false;
// lists are comma separated).

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
}

inline std::vector<double> parse_double_list(const std::string& v, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad number for '" + key + "': " + item);
    }
  }
  if (out.empty()) throw std::invalid_argument("config: empty list for '" + key + "'");
  return out;
}

}  // namespace detail

inline ExperimentMode parse_mode(const std::string& v) {
  if (v == "su") return ExperimentMode::su;
  if (v == "mu") return ExperimentMode::mu;
  if (v == "noise-spectrum") return ExperimentMode::noise_spectrum;
  if (v == "input-corr") return ExperimentMode::input_corr;
  if (v == "beampattern") return ExperimentMode::beampattern;
  if (v == "codebook-dump") return ExperimentMode::codebook_dump;
  throw std::invalid_argument("config: unknown mode '" + v + "'");
}

inline void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double_list;
  auto to_int = [&](const std::string& v) {
    try {
      return std::stoi(v);
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
    }
  };
  auto to_double = [&](const std::string& v) {
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad number for '" + key + "': " + v);
    }
  };

  if (key == "mode") cfg.mode = parse_mode(value);
  else if (key == "snr_db") cfg.snr_db = parse_double_list(value, key);
  else if (key == "trials") cfg.trials = to_int(value);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "threads") cfg.threads = to_int(value);
  else if (key == "per_trial") cfg.per_trial = parse_bool(value, key);
  else if (key == "out") cfg.out = value;
  else if (key == "figure") cfg.figure = value;
  else if (key == "n_rx") cfg.n_rx = to_int(value);
  else if (key == "n_tx") cfg.n_tx = to_int(value);
  else if (key == "spacing") cfg.spacing = to_double(value);
  else if (key == "t1") cfg.t1 = to_int(value);
  else if (key == "t2") cfg.t2 = to_int(value);
  else if (key == "t_mu") cfg.t_mu = to_int(value);
  else if (key == "n_paths") cfg.n_paths = to_int(value);
  else if (key == "n_users") cfg.n_users = to_int(value);
  else if (key == "paths_per_user") cfg.paths_per_user = to_int(value);
  else if (key == "aoa_sector_deg") cfg.aoa_sector_deg = to_double(value);
  else if (key == "aod_sector_deg") cfg.aod_sector_deg = to_double(value);
  else if (key == "min_aoa_spacing_deg") cfg.min_aoa_spacing_deg = to_double(value);
  else if (key == "min_aod_spacing_cos") cfg.min_aod_spacing_cos = to_double(value);
  else if (key == "gain_model") cfg.gain_model = value;
  else if (key == "tau") cfg.tau = to_double(value);
  else if (key == "on_grid_aod") cfg.on_grid_aod = parse_bool(value, key);
  else if (key == "on_grid_aoa") cfg.on_grid_aoa = parse_bool(value, key);
  else if (key == "noiseless") cfg.noiseless = parse_bool(value, key);
  else if (key == "aoa_grid_points") cfg.aoa_grid_points = to_int(value);
  else if (key == "aod_grid_size") cfg.aod_grid_size = to_int(value);
  else if (key == "methods") cfg.methods = detail::split_list(value);
  else if (key == "snapshots") cfg.snapshots = to_int(value);
  else if (key == "steering_deg") cfg.steering_deg = parse_double_list(value, key);
  else if (key == "quant_level") cfg.quant_level_override = to_double(value);
  else if (key == "beampattern_stage") cfg.beampattern_stage = to_int(value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open file '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) + " is not key=value");
    apply_config_entry(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

// ---------------------------------------------------------------------------
// CSV helpers

class CsvBuilder {
 public:
  void comment(const std::string& text) { buffer_ += "# " + text + "\n"; }
  void raw_line(const std::string& line) { buffer_ += line + "\n"; }

  static std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
  }

  const std::string& str() const { return buffer_; }

 private:
  std::string buffer_;
};

// Writes through a temp file and renames, so a partial file is never visible.
inline void write_output(const std::string& content, const std::string& path) {
  if (path.empty()) {
    std::fputs(content.c_str(), stdout);
    return;
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("output: cannot open '" + tmp + "'");
    out << content;
    if (!out) throw std::runtime_error("output: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("output: rename to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Single-user and multi-user Monte-Carlo runs

struct MethodResult {
  std::string method;
  double snr_db = 0.0;
  Aggregate aggregate;
  std::vector<TrialRecord> trial_records;  // kept only when per_trial is set
};

inline SuScenario make_su_scenario(const ExperimentConfig& cfg, const MethodSpec& method,
                                   double snr_db) {
  SuScenario sc;
  sc.geometry.n_bs = cfg.n_rx;
  sc.geometry.n_ue = cfg.n_tx;
  sc.geometry.d_bs = cfg.spacing;
  sc.snr_linear = db2lin(snr_db);
  sc.t1 = cfg.t1;
  sc.t2 = cfg.t2;
  sc.n_paths = cfg.n_paths;
  sc.front_end = method.kind;
  sc.voltage = method.voltage;
  sc.fixed_clip = method.fixed_clip;
  sc.steer_step2 = method.steer_step2;
  sc.use_step1_clip_in_step2 = method.use_step1_clip_in_step2;
  sc.noiseless = cfg.noiseless;
  sc.aoa_grid = cfg.arrival_grid();
  sc.aod_grid = AodGrid::uniform_cosine(cfg.aod_grid_size);
  sc.prepare();
  return sc;
}

// One full single-user trial: draws the channel from the trial stream, then
// runs the estimator on a substream shared by all methods (common random
// numbers across methods).
inline TrialRecord run_su_trial(const SuScenario& sc, const ChannelSamplerSpec& sampler,
                                std::uint64_t seed, int trial) {
  Rng channel_rng = Rng::stream(seed, static_cast<std::uint64_t>(trial), 0);
  const SuChannelParams truth =
      sample_su_channel(sampler, sc.n_paths, sc.aoa_grid.angles, sc.aod_grid.angles, channel_rng);
  const CMat h = su_channel_matrix(truth, sc.geometry);

  Rng noise_rng = Rng::stream(seed, static_cast<std::uint64_t>(trial), 1);
  const ChannelEstimate est = estimate_su_channel(sc, h, noise_rng);

  TrialRecord rec;
  rec.trial = trial;
  const AngleError aoa_err = metric_angle_error(
      est.step1.aoa_indices, truth.aoas,
      [&](double th) { return sc.aoa_grid.nearest_index(th); },
      [&](int i) { return sc.aoa_grid.angles(i); });
  rec.e_theta = aoa_err.indicator;
  rec.truth_snapped = aoa_err.truth_off_grid;

  const AngleError aod_err = metric_angle_error(
      est.aod_indices, truth.aods,
      [&](double ph) { return sc.aod_grid.nearest_index(ph); },
      [&](int i) { return sc.aod_grid.angles(i); });
  rec.e_phi = aod_err.indicator;

  rec.nmse_alpha = metric_nmse(est.step1.gain_estimates, truth.gains);
  rec.nmse_h = metric_nmse(est.h_hat, h);
  rec.channel_uses = est.channel_uses;
  rec.rank_deficient = est.step1.rank_deficient;
  return rec;
}

inline MuScenario make_mu_scenario(const ExperimentConfig& cfg, const MethodSpec& method,
                                   double snr_db) {
  MuScenario sc;
  sc.geometry.n_bs = cfg.n_rx;
  sc.geometry.d_bs = cfg.spacing;
  sc.n_users = cfg.n_users;
  sc.paths_per_user.assign(static_cast<std::size_t>(cfg.n_users), cfg.paths_per_user);
  sc.snr_linear = db2lin(snr_db);
  sc.t = cfg.t_mu;
  sc.front_end = method.kind;
  sc.noiseless = cfg.noiseless;
  sc.aoa_grid = cfg.arrival_grid();
  sc.prepare();
  return sc;
}

inline TrialRecord run_mu_trial(const MuScenario& sc, const ChannelSamplerSpec& sampler,
                                std::uint64_t seed, int trial) {
  Rng channel_rng = Rng::stream(seed, static_cast<std::uint64_t>(trial), 0);
  const MuChannelParams truth =
      sample_mu_channel(sampler, sc.n_users, sc.paths_per_user, sc.aoa_grid.angles, channel_rng);
  const CMat h = mu_channel_matrix(truth, sc.geometry);

  Rng noise_rng = Rng::stream(seed, static_cast<std::uint64_t>(trial), 1);
  const MuChannelEstimate est = estimate_mu_channels(sc, truth, noise_rng);

  TrialRecord rec;
  rec.trial = trial;
  rec.e_phi = 0;  // no departure angles in the multi-user mode
  for (int u = 0; u < sc.n_users; ++u) {
    const auto& ue = est.users[static_cast<std::size_t>(u)];
    const AngleError err = metric_angle_error(
        ue.aoa_indices, truth.users[static_cast<std::size_t>(u)].aoas,
        [&](double th) { return sc.aoa_grid.nearest_index(th); },
        [&](int i) { return sc.aoa_grid.angles(i); });
    rec.e_theta = rec.e_theta || err.indicator;
    rec.truth_snapped = rec.truth_snapped || err.truth_off_grid;
    const NmseParts parts =
        metric_nmse(ue.gain_estimates, truth.users[static_cast<std::size_t>(u)].gains);
    rec.nmse_alpha.num += parts.num;
    rec.nmse_alpha.den += parts.den;
  }
  rec.nmse_h = metric_nmse(est.h_hat, h);
  return rec;
}

inline std::vector<MethodResult> run_simulation(const ExperimentConfig& cfg) {
  cfg.validate();
  const ChannelSamplerSpec sampler = cfg.sampler_spec();
  std::vector<MethodResult> results;

  for (const auto& token : cfg.methods) {
    const MethodSpec method = MethodSpec::parse(token);
    for (double snr : cfg.snr_db) {
      MethodResult res;
      res.method = token;
      res.snr_db = snr;
      std::vector<TrialRecord> records(static_cast<std::size_t>(cfg.trials));
      if (cfg.mode == ExperimentMode::su) {
        const SuScenario sc = make_su_scenario(cfg, method, snr);
        parallel_for(static_cast<std::size_t>(cfg.trials), cfg.threads, [&](std::size_t t) {
          records[t] = run_su_trial(sc, sampler, cfg.seed, static_cast<int>(t));
        });
      } else {
        const MuScenario sc = make_mu_scenario(cfg, method, snr);
        parallel_for(static_cast<std::size_t>(cfg.trials), cfg.threads, [&](std::size_t t) {
          records[t] = run_mu_trial(sc, sampler, cfg.seed, static_cast<int>(t));
        });
      }
      for (const auto& r : records) res.aggregate.add(r);  // trial order, deterministic
      if (cfg.per_trial) res.trial_records = std::move(records);
      results.push_back(std::move(res));
    }
  }
  return results;
}

inline std::string simulation_csv(const ExperimentConfig& cfg,
                                  const std::vector<MethodResult>& results) {
  CsvBuilder csv;
  csv.comment(std::string("mode: ") + (cfg.mode == ExperimentMode::su ? "su" : "mu"));
  if (!cfg.figure.empty()) csv.comment("figure: " + cfg.figure);
  csv.comment("seed: " + std::to_string(cfg.seed));
  csv.comment("trials: " + std::to_string(cfg.trials));
  bool snapped = false;
  for (const auto& r : results) snapped = snapped || r.aggregate.any_truth_snapped;
  if (snapped) csv.comment("aoa_truth_snapped_to_grid: true");
  csv.raw_line("method,snr_db,trials,e_theta,nmse_alpha_db,e_phi,nmse_h_db");
  for (const auto& r : results) {
    csv.raw_line(r.method + "," + CsvBuilder::num(r.snr_db) + "," + std::to_string(r.aggregate.trials) +
                 "," + CsvBuilder::num(r.aggregate.e_theta()) + "," +
                 CsvBuilder::num(lin2db(r.aggregate.nmse_alpha_ratio())) + "," +
                 CsvBuilder::num(r.aggregate.e_phi()) + "," +
                 CsvBuilder::num(lin2db(r.aggregate.nmse_h_ratio())));
  }
  return csv.str();
}

inline std::string per_trial_csv(const std::vector<MethodResult>& results) {
  CsvBuilder csv;
  csv.raw_line("method,snr_db,trial,e_theta,e_phi,nmse_alpha_num,nmse_alpha_den,nmse_h_num,nmse_h_den,channel_uses");
  for (const auto& r : results)
    for (const auto& t : r.trial_records)
      csv.raw_line(r.method + "," + CsvBuilder::num(r.snr_db) + "," + std::to_string(t.trial) + "," +
                   std::to_string(t.e_theta) + "," + std::to_string(t.e_phi) + "," +
                   CsvBuilder::num(t.nmse_alpha.num) + "," + CsvBuilder::num(t.nmse_alpha.den) + "," +
                   CsvBuilder::num(t.nmse_h.num) + "," + CsvBuilder::num(t.nmse_h.den) + "," +
                   std::to_string(t.channel_uses));
  return csv.str();
}

// ---------------------------------------------------------------------------
// Diagnostics: converter noise statistics and received beampatterns. Inputs
// follow the Step-1 pilot model with a single path drawn from the arrival
// sector, so the statistics reflect the operating conditions of the estimator.

struct DiagnosticStreams {
  CMat x;  // converter input, n_rx x snapshots
  CMat y;  // converter output
};

inline DiagnosticStreams diagnostic_streams(const ExperimentConfig& cfg, const MethodSpec& method,
                                            double snr_db, double steering_rad) {
  const double p = db2lin(snr_db);
  const double clip = method.voltage == VoltagePolicy::adaptive ? clip_level_step1(p) : method.fixed_clip;

  FrontEnd fe;
  if (method.kind == FrontEnd::Kind::unquantized) {
    fe = FrontEnd::unquantized();
  } else if (method.kind == FrontEnd::Kind::one_bit) {
    const double b = cfg.quant_level_override > 0 ? cfg.quant_level_override : quant_level_for_clip(clip, 0.0);
    fe = FrontEnd::one_bit(b);
  } else {
    AdcConfig adc;
    adc.n_channels = cfg.n_rx;
    adc.spacing_wavelengths = cfg.spacing;
    adc.steering_angle = steering_rad;
    adc.clip_level = clip;
    adc.quant_level = cfg.quant_level_override > 0 ? cfg.quant_level_override
                                                   : quant_level_for_clip(clip, adc.feedback_phase());
    fe = FrontEnd::sigma_delta(adc);
  }

  const double sector = deg2rad(cfg.aoa_sector_deg);
  Rng rng = Rng::stream(cfg.seed, 0, 2);
  DiagnosticStreams st;
  st.x.resize(cfg.n_rx, cfg.snapshots);
  for (int t = 0; t < cfg.snapshots; ++t) {
    const double theta = rng.uniform(-sector, sector);
    const Complex alpha = rng.unit_phase();
    CVec x = std::sqrt(p) * alpha * steering_bs(theta, cfg.n_rx, cfg.spacing);
    for (int i = 0; i < cfg.n_rx; ++i) x(i) += rng.cgaussian(1.0);
    st.x.col(t) = x;
  }
  st.y = apply_front_end(st.x, fe);
  return st;
}

inline std::string noise_spectrum_csv(const ExperimentConfig& cfg) {
  cfg.validate();
  const AoaGrid grid = cfg.arrival_grid();
  CsvBuilder csv;
  csv.comment("mode: noise-spectrum");
  if (!cfg.figure.empty()) csv.comment("figure: " + cfg.figure);
  csv.comment("seed: " + std::to_string(cfg.seed));
  csv.comment("snapshots: " + std::to_string(cfg.snapshots));
  csv.raw_line("method,psi_deg,theta_deg,power");
  for (const auto& token : cfg.methods) {
    const MethodSpec method = MethodSpec::parse(token);
    for (double psi_deg : cfg.steering_deg) {
      const DiagnosticStreams st = diagnostic_streams(cfg, method, cfg.snr_db.front(), deg2rad(psi_deg));
      const RVec spec = angular_noise_spectrum(st.x, st.y, grid.angles, cfg.spacing);
      for (int g = 0; g < grid.size(); ++g)
        csv.raw_line(token + "," + CsvBuilder::num(psi_deg) + "," +
                     CsvBuilder::num(rad2deg(grid.angles(g))) + "," + CsvBuilder::num(spec(g)));
    }
  }
  return csv.str();
}

inline std::string input_corr_csv(const ExperimentConfig& cfg) {
  cfg.validate();
  CsvBuilder csv;
  csv.comment("mode: input-corr");
  if (!cfg.figure.empty()) csv.comment("figure: " + cfg.figure);
  csv.comment("seed: " + std::to_string(cfg.seed));
  csv.comment("snapshots: " + std::to_string(cfg.snapshots));
  csv.raw_line("method,psi_deg,channel,corr_re,corr_im,corr_abs");
  for (const auto& token : cfg.methods) {
    const MethodSpec method = MethodSpec::parse(token);
    for (double psi_deg : cfg.steering_deg) {
      const DiagnosticStreams st = diagnostic_streams(cfg, method, cfg.snr_db.front(), deg2rad(psi_deg));
      const CVec corr = input_noise_correlation(st.x, st.y);
      for (int i = 0; i < cfg.n_rx; ++i)
        csv.raw_line(token + "," + CsvBuilder::num(psi_deg) + "," + std::to_string(i + 1) + "," +
                     CsvBuilder::num(corr(i).real()) + "," + CsvBuilder::num(corr(i).imag()) + "," +
                     CsvBuilder::num(std::abs(corr(i))));
    }
  }
  return csv.str();
}

// Received beampattern sweep: a single path arrives at the configured angle
// while the user sweeps its beams over the departure grid; emitted power is
// the average of |c^H y|^2 over the snapshots.
inline std::string beampattern_csv(const ExperimentConfig& cfg) {
  cfg.validate();
  const AodGrid aod_grid = AodGrid::uniform_cosine(cfg.aod_grid_size);
  const Codebook codebook = design_codebook(cfg.n_tx, aod_grid);
  if (cfg.beampattern_stage < 1 || cfg.beampattern_stage > codebook.n_stages())
    throw std::invalid_argument("config: beampattern_stage out of range");
  const CMat& beams = codebook.stages[static_cast<std::size_t>(cfg.beampattern_stage - 1)];

  const double p = db2lin(cfg.snr_db.front());
  const double theta = deg2rad(cfg.steering_deg.front());
  const CVec a_rx = steering_bs(theta, cfg.n_rx, cfg.spacing);
  const CVec combiner = a_rx / std::sqrt(static_cast<double>(cfg.n_rx));

  CsvBuilder csv;
  csv.comment("mode: beampattern");
  if (!cfg.figure.empty()) csv.comment("figure: " + cfg.figure);
  csv.comment("seed: " + std::to_string(cfg.seed));
  csv.comment("arrival_deg: " + CsvBuilder::num(rad2deg(theta)));
  csv.comment("stage: " + std::to_string(cfg.beampattern_stage));
  csv.raw_line("method,beam,phi_deg,power");

  const int reps = std::max(1, cfg.snapshots / aod_grid.size());
  for (const auto& token : cfg.methods) {
    const MethodSpec method = MethodSpec::parse(token);
    const double clip = method.voltage == VoltagePolicy::adaptive
                            ? clip_level_step2(p, cfg.n_tx)
                            : method.fixed_clip;
    FrontEnd fe;
    if (method.kind == FrontEnd::Kind::unquantized) {
      fe = FrontEnd::unquantized();
    } else if (method.kind == FrontEnd::Kind::one_bit) {
      fe = FrontEnd::one_bit(quant_level_for_clip(clip, 0.0));
    } else {
      AdcConfig adc;
      adc.n_channels = cfg.n_rx;
      adc.spacing_wavelengths = cfg.spacing;
      adc.steering_angle = method.steer_step2 ? theta : 0.0;
      adc.clip_level = clip;
      adc.quant_level = quant_level_for_clip(clip, adc.feedback_phase());
      fe = FrontEnd::sigma_delta(adc);
    }

    Rng rng = Rng::stream(cfg.seed, 1, 3);
    for (int b = 0; b < beams.cols(); ++b) {
      for (int g = 0; g < aod_grid.size(); ++g) {
        const Complex rho = steering_ue(aod_grid.angles(g), cfg.n_tx).dot(beams.col(b));
        double acc = 0.0;
        for (int r = 0; r < reps; ++r) {
          CVec x = std::sqrt(p) * rho * a_rx;
          if (!cfg.noiseless)
            for (int i = 0; i < cfg.n_rx; ++i) x(i) += rng.cgaussian(1.0);
          CMat xm(cfg.n_rx, 1);
          xm.col(0) = x;
          const CMat y = apply_front_end(xm, fe);
          acc += std::norm(combiner.dot(y.col(0)));
        }
        csv.raw_line(token + "," + std::to_string(b + 1) + "," +
                     CsvBuilder::num(rad2deg(aod_grid.angles(g))) + "," + CsvBuilder::num(acc / reps));
      }
    }
  }
  return csv.str();
}

inline std::string codebook_dump_csv(const ExperimentConfig& cfg) {
  cfg.validate();
  const AodGrid grid = AodGrid::uniform_cosine(cfg.aod_grid_size);
  const Codebook codebook = design_codebook(cfg.n_tx, grid);
  CsvBuilder csv;
  csv.comment("mode: codebook-dump");
  if (!cfg.figure.empty()) csv.comment("figure: " + cfg.figure);
  csv.comment("n_tx: " + std::to_string(cfg.n_tx));
  csv.comment("grid_size: " + std::to_string(grid.size()));
  csv.raw_line("stage,beam,antenna,re,im");
  for (int s = 0; s < codebook.n_stages(); ++s) {
    const CMat& p = codebook.stages[static_cast<std::size_t>(s)];
    for (int b = 0; b < p.cols(); ++b)
      for (int a = 0; a < p.rows(); ++a)
        csv.raw_line(std::to_string(s + 1) + "," + std::to_string(b + 1) + "," + std::to_string(a + 1) +
                     "," + CsvBuilder::num(p(a, b).real()) + "," + CsvBuilder::num(p(a, b).imag()));
  }
  return csv.str();
}

// Runs whatever the config asks for and returns the CSV payload(s). The
// second element is the per-trial table (empty unless requested).
inline std::pair<std::string, std::string> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  switch (cfg.mode) {
    case ExperimentMode::su:
    case ExperimentMode::mu: {
      const std::vector<MethodResult> results = run_simulation(cfg);
      return {simulation_csv(cfg, results), cfg.per_trial ? per_trial_csv(results) : std::string()};
    }
    case ExperimentMode::noise_spectrum:
      return {noise_spectrum_csv(cfg), {}};
    case ExperimentMode::input_corr:
      return {input_corr_csv(cfg), {}};
    case ExperimentMode::beampattern:
      return {beampattern_csv(cfg), {}};
    case ExperimentMode::codebook_dump:
      return {codebook_dump_csv(cfg), {}};
  }
  throw std::logic_error("run_experiment: unknown mode");
}

}  // namespace sdmimo
