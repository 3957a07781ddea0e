// Command-line simulator around the sdmimo library.
//
//   sdmimo simulate su|mu        Monte-Carlo channel-estimation runs
//   sdmimo diagnose noise-spectrum|input-corr|beampattern
//   sdmimo codebook dump
//
// Options come from built-in defaults, then an optional key=value config file
// (--config), then command-line flags. Output is CSV on stdout or --out.
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdmimo/experiment.hpp"

namespace {

struct FlagValues {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<double>> snr;
  std::optional<int> trials;
  std::optional<std::vector<std::string>> methods;
  std::optional<std::string> out;
  bool per_trial = false;
  std::optional<int> threads;
  std::optional<int> n_rx, n_tx, n_paths, n_users, paths_per_user;
  std::optional<int> t1, t2, t_mu, aoa_grid_points, aod_grid_size, snapshots, beampattern_stage;
  std::optional<double> spacing, aoa_sector, aod_sector, min_aoa_spacing, min_aod_spacing_cos;
  std::optional<double> tau, quant_level;
  std::optional<std::string> gain_model, figure;
  std::optional<bool> on_grid_aod, on_grid_aoa, noiseless;
  std::optional<std::vector<double>> steering;
};

void add_common_flags(CLI::App* cmd, FlagValues& f) {
  cmd->add_option("--config", f.config_path, "key=value config file");
  cmd->add_option("--seed", f.seed, "experiment seed");
  cmd->add_option("--snr", f.snr, "SNR list in dB")->delimiter(',');
  cmd->add_option("--trials", f.trials, "Monte-Carlo trials per point");
  cmd->add_option("--front-end", f.methods,
                  "method tokens: unquantized, onebit, sigmadelta[:c=<v>][:psi=0][:c-step1]")
      ->delimiter(',');
  cmd->add_option("--out", f.out, "output CSV path (stdout when absent)");
  cmd->add_flag("--per-trial", f.per_trial, "also write per-trial records");
  cmd->add_option("--threads", f.threads, "worker threads (results independent of this)");
  cmd->add_option("--n-rx", f.n_rx, "receive antennas");
  cmd->add_option("--n-tx", f.n_tx, "transmit antennas");
  cmd->add_option("--spacing", f.spacing, "receive array spacing in wavelengths");
  cmd->add_option("--paths", f.n_paths, "propagation paths (single-user)");
  cmd->add_option("--users", f.n_users, "users (multi-user)");
  cmd->add_option("--paths-per-user", f.paths_per_user, "paths per user (multi-user)");
  cmd->add_option("--t1", f.t1, "Step-1 pilot length");
  cmd->add_option("--t2", f.t2, "Step-2 pilots per beam");
  cmd->add_option("--t-mu", f.t_mu, "multi-user channel uses");
  cmd->add_option("--aoa-sector", f.aoa_sector, "arrival sector half-width, degrees");
  cmd->add_option("--aod-sector", f.aod_sector, "departure sector half-width, degrees");
  cmd->add_option("--min-aoa-spacing", f.min_aoa_spacing, "minimum arrival spacing, degrees");
  cmd->add_option("--min-aod-spacing-cos", f.min_aod_spacing_cos,
                  "minimum departure spacing in direction cosine");
  cmd->add_option("--gain-model", f.gain_model, "unit_modulus or truncated_gaussian");
  cmd->add_option("--tau", f.tau, "truncation threshold for truncated_gaussian");
  cmd->add_option("--on-grid-aod", f.on_grid_aod, "draw departures on the grid");
  cmd->add_option("--on-grid-aoa", f.on_grid_aoa, "snap arrivals to the search grid");
  cmd->add_option("--noiseless", f.noiseless, "suppress receiver noise (consistency checks)");
  cmd->add_option("--aoa-grid", f.aoa_grid_points, "arrival grid size");
  cmd->add_option("--aod-grid", f.aod_grid_size, "departure grid size (power of two)");
  cmd->add_option("--snapshots", f.snapshots, "snapshots for diagnostics");
  cmd->add_option("--steering", f.steering, "steering angles in degrees (diagnostics)")->delimiter(',');
  cmd->add_option("--quant-level", f.quant_level, "override quantization level (diagnostics)");
  cmd->add_option("--stage", f.beampattern_stage, "codebook stage for beampattern sweeps");
  cmd->add_option("--figure", f.figure, "label echoed into the CSV header");
}

void apply_flags(sdmimo::ExperimentConfig& cfg, const FlagValues& f) {
  if (f.config_path) sdmimo::load_config_file(cfg, *f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (f.snr) cfg.snr_db = *f.snr;
  if (f.trials) cfg.trials = *f.trials;
  if (f.methods) cfg.methods = *f.methods;
  if (f.out) cfg.out = *f.out;
  if (f.per_trial) cfg.per_trial = true;
  if (f.threads) cfg.threads = *f.threads;
  if (f.n_rx) cfg.n_rx = *f.n_rx;
  if (f.n_tx) cfg.n_tx = *f.n_tx;
  if (f.spacing) cfg.spacing = *f.spacing;
  if (f.n_paths) cfg.n_paths = *f.n_paths;
  if (f.n_users) cfg.n_users = *f.n_users;
  if (f.paths_per_user) cfg.paths_per_user = *f.paths_per_user;
  if (f.t1) cfg.t1 = *f.t1;
  if (f.t2) cfg.t2 = *f.t2;
  if (f.t_mu) cfg.t_mu = *f.t_mu;
  if (f.aoa_sector) cfg.aoa_sector_deg = *f.aoa_sector;
  if (f.aod_sector) cfg.aod_sector_deg = *f.aod_sector;
  if (f.min_aoa_spacing) cfg.min_aoa_spacing_deg = *f.min_aoa_spacing;
  if (f.min_aod_spacing_cos) cfg.min_aod_spacing_cos = *f.min_aod_spacing_cos;
  if (f.gain_model) cfg.gain_model = *f.gain_model;
  if (f.tau) cfg.tau = *f.tau;
  if (f.on_grid_aod) cfg.on_grid_aod = *f.on_grid_aod;
  if (f.on_grid_aoa) cfg.on_grid_aoa = *f.on_grid_aoa;
  if (f.noiseless) cfg.noiseless = *f.noiseless;
  if (f.aoa_grid_points) cfg.aoa_grid_points = *f.aoa_grid_points;
  if (f.aod_grid_size) cfg.aod_grid_size = *f.aod_grid_size;
  if (f.snapshots) cfg.snapshots = *f.snapshots;
  if (f.steering) cfg.steering_deg = *f.steering;
  if (f.quant_level) cfg.quant_level_override = *f.quant_level;
  if (f.beampattern_stage) cfg.beampattern_stage = *f.beampattern_stage;
  if (f.figure) cfg.figure = *f.figure;
}

int run(sdmimo::ExperimentMode mode, const FlagValues& flags) {
  sdmimo::ExperimentConfig cfg;
  cfg.mode = mode;
  apply_flags(cfg, flags);
  cfg.mode = mode;  // the subcommand wins over any mode= in the config file

  const auto [main_csv, trial_csv] = sdmimo::run_experiment(cfg);
  sdmimo::write_output(main_csv, cfg.out);
  if (!trial_csv.empty()) {
    const std::string path = cfg.out.empty() ? std::string() : cfg.out + ".per_trial.csv";
    sdmimo::write_output(trial_csv, path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatial sigma-delta MIMO channel estimation simulator"};
  app.require_subcommand(1);

  FlagValues flags;

  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo estimation runs");
  simulate->require_subcommand(1);
  auto* sim_su = simulate->add_subcommand("su", "single multi-antenna user");
  auto* sim_mu = simulate->add_subcommand("mu", "multiple single-antenna users");
  add_common_flags(sim_su, flags);
  add_common_flags(sim_mu, flags);

  auto* diagnose = app.add_subcommand("diagnose", "converter diagnostics");
  diagnose->require_subcommand(1);
  auto* diag_spec = diagnose->add_subcommand("noise-spectrum", "angular noise power over the grid");
  auto* diag_corr = diagnose->add_subcommand("input-corr", "per-channel input/noise correlation");
  auto* diag_beam = diagnose->add_subcommand("beampattern", "received beampattern sweeps");
  add_common_flags(diag_spec, flags);
  add_common_flags(diag_corr, flags);
  add_common_flags(diag_beam, flags);

  auto* codebook = app.add_subcommand("codebook", "beam codebook utilities");
  codebook->require_subcommand(1);
  auto* cb_dump = codebook->add_subcommand("dump", "emit all codebook beams");
  add_common_flags(cb_dump, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim_su->parsed()) return run(sdmimo::ExperimentMode::su, flags);
    if (sim_mu->parsed()) return run(sdmimo::ExperimentMode::mu, flags);
    if (diag_spec->parsed()) return run(sdmimo::ExperimentMode::noise_spectrum, flags);
    if (diag_corr->parsed()) return run(sdmimo::ExperimentMode::input_corr, flags);
    if (diag_beam->parsed()) return run(sdmimo::ExperimentMode::beampattern, flags);
    if (cb_dump->parsed()) return run(sdmimo::ExperimentMode::codebook_dump, flags);
    std::fprintf(stderr, "error: no subcommand selected\n");
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  }
}
