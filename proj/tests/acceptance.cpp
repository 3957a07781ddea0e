// Acceptance suite: end-to-end checks of the converter model, the noise
// model, the two-step estimator, and the experiment harness. Each criterion
// prints one PASS/FAIL line; the exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "sdmimo/experiment.hpp"

using namespace sdmimo;

namespace {

int g_failures = 0;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int id, const std::string& name, bool pass, const std::string& detail, double secs) {
  std::printf("%s  %2d: %s (%s, %.1f s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

AdcConfig broadside_cfg(int n, double b) {
  AdcConfig cfg;
  cfg.n_channels = n;
  cfg.quant_level = b;
  cfg.clip_level = b;
  return cfg;
}

// --- 1 & 2: closed-form error and floor identity on clip-inactive inputs ----

void criteria_1_2() {
  Timer timer;
  double worst_err = 0.0, worst_resid = 0.0;
  Rng rng(1001);
  const double b = 1.0;
  for (int n : {1, 2, 16, 128}) {
    const AdcConfig cfg = broadside_cfg(n, b);
    for (int rep = 0; rep < 1000; ++rep) {
      CVec x(n);
      for (int i = 0; i < n; ++i)
        x(i) = Complex(rng.uniform(-b, b) * 0.999, rng.uniform(-b, b) * 0.999);
      const auto [y, e] = sd_quantize_snapshot(x, cfg);
      worst_err = std::max(worst_err, (closed_form_error(x, b) - e).cwiseAbs().maxCoeff());
      worst_resid = std::max(worst_resid, floor_identity_residual(x, y, cfg));
    }
  }
  const double secs = timer.seconds();
  report(1, "closed-form quantizer error matches the recursion", worst_err < 1e-9,
         fmt("max deviation %.2e over 4000 inputs", worst_err), secs);
  report(2, "floor-based input/output identity holds", worst_resid < 1e-9,
         fmt("max residual %.2e", worst_resid), secs);
}

// --- 3: empirical quantization-noise covariance against the model ----------

void criterion_3() {
  Timer timer;
  const int n = 32, t = 100000;
  const double p = 1.0;
  const double clip = clip_level_step1(p);
  const AdcConfig cfg = broadside_cfg(n, quant_level_for_clip(clip, 0.0));

  Rng rng(1003);
  CMat q(n, t);
  CVec x(n);
  for (int s = 0; s < t; ++s) {
    for (int i = 0; i < n; ++i) x(i) = rng.cgaussian(p + 1.0);
    q.col(s) = sd_quantize_snapshot(x, cfg).first - x;
  }
  const CMat r_hat = q * q.adjoint() / static_cast<double>(t);
  const CMat r_model = quant_noise_cov(cfg);

  const double threshold = 0.1 * r_model.cwiseAbs().maxCoeff();
  double worst = 0.0;
  int worst_i = 0, worst_j = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (std::abs(r_model(i, j)) <= threshold) continue;
      const double rel = std::abs(r_hat(i, j) - r_model(i, j)) / std::abs(r_model(i, j));
      if (rel > worst) {
        worst = rel;
        worst_i = i;
        worst_j = j;
      }
    }
  report(3, "empirical noise covariance within 5% of the model on dominant entries",
         worst < 0.05,
         fmt("max relative error %.1f%% at entry (%d,%d); the linearized model is exact only "
             "away from the feedback-chain head, so this tolerance is not reachable (see README)",
             100.0 * worst, worst_i + 1, worst_j + 1),
         timer.seconds());
}

// --- 4: angular noise minimum tracks the steering angle --------------------

void criterion_4() {
  Timer timer;
  ExperimentConfig cfg;
  cfg.n_rx = 128;
  cfg.snapshots = 10000;
  cfg.snr_db = {0.0};
  cfg.aoa_sector_deg = 30.0;
  cfg.seed = 1004;

  const AoaGrid grid = AoaGrid::uniform_degrees();
  bool pass = true;
  std::string detail;
  for (double psi_deg : {0.0, 30.0, -45.0}) {
    const DiagnosticStreams st =
        diagnostic_streams(cfg, MethodSpec::parse("sigmadelta"), 0.0, deg2rad(psi_deg));
    const RVec spec = angular_noise_spectrum(st.x, st.y, grid.angles, cfg.spacing);
    int argmin = 0;
    spec.minCoeff(&argmin);
    const int target = grid.nearest_index(deg2rad(psi_deg));
    if (std::abs(argmin - target) > 2) pass = false;
    detail += fmt("psi=%g: min at %g deg; ", psi_deg, rad2deg(grid.angles(argmin)));
  }
  report(4, "shaped-noise minimum lies within 2 grid steps of the steering angle", pass, detail,
         timer.seconds());
}

// --- 5: input/noise decorrelation on the far channels ----------------------

void criterion_5() {
  Timer timer;
  ExperimentConfig cfg;
  cfg.n_rx = 128;
  cfg.snapshots = 10000;
  cfg.snr_db = {0.0};
  cfg.aoa_sector_deg = 30.0;
  cfg.seed = 1005;

  const DiagnosticStreams sd =
      diagnostic_streams(cfg, MethodSpec::parse("sigmadelta"), 0.0, 0.0);
  const DiagnosticStreams ob = diagnostic_streams(cfg, MethodSpec::parse("onebit"), 0.0, 0.0);
  // identical seeds make the input streams identical across the two front ends
  const double input_gap = (sd.x - ob.x).cwiseAbs().maxCoeff();

  const CVec corr_sd = input_noise_correlation(sd.x, sd.y);
  const CVec corr_ob = input_noise_correlation(ob.x, ob.y);
  double acc_sd = 0.0, acc_ob = 0.0;
  for (int i = 95; i < 128; ++i) {  // channels 96..128, 1-based
    acc_sd += std::abs(corr_sd(i));
    acc_ob += std::abs(corr_ob(i));
  }
  const bool pass = input_gap == 0.0 && acc_sd < 0.25 * acc_ob;
  report(5, "far-channel input/noise correlation is below 25% of the regular 1-bit level", pass,
         fmt("mean |corr|: %.4f vs %.4f (ratio %.3f)", acc_sd / 33, acc_ob / 33, acc_sd / acc_ob),
         timer.seconds());
}

// --- 6: noiseless on-grid consistency ---------------------------------------

void criterion_6() {
  Timer timer;
  bool pass = true;
  std::string detail;
  for (int l : {1, 2, 3}) {
    ExperimentConfig cfg;
    cfg.mode = ExperimentMode::su;
    cfg.snr_db = {0.0};
    cfg.trials = 100;
    cfg.seed = 1006;
    cfg.n_paths = l;
    cfg.methods = {"unquantized"};
    cfg.noiseless = true;
    cfg.on_grid_aoa = true;
    cfg.on_grid_aod = true;
    cfg.gain_model = "unit_modulus";
    const auto results = run_simulation(cfg);
    const Aggregate& agg = results.front().aggregate;
    const double nmse = agg.nmse_h_ratio();
    if (agg.e_theta_count != 0 || agg.e_phi_count != 0 || !(nmse < 1e-6)) pass = false;
    detail += fmt("L=%d: e_theta=%ld e_phi=%ld nmse=%.1e; ", l, agg.e_theta_count,
                  agg.e_phi_count, nmse);
  }
  report(6, "noiseless on-grid runs recover every parameter", pass, detail, timer.seconds());
}

// --- 7: steered converter tracks the unquantized baseline -------------------

void criterion_7() {
  Timer timer;
  ExperimentConfig cfg;
  cfg.mode = ExperimentMode::su;
  cfg.snr_db = {0.0, 5.0, 10.0};
  cfg.trials = 2000;
  cfg.seed = 1007;
  cfg.n_paths = 1;
  cfg.aoa_sector_deg = 10.0;
  cfg.gain_model = "unit_modulus";
  cfg.methods = {"unquantized", "sigmadelta"};
  const auto results = run_simulation(cfg);

  bool pass = true;
  std::string detail;
  for (std::size_t s = 0; s < cfg.snr_db.size(); ++s) {
    const Aggregate& unq = results[s].aggregate;               // methods x snr, unquantized first
    const Aggregate& sd = results[cfg.snr_db.size() + s].aggregate;
    const bool etheta_ok = sd.e_theta_count <= 2 * unq.e_theta_count;
    const double gap_db = lin2db(sd.nmse_alpha_ratio()) - lin2db(unq.nmse_alpha_ratio());
    if (!etheta_ok || !(gap_db <= 3.0)) pass = false;
    detail += fmt("%gdB: e_theta %ld/%ld gain-gap %.2fdB; ", cfg.snr_db[s], sd.e_theta_count,
                  unq.e_theta_count, gap_db);
  }
  report(7, "steered converter stays within 2x angle errors and 3 dB gain error", pass, detail,
         timer.seconds());
}

// --- 8: fixed clip level degrades gain estimation ---------------------------

void criterion_8() {
  Timer timer;
  ExperimentConfig cfg;
  cfg.mode = ExperimentMode::su;
  cfg.snr_db = {10.0};
  cfg.trials = 2000;
  cfg.seed = 1008;
  cfg.n_paths = 1;
  cfg.aoa_sector_deg = 30.0;
  cfg.gain_model = "unit_modulus";
  cfg.methods = {"sigmadelta", "sigmadelta:c=1"};
  const auto results = run_simulation(cfg);
  const double adaptive_db = lin2db(results[0].aggregate.nmse_alpha_ratio());
  const double fixed_db = lin2db(results[1].aggregate.nmse_alpha_ratio());
  const bool pass = fixed_db >= adaptive_db + 5.0;
  report(8, "fixed clip level costs at least 5 dB of gain accuracy", pass,
         fmt("adaptive %.2f dB vs fixed %.2f dB", adaptive_db, fixed_db), timer.seconds());
}

// --- 9: broadside-only conversion degrades departure estimation -------------

void criterion_9() {
  Timer timer;
  ExperimentConfig cfg;
  cfg.mode = ExperimentMode::su;
  cfg.snr_db = {10.0};
  cfg.trials = 2000;
  cfg.seed = 1009;
  cfg.n_paths = 1;
  cfg.aoa_sector_deg = 30.0;
  cfg.gain_model = "unit_modulus";
  cfg.methods = {"sigmadelta", "sigmadelta:psi=0"};
  const auto results = run_simulation(cfg);
  const long steered = results[0].aggregate.e_phi_count;
  const long broadside = results[1].aggregate.e_phi_count;
  report(9, "skipping angle steering strictly increases departure errors",
         broadside > steered, fmt("e_phi %ld (steered) vs %ld (broadside)", steered, broadside),
         timer.seconds());
}

// --- 10: multi-user quality ordering ----------------------------------------

void criterion_10() {
  Timer timer;
  ExperimentConfig cfg;
  cfg.mode = ExperimentMode::mu;
  cfg.snr_db = {-10.0, 0.0, 10.0};
  cfg.trials = 500;
  cfg.seed = 1010;
  cfg.n_users = 8;
  cfg.paths_per_user = 1;
  cfg.n_rx = 128;
  cfg.t_mu = 1;
  cfg.gain_model = "truncated_gaussian";
  cfg.methods = {"unquantized", "sigmadelta", "onebit"};
  const auto results = run_simulation(cfg);

  bool pass = true;
  std::string detail;
  const std::size_t ns = cfg.snr_db.size();
  for (std::size_t s = 0; s < ns; ++s) {
    const double unq = results[s].aggregate.nmse_h_ratio();
    const double sd = results[ns + s].aggregate.nmse_h_ratio();
    const double ob = results[2 * ns + s].aggregate.nmse_h_ratio();
    if (!(unq <= sd && sd <= ob)) pass = false;
    detail += fmt("%gdB: %.2f/%.2f/%.2f dB; ", cfg.snr_db[s], lin2db(unq), lin2db(sd), lin2db(ob));
  }
  report(10, "multi-user quality orders unquantized <= sigma-delta <= one-bit", pass, detail,
         timer.seconds());
}

// --- 11: pilot overhead accounting ------------------------------------------

void criterion_11() {
  Timer timer;
  bool pass = true;
  std::string detail;
  for (int l : {1, 2, 3}) {
    ExperimentConfig cfg;
    cfg.mode = ExperimentMode::su;
    cfg.snr_db = {0.0};
    cfg.trials = 10;
    cfg.seed = 1011;
    cfg.n_paths = l;
    cfg.per_trial = true;
    cfg.methods = {"sigmadelta"};
    cfg.t2 = 2;
    const auto results = run_simulation(cfg);
    const long expect = cfg.t1 + 2L * l * cfg.t2 * 7;  // log2(128) = 7 stages
    for (const auto& rec : results.front().trial_records)
      if (rec.channel_uses != expect) pass = false;
    detail += fmt("L=%d: %ld uses; ", l, results.front().trial_records.front().channel_uses);
  }
  report(11, "pilot overhead equals T1 + 2 L T2 log2(D) on every run", pass, detail,
         timer.seconds());
}

// --- 12: byte-identical reruns ----------------------------------------------

void criterion_12() {
  Timer timer;
  ExperimentConfig cfg;
  cfg.mode = ExperimentMode::su;
  cfg.snr_db = {0.0, 10.0};
  cfg.trials = 50;
  cfg.seed = 1012;
  cfg.n_paths = 2;
  cfg.methods = {"unquantized", "sigmadelta", "onebit"};
  cfg.per_trial = true;

  cfg.threads = 1;
  const auto [a1, t1] = run_experiment(cfg);
  cfg.threads = 4;
  const auto [a2, t2] = run_experiment(cfg);
  cfg.threads = 1;
  const auto [a3, t3] = run_experiment(cfg);

  const bool pass = a1 == a2 && a1 == a3 && t1 == t2 && t1 == t3;
  report(12, "reruns are byte-identical at any thread count", pass,
         fmt("%zu aggregate bytes, %zu per-trial bytes", a1.size(), t1.size()), timer.seconds());
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criteria_1_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  criterion_11();
  criterion_12();
  std::printf("%s: %d criterion(s) failed\n", g_failures == 0 ? "OK" : "NOT OK", g_failures);
  return g_failures;
}
