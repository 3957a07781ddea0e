// Two-step parametric channel estimator for the single-user uplink.
//
// Step 1 sends omnidirectional pilots (only the first user antenna active),
// picks arrival angles from the Bartlett spectrum on a search grid, and
// estimates path gains by whitened least squares. Step 2 estimates departure
// angles by recursive bisection over a hierarchical beam codebook with 1-bit
// feedback, steering the converter toward each estimated arrival angle. Clip
// and quantization voltages are selected per step from the pilot statistics.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdmimo/adc.hpp"
#include "sdmimo/channel.hpp"
#include "sdmimo/common.hpp"
#include "sdmimo/noise_model.hpp"
#include "sdmimo/rng.hpp"

namespace sdmimo {

// Arrival-angle search grid, uniform in angle.
struct AoaGrid {
  RVec angles;  // radians, strictly increasing

  static AoaGrid uniform_degrees(double lo_deg = -90.0, double hi_deg = 90.0,
                                 double step_deg = 1.0) {
    const int n = static_cast<int>(std::lround((hi_deg - lo_deg) / step_deg)) + 1;
    AoaGrid g;
    g.angles.resize(n);
    for (int i = 0; i < n; ++i) g.angles(i) = deg2rad(lo_deg + step_deg * i);
    return g;
  }

  int size() const { return static_cast<int>(angles.size()); }

  int nearest_index(double theta) const {
    int best = 0;
    double best_d = std::abs(angles(0) - theta);
    for (int i = 1; i < size(); ++i) {
      const double d = std::abs(angles(i) - theta);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }
};

// Departure-angle grid, uniform in direction cosine:
// sin(phi_d) = -1 + 2 d / (D - 1), d = 0..D-1. D must be a power of two.
struct AodGrid {
  RVec angles;

  static AodGrid uniform_cosine(int d_points = 128) {
    if (d_points < 2 || (d_points & (d_points - 1)) != 0)
      throw std::invalid_argument("AodGrid: size must be a power of two >= 2");
    AodGrid g;
    g.angles.resize(d_points);
    for (int i = 0; i < d_points; ++i)
      g.angles(i) = std::asin(-1.0 + 2.0 * static_cast<double>(i) / (d_points - 1));
    return g;
  }

  int size() const { return static_cast<int>(angles.size()); }
  int n_stages() const {
    int d = size(), s = 0;
    while (d > 1) {
      d >>= 1;
      ++s;
    }
    return s;
  }

  int nearest_index(double phi) const {
    const double sv = std::sin(phi);
    int best = 0;
    double best_d = std::abs(std::sin(angles(0)) - sv);
    for (int i = 1; i < size(); ++i) {
      const double d = std::abs(std::sin(angles(i)) - sv);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }
};

// Hierarchical beam codebook. Stage s (1-based) splits the departure grid into
// 2^s contiguous sectors; beam i of stage s has (approximately) unit response
// on its own sector and zero elsewhere. Children of sector i are 2i and 2i+1
// (0-based) at the next stage.
struct Codebook {
  std::vector<CMat> stages;  // stages[s-1] is n_ue x 2^s with unit-norm columns
  int grid_size = 0;
  bool regularized = false;  // set when the design system needed a ridge term

  int n_stages() const { return static_cast<int>(stages.size()); }
  int sector_width(int stage) const { return grid_size >> stage; }
  int sector_begin(int stage, int index) const { return index * sector_width(stage); }
};

// Least-squares beam design: solve D P_s = Psi_s for each stage, where row d
// of D is a_UE(phi_d)^H and Psi_s holds the per-sector indicator vectors, then
// normalize each beam to unit norm.
inline Codebook design_codebook(int n_ue, const AodGrid& grid) {
  const int d_points = grid.size();
  if (d_points < n_ue)
    throw std::invalid_argument("design_codebook: grid must have at least n_ue points");

  const CMat dict = steering_ue_matrix(grid.angles, n_ue).adjoint();  // D x n_ue
  CMat gram = dict.adjoint() * dict;

  Eigen::LDLT<CMat> ldlt(gram);
  bool regularized = false;
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    gram += 1e-10 * CMat::Identity(n_ue, n_ue);
    ldlt.compute(gram);
    regularized = true;
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("design_codebook: dictionary Gram matrix is singular");
  }

  Codebook cb;
  cb.grid_size = d_points;
  cb.regularized = regularized;
  const int n_stages = AodGrid::uniform_cosine(d_points).n_stages();
  cb.stages.reserve(static_cast<std::size_t>(n_stages));
  for (int s = 1; s <= n_stages; ++s) {
    const int beams = 1 << s;
    const int width = d_points / beams;
    RMat psi = RMat::Zero(d_points, beams);
    for (int i = 0; i < beams; ++i) psi.block(i * width, i, width, 1).setOnes();
    CMat p = ldlt.solve(dict.adjoint() * psi);
    for (int i = 0; i < beams; ++i) {
      const double norm = p.col(i).norm();
      if (!(norm > 0)) throw std::runtime_error("design_codebook: zero-norm beam");
      p.col(i) /= norm;
    }
    cb.stages.push_back(std::move(p));
  }
  return cb;
}

// Step-1 pilot precoder: only the first antenna transmits, which gives a flat
// response over all departure angles.
inline CVec step1_precoder(int n_ue) {
  if (n_ue < 1) throw std::invalid_argument("step1_precoder: n_ue must be >= 1");
  CVec p = CVec::Zero(n_ue);
  p(0) = 1.0;
  return p;
}

// Clip levels keeping the per-part clipping probability below 1% (3 sigma of
// the received signal). Step 1 sees per-antenna variance P + 1; Step 2 in the
// worst case sees P * n_ue + 1.
inline double clip_level_step1(double snr_linear) {
  if (snr_linear < 0) throw std::invalid_argument("clip_level_step1: snr must be >= 0");
  return 3.0 * std::sqrt((snr_linear + 1.0) / 2.0);
}

inline double clip_level_step2(double snr_linear, int n_ue) {
  if (snr_linear < 0) throw std::invalid_argument("clip_level_step2: snr must be >= 0");
  if (n_ue < 1) throw std::invalid_argument("clip_level_step2: n_ue must be >= 1");
  return 3.0 * std::sqrt((snr_linear * n_ue + 1.0) / 2.0);
}

// Bartlett spatial spectrum over the search grid,
// J(theta) = a^H(theta) R_y a(theta) with R_y = (1/T) Y Y^H, computed as
// column norms of Y^H A to avoid forming R_y.
inline RVec bartlett_spectrum(const CMat& y1, const CMat& grid_manifold) {
  if (y1.rows() != grid_manifold.rows())
    throw std::invalid_argument("bartlett_spectrum: row counts differ");
  if (y1.cols() < 1) throw std::invalid_argument("bartlett_spectrum: need at least one snapshot");
  const CMat m = y1.adjoint() * grid_manifold;  // T x A
  return m.cwiseAbs2().colwise().sum().transpose() / static_cast<double>(y1.cols());
}

inline RVec bartlett_spectrum(const CMat& y1, const AoaGrid& grid, double d) {
  return bartlett_spectrum(y1, steering_bs_matrix(grid.angles, static_cast<int>(y1.rows()), d));
}

// Indices of the l largest strict local maxima (boundaries compare against
// their single neighbor). Ties resolve to the lowest index. If fewer than l
// local maxima exist, the largest remaining values fill the result. Returned
// indices are sorted ascending.
inline std::vector<int> find_peaks(const RVec& spectrum, int l) {
  const int a = static_cast<int>(spectrum.size());
  if (l < 1) throw std::invalid_argument("find_peaks: l must be >= 1");
  if (l > a) throw std::invalid_argument("find_peaks: more peaks requested than grid points");

  std::vector<int> maxima;
  for (int i = 0; i < a; ++i) {
    const bool left_ok = (i == 0) || spectrum(i) > spectrum(i - 1);
    const bool right_ok = (i == a - 1) || spectrum(i) > spectrum(i + 1);
    if (left_ok && right_ok) maxima.push_back(i);
  }
  // Stable sort keeps the lowest index first among equal values.
  std::stable_sort(maxima.begin(), maxima.end(),
                   [&](int i, int j) { return spectrum(i) > spectrum(j); });
  if (static_cast<int>(maxima.size()) > l) maxima.resize(static_cast<std::size_t>(l));

  if (static_cast<int>(maxima.size()) < l) {
    std::vector<bool> taken(static_cast<std::size_t>(a), false);
    for (int i : maxima) taken[static_cast<std::size_t>(i)] = true;
    std::vector<int> rest;
    for (int i = 0; i < a; ++i)
      if (!taken[static_cast<std::size_t>(i)]) rest.push_back(i);
    std::stable_sort(rest.begin(), rest.end(),
                     [&](int i, int j) { return spectrum(i) > spectrum(j); });
    for (int i = 0; static_cast<int>(maxima.size()) < l; ++i) maxima.push_back(rest[static_cast<std::size_t>(i)]);
  }
  std::sort(maxima.begin(), maxima.end());
  return maxima;
}

struct GainEstimate {
  CVec gains;
  bool rank_deficient = false;
};

// Whitened least-squares path gains given estimated arrival angles. The
// whitener W must satisfy W^H W = R_n^-1 (any such factor gives the same
// estimate). With the all-ones pilot pattern of Step 1 the full regression
// collapses to an L-column system against the snapshot average. Duplicate
// angle estimates make the system rank deficient; the minimum-norm solution
// is returned with a flag instead of failing the trial.
inline GainEstimate gain_wls(const CMat& y1, const RVec& aoa_estimates, const CMat& whitener,
                             double snr_linear, int l, double d) {
  if (aoa_estimates.size() != l) throw std::invalid_argument("gain_wls: angle count != l");
  if (y1.rows() * y1.cols() < l) throw std::invalid_argument("gain_wls: underdetermined system");
  const int n = static_cast<int>(y1.rows());
  const CMat a_hat = steering_bs_matrix(aoa_estimates, n, d);
  const CMat basis = std::sqrt(snr_linear / static_cast<double>(l)) * (whitener * a_hat);
  const CVec target = whitener * y1.rowwise().mean();

  Eigen::CompleteOrthogonalDecomposition<CMat> cod(basis);
  GainEstimate est;
  est.gains = cod.solve(target);
  est.rank_deficient = cod.rank() < l;
  return est;
}

// Convenience overload computing the whitener from an effective-noise
// covariance; prefer the precomputed-whitener form inside trial loops.
inline GainEstimate gain_wls_cov(const CMat& y1, const RVec& aoa_estimates, const CMat& r_n,
                                 double snr_linear, int l, double d) {
  return gain_wls(y1, aoa_estimates, prewhitener(r_n), snr_linear, l, d);
}

// Received energy along one estimated path: E = |(1/T) c^H Y 1|^2 with the
// matched combiner c = a_BS(theta) / sqrt(N_r).
inline double path_energy(const CMat& y, double theta_hat, double d) {
  if (y.cols() < 1) throw std::invalid_argument("path_energy: need at least one snapshot");
  const CVec c = steering_bs(theta_hat, static_cast<int>(y.rows()), d) /
                 std::sqrt(static_cast<double>(y.rows()));
  const Complex s = (c.adjoint() * y).sum() / static_cast<double>(y.cols());
  return std::norm(s);
}

// One uplink use: takes the active beam, returns the quantized received block.
using UplinkOracle = std::function<CMat(const CVec& precoder)>;

// Recursive bisection over the codebook: at each stage the two child beams are
// sounded, the child with the larger received energy survives (ties go to the
// lower-index child), and after log2(D) stages a single grid index remains.
// Exactly 2 * n_stages oracle calls are made.
inline int bisect_aod(const UplinkOracle& uplink, double theta_hat, const Codebook& codebook,
                      double d) {
  if (codebook.n_stages() < 1) throw std::invalid_argument("bisect_aod: empty codebook");
  int index = 0;
  for (int s = 0; s < codebook.n_stages(); ++s) {
    const CMat& beams = codebook.stages[static_cast<std::size_t>(s)];
    const int left = 2 * index;
    const double e_left = path_energy(uplink(beams.col(left)), theta_hat, d);
    const double e_right = path_energy(uplink(beams.col(left + 1)), theta_hat, d);
    index = e_right > e_left ? left + 1 : left;
  }
  return index;
}

enum class VoltagePolicy { adaptive, fixed_clip };

struct SuScenario {
  ArrayGeometry geometry;
  double snr_linear = 1.0;
  int t1 = 10;
  int t2 = 1;
  int n_paths = 1;
  FrontEnd::Kind front_end = FrontEnd::Kind::sigma_delta;
  VoltagePolicy voltage = VoltagePolicy::adaptive;
  double fixed_clip = 1.0;        // used when voltage == fixed_clip
  bool steer_step2 = true;        // steer the converter to each estimated AoA
  double step1_steering = 0.0;    // converter steering during Step 1
  bool use_step1_clip_in_step2 = false;  // ablation: reuse the Step-1 clip level
  bool noiseless = false;         // suppress receiver noise (test hook)
  AoaGrid aoa_grid = AoaGrid::uniform_degrees();
  AodGrid aod_grid = AodGrid::uniform_cosine(128);

  // Derived quantities reused across trials; fill with prepare().
  CMat bs_grid_manifold;  // n_bs x A
  Codebook codebook;
  CMat step1_whitener;    // identity unless the front end is sigma-delta

  double step1_clip() const {
    return voltage == VoltagePolicy::adaptive ? clip_level_step1(snr_linear) : fixed_clip;
  }
  double step2_clip() const {
    if (voltage != VoltagePolicy::adaptive) return fixed_clip;
    return use_step1_clip_in_step2 ? clip_level_step1(snr_linear)
                                   : clip_level_step2(snr_linear, geometry.n_ue);
  }

  FrontEnd make_front_end(double clip, double steering) const {
    switch (front_end) {
      case FrontEnd::Kind::unquantized:
        return FrontEnd::unquantized();
      case FrontEnd::Kind::one_bit:
        return FrontEnd::one_bit(quant_level_for_clip(clip, 0.0));
      case FrontEnd::Kind::sigma_delta: {
        AdcConfig cfg;
        cfg.n_channels = geometry.n_bs;
        cfg.spacing_wavelengths = geometry.d_bs;
        cfg.steering_angle = steering;
        cfg.clip_level = clip;
        cfg.quant_level = quant_level_for_clip(clip, cfg.feedback_phase());
        return FrontEnd::sigma_delta(cfg);
      }
    }
    throw std::logic_error("SuScenario: unknown front-end kind");
  }

  void prepare() {
    geometry.validate();
    if (t1 < 1 || t2 < 1) throw std::invalid_argument("SuScenario: t1 and t2 must be >= 1");
    if (n_paths < 1) throw std::invalid_argument("SuScenario: n_paths must be >= 1");
    bs_grid_manifold = steering_bs_matrix(aoa_grid.angles, geometry.n_bs, geometry.d_bs);
    codebook = design_codebook(geometry.n_ue, aod_grid);
    if (front_end == FrontEnd::Kind::sigma_delta) {
      const FrontEnd fe = make_front_end(step1_clip(), step1_steering);
      step1_whitener = prewhitener(effective_noise_cov(fe.adc));
    } else {
      step1_whitener = CMat::Identity(geometry.n_bs, geometry.n_bs);
    }
  }
};

struct Step1Result {
  RVec aoa_estimates;          // grid angles, sorted ascending
  std::vector<int> aoa_indices;
  CVec gain_estimates;
  RVec spectrum;
  bool rank_deficient = false;
};

struct ChannelEstimate {
  Step1Result step1;
  std::vector<int> aod_indices;
  RVec aod_estimates;
  CMat h_hat;
  long channel_uses = 0;  // total pilot transmissions consumed
};

inline Step1Result run_step1(const SuScenario& sc, const CMat& h, Rng& rng, long& channel_uses) {
  const int l = sc.n_paths;
  const CVec p1 = step1_precoder(sc.geometry.n_ue);
  CMat s(sc.geometry.n_ue, sc.t1);
  for (int t = 0; t < sc.t1; ++t) s.col(t) = p1;

  const CMat x = received_pilot_block(h, s, sc.snr_linear, rng, !sc.noiseless);
  channel_uses += sc.t1;
  const CMat y1 = apply_front_end(x, sc.make_front_end(sc.step1_clip(), sc.step1_steering));

  Step1Result r;
  r.spectrum = bartlett_spectrum(y1, sc.bs_grid_manifold);
  r.aoa_indices = find_peaks(r.spectrum, l);
  r.aoa_estimates.resize(l);
  for (int i = 0; i < l; ++i) r.aoa_estimates(i) = sc.aoa_grid.angles(r.aoa_indices[static_cast<std::size_t>(i)]);

  const GainEstimate g =
      gain_wls(y1, r.aoa_estimates, sc.step1_whitener, sc.snr_linear, l, sc.geometry.d_bs);
  r.gain_estimates = g.gains;
  r.rank_deficient = g.rank_deficient;
  return r;
}

// Full two-step estimate for one channel realization. Step 2 issues a fresh
// uplink transmission per sounded beam; receiver noise redraws on every use.
inline ChannelEstimate estimate_su_channel(const SuScenario& sc, const CMat& h, Rng& rng) {
  ChannelEstimate est;
  est.channel_uses = 0;
  est.step1 = run_step1(sc, h, rng, est.channel_uses);

  const int l = sc.n_paths;
  est.aod_indices.resize(static_cast<std::size_t>(l));
  est.aod_estimates.resize(l);
  for (int path = 0; path < l; ++path) {
    const double theta_hat = est.step1.aoa_estimates(path);
    const double steering = sc.steer_step2 ? theta_hat : 0.0;
    const FrontEnd fe = sc.make_front_end(sc.step2_clip(), steering);
    const UplinkOracle uplink = [&](const CVec& beam) {
      CMat s(sc.geometry.n_ue, sc.t2);
      for (int t = 0; t < sc.t2; ++t) s.col(t) = beam;
      const CMat x = received_pilot_block(h, s, sc.snr_linear, rng, !sc.noiseless);
      est.channel_uses += sc.t2;
      return apply_front_end(x, fe);
    };
    const int idx = bisect_aod(uplink, theta_hat, sc.codebook, sc.geometry.d_bs);
    est.aod_indices[static_cast<std::size_t>(path)] = idx;
    est.aod_estimates(path) = sc.aod_grid.angles(idx);
  }

  SuChannelParams fitted;
  fitted.aoas = est.step1.aoa_estimates;
  fitted.aods = est.aod_estimates;
  fitted.gains = est.step1.gain_estimates;
  est.h_hat = su_channel_matrix(fitted, sc.geometry);
  return est;
}

}  // namespace sdmimo
