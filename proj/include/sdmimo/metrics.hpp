// Error metrics accumulated across Monte-Carlo trials. Normalized MSE is
// reported as a ratio of accumulated sums (ratio of expectations), not as a
// mean of per-trial ratios.
#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "sdmimo/common.hpp"

namespace sdmimo {

struct NmseParts {
  double num = 0.0;  // squared error norm
  double den = 0.0;  // squared truth norm
};

inline NmseParts metric_nmse(const CMat& est, const CMat& truth) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols())
    throw std::invalid_argument("metric_nmse: shape mismatch");
  return {(est - truth).squaredNorm(), truth.squaredNorm()};
}

inline NmseParts metric_nmse(const CVec& est, const CVec& truth) {
  if (est.size() != truth.size()) throw std::invalid_argument("metric_nmse: length mismatch");
  return {(est - truth).squaredNorm(), truth.squaredNorm()};
}

struct AngleError {
  int indicator = 0;          // 1 when the grid-index sets differ
  bool truth_off_grid = false;  // true when a true angle had to be snapped
};

// Order-insensitive comparison of the nearest-grid index sets of estimated
// and true angles. `nearest` maps an angle to its grid index; `grid_angle`
// recovers the angle of an index (used to flag off-grid truth).
template <typename NearestFn, typename AngleFn>
inline AngleError metric_angle_error(const std::vector<int>& est_indices, const RVec& true_angles,
                                     NearestFn&& nearest, AngleFn&& grid_angle) {
  AngleError err;
  std::set<int> truth_set;
  for (Eigen::Index i = 0; i < true_angles.size(); ++i) {
    const int idx = nearest(true_angles(i));
    if (std::abs(grid_angle(idx) - true_angles(i)) > 1e-9) err.truth_off_grid = true;
    truth_set.insert(idx);
  }
  const std::set<int> est_set(est_indices.begin(), est_indices.end());
  err.indicator = est_set == truth_set ? 0 : 1;
  return err;
}

struct TrialRecord {
  int trial = 0;
  int e_theta = 0;
  int e_phi = 0;
  NmseParts nmse_alpha;
  NmseParts nmse_h;
  long channel_uses = 0;
  bool truth_snapped = false;
  bool rank_deficient = false;
};

struct Aggregate {
  long trials = 0;
  long e_theta_count = 0;
  long e_phi_count = 0;
  NmseParts nmse_alpha;
  NmseParts nmse_h;
  bool any_truth_snapped = false;

  void add(const TrialRecord& r) {
    ++trials;
    e_theta_count += r.e_theta;
    e_phi_count += r.e_phi;
    nmse_alpha.num += r.nmse_alpha.num;
    nmse_alpha.den += r.nmse_alpha.den;
    nmse_h.num += r.nmse_h.num;
    nmse_h.den += r.nmse_h.den;
    any_truth_snapped = any_truth_snapped || r.truth_snapped;
  }

  double e_theta() const { return trials ? static_cast<double>(e_theta_count) / trials : 0.0; }
  double e_phi() const { return trials ? static_cast<double>(e_phi_count) / trials : 0.0; }
  double nmse_alpha_ratio() const { return nmse_alpha.den > 0 ? nmse_alpha.num / nmse_alpha.den : 0.0; }
  double nmse_h_ratio() const { return nmse_h.den > 0 ? nmse_h.num / nmse_h.den : 0.0; }
};

}  // namespace sdmimo
