// Angular channel models: steering vectors for the oversampled base-station
// array and the critically spaced user array, narrowband multipath channel
// construction, pilot reception, and random parameter sampling.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdmimo/common.hpp"
#include "sdmimo/rng.hpp"

namespace sdmimo {

struct ArrayGeometry {
  int n_bs = 128;          // receive antennas at the base station
  double d_bs = 0.125;     // base-station element spacing in wavelengths
  int n_ue = 32;           // transmit antennas at the user

  void validate() const {
    if (n_bs < 1) throw std::invalid_argument("ArrayGeometry: n_bs must be >= 1");
    if (n_ue < 1) throw std::invalid_argument("ArrayGeometry: n_ue must be >= 1");
    if (!(d_bs > 0)) throw std::invalid_argument("ArrayGeometry: d_bs must be > 0");
  }
};

struct SuChannelParams {
  RVec aoas;    // theta, radians, sorted ascending
  RVec aods;    // phi, radians, aligned with aoas
  CVec gains;   // alpha
  std::vector<int> aod_grid_indices;  // set when AoDs were drawn on a grid; else empty

  int n_paths() const { return static_cast<int>(aoas.size()); }

  void validate() const {
    if (aoas.size() < 1) throw std::invalid_argument("SuChannelParams: need at least one path");
    if (aods.size() != aoas.size() || gains.size() != aoas.size())
      throw std::invalid_argument("SuChannelParams: component lengths differ");
  }
};

struct MuUserChannel {
  RVec aoas;
  CVec gains;
  int n_paths() const { return static_cast<int>(aoas.size()); }
};

struct MuChannelParams {
  std::vector<MuUserChannel> users;
  int n_users() const { return static_cast<int>(users.size()); }
};

enum class GainModel { unit_modulus, truncated_gaussian };

struct ChannelSamplerSpec {
  double aoa_sector = deg2rad(45.0);        // AoAs drawn uniformly in [-aoa_sector, aoa_sector]
  double aod_sector = deg2rad(75.0);        // AoDs restricted to [-aod_sector, aod_sector]
  double min_aoa_spacing = deg2rad(20.0);   // pairwise spacing in angle
  double min_aod_spacing_cos = 0.1;         // pairwise spacing in direction cosine
  GainModel gain_model = GainModel::unit_modulus;
  double tau = 0.5;                         // truncation for truncated_gaussian
  bool on_grid_aod = true;                  // snap AoDs to the departure grid
  bool on_grid_aoa = false;                 // snap AoAs to the arrival search grid

  void validate() const {
    if (!(aoa_sector > 0) || aoa_sector >= kPi / 2)
      throw std::invalid_argument("ChannelSamplerSpec: aoa_sector must be in (0, pi/2)");
    if (!(aod_sector > 0) || aod_sector >= kPi / 2)
      throw std::invalid_argument("ChannelSamplerSpec: aod_sector must be in (0, pi/2)");
    if (min_aoa_spacing < 0 || min_aod_spacing_cos < 0)
      throw std::invalid_argument("ChannelSamplerSpec: spacings must be nonnegative");
    if (tau < 0) throw std::invalid_argument("ChannelSamplerSpec: tau must be >= 0");
  }
};

// Base-station steering vector [1, e^{-j 2 pi d sin(theta)}, ...]^T.
inline CVec steering_bs(double theta, int n, double d) {
  CVec a(n);
  const double step = -2.0 * kPi * d * std::sin(theta);
  for (int m = 0; m < n; ++m) a(m) = std::exp(kJ * (step * static_cast<double>(m)));
  return a;
}

// User steering vector for the critically spaced array (half-wavelength):
// [1, e^{-j pi sin(phi)}, ...]^T.
inline CVec steering_ue(double phi, int n) {
  CVec a(n);
  const double step = -kPi * std::sin(phi);
  for (int m = 0; m < n; ++m) a(m) = std::exp(kJ * (step * static_cast<double>(m)));
  return a;
}

inline CMat steering_bs_matrix(const RVec& thetas, int n, double d) {
  CMat a(n, thetas.size());
  for (Eigen::Index l = 0; l < thetas.size(); ++l) a.col(l) = steering_bs(thetas(l), n, d);
  return a;
}

inline CMat steering_ue_matrix(const RVec& phis, int n) {
  CMat a(n, phis.size());
  for (Eigen::Index l = 0; l < phis.size(); ++l) a.col(l) = steering_ue(phis(l), n);
  return a;
}

// H = (1/sqrt(L)) A_BS diag(alpha) A_UE^H.
inline CMat su_channel_matrix(const SuChannelParams& p, const ArrayGeometry& g) {
  p.validate();
  g.validate();
  const CMat a_bs = steering_bs_matrix(p.aoas, g.n_bs, g.d_bs);
  const CMat a_ue = steering_ue_matrix(p.aods, g.n_ue);
  return (1.0 / std::sqrt(static_cast<double>(p.n_paths()))) * a_bs * p.gains.asDiagonal() *
         a_ue.adjoint();
}

// h_k = (1/sqrt(L_k)) A_BS(theta_k) alpha_k.
inline CVec simo_channel(const MuUserChannel& u, const ArrayGeometry& g) {
  g.validate();
  if (u.aoas.size() < 1 || u.aoas.size() != u.gains.size())
    throw std::invalid_argument("simo_channel: invalid per-user parameters");
  const CMat a_bs = steering_bs_matrix(u.aoas, g.n_bs, g.d_bs);
  return (1.0 / std::sqrt(static_cast<double>(u.n_paths()))) * (a_bs * u.gains);
}

inline CMat mu_channel_matrix(const MuChannelParams& p, const ArrayGeometry& g) {
  if (p.n_users() < 1) throw std::invalid_argument("mu_channel_matrix: need at least one user");
  CMat h(g.n_bs, p.n_users());
  for (int k = 0; k < p.n_users(); ++k) h.col(k) = simo_channel(p.users[static_cast<std::size_t>(k)], g);
  return h;
}

// Uplink reception X = sqrt(P) H S + Z with Z entries CN(0, 1). Columns of S
// must have unit norm. `add_noise = false` is a test hook for noiseless runs.
inline CMat received_pilot_block(const CMat& h, const CMat& s, double snr_linear, Rng& rng,
                                 bool add_noise = true) {
  if (h.cols() != s.rows()) throw std::invalid_argument("received_pilot_block: H and S dimensions differ");
  if (snr_linear < 0) throw std::invalid_argument("received_pilot_block: snr must be >= 0");
  for (Eigen::Index t = 0; t < s.cols(); ++t)
    if (std::abs(s.col(t).norm() - 1.0) > 1e-12)
      throw std::invalid_argument("received_pilot_block: pilot column " + std::to_string(t) +
                                  " does not have unit norm");
  CMat x = std::sqrt(snr_linear) * h * s;
  if (add_noise) {
    for (Eigen::Index t = 0; t < x.cols(); ++t)
      for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, t) += rng.cgaussian(1.0);
  }
  return x;
}

namespace detail {

constexpr int kMaxRejectionAttempts = 1000000;

inline double snap_to_grid(double value, const RVec& grid) {
  Eigen::Index best = 0;
  double best_d = std::abs(grid(0) - value);
  for (Eigen::Index i = 1; i < grid.size(); ++i) {
    const double di = std::abs(grid(i) - value);
    if (di < best_d) {
      best_d = di;
      best = i;
    }
  }
  return grid(best);
}

inline bool pairwise_spacing_ok(const std::vector<double>& v, double min_spacing) {
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j)
      if (std::abs(v[i] - v[j]) < min_spacing) return false;
  return true;
}

inline Complex draw_gain(const ChannelSamplerSpec& spec, Rng& rng) {
  if (spec.gain_model == GainModel::unit_modulus) return rng.unit_phase();
  for (int attempt = 0; attempt < kMaxRejectionAttempts; ++attempt) {
    const Complex g = rng.cgaussian(1.0);
    if (std::abs(g.real()) >= spec.tau && std::abs(g.imag()) >= spec.tau) return g;
  }
  throw std::invalid_argument("draw_gain: truncation tau too large, rejection sampling failed");
}

// AoAs uniform in the sector with pairwise angular spacing, optionally snapped
// to the arrival search grid (spacing is re-checked on the snapped values).
inline RVec draw_aoas(const ChannelSamplerSpec& spec, int l, const RVec& aoa_grid, Rng& rng) {
  std::vector<double> aoas(static_cast<std::size_t>(l));
  for (int attempt = 0; attempt < kMaxRejectionAttempts; ++attempt) {
    for (auto& a : aoas) {
      a = rng.uniform(-spec.aoa_sector, spec.aoa_sector);
      if (spec.on_grid_aoa) a = snap_to_grid(a, aoa_grid);
    }
    if (pairwise_spacing_ok(aoas, spec.min_aoa_spacing)) {
      std::sort(aoas.begin(), aoas.end());
      return Eigen::Map<RVec>(aoas.data(), l);
    }
  }
  throw std::invalid_argument("draw_aoas: AoA spacing constraint infeasible for the sector");
}

}  // namespace detail

// Draws a multipath channel: AoAs uniform in the arrival sector with a minimum
// angular spacing, AoDs uniform in the departure sector with a minimum spacing
// in direction cosine (drawn from the departure grid when on_grid_aod is set),
// and gains per the configured model. Paths come back sorted by AoA.
inline SuChannelParams sample_su_channel(const ChannelSamplerSpec& spec, int l,
                                         const RVec& aoa_grid, const RVec& aod_grid, Rng& rng) {
  spec.validate();
  if (l < 1) throw std::invalid_argument("sample_su_channel: need at least one path");

  SuChannelParams p;
  p.aoas = detail::draw_aoas(spec, l, aoa_grid, rng);

  const double sin_sector = std::sin(spec.aod_sector);
  std::vector<int> allowed;
  for (Eigen::Index i = 0; i < aod_grid.size(); ++i)
    if (std::abs(std::sin(aod_grid(i))) <= sin_sector + 1e-12) allowed.push_back(static_cast<int>(i));
  if (spec.on_grid_aod && allowed.empty())
    throw std::invalid_argument("sample_su_channel: departure sector contains no grid points");

  std::vector<double> sines(static_cast<std::size_t>(l));
  std::vector<int> indices(static_cast<std::size_t>(l), -1);
  bool ok = false;
  for (int attempt = 0; attempt < detail::kMaxRejectionAttempts && !ok; ++attempt) {
    for (int i = 0; i < l; ++i) {
      const double draw = rng.uniform(-spec.aod_sector, spec.aod_sector);
      if (spec.on_grid_aod) {
        // snap to the nearest grid point that stays inside the sector
        int idx = allowed.front();
        double best = std::abs(std::sin(aod_grid(idx)) - std::sin(draw));
        for (int cand : allowed) {
          const double dist = std::abs(std::sin(aod_grid(cand)) - std::sin(draw));
          if (dist < best) {
            best = dist;
            idx = cand;
          }
        }
        indices[static_cast<std::size_t>(i)] = idx;
        sines[static_cast<std::size_t>(i)] = std::sin(aod_grid(idx));
      } else {
        sines[static_cast<std::size_t>(i)] = std::sin(draw);
      }
    }
    ok = detail::pairwise_spacing_ok(sines, spec.min_aod_spacing_cos);
  }
  if (!ok) throw std::invalid_argument("sample_su_channel: AoD spacing constraint infeasible");

  p.aods.resize(l);
  p.gains.resize(l);
  p.aod_grid_indices.clear();
  for (int i = 0; i < l; ++i) {
    p.aods(i) = std::asin(sines[static_cast<std::size_t>(i)]);
    p.gains(i) = detail::draw_gain(spec, rng);
    if (spec.on_grid_aod) p.aod_grid_indices.push_back(indices[static_cast<std::size_t>(i)]);
  }
  return p;
}

inline MuChannelParams sample_mu_channel(const ChannelSamplerSpec& spec, int k_users,
                                         const std::vector<int>& paths_per_user,
                                         const RVec& aoa_grid, Rng& rng) {
  spec.validate();
  if (k_users < 1) throw std::invalid_argument("sample_mu_channel: need at least one user");
  if (static_cast<int>(paths_per_user.size()) != k_users)
    throw std::invalid_argument("sample_mu_channel: paths_per_user size != n_users");
  MuChannelParams p;
  p.users.reserve(static_cast<std::size_t>(k_users));
  for (int k = 0; k < k_users; ++k) {
    MuUserChannel u;
    u.aoas = detail::draw_aoas(spec, paths_per_user[static_cast<std::size_t>(k)], aoa_grid, rng);
    u.gains.resize(u.aoas.size());
    for (Eigen::Index i = 0; i < u.gains.size(); ++i) u.gains(i) = detail::draw_gain(spec, rng);
    p.users.push_back(std::move(u));
  }
  return p;
}

}  // namespace sdmimo
