// Multi-user uplink estimation: orthogonal pilots, per-user despreading, and
// per-user arrival-angle / gain estimation reusing the single-user Step 1.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sdmimo/channel.hpp"
#include "sdmimo/common.hpp"
#include "sdmimo/estimator.hpp"
#include "sdmimo/noise_model.hpp"

namespace sdmimo {

// Unitary pilot matrix (normalized DFT): constant-modulus entries keep the
// per-antenna transmit power flat while S S^H = S^H S = I.
inline CMat orthogonal_pilots(int k) {
  if (k < 1) throw std::invalid_argument("orthogonal_pilots: k must be >= 1");
  CMat s(k, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  for (int m = 0; m < k; ++m)
    for (int n = 0; n < k; ++n)
      s(m, n) = scale * std::exp(-kJ * (2.0 * kPi * m * n / static_cast<double>(k)));
  return s;
}

// Separates the per-user components of one received block: column k of Y S^H
// is the despread observation of user k.
inline CMat despread(const CMat& y, const CMat& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("despread: pilot matrix must be square");
  if (y.cols() != s.rows()) throw std::invalid_argument("despread: column count != pilot size");
  return y * s.adjoint();
}

struct MuScenario {
  ArrayGeometry geometry;  // n_ue unused in the multi-user setting
  int n_users = 8;
  std::vector<int> paths_per_user;  // L_k; sized n_users by prepare()
  double snr_linear = 1.0;
  int t = 1;  // channel uses; each use carries a K x K pilot block
  FrontEnd::Kind front_end = FrontEnd::Kind::sigma_delta;
  bool noiseless = false;  // suppress receiver noise (test hook)
  AoaGrid aoa_grid = AoaGrid::uniform_degrees();

  CMat bs_grid_manifold;
  CMat pilots;
  CMat whitener;

  double clip_level() const { return clip_level_step1(snr_linear); }

  FrontEnd make_front_end() const {
    switch (front_end) {
      case FrontEnd::Kind::unquantized:
        return FrontEnd::unquantized();
      case FrontEnd::Kind::one_bit:
        return FrontEnd::one_bit(quant_level_for_clip(clip_level(), 0.0));
      case FrontEnd::Kind::sigma_delta: {
        AdcConfig cfg;
        cfg.n_channels = geometry.n_bs;
        cfg.spacing_wavelengths = geometry.d_bs;
        cfg.steering_angle = 0.0;
        cfg.clip_level = clip_level();
        cfg.quant_level = quant_level_for_clip(cfg.clip_level, cfg.feedback_phase());
        return FrontEnd::sigma_delta(cfg);
      }
    }
    throw std::logic_error("MuScenario: unknown front-end kind");
  }

  void prepare() {
    geometry.validate();
    if (n_users < 1) throw std::invalid_argument("MuScenario: n_users must be >= 1");
    if (t < 1) throw std::invalid_argument("MuScenario: t must be >= 1");
    if (paths_per_user.empty()) paths_per_user.assign(static_cast<std::size_t>(n_users), 1);
    if (static_cast<int>(paths_per_user.size()) != n_users)
      throw std::invalid_argument("MuScenario: paths_per_user size != n_users");
    bs_grid_manifold = steering_bs_matrix(aoa_grid.angles, geometry.n_bs, geometry.d_bs);
    pilots = orthogonal_pilots(n_users);
    if (front_end == FrontEnd::Kind::sigma_delta) {
      whitener = prewhitener(effective_noise_cov(make_front_end().adc));
    } else {
      whitener = CMat::Identity(geometry.n_bs, geometry.n_bs);
    }
  }
};

struct MuUserEstimate {
  RVec aoa_estimates;
  std::vector<int> aoa_indices;
  CVec gain_estimates;
  CVec h_hat;
};

struct MuChannelEstimate {
  std::vector<MuUserEstimate> users;
  CMat h_hat;  // stacked per-user channels, n_bs x K
};

// Receives T pilot blocks through the front end, despreads each, stacks the
// per-user columns, and runs per-user Bartlett + whitened least squares.
inline MuChannelEstimate estimate_mu_channels(const MuScenario& sc, const MuChannelParams& truth,
                                              Rng& rng) {
  if (truth.n_users() != sc.n_users)
    throw std::invalid_argument("estimate_mu_channels: truth user count != scenario");
  const int k = sc.n_users;
  const CMat h = mu_channel_matrix(truth, sc.geometry);
  const FrontEnd fe = sc.make_front_end();

  std::vector<CMat> per_user(static_cast<std::size_t>(k), CMat(sc.geometry.n_bs, sc.t));
  for (int t = 0; t < sc.t; ++t) {
    const CMat x = received_pilot_block(h, sc.pilots, sc.snr_linear, rng, !sc.noiseless);
    const CMat separated = despread(apply_front_end(x, fe), sc.pilots);
    for (int u = 0; u < k; ++u) per_user[static_cast<std::size_t>(u)].col(t) = separated.col(u);
  }

  MuChannelEstimate est;
  est.users.resize(static_cast<std::size_t>(k));
  est.h_hat.resize(sc.geometry.n_bs, k);
  for (int u = 0; u < k; ++u) {
    const int l = sc.paths_per_user[static_cast<std::size_t>(u)];
    const CMat& yk = per_user[static_cast<std::size_t>(u)];
    MuUserEstimate& ue = est.users[static_cast<std::size_t>(u)];

    const RVec spectrum = bartlett_spectrum(yk, sc.bs_grid_manifold);
    ue.aoa_indices = find_peaks(spectrum, l);
    ue.aoa_estimates.resize(l);
    for (int i = 0; i < l; ++i)
      ue.aoa_estimates(i) = sc.aoa_grid.angles(ue.aoa_indices[static_cast<std::size_t>(i)]);

    ue.gain_estimates =
        gain_wls(yk, ue.aoa_estimates, sc.whitener, sc.snr_linear, l, sc.geometry.d_bs).gains;

    MuUserChannel fitted;
    fitted.aoas = ue.aoa_estimates;
    fitted.gains = ue.gain_estimates;
    ue.h_hat = simo_channel(fitted, sc.geometry);
    est.h_hat.col(u) = ue.h_hat;
  }
  return est;
}

}  // namespace sdmimo
