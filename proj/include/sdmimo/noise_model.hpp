// Linearized quantization-noise model of the spatial sigma-delta converter:
// closed-form per-channel error at broadside steering, the exact floor-based
// input/output identity, the noise covariance R_q = (2 b^2 / 3) U^-1 U^-H and
// effective-noise covariance R_n = I + R_q, prewhitening, and empirical
// diagnostics (input/noise correlation, angular noise spectrum).
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "sdmimo/adc.hpp"
#include "sdmimo/common.hpp"

namespace sdmimo {

// Fractional part in [0, 1); frac(-0.25) == 0.75.
inline double frac(double x) { return x - std::floor(x); }

// Closed-form quantizer error for broadside steering and clip-inactive inputs
// (|Re x_k| <= b, |Im x_k| <= b). Each part of the result lies in (-b, b].
inline CVec closed_form_error(const CVec& x, double b) {
  if (!(b > 0)) throw std::invalid_argument("closed_form_error: b must be > 0");
  const Eigen::Index n = x.size();
  CVec e(n);
  double sum_re = 0.0, sum_im = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sum_re += x(i).real();
    sum_im += x(i).imag();
    const double half_idx = 0.5 * static_cast<double>(i);  // (n-1)/2 for 1-based n
    const double re = b - 2.0 * b * frac(half_idx + sum_re / (2.0 * b));
    const double im = b - 2.0 * b * frac(half_idx + sum_im / (2.0 * b));
    e(i) = Complex(re, im);
  }
  return e;
}

// Max-norm residual of the deterministic relation
//   0.5 b^-1 U y + nu - mu 1 = floor[0.5 b^-1 U x + nu],
// with nu = mu V 1, mu = 0.5 + 0.5j and floor taken per real/imaginary part.
// The residual is ~0 whenever clipping was inactive and steering is broadside;
// a nonzero residual flags clipped inputs rather than an error.
inline double floor_identity_residual(const CVec& x, const CVec& y, const AdcConfig& cfg) {
  cfg.validate();
  if (x.size() != cfg.n_channels || y.size() != cfg.n_channels)
    throw std::invalid_argument("floor_identity_residual: vector length != n_channels");
  const int n = cfg.n_channels;
  const double b = cfg.quant_level;
  const CMat u = build_u_matrix(n, cfg.feedback_phase());
  const Complex mu(0.5, 0.5);

  CVec nu(n);
  for (int i = 0; i < n; ++i) nu(i) = mu * (u.row(i).sum() - 1.0);  // mu * (V 1)

  const CVec lhs = 0.5 / b * (u * y) + nu - mu * CVec::Ones(n);
  const CVec arg = 0.5 / b * (u * x) + nu;
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const Complex rhs(std::floor(arg(i).real()), std::floor(arg(i).imag()));
    worst = std::max(worst, std::abs(lhs(i) - rhs));
  }
  return worst;
}

// R_q = (2 b^2 / 3) U^-1 U^-H. Hermitian positive definite; at broadside the
// diagonal is (2b^2/3, 4b^2/3, ...) with -2b^2/3 on the first off-diagonals.
inline CMat quant_noise_cov(const AdcConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_channels;
  const CMat u = build_u_matrix(n, cfg.feedback_phase());
  const CMat ui = u.triangularView<Eigen::Lower>().solve(CMat::Identity(n, n));
  const double b = cfg.quant_level;
  CMat r = (2.0 * b * b / 3.0) * (ui * ui.adjoint());
  return 0.5 * (r + r.adjoint().eval());  // clean up Hermitian round-off
}

// R_n = I + R_q, the covariance of receiver noise plus quantization noise.
inline CMat effective_noise_cov(const AdcConfig& cfg) {
  CMat r = quant_noise_cov(cfg);
  r += CMat::Identity(r.rows(), r.cols());
  return r;
}

// Hermitian inverse square root W = Q diag(lambda^-1/2) Q^H of a Hermitian
// positive definite matrix, so that W r W^H = I.
inline CMat prewhitener(const CMat& r_n) {
  if (r_n.rows() != r_n.cols()) throw std::invalid_argument("prewhitener: matrix must be square");
  Eigen::SelfAdjointEigenSolver<CMat> es(r_n);
  if (es.info() != Eigen::Success) throw std::runtime_error("prewhitener: eigendecomposition failed");
  const double min_eig = es.eigenvalues().minCoeff();
  if (!(min_eig > 0))
    throw std::runtime_error("prewhitener: matrix not positive definite (smallest eigenvalue " +
                             std::to_string(min_eig) + ")");
  const RVec inv_sqrt = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().adjoint();
}

// Per-channel sample correlation between the converter input and its noise:
// entry n is (1/T) sum_t x_n(t) (y_n(t) - x_n(t))^*.
inline CVec input_noise_correlation(const CMat& x, const CMat& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw std::invalid_argument("input_noise_correlation: shape mismatch");
  if (x.cols() < 2) throw std::invalid_argument("input_noise_correlation: need at least 2 snapshots");
  const CMat q = y - x;
  return (x.cwiseProduct(q.conjugate())).rowwise().mean();
}

// Angular power spectrum of the conversion noise averaged over snapshots:
// value at theta is (1/T) sum_t |a_BS(theta)^H (y_t - x_t)|^2.
inline RVec angular_noise_spectrum(const CMat& x, const CMat& y, const RVec& theta_grid, double d) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw std::invalid_argument("angular_noise_spectrum: shape mismatch");
  const Eigen::Index n = x.rows();
  const CMat q = y - x;
  RVec spectrum(theta_grid.size());
  CVec a(n);
  for (Eigen::Index g = 0; g < theta_grid.size(); ++g) {
    const double step = -2.0 * kPi * d * std::sin(theta_grid(g));
    for (Eigen::Index m = 0; m < n; ++m) a(m) = std::exp(kJ * (step * static_cast<double>(m)));
    spectrum(g) = (a.adjoint() * q).squaredNorm() / static_cast<double>(q.cols());
  }
  return spectrum;
}

// Precomputed whitening context for one converter configuration.
struct NoiseModel {
  AdcConfig cfg;
  CMat r_q;
  CMat r_n;
  CMat whitener;

  static NoiseModel build(const AdcConfig& cfg) {
    NoiseModel m;
    m.cfg = cfg;
    m.r_q = quant_noise_cov(cfg);
    m.r_n = m.r_q + CMat::Identity(cfg.n_channels, cfg.n_channels);
    m.whitener = prewhitener(m.r_n);
    return m;
  }
};

}  // namespace sdmimo
