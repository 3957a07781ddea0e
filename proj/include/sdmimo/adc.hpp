// Multi-channel first-order 1-bit spatial sigma-delta ADC with angle
// steering, plus identity and regular 1-bit front-ends used as baselines.
//
// Conversion runs sequentially across channels of one snapshot: the
// quantization error of channel n is phase shifted and subtracted from the
// input of channel n+1, which pushes the quantization noise away from the
// steering angle. Snapshots (columns) are converted independently.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "sdmimo/common.hpp"

namespace sdmimo {

struct AdcConfig {
  int n_channels = 1;
  double spacing_wavelengths = 0.125;
  double quant_level = 1.0;   // b, volts
  double clip_level = 1.0;    // c, volts
  double steering_angle = 0;  // psi, radians in [-pi/2, pi/2]

  // Phase applied to the fed-back error. The sign is the negative of
  // 2*pi*d*sin(psi): with steering vectors of the form e^{-j 2 pi d sin},
  // this is the sign that places the shaped-noise minimum at the steering
  // angle rather than at its mirror image.
  double feedback_phase() const {
    return -2.0 * kPi * spacing_wavelengths * std::sin(steering_angle);
  }

  void validate() const {
    if (n_channels < 1) throw std::invalid_argument("AdcConfig: n_channels must be >= 1");
    if (!(quant_level > 0)) throw std::invalid_argument("AdcConfig: quant_level must be > 0");
    if (!(clip_level > 0)) throw std::invalid_argument("AdcConfig: clip_level must be > 0");
    if (!(spacing_wavelengths > 0)) throw std::invalid_argument("AdcConfig: spacing_wavelengths must be > 0");
    if (std::abs(steering_angle) > kPi / 2)
      throw std::invalid_argument("AdcConfig: steering_angle must be within [-pi/2, pi/2]");
  }
};

// Clips real and imaginary parts independently to magnitude c, preserving sign.
inline Complex clip(Complex x, double c) {
  const double re = std::copysign(std::min(std::abs(x.real()), c), x.real());
  const double im = std::copysign(std::min(std::abs(x.imag()), c), x.imag());
  return Complex(re, im);
}

// 1-bit quantizer with voltage level b; sign(0) := +1 so the output alphabet
// is always {+-b +-jb} and zero inputs map deterministically.
inline Complex quantize_1bit(Complex x, double b) {
  const double re = x.real() >= 0.0 ? b : -b;
  const double im = x.imag() >= 0.0 ? b : -b;
  return Complex(re, im);
}

// Largest clip level that keeps the error feedback loop from overloading at
// quantization level b and feedback phase `phase`. Strictly positive since
// |cos| + |sin| <= sqrt(2) < 2.
inline double overload_clip_level(double b, double phase) {
  return b * (2.0 - std::abs(std::cos(phase)) - std::abs(std::sin(phase)));
}

// Inverse of overload_clip_level: quantization level matching a given clip
// level at the given feedback phase.
inline double quant_level_for_clip(double c, double phase) {
  return c / (2.0 - std::abs(std::cos(phase)) - std::abs(std::sin(phase)));
}

// Lower-triangular feedback matrix U with [U]_{m,k} = e^{j (m-k) phase} for
// m >= k. The closed-form converter model is y = Q_b[U x - V y] with V = U - I.
inline CMat build_u_matrix(int n, double phase) {
  if (n < 1) throw std::invalid_argument("build_u_matrix: n must be >= 1");
  CMat u = CMat::Zero(n, n);
  for (int m = 0; m < n; ++m)
    for (int k = 0; k <= m; ++k)
      u(m, k) = std::exp(kJ * (static_cast<double>(m - k) * phase));
  return u;
}

// Converts one snapshot. Returns the quantized output y and the per-channel
// quantizer error e (y_n = r_n + e_n), which is useful for diagnostics.
inline std::pair<CVec, CVec> sd_quantize_snapshot(const CVec& x, const AdcConfig& cfg) {
  cfg.validate();
  if (x.size() != cfg.n_channels)
    throw std::invalid_argument("sd_quantize_snapshot: input length " + std::to_string(x.size()) +
                                " != n_channels " + std::to_string(cfg.n_channels));
  const int n = cfg.n_channels;
  const Complex fb = std::exp(kJ * cfg.feedback_phase());
  CVec y(n), e(n);
  Complex e_prev = 0.0;  // no feedback into the first channel
  for (int i = 0; i < n; ++i) {
    const Complex r = clip(x(i), cfg.clip_level) - fb * e_prev;
    y(i) = quantize_1bit(r, cfg.quant_level);
    e(i) = y(i) - r;
    e_prev = e(i);
  }
  return {std::move(y), std::move(e)};
}

struct FrontEnd {
  enum class Kind { unquantized, one_bit, sigma_delta };

  Kind kind = Kind::unquantized;
  double quant_level = 1.0;  // used by one_bit
  AdcConfig adc;             // used by sigma_delta

  static FrontEnd unquantized() { return FrontEnd{}; }

  static FrontEnd one_bit(double b) {
    if (!(b > 0)) throw std::invalid_argument("FrontEnd::one_bit: level must be > 0");
    FrontEnd fe;
    fe.kind = Kind::one_bit;
    fe.quant_level = b;
    return fe;
  }

  static FrontEnd sigma_delta(const AdcConfig& cfg) {
    cfg.validate();
    FrontEnd fe;
    fe.kind = Kind::sigma_delta;
    fe.adc = cfg;
    return fe;
  }
};

// Applies the front-end to a block of snapshots (one snapshot per column).
inline CMat apply_front_end(const CMat& x, const FrontEnd& fe) {
  if (x.cols() < 1) throw std::invalid_argument("apply_front_end: need at least one snapshot");
  switch (fe.kind) {
    case FrontEnd::Kind::unquantized:
      return x;
    case FrontEnd::Kind::one_bit: {
      CMat y(x.rows(), x.cols());
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i) y(i, j) = quantize_1bit(x(i, j), fe.quant_level);
      return y;
    }
    case FrontEnd::Kind::sigma_delta: {
      if (x.rows() != fe.adc.n_channels)
        throw std::invalid_argument("apply_front_end: row count does not match ADC channel count");
      CMat y(x.rows(), x.cols());
      for (Eigen::Index j = 0; j < x.cols(); ++j) y.col(j) = sd_quantize_snapshot(x.col(j), fe.adc).first;
      return y;
    }
  }
  throw std::logic_error("apply_front_end: unknown front-end kind");
}

}  // namespace sdmimo
