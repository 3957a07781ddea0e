// Shared aliases and small numeric helpers used across the library.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>

namespace sdmimo {

using Complex = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr Complex kJ{0.0, 1.0};

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

inline double db2lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin2db(double lin) { return 10.0 * std::log10(lin); }

}  // namespace sdmimo
