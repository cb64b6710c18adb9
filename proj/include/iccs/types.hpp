#pragma once

#include <cmath>
#include <complex>
#include <Eigen/Dense>

namespace iccs {

using cxd = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kBoltzmannJperK = 1.381e-23;
constexpr double kRefTemperatureK = 290.0;

// All transmit powers, precoder squared norms and power budgets are carried
// in dBm-linear units (mW) internally; public reporting converts to watts.
constexpr double kMwPerW = 1e3;

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

// Activity threshold for the step function U(t): relaxed offloading
// fractions are never exactly zero in floating point.
constexpr double kStepThreshold = 1e-9;

inline bool step_active(double t) { return t > kStepThreshold; }

}  // namespace iccs
