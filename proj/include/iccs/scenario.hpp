#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "iccs/types.hpp"

namespace iccs {

struct ScenarioConfig {
  int num_aps = 6;          // M
  int antennas_per_ap = 8;  // N
  int num_vehicles = 6;     // K
  int tx_antennas = 8;      // N_t
  int rx_antennas = 8;      // N_r
  double bandwidth_hz = 10e6;
  int serving_set_size = 3;  // L, |M_k|
  double area_side_km = 0.2;
  std::uint64_t rng_seed = 1;

  void validate() const;

  // CI-friendly scale used by the regression and acceptance suites.
  static ScenarioConfig desk_scale(std::uint64_t seed = 1) {
    ScenarioConfig c;
    c.num_aps = 4;
    c.antennas_per_ap = 4;
    c.num_vehicles = 3;
    c.tx_antennas = 4;
    c.rx_antennas = 4;
    c.serving_set_size = 2;
    c.rng_seed = seed;
    return c;
  }
};

struct PathLossParams {
  double carrier_freq_mhz = 1900.0;
  double ap_height_m = 15.0;
  double user_height_m = 1.65;
  double breakpoint_d0_km = 0.01;
  double breakpoint_d1_km = 0.05;
  double noise_figure_db = 9.0;
  double boltzmann = kBoltzmannJperK;
  double temperature_k = kRefTemperatureK;

  void validate() const;
};

struct Geometry {
  std::vector<Eigen::Vector2d> ap_positions_km;
  std::vector<Eigen::Vector2d> vehicle_positions_km;
  Vec target_angles_rad;      // theta_k in [0, pi]
  Vec target_distances_m;     // in [40, 50]
  Vec reflection_coeffs;      // eta_k in [0.8, 1]
  Mat dist_ap_km;             // K x M, clamped to the minimum distance
  Mat dist_vehicle_km;        // K x K raw pairwise distances
};

// All complex channels for one network realization, pre-divided by the
// noise amplitude so every downstream SINR uses identity noise covariance.
struct ChannelSet {
  std::vector<std::vector<CMat>> uplink;  // [k][m], N x N_t
  std::vector<std::vector<CMat>> cross;   // [k][k'], N_r x N_t, diagonal empty
  Mat beta_ap;                            // K x M linear gains (unnormalized)
  Mat beta_cross;                         // K x K
  std::vector<std::vector<int>> serving;  // M_k, ascending AP indices
  double noise_mw = 0.0;                  // normalization reference

  const CMat& cross_channel(int k, int kp) const;
};

// Minimum AP-vehicle (and vehicle-vehicle gain) distance; uniform placement
// can produce arbitrarily small separations.
constexpr double kMinDistanceKm = 0.005;

// Frequency-dependent constant term of the three-slope path loss model, dB.
double lloss_db(const PathLossParams& params);

// Three-slope path loss at distance d_km, dB.
double pathloss_db(double d_km, const PathLossParams& params);

// Thermal noise power over bandwidth B with the configured noise figure, W.
double noise_power_watts(double bandwidth_hz, const PathLossParams& params);

// Half-wavelength ULA steering vector, element i = exp(-j*pi*i*sin(theta)).
CVec steering(double theta_rad, int n);

Geometry place_network(const ScenarioConfig& cfg, std::mt19937_64& rng);

std::vector<std::vector<int>> select_serving_aps(const Mat& beta, int L);

ChannelSet draw_channels(const Geometry& geom, const ScenarioConfig& cfg,
                         const PathLossParams& params, std::mt19937_64& rng);

}  // namespace iccs
