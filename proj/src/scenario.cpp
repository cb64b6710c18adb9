#include "iccs/scenario.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace iccs {

void ScenarioConfig::validate() const {
  if (num_aps < 1 || antennas_per_ap < 1 || num_vehicles < 1 ||
      tx_antennas < 1 || rx_antennas < 1 || serving_set_size < 1)
    throw std::invalid_argument("scenario: all counts must be >= 1");
  if (serving_set_size > num_aps)
    throw std::invalid_argument("scenario: L must not exceed M");
  if (bandwidth_hz <= 0.0)
    throw std::invalid_argument("scenario: bandwidth must be positive");
  if (area_side_km <= 0.0)
    throw std::invalid_argument("scenario: area side must be positive");
}

void PathLossParams::validate() const {
  if (carrier_freq_mhz <= 0.0 || ap_height_m <= 0.0 || user_height_m < 0.0)
    throw std::invalid_argument("pathloss: f, h_AP must be positive");
  if (!(breakpoint_d0_km > 0.0 && breakpoint_d0_km < breakpoint_d1_km))
    throw std::invalid_argument("pathloss: need 0 < d0 < d1");
}

const CMat& ChannelSet::cross_channel(int k, int kp) const {
  if (k == kp) throw std::invalid_argument("cross_channel: self pair excluded");
  return cross[k][kp];
}

double lloss_db(const PathLossParams& params) {
  if (params.carrier_freq_mhz <= 0.0 || params.ap_height_m <= 0.0 ||
      params.user_height_m < 0.0)
    throw std::invalid_argument("lloss_db: non-positive parameter");
  const double lf = std::log10(params.carrier_freq_mhz);
  return 46.3 + 33.9 * lf - 13.82 * std::log10(params.ap_height_m) -
         (1.1 * lf - 0.7) * params.user_height_m + (1.56 * lf - 0.8);
}

double pathloss_db(double d_km, const PathLossParams& params) {
  if (d_km <= 0.0) throw std::invalid_argument("pathloss_db: d must be > 0");
  params.validate();
  const double L = lloss_db(params);
  const double d0 = params.breakpoint_d0_km;
  const double d1 = params.breakpoint_d1_km;
  if (d_km > d1) return L + 35.0 * std::log10(d_km);
  if (d_km <= d0) return L + 15.0 * std::log10(d1) + 20.0 * std::log10(d0);
  return L + 15.0 * std::log10(d1) + 20.0 * std::log10(d_km);
}

double noise_power_watts(double bandwidth_hz, const PathLossParams& params) {
  if (bandwidth_hz <= 0.0)
    throw std::invalid_argument("noise_power_watts: B must be > 0");
  return bandwidth_hz * params.boltzmann * params.temperature_k *
         std::pow(10.0, params.noise_figure_db / 10.0);
}

CVec steering(double theta_rad, int n) {
  if (n < 1) throw std::invalid_argument("steering: n must be >= 1");
  CVec a(n);
  const double phase = -M_PI * std::sin(theta_rad);  // d/lambda = 1/2
  for (int i = 0; i < n; ++i)
    a(i) = std::polar(1.0, phase * static_cast<double>(i));
  return a;
}

Geometry place_network(const ScenarioConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const int M = cfg.num_aps;
  const int K = cfg.num_vehicles;
  std::uniform_real_distribution<double> upos(0.0, cfg.area_side_km);
  std::uniform_real_distribution<double> uangle(0.0, M_PI);
  std::uniform_real_distribution<double> udist(40.0, 50.0);
  std::uniform_real_distribution<double> urefl(0.8, 1.0);

  Geometry g;
  g.ap_positions_km.resize(M);
  g.vehicle_positions_km.resize(K);
  for (int m = 0; m < M; ++m) g.ap_positions_km[m] = {upos(rng), upos(rng)};
  for (int k = 0; k < K; ++k)
    g.vehicle_positions_km[k] = {upos(rng), upos(rng)};

  g.target_angles_rad = Vec(K);
  g.target_distances_m = Vec(K);
  g.reflection_coeffs = Vec(K);
  for (int k = 0; k < K; ++k) {
    g.target_angles_rad(k) = uangle(rng);
    g.target_distances_m(k) = udist(rng);
    g.reflection_coeffs(k) = urefl(rng);
  }

  g.dist_ap_km = Mat(K, M);
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) {
      const double d =
          (g.vehicle_positions_km[k] - g.ap_positions_km[m]).norm();
      g.dist_ap_km(k, m) = std::max(d, kMinDistanceKm);
    }

  g.dist_vehicle_km = Mat::Zero(K, K);
  for (int k = 0; k < K; ++k)
    for (int kp = 0; kp < K; ++kp)
      if (k != kp)
        g.dist_vehicle_km(k, kp) =
            (g.vehicle_positions_km[k] - g.vehicle_positions_km[kp]).norm();
  return g;
}

std::vector<std::vector<int>> select_serving_aps(const Mat& beta, int L) {
  const int K = static_cast<int>(beta.rows());
  const int M = static_cast<int>(beta.cols());
  if (L > M) throw std::invalid_argument("select_serving_aps: L > M");
  std::vector<std::vector<int>> serving(K);
  for (int k = 0; k < K; ++k) {
    std::vector<int> idx(M);
    std::iota(idx.begin(), idx.end(), 0);
    // Descending gain, ties broken by lowest AP index.
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return beta(k, a) > beta(k, b);
    });
    idx.resize(L);
    std::sort(idx.begin(), idx.end());
    serving[k] = idx;
  }
  return serving;
}

namespace {

cxd complex_gaussian(std::mt19937_64& rng) {
  static constexpr double half = 0.5;
  std::normal_distribution<double> n01(0.0, 1.0);
  const double re = n01(rng);
  const double im = n01(rng);
  return cxd(re, im) * std::sqrt(half);
}

CMat draw_matrix(int rows, int cols, double scale, std::mt19937_64& rng) {
  CMat h(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) h(r, c) = scale * complex_gaussian(rng);
  return h;
}

}  // namespace

ChannelSet draw_channels(const Geometry& geom, const ScenarioConfig& cfg,
                         const PathLossParams& params, std::mt19937_64& rng) {
  cfg.validate();
  const int M = cfg.num_aps;
  const int K = cfg.num_vehicles;
  if (static_cast<int>(geom.ap_positions_km.size()) != M ||
      static_cast<int>(geom.vehicle_positions_km.size()) != K)
    throw std::invalid_argument("draw_channels: geometry/config mismatch");

  ChannelSet ch;
  ch.noise_mw = noise_power_watts(cfg.bandwidth_hz, params) * kMwPerW;

  ch.beta_ap = Mat(K, M);
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m)
      ch.beta_ap(k, m) =
          std::pow(10.0, -pathloss_db(geom.dist_ap_km(k, m), params) / 10.0);

  ch.beta_cross = Mat::Zero(K, K);
  for (int k = 0; k < K; ++k)
    for (int kp = 0; kp < K; ++kp)
      if (k != kp) {
        const double d = std::max(geom.dist_vehicle_km(k, kp), kMinDistanceKm);
        ch.beta_cross(k, kp) = std::pow(10.0, -pathloss_db(d, params) / 10.0);
      }

  ch.uplink.assign(K, std::vector<CMat>(M));
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) {
      const double scale = std::sqrt(ch.beta_ap(k, m) / ch.noise_mw);
      ch.uplink[k][m] =
          draw_matrix(cfg.antennas_per_ap, cfg.tx_antennas, scale, rng);
    }

  ch.cross.assign(K, std::vector<CMat>(K));
  for (int k = 0; k < K; ++k)
    for (int kp = 0; kp < K; ++kp)
      if (k != kp) {
        const double scale = std::sqrt(ch.beta_cross(k, kp) / ch.noise_mw);
        ch.cross[k][kp] =
            draw_matrix(cfg.rx_antennas, cfg.tx_antennas, scale, rng);
      }

  ch.serving = select_serving_aps(ch.beta_ap, cfg.serving_set_size);
  return ch;
}

}  // namespace iccs
