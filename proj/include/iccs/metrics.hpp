#pragma once

#include <string>
#include <vector>

#include "iccs/scenario.hpp"
#include "iccs/types.hpp"

namespace iccs {

// Per-vehicle ISAC precoders, one communication vector per serving AP plus
// one sensing vector, in sqrt-mW units against noise-normalized channels.
struct BeamformerSet {
  // comm[k][j] pairs with ChannelSet::serving[k][j]
  std::vector<std::vector<CVec>> comm;
  std::vector<CVec> sensing;

  CVec aggregate(int k) const;  // g_k = sum_j comm[k][j] + sensing[k]
  static BeamformerSet zeros(const ScenarioConfig& cfg,
                             const std::vector<std::vector<int>>& serving);
};

struct OffloadMatrix {
  Mat b;  // K x M MEC fractions, zero outside the serving set
  Mat c;  // K x M cloud fractions

  static OffloadMatrix zeros(int K, int M) {
    return {Mat::Zero(K, M), Mat::Zero(K, M)};
  }
  double x_b(int k) const { return b.row(k).sum(); }
  double x_c(int k) const { return c.row(k).sum(); }
};

struct TaskParams {
  double task_bits = 1.6e6;   // 0.2 MB (decimal) per vehicle
  double alpha_loc = 400.0;   // cycles/bit
  double alpha_mec = 400.0;
  double alpha_cc = 400.0;
  double kappa_loc = 1e-28;   // W s^3 / cycles^3
  double kappa_mec = 1e-28;
  double p_max_w = std::pow(10.0, -0.7);  // 23 dBm vehicle budget
  double p_mec_max_w = 1.0;               // 30 dBm AP budget
  double f_mec_max = 3e9;                 // cycles/s per AP
  double f_cc_max = 1e10;                 // cycles/s, cloud total
  double r_f_max = 0.5e9;                 // bit/s fronthaul per AP
  double sinr_req = std::pow(10.0, 0.1);  // 1 dB sensing requirement
  double f_loc_max = 3e8;                 // cycles/s vehicle cap
  bool optimize_local_freq = true;        // else pinned at f_loc_max

  void validate() const;
};

struct ResourcePlan {
  Vec f_loc;   // K
  Mat f_mec;   // K x M
  Vec f_cc;    // K
  Mat r_f;     // K x M fronthaul shares, bit/s

  static ResourcePlan zeros(int K, int M) {
    return {Vec::Zero(K), Mat::Zero(K, M), Vec::Zero(K), Mat::Zero(K, M)};
  }
};

struct LatencyReport {
  Vec t_loc;       // s per vehicle
  Vec t_mec;
  Vec t_cc;
  Vec t_total;
  Mat mec_tx;      // per-pair transmission components
  Mat mec_comp;
  Mat cc_tx_v2a;
  Mat cc_tx_a2c;
  Vec cc_comp;
  double max_latency = 0.0;
  int argmax = -1;
};

struct ConstraintSlack {
  std::string name;
  int k = -1;
  int m = -1;
  double slack = 0.0;       // signed, >= 0 when satisfied
  double rel_slack = 0.0;   // slack / constraint scale
};

namespace metrics {

// Interference-plus-noise covariance seen by AP m detecting vehicle k.
CMat interference_cov(int k, int m, const BeamformerSet& beams,
                      const ChannelSet& ch);

// Achievable uplink rate, bit/s.
double rate(int k, int m, const BeamformerSet& beams, const ChannelSet& ch,
            double bandwidth_hz);

// K x M matrix of rates on serving pairs (zero elsewhere).
Mat rate_matrix(const BeamformerSet& beams, const ChannelSet& ch,
                double bandwidth_hz);

// Radar SINR at vehicle k's receiver (linear).
double sensing_sinr(int k, const BeamformerSet& beams, const ChannelSet& ch,
                    const Geometry& geom);

double local_latency(int k, const TaskParams& task, const ResourcePlan& plan);
// Total local power: compute + transmit, watts.
double local_power(int k, const TaskParams& task, const ResourcePlan& plan,
                   const BeamformerSet& beams);

double mec_latency(int k, const TaskParams& task, const ResourcePlan& plan,
                   const OffloadMatrix& off, const Mat& rates,
                   const std::vector<int>& serving_k, Vec* per_ap_tx = nullptr,
                   Vec* per_ap_comp = nullptr);

double cc_latency(int k, const TaskParams& task, const ResourcePlan& plan,
                  const OffloadMatrix& off, const Mat& rates,
                  const std::vector<int>& serving_k, Vec* per_ap_v2a = nullptr,
                  Vec* per_ap_a2c = nullptr, double* comp = nullptr);

// Compute power drawn at edge server m, watts.
double mec_power(int m, const TaskParams& task, const ResourcePlan& plan,
                 const OffloadMatrix& off);

LatencyReport total_latency(const OffloadMatrix& off, const TaskParams& task,
                            const ResourcePlan& plan, const Mat& rates,
                            const std::vector<std::vector<int>>& serving);

// Evaluates every constraint of the full problem; returns the violated ones
// (relative slack below -rel_tol). Violations are data, not errors; pass
// rel_tol = 0 to flag exact boundary crossings.
std::vector<ConstraintSlack> check_budgets(
    const BeamformerSet& beams, const OffloadMatrix& off,
    const ResourcePlan& plan, const TaskParams& task, const ChannelSet& ch,
    const Geometry& geom, const ScenarioConfig& cfg, double rel_tol = 1e-6);

// Received communication power at AP m from vehicle k, mW
// (noise reference applied once so the budget comparison is in power units).
double received_power_mw(int k, int m, const BeamformerSet& beams,
                         const ChannelSet& ch);

// Convenience: max over k of t_total, same recombination as total_latency.
double max_total_latency(const OffloadMatrix& off, const TaskParams& task,
                         const ResourcePlan& plan, const Mat& rates,
                         const std::vector<std::vector<int>>& serving);

}  // namespace metrics

// Naive evaluators following the printed model sums term by term; used by
// the tests and the kernel benchmark as the reference implementations.
namespace metrics_reference {

CMat interference_cov(int k, int m, const BeamformerSet& beams,
                      const ChannelSet& ch);

}  // namespace metrics_reference

}  // namespace iccs
