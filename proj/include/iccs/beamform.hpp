#pragma once

#include <string>
#include <utility>
#include <vector>

#include "iccs/conic.hpp"
#include "iccs/metrics.hpp"
#include "iccs/scenario.hpp"

namespace iccs {

// WMMSE auxiliaries per serving pair: linear receiver and positive weight.
struct WmmseState {
  std::vector<std::vector<CVec>> v;    // [k][j] receiver, length N
  std::vector<std::vector<double>> V;  // [k][j] weight, >= 1
};

// Linearization anchor for the sensing lower bound.
struct SensingLinearization {
  std::vector<CVec> anchor;    // g_k at the previous iterate
  std::vector<CVec> steer_tx;  // a_t(theta_k), length N_t
  Vec eta;                     // reflection coefficients
  int n_r = 0;
};

CVec mmse_receiver(int k, int m, const BeamformerSet& beams,
                   const ChannelSet& ch);
double wmmse_weight(int k, int m, const BeamformerSet& beams,
                    const ChannelSet& ch);

// Optimized batch refresh: one factorized total covariance per AP, shared
// across vehicles, pairs updated in parallel.
WmmseState refresh_wmmse(const BeamformerSet& beams, const ChannelSet& ch);

namespace beamform_reference {
// Pair-by-pair refresh through the standalone receiver/weight formulas.
WmmseState refresh_wmmse(const BeamformerSet& beams, const ChannelSet& ch);
}  // namespace beamform_reference

// Concave rate surrogate evaluated at arbitrary beams with frozen (v, V),
// bit/s. Tight when (v, V) are the WMMSE optima for these beams.
double surrogate_rate(int k, int m, const BeamformerSet& beams, const CVec& v,
                      double V, const ChannelSet& ch, double bandwidth_hz);

SensingLinearization sensing_anchor(const BeamformerSet& beams,
                                    const Geometry& geom,
                                    const ScenarioConfig& cfg);

// eta^2 * g^H A g with A = N_r a_t a_t^H (the echo power quadratic).
double sensing_quadratic(int k, const CVec& g, const SensingLinearization& lin);
// Affine lower bound on the quadratic, tight at the anchor.
double sensing_minorant(int k, const CVec& g, const SensingLinearization& lin);

struct BeamformContext {
  const ScenarioConfig* cfg;
  const Geometry* geom;
  const ChannelSet* ch;
  const TaskParams* task;
  const OffloadMatrix* off;
  const ResourcePlan* plan;
};

struct BeamSocp {
  ConicProblem problem;
  // variable maps: complex scalars are (re, im) pairs laid out contiguously
  std::vector<std::vector<int>> comm_base;  // [k][j] or -1 when fixed zero
  std::vector<int> sensing_base;            // [k]
  std::vector<int> t_mec;                   // [k] or -1
  std::vector<int> t_cc;                    // [k] or -1
  int t_var = -1;                           // -1 in power-min mode
  bool power_min = false;

  BeamformerSet decode(const ConicSolution& sol, const ScenarioConfig& cfg,
                       const std::vector<std::vector<int>>& serving) const;
};

BeamSocp build_beam_socp(const BeamformContext& ctx, const WmmseState& wmmse,
                         const SensingLinearization& lin, bool power_min,
                         double t_ref);

struct BeamformTraceRecord {
  int iteration = 0;
  double objective = 0.0;
  double min_sensing_slack = 0.0;  // min_k sinr/req - 1
  double max_power_use = 0.0;      // max_k |g_k|^2 / budget_k
};

struct BeamformResult {
  BeamformerSet beams;
  Mat rates;
  std::vector<double> trace;  // accepted objective per iteration
  std::vector<BeamformTraceRecord> records;
  bool converged = false;
  bool warning = false;
  int iterations = 0;
  std::string note;
};

// Iterates WMMSE/anchor refreshes and convex solves until the objective
// stalls. In power-min mode the objective is total transmit power;
// otherwise it is the max recombined latency with everything else frozen.
BeamformResult run_algorithm2(const BeamformContext& ctx, BeamformerSet start,
                              double zeta = 1e-3, int max_iter = 30);

// Sensing-feasible starting point: sensing beams aligned with the target
// steering vector, small equal-power communication beams toward each
// serving AP. Returns feasible=false when no scaling meets the requirement.
std::pair<BeamformerSet, bool> init_beams(const BeamformContext& ctx);

}  // namespace iccs
