#pragma once

#include <string>
#include <vector>

#include "iccs/conic.hpp"
#include "iccs/metrics.hpp"
#include "iccs/scenario.hpp"

namespace iccs {

// Penalty/weight bookkeeping for the relaxed offloading iteration.
struct PenaltyState {
  Vec rho_b;       // per-vehicle penalty factors
  Vec rho_c;
  double upsilon = 0.0;  // penalty scale
  Mat w_ub;        // step-function weights, K x M
  Mat w_uc;
  double eps = 1e-3;
  int iteration = 0;

  static PenaltyState fresh(int K, int M, double upsilon_value);
};

// rho_k = upsilon * (1 - 1^T x) * 1^T x from the previous iterate.
PenaltyState penalty_update(PenaltyState st, const OffloadMatrix& prev);

// w = 1 / (x_prev + eps), elementwise.
PenaltyState weight_update(PenaltyState st, const OffloadMatrix& prev);

// Affine majorant of G(s) = (1 - s) s anchored at s = anchor_sum:
// G(s) <= offset + slope * s. Returns {offset, slope}.
std::pair<double, double> penalty_majorant(double anchor_sum);

// First-order expansion of x*t around (xa, ta).
LinExpr bilinear_linearize(const LinExpr& x, const LinExpr& t, double xa,
                           double ta);
double bilinear_linearize_value(double x, double t, double xa, double ta);

struct OffloadContext {
  const ScenarioConfig* cfg;
  const ChannelSet* ch;
  const TaskParams* task;
  const Mat* rates;          // frozen achievable rates, K x M
  const ResourcePlan* plan;  // incoming plan (may have inactive zeros)
  Mat received_w;            // frozen per-pair received power at APs, W
  bool allow_mec = true;
  bool allow_cc = true;
};

struct OffloadTraceRecord {
  int iteration = 0;
  double objective = 0.0;
  double max_violation = 0.0;  // relative, over the block's own constraints
};

struct OffloadResult {
  OffloadMatrix off;
  ResourcePlan plan;  // working plan consistent with the returned pattern
  std::vector<double> trace;  // accepted objective per iteration
  std::vector<OffloadTraceRecord> records;
  bool converged = false;
  bool warning = false;
  int iterations = 0;
};

// Working plan used inside the block: incoming values on provisioned
// entries, fair capacity shares where the incoming plan has zeros, so the
// LP can price currently-inactive options.
ResourcePlan augment_plan(const OffloadContext& ctx);

// Zero entries outside the pattern and scale overloaded APs back into
// their capacity/power budgets.
ResourcePlan restrict_plan(const OffloadContext& ctx, const ResourcePlan& base,
                           const OffloadMatrix& off);

struct OffloadLp {
  ConicProblem problem;
  Eigen::MatrixXi b_var, c_var;  // -1 when the fraction is fixed at zero
  std::vector<int> t_mec, t_cc;  // -1 when the tier is unavailable
  int t = -1;
};

// One iteration's linear program: epigraph rows with the bilinear terms
// linearized at the anchor, weighted capacity/power/fronthaul rows, penalty
// majorants in the objective, and a trust-region box around the anchor.
OffloadLp build_offload_lp(const OffloadContext& ctx,
                           const ResourcePlan& working,
                           const OffloadMatrix& anchor,
                           const PenaltyState& pen, double trust_delta);

// Per-vehicle initialization: pick the best of local / edge / cloud from
// the per-tier initialization programs. Falls back to all-local.
OffloadMatrix init_offload(const OffloadContext& ctx);

OffloadResult run_algorithm1(const OffloadContext& ctx,
                             const OffloadMatrix& start, double zeta = 0.01,
                             int max_iter = 30);

struct RoundResult {
  OffloadMatrix off;
  ResourcePlan plan;
  double objective = 0.0;
  bool changed = false;
};

// Snap tier sums to {0,1}, renormalize within the chosen tier, then re-solve
// the fraction LP with the binary pattern fixed.
RoundResult round_and_repair(const OffloadContext& ctx,
                             const OffloadMatrix& off,
                             const ResourcePlan& plan);

}  // namespace iccs
