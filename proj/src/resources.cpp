#include "iccs/resources.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace iccs {

namespace {

constexpr double kGhz = 1e9;          // internal frequency unit
constexpr double kFreqFloorGhz = 1e-6;  // 1e3 cycles/s

}  // namespace

ResourceResult solve_resources(const ResourceContext& ctx) {
  const ScenarioConfig& cfg = *ctx.cfg;
  const TaskParams& task = *ctx.task;
  const OffloadMatrix& off = *ctx.off;
  const int K = cfg.num_vehicles;
  const int M = cfg.num_aps;
  const double D = task.task_bits;

  ResourceResult out;
  out.plan = *ctx.incoming;
  auto objective_of = [&](const ResourcePlan& plan) {
    return metrics::max_total_latency(off, task, plan, *ctx.rates,
                                      ctx.ch->serving);
  };
  // An incoming plan that does not cover the active pattern counts as
  // unboundedly bad; the solved plan then replaces it unconditionally.
  double incoming_obj = std::numeric_limits<double>::infinity();
  try {
    incoming_obj = objective_of(*ctx.incoming);
  } catch (const std::exception&) {
  }
  out.objective = incoming_obj;

  ProblemBuilder b;
  Eigen::MatrixXi fm = Eigen::MatrixXi::Constant(K, M, -1);
  Eigen::MatrixXi rf = Eigen::MatrixXi::Constant(K, M, -1);
  std::vector<int> fcc(K, -1), floc(K, -1), tmec(K, -1), tcc(K, -1),
      tloc(K, -1);
  const int t = b.add_var();
  b.nonneg(LinExpr::var(t));

  for (int k = 0; k < K; ++k) {
    const double xb = off.x_b(k);
    const double xc = off.x_c(k);
    const double w_loc = std::max(0.0, 1.0 - xb - xc);
    const bool local_active = w_loc > kStepThreshold;
    if (local_active && task.optimize_local_freq) {
      floc[k] = b.add_var();
      tloc[k] = b.add_var();
      b.nonneg(LinExpr::var(floc[k]) - kFreqFloorGhz);
      b.nonneg(LinExpr(task.f_loc_max / kGhz) - LinExpr::var(floc[k]));
      encode_hyperbolic(b, LinExpr::var(tloc[k]), LinExpr::var(floc[k]),
                        LinExpr(std::sqrt(task.alpha_loc * D / kGhz)));
      // vehicle power: kappa f^3 <= P_max - |g|^2
      const double avail = task.p_max_w - ctx.tx_power_w(k);
      if (avail <= 0.0)
        throw std::domain_error("resources: transmit power exhausts budget");
      const double kappa_ghz = task.kappa_loc * kGhz * kGhz * kGhz;
      encode_cube_bound(b, LinExpr::var(floc[k]),
                        LinExpr(avail / kappa_ghz));
    }
    if (step_active(xb)) tmec[k] = b.add_var();
    if (step_active(xc)) {
      tcc[k] = b.add_var();
      fcc[k] = b.add_var();
      b.nonneg(LinExpr::var(fcc[k]) - kFreqFloorGhz);
    }
    for (int m : ctx.ch->serving[k]) {
      if (step_active(off.b(k, m))) {
        fm(k, m) = b.add_var();
        b.nonneg(LinExpr::var(fm(k, m)) - kFreqFloorGhz);
      }
      if (step_active(off.c(k, m))) {
        rf(k, m) = b.add_var();
        b.nonneg(LinExpr::var(rf(k, m)) - kFreqFloorGhz);
      }
    }
  }

  // tier latency rows
  for (int k = 0; k < K; ++k) {
    if (tmec[k] >= 0) {
      b.nonneg(LinExpr::var(tmec[k]));
      for (int m : ctx.ch->serving[k]) {
        if (fm(k, m) < 0) continue;
        if (!((*ctx.rates)(k, m) > 0.0))
          throw std::domain_error("resources: active pair without rate");
        const double tx = off.b(k, m) * D / (*ctx.rates)(k, m);
        // (t_mec - tx) * f >= alpha b D (in GHz seconds)
        encode_hyperbolic(
            b, LinExpr::var(tmec[k]) - tx, LinExpr::var(fm(k, m)),
            LinExpr(std::sqrt(task.alpha_mec * off.b(k, m) * D / kGhz)));
      }
    }
    if (tcc[k] >= 0) {
      b.nonneg(LinExpr::var(tcc[k]));
      const int u_comp = b.add_var();
      encode_hyperbolic(b, LinExpr::var(u_comp), LinExpr::var(fcc[k]),
                        LinExpr(std::sqrt(task.alpha_cc * D / kGhz)));
      for (int m : ctx.ch->serving[k]) {
        if (rf(k, m) < 0) continue;
        if (!((*ctx.rates)(k, m) > 0.0))
          throw std::domain_error("resources: active pair without rate");
        const double tx = off.c(k, m) * D / (*ctx.rates)(k, m);
        const int u_share = b.add_var();
        encode_hyperbolic(
            b, LinExpr::var(u_share), LinExpr::var(rf(k, m)),
            LinExpr(std::sqrt(off.c(k, m) * D / kGhz)));
        b.nonneg(LinExpr::var(tcc[k]) - tx - LinExpr::var(u_share) -
                 LinExpr::var(u_comp));
      }
    }
  }

  // epigraph rows
  for (int k = 0; k < K; ++k) {
    const double xb = off.x_b(k);
    const double xc = off.x_c(k);
    const double w_loc = std::max(0.0, 1.0 - xb - xc);
    LinExpr epi = LinExpr::var(t);
    if (w_loc > kStepThreshold) {
      if (tloc[k] >= 0)
        epi -= w_loc * LinExpr::var(tloc[k]);
      else
        epi -= LinExpr(w_loc * task.alpha_loc * D / ctx.incoming->f_loc(k));
    }
    if (tmec[k] >= 0) epi -= xb * LinExpr::var(tmec[k]);
    if (tcc[k] >= 0) epi -= xc * LinExpr::var(tcc[k]);
    b.nonneg(epi);
  }

  // capacity and power rows
  for (int m = 0; m < M; ++m) {
    LinExpr freq;
    LinExpr power_w;
    LinExpr share;
    bool any_f = false, any_s = false;
    double recv = 0.0;
    for (int k = 0; k < K; ++k) {
      if (fm(k, m) >= 0) {
        freq += LinExpr::var(fm(k, m));
        const int s = b.add_var();  // watts of edge compute for this pair
        const double kappa_ghz = task.kappa_mec * kGhz * kGhz * kGhz;
        encode_cube_bound(b, LinExpr::var(fm(k, m)),
                          (1.0 / kappa_ghz) * LinExpr::var(s));
        power_w += LinExpr::var(s);
        any_f = true;
      }
      if (rf(k, m) >= 0) {
        share += LinExpr::var(rf(k, m));
        recv += ctx.received_w(k, m);
        any_s = true;
      }
    }
    if (any_f) {
      b.nonneg(LinExpr(task.f_mec_max / kGhz) - freq);
      b.nonneg(LinExpr(task.p_mec_max_w - recv) - power_w);
    }
    if (any_s) b.nonneg(LinExpr(task.r_f_max / kGhz) - share);
  }
  {
    LinExpr cloud;
    bool any = false;
    for (int k = 0; k < K; ++k)
      if (fcc[k] >= 0) {
        cloud += off.x_c(k) * LinExpr::var(fcc[k]);
        any = true;
      }
    if (any) b.nonneg(LinExpr(task.f_cc_max / kGhz) - cloud);
  }

  b.minimize(LinExpr::var(t));
  ConicSolution sol;
  try {
    sol = solve(b.build());
  } catch (const std::exception&) {
    return out;
  }
  if (!sol.ok()) return out;

  ResourcePlan plan = *ctx.incoming;
  for (int k = 0; k < K; ++k) {
    if (floc[k] >= 0)
      plan.f_loc(k) = sol.x(floc[k]) * kGhz;
    if (fcc[k] >= 0)
      plan.f_cc(k) = sol.x(fcc[k]) * kGhz;
    else if (!step_active(off.x_c(k)))
      plan.f_cc(k) = 0.0;
    for (int m = 0; m < M; ++m) {
      plan.f_mec(k, m) = fm(k, m) >= 0 ? sol.x(fm(k, m)) * kGhz : 0.0;
      plan.r_f(k, m) = rf(k, m) >= 0 ? sol.x(rf(k, m)) * kGhz : 0.0;
    }
  }
  double new_obj;
  try {
    new_obj = objective_of(plan);
  } catch (const std::exception&) {
    return out;
  }
  if (new_obj > incoming_obj + 1e-9 * std::max(1.0, incoming_obj)) return out;
  out.plan = std::move(plan);
  out.objective = new_obj;
  out.solved = true;
  return out;
}

}  // namespace iccs
