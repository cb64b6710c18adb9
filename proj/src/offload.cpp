#include "iccs/offload.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace iccs {

namespace {

constexpr double kFreqFloor = 1e3;   // cycles/s on provisioned entries
constexpr double kShareFloor = 1.0;  // bit/s
constexpr double kDecodeClamp = 1e-7;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double concave_penalty(double s) {
  s = clamp01(s);
  return (1.0 - s) * s;
}

}  // namespace

PenaltyState PenaltyState::fresh(int K, int M, double upsilon_value) {
  PenaltyState st;
  st.rho_b = Vec::Zero(K);
  st.rho_c = Vec::Zero(K);
  st.upsilon = upsilon_value;
  st.w_ub = Mat::Ones(K, M);
  st.w_uc = Mat::Ones(K, M);
  return st;
}

PenaltyState penalty_update(PenaltyState st, const OffloadMatrix& prev) {
  const int K = static_cast<int>(prev.b.rows());
  for (int k = 0; k < K; ++k) {
    st.rho_b(k) = st.upsilon * concave_penalty(prev.x_b(k));
    st.rho_c(k) = st.upsilon * concave_penalty(prev.x_c(k));
  }
  return st;
}

PenaltyState weight_update(PenaltyState st, const OffloadMatrix& prev) {
  st.w_ub = (prev.b.array() + st.eps).inverse();
  st.w_uc = (prev.c.array() + st.eps).inverse();
  ++st.iteration;
  return st;
}

std::pair<double, double> penalty_majorant(double anchor_sum) {
  // exact tangent of (1 - s) s at the anchor; tight there, dominates on
  // [0, 1] since the gap is (s - anchor)^2
  return {anchor_sum * anchor_sum, 1.0 - 2.0 * anchor_sum};
}

LinExpr bilinear_linearize(const LinExpr& x, const LinExpr& t, double xa,
                           double ta) {
  return xa * t + ta * x - LinExpr(xa * ta);
}

double bilinear_linearize_value(double x, double t, double xa, double ta) {
  return xa * t + ta * x - xa * ta;
}

ResourcePlan augment_plan(const OffloadContext& ctx) {
  const ScenarioConfig& cfg = *ctx.cfg;
  const TaskParams& task = *ctx.task;
  const int K = cfg.num_vehicles;
  ResourcePlan plan = *ctx.plan;
  const double mec_cap =
      std::min(task.f_mec_max, std::cbrt(task.p_mec_max_w / task.kappa_mec));
  const double fair_mec = std::min(
      task.f_mec_max / K,
      std::cbrt(task.p_mec_max_w / (K * task.kappa_mec)));
  for (int k = 0; k < K; ++k) {
    for (int m : ctx.ch->serving[k]) {
      if ((*ctx.rates)(k, m) <= 0.0) continue;
      if (ctx.allow_mec) {
        if (plan.f_mec(k, m) < kFreqFloor) plan.f_mec(k, m) = fair_mec;
        plan.f_mec(k, m) = std::min(plan.f_mec(k, m), mec_cap);
      }
      if (ctx.allow_cc) {
        if (plan.r_f(k, m) < kShareFloor) plan.r_f(k, m) = task.r_f_max / K;
        plan.r_f(k, m) = std::min(plan.r_f(k, m), task.r_f_max);
      }
    }
    if (ctx.allow_cc) {
      if (plan.f_cc(k) < kFreqFloor) plan.f_cc(k) = task.f_cc_max / K;
      plan.f_cc(k) = std::min(plan.f_cc(k), task.f_cc_max);
    }
    if (!(plan.f_loc(k) > 0.0)) plan.f_loc(k) = task.f_loc_max;
    plan.f_loc(k) = std::min(plan.f_loc(k), task.f_loc_max);
  }
  return plan;
}

ResourcePlan restrict_plan(const OffloadContext& ctx, const ResourcePlan& base,
                           const OffloadMatrix& off) {
  const ScenarioConfig& cfg = *ctx.cfg;
  const TaskParams& task = *ctx.task;
  const int K = cfg.num_vehicles;
  const int M = cfg.num_aps;
  ResourcePlan plan = base;
  for (int k = 0; k < K; ++k) {
    for (int m = 0; m < M; ++m) {
      if (!step_active(off.b(k, m)))
        plan.f_mec(k, m) = 0.0;
      else
        plan.f_mec(k, m) = std::max(plan.f_mec(k, m), kFreqFloor);
      if (!step_active(off.c(k, m)))
        plan.r_f(k, m) = 0.0;
      else
        plan.r_f(k, m) = std::max(plan.r_f(k, m), kShareFloor);
    }
    if (!step_active(off.x_c(k)))
      plan.f_cc(k) = 0.0;
    else
      plan.f_cc(k) = std::max(plan.f_cc(k), kFreqFloor);
  }
  // Scale overloaded APs back into their budgets.
  for (int m = 0; m < M; ++m) {
    double freq = 0.0, power = 0.0, recv = 0.0, share = 0.0;
    for (int k = 0; k < K; ++k) {
      if (step_active(off.b(k, m))) {
        const double f = plan.f_mec(k, m);
        freq += f;
        power += task.kappa_mec * f * f * f;
      }
      if (step_active(off.c(k, m))) {
        recv += ctx.received_w(k, m);
        share += plan.r_f(k, m);
      }
    }
    if (freq > task.f_mec_max) {
      const double s = task.f_mec_max / freq;
      for (int k = 0; k < K; ++k) plan.f_mec(k, m) *= s;
      power *= s * s * s;
    }
    const double avail = task.p_mec_max_w - recv;
    if (power > avail && power > 0.0) {
      const double s = std::cbrt(std::max(avail, 0.0) / power);
      for (int k = 0; k < K; ++k) plan.f_mec(k, m) *= s;
    }
    if (share > task.r_f_max) {
      const double s = task.r_f_max / share;
      for (int k = 0; k < K; ++k)
        if (step_active(off.c(k, m))) plan.r_f(k, m) *= s;
    }
  }
  double cc_used = 0.0;
  for (int k = 0; k < K; ++k) cc_used += off.x_c(k) * plan.f_cc(k);
  if (cc_used > task.f_cc_max) {
    const double s = task.f_cc_max / cc_used;
    plan.f_cc *= s;
  }
  return plan;
}

namespace {

struct Anchors {
  OffloadMatrix off;
  Vec t_mec;  // per vehicle
  Vec t_cc;
};

double mec_pair_latency_coef(const OffloadContext& ctx,
                             const ResourcePlan& plan, int k, int m) {
  const double D = ctx.task->task_bits;
  return D / (*ctx.rates)(k, m) +
         ctx.task->alpha_mec * D / plan.f_mec(k, m);
}

double cc_pair_latency_coef(const OffloadContext& ctx,
                            const ResourcePlan& plan, int k, int m) {
  const double D = ctx.task->task_bits;
  return D / (*ctx.rates)(k, m) + D / plan.r_f(k, m);
}

// Row-implied tier latency anchors at the current iterate; inactive tiers
// anchor at the fair equalized full-offload estimate so activating them is
// priced realistically.
Anchors make_anchors(const OffloadContext& ctx, const ResourcePlan& plan,
                     const OffloadMatrix& off, const OffloadLp& maps) {
  const int K = ctx.cfg->num_vehicles;
  Anchors a;
  a.off = off;
  a.t_mec = Vec::Zero(K);
  a.t_cc = Vec::Zero(K);
  for (int k = 0; k < K; ++k) {
    if (maps.t_mec[k] >= 0) {
      double inv_sum = 0.0;
      double at_point = 0.0;
      for (int m : ctx.ch->serving[k]) {
        if (maps.b_var(k, m) < 0) continue;
        const double coef = mec_pair_latency_coef(ctx, plan, k, m);
        inv_sum += 1.0 / coef;
        at_point = std::max(at_point, off.b(k, m) * coef);
      }
      a.t_mec(k) = off.x_b(k) > 0.01 ? at_point : 1.0 / inv_sum;
    }
    if (maps.t_cc[k] >= 0) {
      const double comp =
          ctx.task->alpha_cc * ctx.task->task_bits / plan.f_cc(k);
      double inv_sum = 0.0;
      double at_point = 0.0;
      for (int m : ctx.ch->serving[k]) {
        if (maps.c_var(k, m) < 0) continue;
        const double coef = cc_pair_latency_coef(ctx, plan, k, m);
        inv_sum += 1.0 / coef;
        at_point = std::max(at_point, off.c(k, m) * coef);
      }
      a.t_cc(k) = comp + (off.x_c(k) > 0.01 ? at_point : 1.0 / inv_sum);
    }
  }
  return a;
}

OffloadLp allocate_vars(const OffloadContext& ctx, const ResourcePlan& plan,
                        ProblemBuilder& b) {
  const int K = ctx.cfg->num_vehicles;
  const int M = ctx.cfg->num_aps;
  OffloadLp maps;
  maps.b_var = Eigen::MatrixXi::Constant(K, M, -1);
  maps.c_var = Eigen::MatrixXi::Constant(K, M, -1);
  maps.t_mec.assign(K, -1);
  maps.t_cc.assign(K, -1);
  for (int k = 0; k < K; ++k) {
    bool any_b = false, any_c = false;
    for (int m : ctx.ch->serving[k]) {
      if ((*ctx.rates)(k, m) <= 0.0) continue;
      if (ctx.allow_mec && plan.f_mec(k, m) >= kFreqFloor) {
        maps.b_var(k, m) = b.add_var();
        any_b = true;
      }
      if (ctx.allow_cc && plan.r_f(k, m) >= kShareFloor &&
          plan.f_cc(k) >= kFreqFloor) {
        maps.c_var(k, m) = b.add_var();
        any_c = true;
      }
    }
    if (any_b) maps.t_mec[k] = b.add_var();
    if (any_c) maps.t_cc[k] = b.add_var();
  }
  maps.t = b.add_var();
  return maps;
}

void tier_latency_rows(const OffloadContext& ctx, const ResourcePlan& plan,
                       const OffloadLp& maps, ProblemBuilder& b) {
  const int K = ctx.cfg->num_vehicles;
  for (int k = 0; k < K; ++k) {
    if (maps.t_mec[k] >= 0) {
      b.nonneg(LinExpr::var(maps.t_mec[k]));
      for (int m : ctx.ch->serving[k]) {
        if (maps.b_var(k, m) < 0) continue;
        b.nonneg(LinExpr::var(maps.t_mec[k]) -
                 mec_pair_latency_coef(ctx, plan, k, m) *
                     LinExpr::var(maps.b_var(k, m)));
      }
    }
    if (maps.t_cc[k] >= 0) {
      const double comp =
          ctx.task->alpha_cc * ctx.task->task_bits / plan.f_cc(k);
      b.nonneg(LinExpr::var(maps.t_cc[k]));
      for (int m : ctx.ch->serving[k]) {
        if (maps.c_var(k, m) < 0) continue;
        b.nonneg(LinExpr::var(maps.t_cc[k]) - LinExpr(comp) -
                 cc_pair_latency_coef(ctx, plan, k, m) *
                     LinExpr::var(maps.c_var(k, m)));
      }
    }
  }
}

void box_rows(const OffloadContext& ctx, const OffloadLp& maps,
              ProblemBuilder& b) {
  const int K = ctx.cfg->num_vehicles;
  for (int k = 0; k < K; ++k) {
    LinExpr total;
    for (int m : ctx.ch->serving[k]) {
      if (maps.b_var(k, m) >= 0) {
        b.nonneg(LinExpr::var(maps.b_var(k, m)));
        b.nonneg(1.0 - LinExpr::var(maps.b_var(k, m)));
        total += LinExpr::var(maps.b_var(k, m));
      }
      if (maps.c_var(k, m) >= 0) {
        b.nonneg(LinExpr::var(maps.c_var(k, m)));
        b.nonneg(1.0 - LinExpr::var(maps.c_var(k, m)));
        total += LinExpr::var(maps.c_var(k, m));
      }
    }
    b.nonneg(LinExpr(1.0) - total);
  }
}

void capacity_rows(const OffloadContext& ctx, const ResourcePlan& plan,
                   const OffloadLp& maps, const PenaltyState& pen,
                   ProblemBuilder& b) {
  const TaskParams& task = *ctx.task;
  const int K = ctx.cfg->num_vehicles;
  const int M = ctx.cfg->num_aps;
  for (int m = 0; m < M; ++m) {
    LinExpr power, freq, share;
    bool any_power = false, any_freq = false, any_share = false;
    for (int k = 0; k < K; ++k) {
      if (maps.b_var(k, m) >= 0) {
        const double f = plan.f_mec(k, m);
        power += pen.w_ub(k, m) * task.kappa_mec * f * f * f *
                 LinExpr::var(maps.b_var(k, m));
        freq += pen.w_ub(k, m) * f * LinExpr::var(maps.b_var(k, m));
        any_power = any_freq = true;
      }
      if (maps.c_var(k, m) >= 0) {
        power += pen.w_uc(k, m) * ctx.received_w(k, m) *
                 LinExpr::var(maps.c_var(k, m));
        share += pen.w_uc(k, m) * plan.r_f(k, m) *
                 LinExpr::var(maps.c_var(k, m));
        any_power = any_share = true;
      }
    }
    if (any_power)
      b.nonneg(LinExpr(1.0) - (1.0 / task.p_mec_max_w) * power);
    if (any_freq) b.nonneg(LinExpr(1.0) - (1.0 / task.f_mec_max) * freq);
    if (any_share) b.nonneg(LinExpr(1.0) - (1.0 / task.r_f_max) * share);
  }
  LinExpr cloud;
  bool any_cloud = false;
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m)
      if (maps.c_var(k, m) >= 0) {
        cloud += plan.f_cc(k) * LinExpr::var(maps.c_var(k, m));
        any_cloud = true;
      }
  if (any_cloud) b.nonneg(LinExpr(1.0) - (1.0 / task.f_cc_max) * cloud);
}

OffloadMatrix decode_lp(const OffloadContext& ctx, const OffloadLp& maps,
                        const ConicSolution& sol) {
  const int K = ctx.cfg->num_vehicles;
  const int M = ctx.cfg->num_aps;
  OffloadMatrix off = OffloadMatrix::zeros(K, M);
  for (int k = 0; k < K; ++k) {
    for (int m = 0; m < M; ++m) {
      if (maps.b_var(k, m) >= 0) {
        double v = clamp01(sol.x(maps.b_var(k, m)));
        off.b(k, m) = v < kDecodeClamp ? 0.0 : v;
      }
      if (maps.c_var(k, m) >= 0) {
        double v = clamp01(sol.x(maps.c_var(k, m)));
        off.c(k, m) = v < kDecodeClamp ? 0.0 : v;
      }
    }
    const double s = off.x_b(k) + off.x_c(k);
    if (s > 1.0) {
      off.b.row(k) /= s;
      off.c.row(k) /= s;
    }
  }
  return off;
}

double eval_objective(const OffloadContext& ctx, const OffloadMatrix& off,
                      const ResourcePlan& plan) {
  return metrics::max_total_latency(off, *ctx.task, plan, *ctx.rates,
                                    ctx.ch->serving);
}

double local_latency_const(const OffloadContext& ctx, const ResourcePlan& plan,
                           int k) {
  return ctx.task->alpha_loc * ctx.task->task_bits / plan.f_loc(k);
}

// Worst relative violation of the block's own constraint families at a
// candidate point: capacities, AP power, fronthaul, cloud capacity, boxes.
double max_relative_violation(const OffloadContext& ctx,
                              const OffloadMatrix& off,
                              const ResourcePlan& plan) {
  const TaskParams& task = *ctx.task;
  const int K = ctx.cfg->num_vehicles;
  const int M = ctx.cfg->num_aps;
  double worst = 0.0;
  auto track = [&](double slack, double scale) {
    worst = std::max(worst, -slack / std::max(scale, 1e-300));
  };
  for (int k = 0; k < K; ++k)
    track(1.0 - off.x_b(k) - off.x_c(k), 1.0);
  for (int m = 0; m < M; ++m) {
    double power = 0.0, freq = 0.0, share = 0.0;
    for (int k = 0; k < K; ++k) {
      if (step_active(off.b(k, m))) {
        const double f = plan.f_mec(k, m);
        power += task.kappa_mec * f * f * f;
        freq += f;
      }
      if (step_active(off.c(k, m))) {
        power += ctx.received_w(k, m);
        share += plan.r_f(k, m);
      }
    }
    track(task.p_mec_max_w - power, task.p_mec_max_w);
    track(task.f_mec_max - freq, task.f_mec_max);
    track(task.r_f_max - share, task.r_f_max);
  }
  double cloud = 0.0;
  for (int k = 0; k < K; ++k) cloud += off.x_c(k) * plan.f_cc(k);
  track(task.f_cc_max - cloud, task.f_cc_max);
  return worst;
}

}  // namespace

OffloadLp build_offload_lp(const OffloadContext& ctx,
                           const ResourcePlan& working,
                           const OffloadMatrix& anchor,
                           const PenaltyState& pen, double trust_delta) {
  const int K = ctx.cfg->num_vehicles;
  const int M = ctx.cfg->num_aps;
  ProblemBuilder b;
  OffloadLp maps = allocate_vars(ctx, working, b);
  const Anchors anchors = make_anchors(ctx, working, anchor, maps);

  box_rows(ctx, maps, b);
  tier_latency_rows(ctx, working, maps, b);
  capacity_rows(ctx, working, maps, pen, b);
  b.nonneg(LinExpr::var(maps.t));

  // trust region around the incumbent
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) {
    if (maps.b_var(k, m) >= 0) {
      b.nonneg(LinExpr(trust_delta) -
           (LinExpr::var(maps.b_var(k, m)) - anchor.b(k, m)));
      b.nonneg(LinExpr(trust_delta) +
           (LinExpr::var(maps.b_var(k, m)) - anchor.b(k, m)));
    }
    if (maps.c_var(k, m) >= 0) {
      b.nonneg(LinExpr(trust_delta) -
           (LinExpr::var(maps.c_var(k, m)) - anchor.c(k, m)));
      b.nonneg(LinExpr(trust_delta) +
           (LinExpr::var(maps.c_var(k, m)) - anchor.c(k, m)));
    }
    }

  // epigraph rows with the bilinear terms linearized at the incumbent
  LinExpr objective = LinExpr::var(maps.t);
  for (int k = 0; k < K; ++k) {
    LinExpr xb, xc;
    for (int m = 0; m < M; ++m) {
    if (maps.b_var(k, m) >= 0) xb += LinExpr::var(maps.b_var(k, m));
    if (maps.c_var(k, m) >= 0) xc += LinExpr::var(maps.c_var(k, m));
    }
    const double t_loc = local_latency_const(ctx, working, k);
    LinExpr epi = LinExpr::var(maps.t) - LinExpr(t_loc) + t_loc * xb +
          t_loc * xc;
    if (maps.t_mec[k] >= 0)
    epi -= bilinear_linearize(xb, LinExpr::var(maps.t_mec[k]),
                  anchors.off.x_b(k), anchors.t_mec(k));
    if (maps.t_cc[k] >= 0)
    epi -= bilinear_linearize(xc, LinExpr::var(maps.t_cc[k]),
                  anchors.off.x_c(k), anchors.t_cc(k));
    b.nonneg(epi);

    const auto [ob, sb] = penalty_majorant(anchors.off.x_b(k));
    const auto [oc, sc] = penalty_majorant(anchors.off.x_c(k));
    objective += pen.rho_b(k) * (LinExpr(ob) + sb * xb);
    objective += pen.rho_c(k) * (LinExpr(oc) + sc * xc);
  }
  b.minimize(objective);

  maps.problem = b.build();
  return maps;
}

OffloadMatrix init_offload(const OffloadContext& ctx) {
  const ScenarioConfig& cfg = *ctx.cfg;
  const TaskParams& task = *ctx.task;
  const int K = cfg.num_vehicles;
  const int M = cfg.num_aps;
  const double D = task.task_bits;
  const ResourcePlan plan = augment_plan(ctx);
  OffloadMatrix off = OffloadMatrix::zeros(K, M);

  for (int k = 0; k < K; ++k) {
    const double t_loc = local_latency_const(ctx, plan, k);

    // Per-tier initialization program: minimize the linearized recombined
    // latency of {local, this tier}, refreshing anchors a few times.
    auto tier_best = [&](bool mec) -> std::pair<double, Vec> {
      std::vector<int> ms;
      for (int m : ctx.ch->serving[k]) {
        if ((*ctx.rates)(k, m) <= 0.0) continue;
        if (mec && ctx.allow_mec && plan.f_mec(k, m) >= kFreqFloor)
          ms.push_back(m);
        if (!mec && ctx.allow_cc && plan.r_f(k, m) >= kShareFloor &&
            plan.f_cc(k) >= kFreqFloor)
          ms.push_back(m);
      }
      if (ms.empty()) return {t_loc, Vec::Zero(M)};
      const double comp = mec ? 0.0 : task.alpha_cc * D / plan.f_cc(k);
      std::vector<double> coef;
      double inv = 0.0;
      for (int m : ms) {
        coef.push_back(mec ? mec_pair_latency_coef(ctx, plan, k, m)
                           : cc_pair_latency_coef(ctx, plan, k, m));
        inv += 1.0 / coef.back();
      }
      double xa = 0.0;
      double ta = comp + 1.0 / inv;
      Vec frac = Vec::Zero(M);
      double best = t_loc;
      for (int round = 0; round < 3; ++round) {
        ProblemBuilder b;
        std::vector<int> xv;
        for (std::size_t i = 0; i < ms.size(); ++i) xv.push_back(b.add_var());
        const int tv = b.add_var();
        const int ev = b.add_var();
        LinExpr xsum;
        for (std::size_t i = 0; i < ms.size(); ++i) {
          b.nonneg(LinExpr::var(xv[i]));
          b.nonneg(1.0 - LinExpr::var(xv[i]));
          xsum += LinExpr::var(xv[i]);
          b.nonneg(LinExpr::var(tv) - LinExpr(comp) -
                   coef[i] * LinExpr::var(xv[i]));
        }
        b.nonneg(1.0 - xsum);
        b.nonneg(LinExpr::var(tv));
        b.nonneg(LinExpr::var(ev) - (LinExpr(t_loc) - t_loc * xsum) -
                 bilinear_linearize(xsum, LinExpr::var(tv), xa, ta));
        b.minimize(LinExpr::var(ev));
        ConicSolution sol;
        try {
          sol = solve(b.build());
        } catch (const std::exception&) {
          return {t_loc, Vec::Zero(M)};
        }
        if (!sol.ok()) return {t_loc, Vec::Zero(M)};
        double xs = 0.0, tval = 0.0;
        Vec f = Vec::Zero(M);
        for (std::size_t i = 0; i < ms.size(); ++i) {
          const double v = clamp01(sol.x(xv[i]));
          f(ms[i]) = v < kDecodeClamp ? 0.0 : v;
          xs += f(ms[i]);
          tval = std::max(tval, comp + coef[i] * f(ms[i]));
        }
        const double value = (1.0 - xs) * t_loc + xs * tval;
        best = value;
        frac = f;
        xa = xs;
        ta = std::max(tval, 1e-12);
      }
      return {best, frac};
    };

    const auto [val_mec, frac_mec] = tier_best(true);
    const auto [val_cc, frac_cc] = tier_best(false);
    if (val_mec <= val_cc && val_mec < t_loc && frac_mec.sum() > 0.0) {
      off.b.row(k) = frac_mec.transpose();
    } else if (val_cc < t_loc && frac_cc.sum() > 0.0) {
      off.c.row(k) = frac_cc.transpose();
    }
  }
  return off;
}

OffloadResult run_algorithm1(const OffloadContext& ctx,
                             const OffloadMatrix& start, double zeta,
                             int max_iter) {
  const ScenarioConfig& cfg = *ctx.cfg;
  const int K = cfg.num_vehicles;
  const int M = cfg.num_aps;

  ResourcePlan working = augment_plan(ctx);
  OffloadResult res;
  res.off = start;
  res.plan = restrict_plan(ctx, working, res.off);
  double obj = eval_objective(ctx, res.off, res.plan);
  res.trace.push_back(obj);
  res.records.push_back(
      {0, obj, max_relative_violation(ctx, res.off, res.plan)});

  // Exact-penalty merit keeps accepted iterates near binary tier sums; the
  // latency guard keeps the recorded trace non-increasing.
  const double upsilon_eff = 100.0 * std::max(obj, 1e-9);
  auto penalty_total = [&](const OffloadMatrix& off) {
    double g = 0.0;
    for (int k = 0; k < K; ++k)
      g += concave_penalty(off.x_b(k)) + concave_penalty(off.x_c(k));
    return g;
  };
  double merit = obj + upsilon_eff * penalty_total(res.off);

  PenaltyState pen = PenaltyState::fresh(K, M, upsilon_eff);
  double delta = 1.0;  // trust region on individual fractions

  for (int it = 0; it < max_iter; ++it) {
    pen.upsilon = 100.0 * std::max(obj, 1e-9);
    pen = penalty_update(std::move(pen), res.off);
    pen = weight_update(std::move(pen), res.off);

    OffloadLp lp = build_offload_lp(ctx, working, res.off, pen, delta);
    ConicSolution sol = solve(lp.problem);
    if (!sol.ok() && std::getenv("ICCS_BLOCK_TRACE") != nullptr)
      std::fprintf(stderr,
                   "offload lp failed: status=%d iters=%d res=%.2e/%.2e/%.2e\n",
                   static_cast<int>(sol.status), sol.iterations,
                   sol.primal_residual, sol.dual_residual, sol.gap);
    bool accepted = false;
    if (sol.ok()) {
      const OffloadMatrix cand = decode_lp(ctx, lp, sol);
      const ResourcePlan cand_plan = restrict_plan(ctx, working, cand);
      double cand_obj;
      try {
        cand_obj = eval_objective(ctx, cand, cand_plan);
      } catch (const std::exception&) {
        cand_obj = std::numeric_limits<double>::infinity();
      }
      const double cand_merit =
          cand_obj + upsilon_eff * penalty_total(cand);
      if (cand_merit <= merit - 1e-12 && cand_obj <= obj + 1e-9) {
        res.off = cand;
        res.plan = cand_plan;
        // fold accepted (possibly AP-scaled) values back into the pool
        for (int k = 0; k < K; ++k)
          for (int m = 0; m < M; ++m) {
            if (step_active(cand.b(k, m)))
              working.f_mec(k, m) = cand_plan.f_mec(k, m);
            if (step_active(cand.c(k, m)))
              working.r_f(k, m) = cand_plan.r_f(k, m);
          }
        const double rel = std::abs(obj - cand_obj) /
                           std::max(cand_obj, 1e-12);
        obj = cand_obj;
        merit = cand_merit;
        res.trace.push_back(obj);
        res.records.push_back(
            {it + 1, obj, max_relative_violation(ctx, res.off, res.plan)});
        res.iterations = it + 1;
        accepted = true;
        delta = std::min(2.0 * delta, 1.0);
        if (rel < zeta) {
          res.converged = true;
          break;
        }
      }
    } else {
      res.warning = true;
    }
    if (!accepted) {
      delta *= 0.5;
      if (delta < 0.02) {
        res.converged = true;
        break;
      }
    }
  }
  res.plan = restrict_plan(ctx, working, res.off);
  return res;
}

RoundResult round_and_repair(const OffloadContext& ctx,
                             const OffloadMatrix& off,
                             const ResourcePlan& plan) {
  const ScenarioConfig& cfg = *ctx.cfg;
  const TaskParams& task = *ctx.task;
  const int K = cfg.num_vehicles;
  const int M = cfg.num_aps;
  const double D = task.task_bits;

  RoundResult out;
  out.off = OffloadMatrix::zeros(K, M);
  std::vector<int> tier(K, 0);  // 0 local, 1 mec, 2 cc
  for (int k = 0; k < K; ++k) {
    const double xb = off.x_b(k);
    const double xc = off.x_c(k);
    if (xb >= 0.5 && xb >= xc) {
      tier[k] = 1;
      out.off.b.row(k) = off.b.row(k) / xb;
      for (int m = 0; m < M; ++m)
        if (out.off.b(k, m) < kDecodeClamp) out.off.b(k, m) = 0.0;
      out.off.b.row(k) /= out.off.b.row(k).sum();
    } else if (xc >= 0.5) {
      tier[k] = 2;
      out.off.c.row(k) = off.c.row(k) / xc;
      for (int m = 0; m < M; ++m)
        if (out.off.c(k, m) < kDecodeClamp) out.off.c(k, m) = 0.0;
      out.off.c.row(k) /= out.off.c.row(k).sum();
    }
  }
  out.plan = restrict_plan(ctx, plan, out.off);
  out.changed = (out.off.b - off.b).cwiseAbs().maxCoeff() > 1e-12 ||
                (out.off.c - off.c).cwiseAbs().maxCoeff() > 1e-12;

  // With binary tier sums the recombination is exact, so the repair program
  // is a plain LP over the within-tier fractions.
  ProblemBuilder b;
  Eigen::MatrixXi bv = Eigen::MatrixXi::Constant(K, M, -1);
  Eigen::MatrixXi cv = Eigen::MatrixXi::Constant(K, M, -1);
  const int t = b.add_var();
  b.nonneg(LinExpr::var(t));
  bool any_var = false;
  for (int k = 0; k < K; ++k) {
    if (tier[k] == 0) {
      b.nonneg(LinExpr::var(t) - local_latency_const(ctx, out.plan, k));
      continue;
    }
    const int tk = b.add_var();
    b.nonneg(LinExpr::var(t) - LinExpr::var(tk));
    LinExpr sum;
    for (int m = 0; m < M; ++m) {
      const bool active = tier[k] == 1 ? step_active(out.off.b(k, m))
                                       : step_active(out.off.c(k, m));
      if (!active) continue;
      const int xv = b.add_var();
      (tier[k] == 1 ? bv : cv)(k, m) = xv;
      any_var = true;
      b.nonneg(LinExpr::var(xv));
      b.nonneg(1.0 - LinExpr::var(xv));
      sum += LinExpr::var(xv);
      if (tier[k] == 1) {
        b.nonneg(LinExpr::var(tk) -
                 mec_pair_latency_coef(ctx, out.plan, k, m) *
                     LinExpr::var(xv));
      } else {
        const double comp = task.alpha_cc * D / out.plan.f_cc(k);
        b.nonneg(LinExpr::var(tk) - LinExpr(comp) -
                 cc_pair_latency_coef(ctx, out.plan, k, m) *
                     LinExpr::var(xv));
      }
    }
    b.equal(sum, 1.0);
  }
  b.minimize(LinExpr::var(t));
  if (any_var) {
    const ConicSolution sol = solve(b.build());
    if (sol.ok()) {
      for (int k = 0; k < K; ++k) {
        if (tier[k] == 0) continue;
        Mat& target = tier[k] == 1 ? out.off.b : out.off.c;
        const Eigen::MatrixXi& vars = tier[k] == 1 ? bv : cv;
        double sum = 0.0;
        for (int m = 0; m < M; ++m)
          if (vars(k, m) >= 0) {
            target(k, m) = clamp01(sol.x(vars(k, m)));
            sum += target(k, m);
          }
        if (sum > 0.0) target.row(k) /= sum;
      }
    }
  }
  out.objective = eval_objective(ctx, out.off, out.plan);
  return out;
}

}  // namespace iccs
