#include "iccs/beamform.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>

#include "iccs/parallel.hpp"

namespace iccs {

namespace {

constexpr double kLn2 = 0.6931471805599453;

// Complex affine expression over the real/imaginary variable pairs.
struct CxAff {
  LinExpr re, im;
};

CxAff cx_var(int base) {
  return {LinExpr::var(base), LinExpr::var(base + 1)};
}

CxAff cx_scale(const cxd& a, const CxAff& w) {
  CxAff out;
  out.re = a.real() * w.re - a.imag() * w.im;
  out.im = a.real() * w.im + a.imag() * w.re;
  return out;
}

void cx_add(CxAff& acc, const CxAff& o) {
  acc.re += o.re;
  acc.im += o.im;
}

}  // namespace

CVec mmse_receiver(int k, int m, const BeamformerSet& beams,
                   const ChannelSet& ch) {
  int slot = -1;
  for (std::size_t j = 0; j < ch.serving[k].size(); ++j)
    if (ch.serving[k][j] == m) slot = static_cast<int>(j);
  if (slot < 0) throw std::invalid_argument("mmse_receiver: m not serving k");
  const CMat cov = metrics::interference_cov(k, m, beams, ch);
  const CVec u = ch.uplink[k][m] * beams.comm[k][slot];
  CMat total = cov;
  total.selfadjointView<Eigen::Lower>().rankUpdate(u, 1.0);
  return CMat(total.selfadjointView<Eigen::Lower>()).llt().solve(u);
}

double wmmse_weight(int k, int m, const BeamformerSet& beams,
                    const ChannelSet& ch) {
  int slot = -1;
  for (std::size_t j = 0; j < ch.serving[k].size(); ++j)
    if (ch.serving[k][j] == m) slot = static_cast<int>(j);
  if (slot < 0) throw std::invalid_argument("wmmse_weight: m not serving k");
  const CMat cov = metrics::interference_cov(k, m, beams, ch);
  const CVec u = ch.uplink[k][m] * beams.comm[k][slot];
  CMat total = cov;
  total.selfadjointView<Eigen::Lower>().rankUpdate(u, 1.0);
  const CVec sol = CMat(total.selfadjointView<Eigen::Lower>()).llt().solve(u);
  const double mse = 1.0 - std::max(0.0, u.dot(sol).real());
  return 1.0 / std::max(mse, 1e-300);
}

WmmseState refresh_wmmse(const BeamformerSet& beams, const ChannelSet& ch) {
  const int K = static_cast<int>(ch.uplink.size());
  const int M = static_cast<int>(ch.uplink[0].size());
  const int N = static_cast<int>(ch.uplink[0][0].rows());

  // One total received covariance per AP, shared by every vehicle it serves.
  std::vector<Eigen::LLT<CMat>> totals(M);
  parallel_for(M, [&](int m) {
    CMat t = CMat::Identity(N, N);
    for (int kp = 0; kp < K; ++kp) {
      const CMat& H = ch.uplink[kp][m];
      for (std::size_t j = 0; j < ch.serving[kp].size(); ++j) {
        const CVec u = H * beams.comm[kp][j];
        t.selfadjointView<Eigen::Lower>().rankUpdate(u, 1.0);
      }
      const CVec us = H * beams.sensing[kp];
      t.selfadjointView<Eigen::Lower>().rankUpdate(us, 1.0);
    }
    totals[m].compute(CMat(t.selfadjointView<Eigen::Lower>()));
  });

  WmmseState st;
  st.v.resize(K);
  st.V.resize(K);
  for (int k = 0; k < K; ++k) {
    st.v[k].assign(ch.serving[k].size(), CVec());
    st.V[k].assign(ch.serving[k].size(), 1.0);
  }
  parallel_for(K, [&](int k) {
    for (std::size_t j = 0; j < ch.serving[k].size(); ++j) {
      const int m = ch.serving[k][j];
      const CVec u = ch.uplink[k][m] * beams.comm[k][j];
      const CVec v = totals[m].solve(u);
      st.v[k][j] = v;
      const double mse = 1.0 - std::max(0.0, u.dot(v).real());
      st.V[k][j] = 1.0 / std::max(mse, 1e-300);
    }
  });
  return st;
}

namespace beamform_reference {

WmmseState refresh_wmmse(const BeamformerSet& beams, const ChannelSet& ch) {
  const int K = static_cast<int>(ch.uplink.size());
  WmmseState st;
  st.v.resize(K);
  st.V.resize(K);
  for (int k = 0; k < K; ++k) {
    st.v[k].resize(ch.serving[k].size());
    st.V[k].resize(ch.serving[k].size());
    for (std::size_t j = 0; j < ch.serving[k].size(); ++j) {
      const int m = ch.serving[k][j];
      st.v[k][j] = mmse_receiver(k, m, beams, ch);
      st.V[k][j] = wmmse_weight(k, m, beams, ch);
    }
  }
  return st;
}

}  // namespace beamform_reference

double surrogate_rate(int k, int m, const BeamformerSet& beams, const CVec& v,
                      double V, const ChannelSet& ch, double bandwidth_hz) {
  int slot = -1;
  for (std::size_t j = 0; j < ch.serving[k].size(); ++j)
    if (ch.serving[k][j] == m) slot = static_cast<int>(j);
  if (slot < 0) throw std::invalid_argument("surrogate_rate: m not serving k");
  const CMat cov = metrics::interference_cov(k, m, beams, ch);
  const CVec u = ch.uplink[k][m] * beams.comm[k][slot];
  const double quad =
      (v.adjoint() * cov * v).value().real() + std::norm(v.dot(u));
  const double mse = 1.0 + quad - 2.0 * v.dot(u).real();
  return bandwidth_hz * (std::log2(V) + (1.0 - V * mse) / kLn2);
}

SensingLinearization sensing_anchor(const BeamformerSet& beams,
                                    const Geometry& geom,
                                    const ScenarioConfig& cfg) {
  SensingLinearization lin;
  const int K = cfg.num_vehicles;
  lin.anchor.resize(K);
  lin.steer_tx.resize(K);
  lin.eta = geom.reflection_coeffs;
  lin.n_r = cfg.rx_antennas;
  for (int k = 0; k < K; ++k) {
    lin.anchor[k] = beams.aggregate(k);
    lin.steer_tx[k] = steering(geom.target_angles_rad(k), cfg.tx_antennas);
  }
  return lin;
}

double sensing_quadratic(int k, const CVec& g,
                         const SensingLinearization& lin) {
  const double eta2 = lin.eta(k) * lin.eta(k);
  return eta2 * lin.n_r * std::norm(lin.steer_tx[k].dot(g));
}

double sensing_minorant(int k, const CVec& g, const SensingLinearization& lin) {
  const double eta2 = lin.eta(k) * lin.eta(k);
  const cxd p = lin.steer_tx[k].dot(lin.anchor[k]);
  const cxd q = lin.steer_tx[k].dot(2.0 * g - lin.anchor[k]);
  return eta2 * lin.n_r * (std::conj(p) * q).real();
}

BeamformerSet BeamSocp::decode(
    const ConicSolution& sol, const ScenarioConfig& cfg,
    const std::vector<std::vector<int>>& serving) const {
  BeamformerSet beams = BeamformerSet::zeros(cfg, serving);
  const int K = cfg.num_vehicles;
  for (int k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < serving[k].size(); ++j) {
      const int base = comm_base[k][j];
      if (base < 0) continue;
      for (int t = 0; t < cfg.tx_antennas; ++t)
        beams.comm[k][j](t) =
            cxd(sol.x(base + 2 * t), sol.x(base + 2 * t + 1));
    }
    const int sbase = sensing_base[k];
    for (int t = 0; t < cfg.tx_antennas; ++t)
      beams.sensing[k](t) =
          cxd(sol.x(sbase + 2 * t), sol.x(sbase + 2 * t + 1));
  }
  return beams;
}

BeamSocp build_beam_socp(const BeamformContext& ctx, const WmmseState& wmmse,
                         const SensingLinearization& lin, bool power_min,
                         double t_ref) {
  const ScenarioConfig& cfg = *ctx.cfg;
  const ChannelSet& ch = *ctx.ch;
  const TaskParams& task = *ctx.task;
  const OffloadMatrix& off = *ctx.off;
  const ResourcePlan& plan = *ctx.plan;
  const int K = cfg.num_vehicles;
  const int M = cfg.num_aps;
  const int Nt = cfg.tx_antennas;
  const double B = cfg.bandwidth_hz;
  const double D = task.task_bits;

  ProblemBuilder b;
  BeamSocp socp;
  socp.power_min = power_min;
  socp.comm_base.assign(K, {});
  socp.sensing_base.assign(K, -1);
  socp.t_mec.assign(K, -1);
  socp.t_cc.assign(K, -1);

  for (int k = 0; k < K; ++k) {
    socp.comm_base[k].assign(ch.serving[k].size(), -1);
    for (std::size_t j = 0; j < ch.serving[k].size(); ++j) {
      const int m = ch.serving[k][j];
      if (step_active(off.b(k, m)) || step_active(off.c(k, m))) {
        socp.comm_base[k][j] = b.num_vars();
        b.add_vars(2 * Nt);
      }
    }
    socp.sensing_base[k] = b.num_vars();
    b.add_vars(2 * Nt);
  }
  std::vector<int> p_var(K);
  for (int k = 0; k < K; ++k) p_var[k] = b.add_var();
  Eigen::MatrixXi rate_vars = Eigen::MatrixXi::Constant(K, M, -1);
  if (!power_min) {
    socp.t_var = b.add_var();
    for (int k = 0; k < K; ++k) {
      if (step_active(off.x_b(k))) socp.t_mec[k] = b.add_var();
      if (step_active(off.x_c(k))) socp.t_cc[k] = b.add_var();
      for (std::size_t j = 0; j < ch.serving[k].size(); ++j) {
        const int m = ch.serving[k][j];
        if (step_active(off.b(k, m)) || step_active(off.c(k, m)))
          rate_vars(k, m) = b.add_var();
      }
    }
  }

  auto aggregate_expr = [&](int k) {
    std::vector<CxAff> g(Nt);
    for (int t = 0; t < Nt; ++t) g[t] = cx_var(socp.sensing_base[k] + 2 * t);
    for (std::size_t j = 0; j < ch.serving[k].size(); ++j) {
      const int base = socp.comm_base[k][j];
      if (base < 0) continue;
      for (int t = 0; t < Nt; ++t) cx_add(g[t], cx_var(base + 2 * t));
    }
    return g;
  };

  // Per-vehicle transmit power: p_k >= |g_k|^2 and p_k within the budget.
  for (int k = 0; k < K; ++k) {
    const auto g = aggregate_expr(k);
    std::vector<LinExpr> entries;
    entries.reserve(2 * Nt);
    for (int t = 0; t < Nt; ++t) {
      entries.push_back(g[t].re);
      entries.push_back(g[t].im);
    }
    b.rsoc(LinExpr::var(p_var[k]), LinExpr(1.0), entries);
    const double f = plan.f_loc(k);
    const double budget_mw =
        (task.p_max_w - task.kappa_loc * f * f * f) * kMwPerW;
    if (budget_mw <= 0.0)
      throw std::domain_error("beam socp: local compute exhausts the budget");
    b.nonneg(LinExpr(budget_mw) - LinExpr::var(p_var[k]));
  }

  // Sensing requirement through the linearized echo-power lower bound.
  for (int k = 0; k < K; ++k) {
    const auto g = aggregate_expr(k);
    const double eta2 = lin.eta(k) * lin.eta(k);
    const cxd p_anchor = lin.steer_tx[k].dot(lin.anchor[k]);
    LinExpr lhs(-eta2 * lin.n_r * std::norm(p_anchor) -
                task.sinr_req * lin.n_r);
    for (int t = 0; t < Nt; ++t) {
      // conj(a_t)(t) enters through a_t^H g
      const cxd coef = 2.0 * eta2 * static_cast<double>(lin.n_r) *
                       std::conj(p_anchor) * std::conj(lin.steer_tx[k](t));
      lhs += coef.real() * g[t].re - coef.imag() * g[t].im;
    }
    std::vector<LinExpr> entries;
    const double sq = std::sqrt(task.sinr_req);
    for (int kp = 0; kp < K; ++kp) {
      if (kp == k) continue;
      const auto gp = aggregate_expr(kp);
      const CMat& H = ch.cross[k][kp];
      for (int r = 0; r < H.rows(); ++r) {
        CxAff row;
        for (int t = 0; t < Nt; ++t) cx_add(row, cx_scale(sq * H(r, t), gp[t]));
        entries.push_back(row.re);
        entries.push_back(row.im);
      }
    }
    b.rsoc(lhs, LinExpr(1.0), entries);
  }

  // Per-AP budget: received communication power plus edge compute power.
  for (int m = 0; m < M; ++m) {
    double compute_w = 0.0;
    std::vector<LinExpr> entries;
    const double sq_noise = std::sqrt(ch.noise_mw);
    for (int k = 0; k < K; ++k) {
      if (step_active(off.b(k, m))) {
        const double f = plan.f_mec(k, m);
        compute_w += task.kappa_mec * f * f * f;
      }
      if (step_active(off.c(k, m))) {
        int slot = -1;
        for (std::size_t j = 0; j < ch.serving[k].size(); ++j)
          if (ch.serving[k][j] == m) slot = static_cast<int>(j);
        if (slot < 0 || socp.comm_base[k][slot] < 0) continue;
        const CMat& H = ch.uplink[k][m];
        for (int r = 0; r < H.rows(); ++r) {
          CxAff row;
          for (int t = 0; t < Nt; ++t)
            cx_add(row, cx_scale(sq_noise * H(r, t),
                                 cx_var(socp.comm_base[k][slot] + 2 * t)));
          entries.push_back(row.re);
          entries.push_back(row.im);
        }
      }
    }
    const double rhs_mw = (task.p_mec_max_w - compute_w) * kMwPerW;
    if (rhs_mw < 0.0)
      throw std::domain_error("beam socp: edge compute exhausts the AP budget");
    if (!entries.empty()) b.rsoc(LinExpr(rhs_mw), LinExpr(1.0), entries);
  }

  if (!power_min) {
    for (int k = 0; k < K; ++k) {
      const double xb = off.x_b(k);
      const double xc = off.x_c(k);
      const double w_loc = std::max(0.0, 1.0 - xb - xc);
      double t_loc = 0.0;
      if (w_loc > kStepThreshold) {
        if (!(plan.f_loc(k) > 0.0))
          throw std::domain_error("beam socp: local share without frequency");
        t_loc = task.alpha_loc * D / plan.f_loc(k);
      }
      LinExpr epi = LinExpr::var(socp.t_var) - w_loc * t_loc;
      if (socp.t_mec[k] >= 0) epi -= xb * LinExpr::var(socp.t_mec[k]);
      if (socp.t_cc[k] >= 0) epi -= xc * LinExpr::var(socp.t_cc[k]);
      b.nonneg(epi);

      for (std::size_t j = 0; j < ch.serving[k].size(); ++j) {
        const int m = ch.serving[k][j];
        if (rate_vars(k, m) < 0) continue;
        const int rv = rate_vars(k, m);
        const CVec& v = wmmse.v[k][j];
        const double V = wmmse.V[k][j];
        if (!(V > 0.0) || !v.allFinite())
          throw std::domain_error("beam socp: invalid WMMSE state");

        // r <= log2(V) + (1 - V*MSE(w))/ln2, rewritten as a quadratic cap
        // sum_s |z_s w_s|^2 <= const + 2 Re(z_own w_own) - (ln2/V) r
        const double vnorm2 = v.squaredNorm();
        const double const0 =
            (kLn2 / V) * std::log2(V) + (1.0 - V * (1.0 + vnorm2)) / V;
        LinExpr cap(const0);
        cap -= (kLn2 / V) * LinExpr::var(rv);
        std::vector<LinExpr> entries;
        for (int kp = 0; kp < K; ++kp) {
          const CMat& H = ch.uplink[kp][m];
          const Eigen::RowVectorXcd z = v.adjoint() * H;
          auto push_stream = [&](int base, bool own) {
            CxAff sprod;
            for (int t = 0; t < Nt; ++t)
              cx_add(sprod, cx_scale(z(t), cx_var(base + 2 * t)));
            entries.push_back(sprod.re);
            entries.push_back(sprod.im);
            if (own) cap += 2.0 * sprod.re;
          };
          for (std::size_t jp = 0; jp < ch.serving[kp].size(); ++jp) {
            const int base = socp.comm_base[kp][jp];
            if (base < 0) continue;
            push_stream(base, kp == k && static_cast<int>(jp) ==
                                             static_cast<int>(j));
          }
          push_stream(socp.sensing_base[kp], false);
        }
        b.rsoc(cap, LinExpr(1.0), entries);

        if (step_active(off.b(k, m))) {
          const double f = plan.f_mec(k, m);
          if (!(f > 0.0))
            throw std::domain_error("beam socp: mec pair without frequency");
          LinExpr tau = LinExpr::var(socp.t_mec[k]) -
                        task.alpha_mec * off.b(k, m) * D / f;
          b.rsoc(LinExpr::var(rv), tau,
                 {LinExpr(std::sqrt(off.b(k, m) * D / B))});
        }
        if (step_active(off.c(k, m))) {
          const double rf = plan.r_f(k, m);
          const double fcc = plan.f_cc(k);
          if (!(rf > 0.0) || !(fcc > 0.0))
            throw std::domain_error("beam socp: cc pair without share");
          LinExpr tau = LinExpr::var(socp.t_cc[k]) - off.c(k, m) * D / rf -
                        task.alpha_cc * D / fcc;
          b.rsoc(LinExpr::var(rv), tau,
                 {LinExpr(std::sqrt(off.c(k, m) * D / B))});
        }
      }
    }
  }

  LinExpr obj;
  if (power_min) {
    for (int k = 0; k < K; ++k) obj += LinExpr::var(p_var[k]);
  } else {
    obj = LinExpr::var(socp.t_var);
    const double mu =
        1e-7 * std::max(t_ref, 1e-6) / (K * task.p_max_w * kMwPerW);
    for (int k = 0; k < K; ++k) obj += mu * LinExpr::var(p_var[k]);
  }
  b.minimize(obj);
  socp.problem = b.build();
  return socp;
}

namespace {

// Max-slack restoration: when no aligned configuration satisfies every
// sensing requirement, iterate a small program that shapes the sensing
// beams to balance echo power against the interference they cause. The
// slack is non-decreasing across rounds (the previous optimum stays
// feasible after the anchor refresh), so this either reaches feasibility
// or settles below it.
bool restore_sensing(const BeamformContext& ctx, BeamformerSet& beams) {
  const ScenarioConfig& cfg = *ctx.cfg;
  const ChannelSet& ch = *ctx.ch;
  const TaskParams& task = *ctx.task;
  const int K = cfg.num_vehicles;
  const int Nt = cfg.tx_antennas;
  const int Nr = cfg.rx_antennas;

  for (auto& row : beams.comm)
    for (auto& w : row) w.setZero();

  for (int round = 0; round < 10; ++round) {
    ProblemBuilder b;
    std::vector<int> gbase(K);
    for (int k = 0; k < K; ++k) {
      gbase[k] = b.num_vars();
      b.add_vars(2 * Nt);
    }
    const int slack = b.add_var();
    b.nonneg(LinExpr(10.0 * task.sinr_req * Nr) - LinExpr::var(slack));

    for (int k = 0; k < K; ++k) {
      double f = ctx.plan->f_loc(k);
      if (!(f > 0.0)) f = task.f_loc_max;
      const double budget_mw =
          (task.p_max_w - task.kappa_loc * f * f * f) * kMwPerW;
      std::vector<LinExpr> entries;
      for (int t = 0; t < Nt; ++t) {
        entries.push_back(LinExpr::var(gbase[k] + 2 * t));
        entries.push_back(LinExpr::var(gbase[k] + 2 * t + 1));
      }
      b.rsoc(LinExpr(0.98 * budget_mw), LinExpr(1.0), entries);

      const CVec at = steering(ctx.geom->target_angles_rad(k), Nt);
      const double eta = ctx.geom->reflection_coeffs(k);
      const double eta2 = eta * eta;
      const cxd p_anchor = at.dot(beams.sensing[k]);
      LinExpr lhs(-eta2 * Nr * std::norm(p_anchor) - task.sinr_req * Nr);
      lhs -= LinExpr::var(slack);
      for (int t = 0; t < Nt; ++t) {
        const cxd coef = 2.0 * eta2 * static_cast<double>(Nr) *
                         std::conj(p_anchor) * std::conj(at(t));
        lhs += coef.real() * LinExpr::var(gbase[k] + 2 * t) -
               coef.imag() * LinExpr::var(gbase[k] + 2 * t + 1);
      }
      std::vector<LinExpr> interf;
      const double sq = std::sqrt(task.sinr_req);
      for (int kp = 0; kp < K; ++kp) {
        if (kp == k) continue;
        const CMat& H = ch.cross[k][kp];
        for (int r = 0; r < H.rows(); ++r) {
          CxAff rowe;
          for (int t = 0; t < Nt; ++t)
            cx_add(rowe, cx_scale(sq * H(r, t), cx_var(gbase[kp] + 2 * t)));
          interf.push_back(rowe.re);
          interf.push_back(rowe.im);
        }
      }
      b.rsoc(lhs, LinExpr(1.0), interf);
    }
    b.minimize(-1.0 * LinExpr::var(slack));
    const ConicSolution sol = solve(b.build(), 1e-8, 200);
    if (!sol.ok()) return false;
    for (int k = 0; k < K; ++k)
      for (int t = 0; t < Nt; ++t)
        beams.sensing[k](t) =
            cxd(sol.x(gbase[k] + 2 * t), sol.x(gbase[k] + 2 * t + 1));
    bool ok = true;
    for (int k = 0; k < K; ++k)
      if (metrics::sensing_sinr(k, beams, ch, *ctx.geom) <
          task.sinr_req * (1.0 + 1e-3))
        ok = false;
    if (ok) return true;
    if (sol.x(slack) < -1e-9) return false;  // settled infeasible
  }
  return false;
}

}  // namespace

std::pair<BeamformerSet, bool> init_beams(const BeamformContext& ctx) {
  const ScenarioConfig& cfg = *ctx.cfg;
  const ChannelSet& ch = *ctx.ch;
  const TaskParams& task = *ctx.task;
  const int K = cfg.num_vehicles;
  const int Nt = cfg.tx_antennas;
  const double margin = 1.02;

  // Pass 0/1: aligned full-power starts. Pass 2: power backoff applied to
  // the small-communication variant, rescuing draws where full power is
  // sensing-infeasible because of inter-vehicle interference.
  for (int attempt = 0; attempt < 3; ++attempt) {
    const double comm_share = attempt == 0 ? 0.1 : 0.02;
    const bool backoff = attempt == 2;
    BeamformerSet beams = BeamformerSet::zeros(cfg, ch.serving);
    for (int k = 0; k < K; ++k) {
      double f = ctx.plan->f_loc(k);
      if (!(f > 0.0)) f = task.f_loc_max;
      const double budget_mw =
          (task.p_max_w - task.kappa_loc * f * f * f) * kMwPerW;
      if (budget_mw <= 0.0) return {beams, false};
      const CVec at = steering(ctx.geom->target_angles_rad(k), Nt);
      beams.sensing[k] =
          std::sqrt((1.0 - comm_share) * budget_mw) * at / at.norm();
      const int L = static_cast<int>(ch.serving[k].size());
      for (int j = 0; j < L; ++j) {
        const int m = ch.serving[k][j];
        Eigen::JacobiSVD<CMat> svd(ch.uplink[k][m], Eigen::ComputeThinV);
        const CVec dir = svd.matrixV().col(0);
        beams.comm[k][j] = std::sqrt(comm_share * budget_mw / L) * dir;
      }
      const double gpow = beams.aggregate(k).squaredNorm();
      if (gpow > 0.98 * budget_mw) {
        const double s = std::sqrt(0.98 * budget_mw / gpow);
        beams.sensing[k] *= s;
        for (auto& w : beams.comm[k]) w *= s;
      }
    }

    // Per-vehicle power backoff: vehicles with sensing slack shrink until
    // everyone meets the requirement; the scale map is monotone, so the
    // iteration converges to its largest fixed point below the caps.
    if (backoff) {
    Vec num(K);
    Mat den = Mat::Zero(K, K);
    for (int k = 0; k < K; ++k) {
      const CVec g = beams.aggregate(k);
      const CVec at = steering(ctx.geom->target_angles_rad(k), Nt);
      const double eta = ctx.geom->reflection_coeffs(k);
      num(k) = eta * eta * cfg.rx_antennas * std::norm(at.dot(g));
      for (int kp = 0; kp < K; ++kp)
        if (kp != k) den(k, kp) = (ch.cross[k][kp] * beams.aggregate(kp))
                                      .squaredNorm();
    }
    Vec scale2 = Vec::Ones(K);
    for (int pass = 0; pass < 200; ++pass) {
      double change = 0.0;
      for (int k = 0; k < K; ++k) {
        double interf = cfg.rx_antennas;
        for (int kp = 0; kp < K; ++kp)
          if (kp != k) interf += den(k, kp) * scale2(kp);
        const double need =
            num(k) > 0.0 ? task.sinr_req * margin * interf / num(k) : 2.0;
        const double next = std::min(1.0, need);
        change = std::max(change, std::abs(next - scale2(k)));
        scale2(k) = next;
      }
      if (change < 1e-12) break;
    }
    for (int k = 0; k < K; ++k) {
      const double s = std::sqrt(scale2(k));
      beams.sensing[k] *= s;
      for (auto& w : beams.comm[k]) w *= s;
    }
    }
    bool ok = true;
    for (int k = 0; k < K; ++k)
      if (metrics::sensing_sinr(k, beams, ch, *ctx.geom) <
          task.sinr_req * (1.0 + 1e-3))
        ok = false;
    if (ok) return {beams, true};
    if (attempt == 2 && restore_sensing(ctx, beams)) return {beams, true};
  }
  return {BeamformerSet::zeros(cfg, ch.serving), false};
}

BeamformResult run_algorithm2(const BeamformContext& ctx, BeamformerSet start,
                              double zeta, int max_iter) {
  const ChannelSet& ch = *ctx.ch;
  const int K = ctx.cfg->num_vehicles;

  bool any_active = false;
  for (int k = 0; k < K; ++k)
    if (step_active(ctx.off->x_b(k)) || step_active(ctx.off->x_c(k)))
      any_active = true;
  const bool power_min = !any_active;

  auto objective = [&](const BeamformerSet& beams, const Mat& rates) {
    if (power_min) {
      double p = 0.0;
      for (int k = 0; k < K; ++k) p += beams.aggregate(k).squaredNorm();
      return p;
    }
    return metrics::max_total_latency(*ctx.off, *ctx.task, *ctx.plan, rates,
                                      ch.serving);
  };

  auto slack_record = [&](int it, double value,
                          const BeamformerSet& beams) {
    BeamformTraceRecord rec;
    rec.iteration = it;
    rec.objective = value;
    rec.min_sensing_slack = std::numeric_limits<double>::infinity();
    rec.max_power_use = 0.0;
    for (int k = 0; k < K; ++k) {
      const double sinr = metrics::sensing_sinr(k, beams, ch, *ctx.geom);
      rec.min_sensing_slack =
          std::min(rec.min_sensing_slack, sinr / ctx.task->sinr_req - 1.0);
      const double f = ctx.plan->f_loc(k);
      const double budget =
          (ctx.task->p_max_w - ctx.task->kappa_loc * f * f * f) * kMwPerW;
      rec.max_power_use = std::max(
          rec.max_power_use, beams.aggregate(k).squaredNorm() / budget);
    }
    return rec;
  };

  BeamformResult res;
  res.beams = std::move(start);
  res.rates = metrics::rate_matrix(res.beams, ch, ctx.cfg->bandwidth_hz);
  double obj = objective(res.beams, res.rates);
  res.trace.push_back(obj);
  res.records.push_back(slack_record(0, obj, res.beams));

  bool reinitialized = false;
  for (int it = 0; it < max_iter; ++it) {
    WmmseState wmmse;
    if (!power_min) wmmse = refresh_wmmse(res.beams, ch);
    const SensingLinearization lin =
        sensing_anchor(res.beams, *ctx.geom, *ctx.cfg);
    BeamSocp socp;
    try {
      socp = build_beam_socp(ctx, wmmse, lin, power_min, obj);
    } catch (const std::domain_error&) {
      res.warning = true;
      res.note = "socp construction failed";
      break;
    }
    const ConicSolution sol = solve(socp.problem, 1e-8, 200);
    if (!sol.ok() && std::getenv("ICCS_BLOCK_TRACE") != nullptr)
      std::fprintf(stderr,
                   "beam socp failed: status=%d iters=%d res=%.2e/%.2e/%.2e\n",
                   static_cast<int>(sol.status), sol.iterations,
                   sol.primal_residual, sol.dual_residual, sol.gap);
    if (!sol.ok()) {
      if (it == 0 && !reinitialized) {
        // anchor not sensing-feasible; restart from the aligned initializer
        auto [init, feasible] = init_beams(ctx);
        if (feasible) {
          reinitialized = true;
          res.beams = std::move(init);
          res.rates =
              metrics::rate_matrix(res.beams, ch, ctx.cfg->bandwidth_hz);
          obj = objective(res.beams, res.rates);
          res.trace.back() = obj;
          continue;
        }
      }
      res.warning = true;
      res.note = "socp solve failed";
      break;
    }
    BeamformerSet nb = socp.decode(sol, *ctx.cfg, ch.serving);
    const Mat nrates = metrics::rate_matrix(nb, ch, ctx.cfg->bandwidth_hz);
    const double nobj = objective(nb, nrates);
    if (nobj > obj + 1e-7 * std::max(1.0, obj)) {
      res.converged = true;  // numerical stall; keep the incumbent
      break;
    }
    res.beams = std::move(nb);
    res.rates = nrates;
    res.iterations = it + 1;
    const double rel = std::abs(obj - nobj) / std::max(nobj, 1e-12);
    obj = nobj;
    res.trace.push_back(obj);
    res.records.push_back(slack_record(it + 1, obj, res.beams));
    if (rel < zeta) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace iccs
