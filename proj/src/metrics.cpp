#include "iccs/metrics.hpp"

#include <stdexcept>

namespace iccs {

CVec BeamformerSet::aggregate(int k) const {
  CVec g = sensing[k];
  for (const auto& w : comm[k]) g += w;
  return g;
}

BeamformerSet BeamformerSet::zeros(
    const ScenarioConfig& cfg, const std::vector<std::vector<int>>& serving) {
  BeamformerSet b;
  b.comm.resize(cfg.num_vehicles);
  b.sensing.resize(cfg.num_vehicles);
  for (int k = 0; k < cfg.num_vehicles; ++k) {
    b.comm[k].assign(serving[k].size(), CVec::Zero(cfg.tx_antennas));
    b.sensing[k] = CVec::Zero(cfg.tx_antennas);
  }
  return b;
}

void TaskParams::validate() const {
  const double vals[] = {task_bits, alpha_loc,   alpha_mec, alpha_cc,
                         kappa_loc, kappa_mec,   p_max_w,   p_mec_max_w,
                         f_mec_max, f_cc_max,    r_f_max,   sinr_req,
                         f_loc_max};
  for (double v : vals)
    if (!(v > 0.0))
      throw std::invalid_argument("task params must be strictly positive");
}

namespace metrics {

namespace {

int serving_slot(const std::vector<int>& serving_k, int m) {
  for (std::size_t j = 0; j < serving_k.size(); ++j)
    if (serving_k[j] == m) return static_cast<int>(j);
  return -1;
}

}  // namespace

CMat interference_cov(int k, int m, const BeamformerSet& beams,
                      const ChannelSet& ch) {
  const int K = static_cast<int>(ch.uplink.size());
  const CMat& Hkm = ch.uplink[k][m];
  const int N = static_cast<int>(Hkm.rows());
  const int Nt = static_cast<int>(Hkm.cols());
  if (serving_slot(ch.serving[k], m) < 0)
    throw std::invalid_argument("interference_cov: m not in serving set");
  CMat cov = CMat::Identity(N, N);
  auto add_stream = [&](const CMat& H, const CVec& w) {
    if (w.size() != Nt || H.rows() != N)
      throw std::invalid_argument("interference_cov: dimension mismatch");
    const CVec u = H * w;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(u, 1.0);
  };
  for (int kp = 0; kp < K; ++kp) {
    const CMat& H = ch.uplink[kp][m];
    for (std::size_t j = 0; j < ch.serving[kp].size(); ++j) {
      if (kp == k && ch.serving[kp][j] == m) continue;  // own stream excluded
      add_stream(H, beams.comm[kp][j]);
    }
    add_stream(H, beams.sensing[kp]);
  }
  return cov.selfadjointView<Eigen::Lower>();
}

double rate(int k, int m, const BeamformerSet& beams, const ChannelSet& ch,
            double bandwidth_hz) {
  const int slot = serving_slot(ch.serving[k], m);
  if (slot < 0) throw std::invalid_argument("rate: m not in serving set");
  const CMat cov = interference_cov(k, m, beams, ch);
  const CVec u = ch.uplink[k][m] * beams.comm[k][slot];
  const CVec sol = cov.llt().solve(u);
  const double snr = std::max(0.0, u.dot(sol).real());
  return bandwidth_hz * std::log2(1.0 + snr);
}

Mat rate_matrix(const BeamformerSet& beams, const ChannelSet& ch,
                double bandwidth_hz) {
  const int K = static_cast<int>(ch.uplink.size());
  const int M = static_cast<int>(ch.uplink.empty() ? 0 : ch.uplink[0].size());
  Mat r = Mat::Zero(K, M);
  for (int k = 0; k < K; ++k)
    for (int m : ch.serving[k]) r(k, m) = rate(k, m, beams, ch, bandwidth_hz);
  return r;
}

double sensing_sinr(int k, const BeamformerSet& beams, const ChannelSet& ch,
                    const Geometry& geom) {
  const int K = static_cast<int>(ch.uplink.size());
  const CVec g = beams.aggregate(k);
  const int nt = static_cast<int>(g.size());
  int nr = nt;
  for (int kp = 0; kp < K && K > 1; ++kp)
    if (kp != k) {
      nr = static_cast<int>(ch.cross[k][kp].rows());
      break;
    }
  const CVec at = steering(geom.target_angles_rad(k), nt);
  const double eta = geom.reflection_coeffs(k);
  const double num = eta * eta * nr * std::norm(at.dot(g));
  double den = nr;
  for (int kp = 0; kp < K; ++kp)
    if (kp != k) den += (ch.cross[k][kp] * beams.aggregate(kp)).squaredNorm();
  return num / den;
}

double local_latency(int k, const TaskParams& task, const ResourcePlan& plan) {
  if (!(plan.f_loc(k) > 0.0))
    throw std::domain_error("local_latency: zero execution frequency");
  return task.alpha_loc * task.task_bits / plan.f_loc(k);
}

double local_power(int k, const TaskParams& task, const ResourcePlan& plan,
                   const BeamformerSet& beams) {
  const double f = plan.f_loc(k);
  const double tx_mw = beams.aggregate(k).squaredNorm();
  return task.kappa_loc * f * f * f + tx_mw / kMwPerW;
}

double mec_latency(int k, const TaskParams& task, const ResourcePlan& plan,
                   const OffloadMatrix& off, const Mat& rates,
                   const std::vector<int>& serving_k, Vec* per_ap_tx,
                   Vec* per_ap_comp) {
  const int M = static_cast<int>(off.b.cols());
  if (per_ap_tx) *per_ap_tx = Vec::Zero(M);
  if (per_ap_comp) *per_ap_comp = Vec::Zero(M);
  double worst = 0.0;
  for (int m : serving_k) {
    const double b = off.b(k, m);
    if (!step_active(b)) continue;
    if (!(rates(k, m) > 0.0) || !(plan.f_mec(k, m) > 0.0))
      throw std::domain_error("mec_latency: active fraction without rate/frequency");
    const double tx = b * task.task_bits / rates(k, m);
    const double comp = task.alpha_mec * b * task.task_bits / plan.f_mec(k, m);
    if (per_ap_tx) (*per_ap_tx)(m) = tx;
    if (per_ap_comp) (*per_ap_comp)(m) = comp;
    worst = std::max(worst, tx + comp);
  }
  return worst;
}

double cc_latency(int k, const TaskParams& task, const ResourcePlan& plan,
                  const OffloadMatrix& off, const Mat& rates,
                  const std::vector<int>& serving_k, Vec* per_ap_v2a,
                  Vec* per_ap_a2c, double* comp_out) {
  const int M = static_cast<int>(off.c.cols());
  if (per_ap_v2a) *per_ap_v2a = Vec::Zero(M);
  if (per_ap_a2c) *per_ap_a2c = Vec::Zero(M);
  if (comp_out) *comp_out = 0.0;
  // Inactive tier reported as zero; the recombination weights it by zero.
  if (!step_active(off.c.row(k).sum())) return 0.0;
  if (!(plan.f_cc(k) > 0.0))
    throw std::domain_error("cc_latency: active tier without cloud frequency");
  double worst_tx = 0.0;
  for (int m : serving_k) {
    const double c = off.c(k, m);
    if (!step_active(c)) continue;
    if (!(rates(k, m) > 0.0) || !(plan.r_f(k, m) > 0.0))
      throw std::domain_error("cc_latency: active fraction without rate/share");
    const double v2a = c * task.task_bits / rates(k, m);
    const double a2c = c * task.task_bits / plan.r_f(k, m);
    if (per_ap_v2a) (*per_ap_v2a)(m) = v2a;
    if (per_ap_a2c) (*per_ap_a2c)(m) = a2c;
    worst_tx = std::max(worst_tx, v2a + a2c);
  }
  const double comp = task.alpha_cc * task.task_bits / plan.f_cc(k);
  if (comp_out) *comp_out = comp;
  return worst_tx + comp;
}

double mec_power(int m, const TaskParams& task, const ResourcePlan& plan,
                 const OffloadMatrix& off) {
  const int K = static_cast<int>(off.b.rows());
  double p = 0.0;
  for (int k = 0; k < K; ++k)
    if (step_active(off.b(k, m))) {
      const double f = plan.f_mec(k, m);
      p += task.kappa_mec * f * f * f;
    }
  return p;
}

double received_power_mw(int k, int m, const BeamformerSet& beams,
                         const ChannelSet& ch) {
  const int slot = serving_slot(ch.serving[k], m);
  if (slot < 0) return 0.0;
  return ch.noise_mw * (ch.uplink[k][m] * beams.comm[k][slot]).squaredNorm();
}

LatencyReport total_latency(const OffloadMatrix& off, const TaskParams& task,
                            const ResourcePlan& plan, const Mat& rates,
                            const std::vector<std::vector<int>>& serving) {
  const int K = static_cast<int>(off.b.rows());
  const int M = static_cast<int>(off.b.cols());
  LatencyReport rep;
  rep.t_loc = Vec::Zero(K);
  rep.t_mec = Vec::Zero(K);
  rep.t_cc = Vec::Zero(K);
  rep.t_total = Vec::Zero(K);
  rep.mec_tx = Mat::Zero(K, M);
  rep.mec_comp = Mat::Zero(K, M);
  rep.cc_tx_v2a = Mat::Zero(K, M);
  rep.cc_tx_a2c = Mat::Zero(K, M);
  rep.cc_comp = Vec::Zero(K);
  for (int k = 0; k < K; ++k) {
    const double xb = off.x_b(k);
    const double xc = off.x_c(k);
    if (xb + xc > 1.0 + 1e-6)
      throw std::domain_error("total_latency: offload sums exceed one");
    const double w_loc = std::max(0.0, 1.0 - xb - xc);
    if (w_loc > kStepThreshold) rep.t_loc(k) = local_latency(k, task, plan);
    Vec tx, comp, v2a, a2c;
    double cc_comp = 0.0;
    rep.t_mec(k) = mec_latency(k, task, plan, off, rates, serving[k], &tx, &comp);
    rep.t_cc(k) =
        cc_latency(k, task, plan, off, rates, serving[k], &v2a, &a2c, &cc_comp);
    rep.mec_tx.row(k) = tx.transpose();
    rep.mec_comp.row(k) = comp.transpose();
    rep.cc_tx_v2a.row(k) = v2a.transpose();
    rep.cc_tx_a2c.row(k) = a2c.transpose();
    rep.cc_comp(k) = cc_comp;
    rep.t_total(k) = w_loc * rep.t_loc(k) + xb * rep.t_mec(k) + xc * rep.t_cc(k);
    if (rep.t_total(k) > rep.max_latency || rep.argmax < 0) {
      rep.max_latency = rep.t_total(k);
      rep.argmax = k;
    }
  }
  return rep;
}

double max_total_latency(const OffloadMatrix& off, const TaskParams& task,
                         const ResourcePlan& plan, const Mat& rates,
                         const std::vector<std::vector<int>>& serving) {
  return total_latency(off, task, plan, rates, serving).max_latency;
}

std::vector<ConstraintSlack> check_budgets(
    const BeamformerSet& beams, const OffloadMatrix& off,
    const ResourcePlan& plan, const TaskParams& task, const ChannelSet& ch,
    const Geometry& geom, const ScenarioConfig& cfg, double rel_tol) {
  const int K = cfg.num_vehicles;
  const int M = cfg.num_aps;
  std::vector<ConstraintSlack> out;
  auto consider = [&](std::string name, int k, int m, double slack,
                      double scale) {
    const double rel = slack / std::max(scale, 1e-300);
    if (rel < -rel_tol) out.push_back({std::move(name), k, m, slack, rel});
  };

  for (int k = 0; k < K; ++k) {
    for (int m = 0; m < M; ++m) {
      consider("b_lower", k, m, off.b(k, m), 1.0);
      consider("b_upper", k, m, 1.0 - off.b(k, m), 1.0);
      consider("c_lower", k, m, off.c(k, m), 1.0);
      consider("c_upper", k, m, 1.0 - off.c(k, m), 1.0);
    }
    consider("sum_box", k, -1, 1.0 - off.x_b(k) - off.x_c(k), 1.0);
    consider("vehicle_power", k, -1,
             task.p_max_w - local_power(k, task, plan, beams), task.p_max_w);
    consider("sensing", k, -1,
             sensing_sinr(k, beams, ch, geom) - task.sinr_req, task.sinr_req);
  }
  for (int m = 0; m < M; ++m) {
    double used_power = mec_power(m, task, plan, off);
    double used_freq = 0.0;
    double used_front = 0.0;
    for (int k = 0; k < K; ++k) {
      if (step_active(off.c(k, m)))
        used_power += received_power_mw(k, m, beams, ch) / kMwPerW;
      if (step_active(off.b(k, m))) used_freq += plan.f_mec(k, m);
      if (step_active(off.c(k, m))) used_front += plan.r_f(k, m);
    }
    consider("ap_power", -1, m, task.p_mec_max_w - used_power,
             task.p_mec_max_w);
    consider("mec_capacity", -1, m, task.f_mec_max - used_freq, task.f_mec_max);
    consider("fronthaul", -1, m, task.r_f_max - used_front, task.r_f_max);
  }
  double cc_used = 0.0;
  for (int k = 0; k < K; ++k) cc_used += off.x_c(k) * plan.f_cc(k);
  consider("cc_capacity", -1, -1, task.f_cc_max - cc_used, task.f_cc_max);
  return out;
}

}  // namespace metrics

namespace metrics_reference {

CMat interference_cov(int k, int m, const BeamformerSet& beams,
                      const ChannelSet& ch) {
  const int K = static_cast<int>(ch.uplink.size());
  const CMat& Hkm = ch.uplink[k][m];
  const int N = static_cast<int>(Hkm.rows());
  CMat cov = CMat::Identity(N, N);
  for (int kp = 0; kp < K; ++kp) {
    const CMat& H = ch.uplink[kp][m];
    for (std::size_t j = 0; j < ch.serving[kp].size(); ++j) {
      if (kp == k && ch.serving[kp][j] == m) continue;
      const CVec& w = beams.comm[kp][j];
      cov += H * w * w.adjoint() * H.adjoint();
    }
    const CVec& ws = beams.sensing[kp];
    cov += H * ws * ws.adjoint() * H.adjoint();
  }
  return cov;
}

}  // namespace metrics_reference

}  // namespace iccs
