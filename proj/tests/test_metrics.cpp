#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "iccs/metrics.hpp"

using namespace iccs;

namespace {

// Hand-built single-link world: K vehicles, M APs, all dimensions given.
struct TinyWorld {
  ScenarioConfig cfg;
  Geometry geom;
  ChannelSet ch;

  TinyWorld(int K, int M, int N, int Nt, int Nr, int L, std::uint64_t seed) {
    cfg.num_aps = M;
    cfg.num_vehicles = K;
    cfg.antennas_per_ap = N;
    cfg.tx_antennas = Nt;
    cfg.rx_antennas = Nr;
    cfg.serving_set_size = L;
    cfg.rng_seed = seed;
    std::mt19937_64 rng(seed);
    geom = place_network(cfg, rng);
    PathLossParams pl;
    ch = draw_channels(geom, cfg, pl, rng);
  }
};

BeamformerSet random_beams(const TinyWorld& w, std::uint64_t seed,
                           double power_mw = 50.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  BeamformerSet beams = BeamformerSet::zeros(w.cfg, w.ch.serving);
  for (int k = 0; k < w.cfg.num_vehicles; ++k) {
    for (auto& v : beams.comm[k]) {
      for (int t = 0; t < w.cfg.tx_antennas; ++t) v(t) = cxd(g(rng), g(rng));
      v *= std::sqrt(power_mw / 3.0) / v.norm();
    }
    for (int t = 0; t < w.cfg.tx_antennas; ++t)
      beams.sensing[k](t) = cxd(g(rng), g(rng));
    beams.sensing[k] *= std::sqrt(power_mw / 3.0) / beams.sensing[k].norm();
  }
  return beams;
}

// Log-det rate evaluated directly, as an independent check of the scalar
// SINR form used by the implementation.
double logdet_rate(int k, int m, const BeamformerSet& beams,
                   const ChannelSet& ch, double B) {
  const CMat cov = metrics::interference_cov(k, m, beams, ch);
  int slot = -1;
  for (std::size_t j = 0; j < ch.serving[k].size(); ++j)
    if (ch.serving[k][j] == m) slot = static_cast<int>(j);
  const CVec u = ch.uplink[k][m] * beams.comm[k][slot];
  const int N = static_cast<int>(cov.rows());
  CMat inner = CMat::Identity(N, N) + cov.llt().solve(CMat(u * u.adjoint()));
  const cxd det = inner.partialPivLu().determinant();
  return B * std::log2(std::abs(det));
}

}  // namespace

TEST_CASE("interference covariance basics") {
  TinyWorld w(2, 2, 4, 4, 4, 2, 5);
  BeamformerSet zero = BeamformerSet::zeros(w.cfg, w.ch.serving);
  const CMat cov = metrics::interference_cov(0, w.ch.serving[0][0], zero, w.ch);
  CHECK((cov - CMat::Identity(4, 4)).norm() < 1e-14);

  // K = 1 with a single serving AP and no sensing beam: empty sums
  TinyWorld w1(1, 1, 3, 2, 2, 1, 6);
  BeamformerSet one = BeamformerSet::zeros(w1.cfg, w1.ch.serving);
  one.comm[0][0] = CVec::Ones(2);
  const CMat cov1 = metrics::interference_cov(0, 0, one, w1.ch);
  CHECK((cov1 - CMat::Identity(3, 3)).norm() < 1e-14);
}

TEST_CASE("interference covariance is identity-plus-PSD") {
  TinyWorld w(3, 3, 4, 4, 4, 2, 9);
  const BeamformerSet beams = random_beams(w, 17);
  for (int k = 0; k < 3; ++k)
    for (int m : w.ch.serving[k]) {
      const CMat cov = metrics::interference_cov(k, m, beams, w.ch);
      CHECK((cov - cov.adjoint()).norm() < 1e-10 * cov.norm());
      Eigen::SelfAdjointEigenSolver<CMat> es(cov);
      CHECK(es.eigenvalues().minCoeff() >= 1.0 - 1e-10);
    }
}

TEST_CASE("optimized covariance matches the printed-sum reference") {
  TinyWorld w(3, 2, 4, 4, 4, 2, 33);
  const BeamformerSet beams = random_beams(w, 4);
  for (int k = 0; k < 3; ++k)
    for (int m : w.ch.serving[k]) {
      const CMat a = metrics::interference_cov(k, m, beams, w.ch);
      const CMat b = metrics_reference::interference_cov(k, m, beams, w.ch);
      CHECK((a - b).norm() <= 1e-12 * b.norm());
    }
}

TEST_CASE("rate: zero precoder and scalar case") {
  TinyWorld w(1, 1, 1, 1, 1, 1, 2);
  // overwrite with unit channel
  w.ch.uplink[0][0] = CMat::Ones(1, 1);
  BeamformerSet beams = BeamformerSet::zeros(w.cfg, w.ch.serving);
  CHECK(metrics::rate(0, 0, beams, w.ch, 1e7) == 0.0);
  beams.comm[0][0](0) = 1.0;
  CHECK(metrics::rate(0, 0, beams, w.ch, 1e7) ==
        doctest::Approx(1e7).epsilon(1e-12));
}

TEST_CASE("rank-one determinant identity") {
  TinyWorld w(3, 3, 4, 4, 4, 2, 11);
  std::mt19937_64 seeds(3);
  for (int rep = 0; rep < 30; ++rep) {
    const BeamformerSet beams = random_beams(w, seeds());
    for (int k = 0; k < 3; ++k)
      for (int m : w.ch.serving[k]) {
        const double r1 = metrics::rate(k, m, beams, w.ch, 1e7);
        const double r2 = logdet_rate(k, m, beams, w.ch, 1e7);
        CHECK(r1 == doctest::Approx(r2).epsilon(1e-12));
      }
  }
}

TEST_CASE("noise normalization invariance") {
  // evaluating with explicit noise P_n I on raw channels equals identity
  // noise on normalized channels
  TinyWorld w(2, 2, 4, 4, 4, 2, 21);
  const BeamformerSet beams = random_beams(w, 8);
  const double pn = w.ch.noise_mw;
  for (int k = 0; k < 2; ++k) {
    const int m = w.ch.serving[k][0];
    // raw-channel evaluation with explicit noise covariance
    ChannelSet raw = w.ch;
    for (int kk = 0; kk < 2; ++kk)
      for (int mm = 0; mm < 2; ++mm) raw.uplink[kk][mm] *= std::sqrt(pn);
    int slot = 0;
    const CVec u = raw.uplink[k][m] * beams.comm[k][slot];
    CMat cov = pn * CMat::Identity(4, 4);
    for (int kp = 0; kp < 2; ++kp) {
      const CMat& H = raw.uplink[kp][m];
      for (std::size_t j = 0; j < raw.serving[kp].size(); ++j) {
        if (kp == k && raw.serving[kp][j] == m) continue;
        const CVec s = H * beams.comm[kp][j];
        cov += s * s.adjoint();
      }
      const CVec s = H * beams.sensing[kp];
      cov += s * s.adjoint();
    }
    const double snr_raw = u.dot(cov.llt().solve(u)).real();
    const double r_raw = 1e7 * std::log2(1.0 + snr_raw);
    const double r_norm = metrics::rate(k, m, beams, w.ch, 1e7);
    CHECK(r_raw == doctest::Approx(r_norm).epsilon(1e-12));
  }
}

TEST_CASE("sensing SINR closed cases") {
  TinyWorld w(1, 1, 2, 8, 8, 1, 31);
  BeamformerSet beams = BeamformerSet::zeros(w.cfg, w.ch.serving);
  const CVec at = steering(w.geom.target_angles_rad(0), 8);
  w.geom.reflection_coeffs(0) = 1.0;

  // matched aggregate with power P: SINR = P * N_t
  const double P = 1.0;
  beams.sensing[0] = std::sqrt(P) * at / std::sqrt(8.0);
  CHECK(metrics::sensing_sinr(0, beams, w.ch, w.geom) ==
        doctest::Approx(8.0).epsilon(1e-12));

  // orthogonal aggregate: zero
  CVec orth = CVec::Zero(8);
  orth(0) = at(1);
  orth(1) = -at(0);
  beams.sensing[0] = std::conj(orth(0)) * orth;  // any orthogonal vector
  beams.sensing[0] = orth - at * (at.dot(orth) / at.squaredNorm());
  CHECK(metrics::sensing_sinr(0, beams, w.ch, w.geom) < 1e-20);

  // K = 1 homogeneity: scaling by s multiplies SINR by s^2
  beams.sensing[0] = std::sqrt(P) * at / std::sqrt(8.0);
  const double base = metrics::sensing_sinr(0, beams, w.ch, w.geom);
  beams.sensing[0] *= 3.0;
  CHECK(metrics::sensing_sinr(0, beams, w.ch, w.geom) ==
        doctest::Approx(9.0 * base).epsilon(1e-12));
}

TEST_CASE("latency and power closed forms") {
  TaskParams task;
  ResourcePlan plan = ResourcePlan::zeros(1, 1);
  plan.f_loc(0) = 3e8;
  CHECK(metrics::local_latency(0, task, plan) ==
        doctest::Approx(2.13333333).epsilon(1e-8));
  plan.f_loc(0) = 0.0;
  CHECK_THROWS_AS(metrics::local_latency(0, task, plan), std::domain_error);

  plan.f_loc(0) = 3e8;
  TinyWorld w(1, 1, 2, 2, 2, 1, 3);
  BeamformerSet beams = BeamformerSet::zeros(w.cfg, w.ch.serving);
  CHECK(metrics::local_power(0, task, plan, beams) ==
        doctest::Approx(2.7e-3).epsilon(1e-12));
  beams.sensing[0] = CVec::Ones(2);  // 2 mW
  CHECK(metrics::local_power(0, task, plan, beams) ==
        doctest::Approx(2.7e-3 + 2e-3).epsilon(1e-12));
}

TEST_CASE("mec latency") {
  TaskParams task;
  const int K = 1, M = 2;
  ResourcePlan plan = ResourcePlan::zeros(K, M);
  OffloadMatrix off = OffloadMatrix::zeros(K, M);
  Mat rates = Mat::Zero(K, M);
  std::vector<int> serving{0, 1};

  off.b(0, 0) = 1.0;
  plan.f_mec(0, 0) = 3e9;
  rates(0, 0) = 4e7;
  CHECK(metrics::mec_latency(0, task, plan, off, rates, serving) ==
        doctest::Approx(0.04 + 0.21333333).epsilon(1e-8));

  // splitting across two identical APs halves both terms
  off.b(0, 0) = 0.5;
  off.b(0, 1) = 0.5;
  plan.f_mec(0, 1) = 3e9;
  rates(0, 1) = 4e7;
  CHECK(metrics::mec_latency(0, task, plan, off, rates, serving) ==
        doctest::Approx(0.5 * (0.04 + 0.21333333)).epsilon(1e-8));

  // empty offloading
  off = OffloadMatrix::zeros(K, M);
  CHECK(metrics::mec_latency(0, task, plan, off, rates, serving) == 0.0);

  // active fraction with zero rate
  off.b(0, 0) = 0.3;
  rates(0, 0) = 0.0;
  CHECK_THROWS_AS(metrics::mec_latency(0, task, plan, off, rates, serving),
                  std::domain_error);
}

TEST_CASE("cc latency") {
  TaskParams task;
  ResourcePlan plan = ResourcePlan::zeros(1, 1);
  OffloadMatrix off = OffloadMatrix::zeros(1, 1);
  Mat rates = Mat::Zero(1, 1);
  std::vector<int> serving{0};

  // inactive tier reported as zero
  CHECK(metrics::cc_latency(0, task, plan, off, rates, serving) == 0.0);

  off.c(0, 0) = 1.0;
  plan.r_f(0, 0) = 5e8;
  plan.f_cc(0) = 1e10;
  rates(0, 0) = 1e9;  // makes the radio term 1.6 ms
  double comp = 0.0;
  Vec v2a, a2c;
  const double t =
      metrics::cc_latency(0, task, plan, off, rates, serving, &v2a, &a2c,
                          &comp);
  CHECK(a2c(0) == doctest::Approx(3.2e-3).epsilon(1e-12));
  CHECK(comp == doctest::Approx(0.064).epsilon(1e-12));
  CHECK(t == doctest::Approx(1.6e-3 + 3.2e-3 + 0.064).epsilon(1e-10));
}

TEST_CASE("mec power") {
  TaskParams task;
  ResourcePlan plan = ResourcePlan::zeros(2, 1);
  OffloadMatrix off = OffloadMatrix::zeros(2, 1);
  CHECK(metrics::mec_power(0, task, plan, off) == 0.0);

  off.b(0, 0) = 0.4;
  plan.f_mec(0, 0) = 3e9;
  CHECK(metrics::mec_power(0, task, plan, off) ==
        doctest::Approx(2.7).epsilon(1e-12));

  off.b(1, 0) = 0.6;
  plan.f_mec(1, 0) = 3e9;
  CHECK(metrics::mec_power(0, task, plan, off) ==
        doctest::Approx(5.4).epsilon(1e-12));
}

TEST_CASE("total latency recombination") {
  TaskParams task;
  const int K = 1, M = 1;
  ResourcePlan plan = ResourcePlan::zeros(K, M);
  plan.f_loc(0) = 3e8;
  plan.f_mec(0, 0) = 3e9;
  plan.f_cc(0) = 1e10;
  plan.r_f(0, 0) = 5e8;
  Mat rates = Mat::Constant(K, M, 4e7);
  std::vector<std::vector<int>> serving{{0}};

  OffloadMatrix off = OffloadMatrix::zeros(K, M);
  off.b(0, 0) = 1.0;
  auto rep = metrics::total_latency(off, task, plan, rates, serving);
  CHECK(rep.t_total(0) == doctest::Approx(rep.t_mec(0)));

  off.b(0, 0) = 0.0;
  rep = metrics::total_latency(off, task, plan, rates, serving);
  CHECK(rep.t_total(0) == doctest::Approx(rep.t_loc(0)));

  off.b(0, 0) = 0.5;
  off.c(0, 0) = 0.5;
  rep = metrics::total_latency(off, task, plan, rates, serving);
  CHECK(rep.t_total(0) ==
        doctest::Approx(0.5 * rep.t_mec(0) + 0.5 * rep.t_cc(0)));

  off.b(0, 0) = 0.7;
  off.c(0, 0) = 0.7;
  CHECK_THROWS_AS(metrics::total_latency(off, task, plan, rates, serving),
                  std::domain_error);
}

TEST_CASE("latency recombination on random simplex points") {
  TaskParams task;
  const int K = 2, M = 2;
  ResourcePlan plan = ResourcePlan::zeros(K, M);
  std::vector<std::vector<int>> serving{{0, 1}, {0, 1}};
  Mat rates = Mat::Constant(K, M, 3e7);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < K; ++k) {
    plan.f_loc(k) = 3e8;
    plan.f_cc(k) = 5e9;
    for (int m = 0; m < M; ++m) {
      plan.f_mec(k, m) = 1.5e9;
      plan.r_f(k, m) = 2.5e8;
    }
  }
  for (int rep = 0; rep < 100; ++rep) {
    OffloadMatrix off = OffloadMatrix::zeros(K, M);
    for (int k = 0; k < K; ++k) {
      double xb = u(rng), xc = u(rng), rest = u(rng);
      const double tot = xb + xc + rest;
      xb /= tot;
      xc /= tot;
      const double split = u(rng);
      off.b(k, 0) = xb * split;
      off.b(k, 1) = xb * (1.0 - split);
      off.c(k, 0) = xc * (1.0 - split);
      off.c(k, 1) = xc * split;
    }
    const auto rep_v = metrics::total_latency(off, task, plan, rates, serving);
    for (int k = 0; k < K; ++k) {
      const double direct = (1.0 - off.x_b(k) - off.x_c(k)) * rep_v.t_loc(k) +
                            off.x_b(k) * rep_v.t_mec(k) +
                            off.x_c(k) * rep_v.t_cc(k);
      CHECK(rep_v.t_total(k) == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("task homogeneity in bits") {
  TaskParams task;
  const int K = 1, M = 1;
  ResourcePlan plan = ResourcePlan::zeros(K, M);
  plan.f_loc(0) = 3e8;
  plan.f_mec(0, 0) = 2e9;
  plan.f_cc(0) = 1e10;
  plan.r_f(0, 0) = 4e8;
  Mat rates = Mat::Constant(K, M, 5e7);
  std::vector<std::vector<int>> serving{{0}};
  OffloadMatrix off = OffloadMatrix::zeros(K, M);
  off.b(0, 0) = 0.4;
  off.c(0, 0) = 0.3;
  const auto r1 = metrics::total_latency(off, task, plan, rates, serving);
  TaskParams scaled = task;
  scaled.task_bits *= 3.0;
  const auto r2 = metrics::total_latency(off, scaled, plan, rates, serving);
  CHECK(r2.t_total(0) == doctest::Approx(3.0 * r1.t_total(0)).epsilon(1e-12));
  CHECK(r2.t_mec(0) == doctest::Approx(3.0 * r1.t_mec(0)).epsilon(1e-12));
}

TEST_CASE("budget check catches violations") {
  TinyWorld w(2, 2, 4, 4, 4, 2, 44);
  TaskParams task;
  ResourcePlan plan = ResourcePlan::zeros(2, 2);
  for (int k = 0; k < 2; ++k) plan.f_loc(k) = 3e8;
  OffloadMatrix off = OffloadMatrix::zeros(2, 2);
  BeamformerSet zero = BeamformerSet::zeros(w.cfg, w.ch.serving);

  // all-zero beams: sensing requirement must be violated
  auto v = metrics::check_budgets(zero, off, plan, task, w.ch, w.geom, w.cfg);
  bool sensing_violated = false;
  for (const auto& s : v)
    if (s.name == "sensing") sensing_violated = true;
  CHECK(sensing_violated);

  // MEC capacity boundary probe: exceed by exactly one cycle/s
  off.b(0, 0) = 0.5;
  off.b(1, 0) = 0.5;
  plan.f_mec(0, 0) = 0.5 * (task.f_mec_max + 1.0);
  plan.f_mec(1, 0) = 0.5 * (task.f_mec_max + 1.0);
  v = metrics::check_budgets(zero, off, plan, task, w.ch, w.geom, w.cfg,
                             0.0);
  bool cap_violated = false;
  for (const auto& s : v)
    if (s.name == "mec_capacity" && s.m == 0) {
      cap_violated = true;
      CHECK(s.slack == doctest::Approx(-1.0).epsilon(1e-6));
    }
  CHECK(cap_violated);
}

TEST_CASE("step function threshold") {
  CHECK(!step_active(0.0));
  CHECK(!step_active(-1.0));
  CHECK(!step_active(5e-10));
  CHECK(step_active(2e-9));
  CHECK(step_active(1.0));
}
