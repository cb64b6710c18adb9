// Acceptance suite: runs every gate criterion at its stated tolerance and
// prints one pass/fail line per criterion. Exits nonzero on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "iccs/beamform.hpp"
#include "iccs/conic.hpp"
#include "iccs/metrics.hpp"
#include "iccs/orchestrator.hpp"
#include "iccs/parallel.hpp"

using namespace iccs;
using clk = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %-28s %s\n", pass ? "PASS" : "FAIL", idx,
              name, detail.c_str());
  if (!pass) ++g_failures;
}

double elapsed(clk::time_point t0) {
  return std::chrono::duration<double>(clk::now() - t0).count();
}

struct DeskWorld {
  ScenarioConfig cfg;
  Geometry geom;
  ChannelSet ch;

  explicit DeskWorld(std::uint64_t seed) {
    cfg = ScenarioConfig::desk_scale(seed);
    std::mt19937_64 rng(seed);
    geom = place_network(cfg, rng);
    PathLossParams pl;
    ch = draw_channels(geom, cfg, pl, rng);
  }
};

BeamformerSet random_beams(const DeskWorld& w, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  BeamformerSet beams = BeamformerSet::zeros(w.cfg, w.ch.serving);
  for (int k = 0; k < w.cfg.num_vehicles; ++k) {
    for (auto& v : beams.comm[k]) {
      for (int t = 0; t < w.cfg.tx_antennas; ++t) v(t) = cxd(g(rng), g(rng));
      v *= std::sqrt(60.0 / 3.0) / v.norm();
    }
    for (int t = 0; t < w.cfg.tx_antennas; ++t)
      beams.sensing[k](t) = cxd(g(rng), g(rng));
    beams.sensing[k] *= std::sqrt(20.0) / beams.sensing[k].norm();
  }
  return beams;
}

// ---------------------------------------------------------------------------

void criterion1_weight_identity() {
  const auto t0 = clk::now();
  double worst = 0.0;
  int draws = 0;
  std::mt19937_64 seeds(101);
  for (int rep = 0; rep < 10; ++rep) {
    DeskWorld w(1000 + rep);
    std::mt19937_64 rng(seeds());
    for (int draw = 0; draw < 10; ++draw) {
      const BeamformerSet beams = random_beams(w, rng);
      for (int k = 0; k < w.cfg.num_vehicles; ++k)
        for (int m : w.ch.serving[k]) {
          const double lhs =
              w.cfg.bandwidth_hz * std::log2(wmmse_weight(k, m, beams, w.ch));
          const double rhs =
              metrics::rate(k, m, beams, w.ch, w.cfg.bandwidth_hz);
          worst = std::max(worst,
                           std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
        }
      ++draws;
    }
  }
  const double secs = elapsed(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "rel err %.2e over %d draws (< 1e-9), %.1f s (< 10 s)", worst,
                draws, secs);
  report(1, "weight-rate identity", worst < 1e-9 && secs < 10.0, buf);
}

void criterion2_minorant_dominance() {
  const auto t0 = clk::now();
  DeskWorld w(77);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  double worst_gap = -1e300;
  double worst_tight = 0.0;
  double quad_scale = 1.0;
  for (int rep = 0; rep < 1000; ++rep) {
    BeamformerSet anchor = random_beams(w, rng);
    const SensingLinearization lin = sensing_anchor(anchor, w.geom, w.cfg);
    for (int k = 0; k < w.cfg.num_vehicles; ++k) {
      CVec x(w.cfg.tx_antennas);
      for (int i = 0; i < w.cfg.tx_antennas; ++i)
        x(i) = 10.0 * cxd(g(rng), g(rng));
      const double quad = sensing_quadratic(k, x, lin);
      const double mino = sensing_minorant(k, x, lin);
      quad_scale = std::max(quad_scale, std::abs(quad));
      worst_gap = std::max(worst_gap, mino - quad);
      const double at_anchor =
          std::abs(sensing_minorant(k, lin.anchor[k], lin) -
                   sensing_quadratic(k, lin.anchor[k], lin)) /
          std::max(1.0, sensing_quadratic(k, lin.anchor[k], lin));
      worst_tight = std::max(worst_tight, at_anchor);
    }
  }
  const double secs = elapsed(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "max overshoot %.2e (<= 1e-10 rel), anchor gap %.2e, %.1f s",
                worst_gap, worst_tight, secs);
  report(2, "sensing minorant dominance",
         worst_gap <= 1e-10 * quad_scale && worst_tight <= 1e-10 &&
             secs < 5.0,
         buf);
}

struct DeskRuns {
  std::vector<TrialResult> proposed;
  std::vector<TrialResult> local, mec, cc;
  double secs = 0.0;
};

DeskRuns run_desk_suite(int n_seeds) {
  const auto t0 = clk::now();
  RunConfig cfg = RunConfig::desk_scale();
  DeskRuns out;
  out.proposed.resize(n_seeds);
  out.local.resize(n_seeds);
  out.mec.resize(n_seeds);
  out.cc.resize(n_seeds);
  struct Job {
    Scheme scheme;
    int idx;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < n_seeds; ++i) {
    jobs.push_back({Scheme::proposed, i});
    jobs.push_back({Scheme::local, i});
    jobs.push_back({Scheme::mec, i});
    jobs.push_back({Scheme::cc, i});
  }
  parallel_for(static_cast<int>(jobs.size()), [&](int j) {
    const std::uint64_t seed = 1 + jobs[j].idx;
    TrialResult r = run_benchmark(cfg, seed, jobs[j].scheme);
    switch (jobs[j].scheme) {
      case Scheme::proposed: out.proposed[jobs[j].idx] = std::move(r); break;
      case Scheme::local: out.local[jobs[j].idx] = std::move(r); break;
      case Scheme::mec: out.mec[jobs[j].idx] = std::move(r); break;
      case Scheme::cc: out.cc[jobs[j].idx] = std::move(r); break;
    }
  });
  out.secs = elapsed(t0);
  return out;
}

void criterion3_monotone(const DeskRuns& runs) {
  int bad_traces = 0;
  int checked = 0;
  auto scan = [&](const std::vector<TrialResult>& rs) {
    for (const auto& r : rs) {
      if (!r.feasible) continue;
      ++checked;
      for (std::size_t i = 1; i < r.outer_trace.size(); ++i)
        if (r.outer_trace[i] > r.outer_trace[i - 1] + 1e-6) ++bad_traces;
      for (const auto& blk : r.inner_traces)
        for (std::size_t i = 1; i < blk.values.size(); ++i)
          if (blk.values[i] > blk.values[i - 1] + 1e-6) ++bad_traces;
    }
  };
  scan(runs.proposed);
  scan(runs.local);
  scan(runs.mec);
  scan(runs.cc);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%d monotonicity breaks across %d trials, %.0f s (< 600 s)",
                bad_traces, checked, runs.secs);
  report(3, "AO monotone traces", bad_traces == 0 && runs.secs < 600.0, buf);
}

void criterion4_convergence_speed(const DeskRuns& runs) {
  int converged_fast = 0, usable = 0;
  for (const auto& r : runs.proposed) {
    if (!r.feasible) continue;
    ++usable;
    if (r.converged && r.outer_iterations <= 15) ++converged_fast;
  }
  const double frac = usable > 0 ? double(converged_fast) / usable : 0.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d/%d within 15 outer iterations (%.0f%%)",
                converged_fast, usable, 100.0 * frac);
  report(4, "convergence speed", frac >= 0.9 && usable > 0, buf);
}

void criterion5_feasibility(const DeskRuns& runs) {
  int bad = 0, checked = 0;
  auto scan = [&](const std::vector<TrialResult>& rs) {
    for (const auto& r : rs) {
      if (!r.feasible || !r.converged) continue;
      ++checked;
      if (r.min_sensing_margin < -1e-6) ++bad;
      for (const auto& v : r.violations)
        if (v.rel_slack < -1e-6) ++bad;
    }
  };
  scan(runs.proposed);
  scan(runs.local);
  scan(runs.mec);
  scan(runs.cc);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d violations across %d converged trials",
                bad, checked);
  report(5, "feasibility at convergence", bad == 0 && checked > 0, buf);
}

void criterion6_near_binary(const DeskRuns& runs) {
  double worst_frac = 0.0;
  double worst_round = 0.0;
  int checked = 0;
  for (const auto& r : runs.proposed) {
    if (!r.feasible) continue;
    ++checked;
    worst_frac = std::max(worst_frac, r.max_fractionality);
    if (r.pre_round_obj > 0.0)
      worst_round = std::max(
          worst_round, (r.post_round_obj - r.pre_round_obj) / r.pre_round_obj);
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "max fractionality %.3f (<= 0.05), rounding change %.2f%% "
                "(< 5%%), %d trials",
                worst_frac, 100.0 * worst_round, checked);
  report(6, "near-binary offloading",
         worst_frac <= 0.05 && worst_round < 0.05 && checked > 0, buf);
}

void criterion7_benchmark_dominance(const DeskRuns& runs) {
  double sum_p = 0, sum_l = 0, sum_m = 0, sum_c = 0;
  int n = 0;
  for (std::size_t i = 0; i < runs.proposed.size(); ++i) {
    if (!runs.proposed[i].feasible || !runs.local[i].feasible ||
        !runs.mec[i].feasible || !runs.cc[i].feasible)
      continue;
    sum_p += runs.proposed[i].final_latency();
    sum_l += runs.local[i].final_latency();
    sum_m += runs.mec[i].final_latency();
    sum_c += runs.cc[i].final_latency();
    ++n;
  }
  const bool pass = n >= 20 && sum_p <= sum_l && sum_p <= sum_m &&
                    sum_p <= sum_c;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "means: proposed %.4f local %.4f mec %.4f cc %.4f (n=%d)",
                sum_p / n, sum_l / n, sum_m / n, sum_c / n, n);
  report(7, "benchmark dominance", pass, buf);
}

void criterion8_trends() {
  RunConfig base = RunConfig::desk_scale();
  base.trials = 10;

  struct Point {
    double mean = 0.0;
    double se = 0.0;
  };
  auto sweep_means = [&](const std::string& axis,
                         const std::vector<double>& values) {
    std::vector<Point> pts;
    for (double v : values) {
      const RunConfig rc = apply_axis(base, axis, v);
      std::vector<double> lat(base.trials, -1.0);
      parallel_for(base.trials, [&](int t) {
        const TrialResult r =
            run_benchmark(rc, base.seed_base + t, Scheme::proposed);
        if (r.feasible) lat[t] = r.final_latency();
      });
      double sum = 0, sumsq = 0;
      int n = 0;
      for (double x : lat)
        if (x >= 0) {
          sum += x;
          sumsq += x * x;
          ++n;
        }
      Point p;
      if (n > 0) p.mean = sum / n;
      if (n > 1)
        p.se = std::sqrt(std::max(0.0, (sumsq - sum * sum / n) / (n - 1)) / n);
      pts.push_back(p);
    }
    return pts;
  };
  auto non_increasing = [](const std::vector<Point>& pts) {
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (pts[i].mean > pts[i - 1].mean + pts[i].se + pts[i - 1].se)
        return false;
    return true;
  };
  auto non_decreasing = [](const std::vector<Point>& pts) {
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (pts[i].mean < pts[i - 1].mean - pts[i].se - pts[i - 1].se)
        return false;
    return true;
  };

  const auto fcc = sweep_means("F_cc", {3e9, 1e10, 3e10});
  const auto rf = sweep_means("R_f", {1e8, 5e8, 2e9});
  const auto nt = sweep_means("N_t", {4, 8});
  const auto req = sweep_means("SINR_req_dB", {0.0, 1.0, 5.0});

  const bool ok_fcc = non_increasing(fcc);
  const bool ok_rf = non_increasing(rf);
  const bool ok_nt = non_increasing(nt);
  const bool ok_req = non_decreasing(req);
  char buf[240];
  std::snprintf(
      buf, sizeof(buf),
      "F_cc %s (%.3f/%.3f/%.3f) R_f %s (%.3f/%.3f/%.3f) N_t %s "
      "(%.3f/%.3f) SINR_req %s (%.3f/%.3f/%.3f)",
      ok_fcc ? "ok" : "BAD", fcc[0].mean, fcc[1].mean, fcc[2].mean,
      ok_rf ? "ok" : "BAD", rf[0].mean, rf[1].mean, rf[2].mean,
      ok_nt ? "ok" : "BAD", nt[0].mean, nt[1].mean,
      ok_req ? "ok" : "BAD", req[0].mean, req[1].mean, req[2].mean);
  report(8, "trend reproduction", ok_fcc && ok_rf && ok_nt && ok_req, buf);
}

void criterion9_oracle_sandwich() {
  const auto t0 = clk::now();
  RunConfig cfg;
  cfg.scenario.num_aps = 2;
  cfg.scenario.num_vehicles = 2;
  cfg.scenario.antennas_per_ap = 4;
  cfg.scenario.tx_antennas = 4;
  cfg.scenario.rx_antennas = 4;
  cfg.scenario.serving_set_size = 2;

  int bad_lower = 0, bad_upper = 0, usable = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const TrialResult algo = run_ao(cfg, seed);
    if (!algo.feasible) continue;
    const OracleResult oracle = brute_force_oracle(cfg, seed, &algo);
    double best_single = std::numeric_limits<double>::infinity();
    for (Scheme s : {Scheme::local, Scheme::mec, Scheme::cc}) {
      const TrialResult b = run_benchmark(cfg, seed, s);
      if (b.feasible)
        best_single = std::min(best_single, b.final_latency());
    }
    ++usable;
    const double a = algo.final_latency();
    if (oracle.best_latency > a + 1e-6 * std::max(1.0, a)) ++bad_lower;
    if (a > best_single + 1e-6 * std::max(1.0, best_single)) ++bad_upper;
  }
  const double secs = elapsed(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "oracle<=algo breaks %d, algo<=best-single breaks %d over %d "
                "seeds, %.0f s (< 300 s)",
                bad_lower, bad_upper, usable, secs);
  report(9, "oracle sandwich",
         bad_lower == 0 && bad_upper == 0 && usable >= 8 && secs < 300.0, buf);
}

void criterion10_solver(const double worst_kkt) {
  // random two-variable problems against dense grid search
  std::mt19937_64 rng(2025);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_gap = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const double c0 = u(rng), c1 = u(rng);
    const double cut_a = std::abs(u(rng)) + 0.1;
    const double cut_b = std::abs(u(rng)) + 0.1;
    const double cut_d = std::abs(u(rng)) + 0.2;
    const bool with_ball = rep % 2 == 0;
    const double radius = 0.3 + std::abs(u(rng));

    double ref = 1e300;
    for (int i = 0; i <= 1000; ++i)
      for (int j = 0; j <= 1000; ++j) {
        const double x = i * 1e-3, y = j * 1e-3;
        if (cut_a * x + cut_b * y > cut_d) continue;
        if (with_ball && std::hypot(x - 0.5, y - 0.5) > radius) continue;
        ref = std::min(ref, c0 * x + c1 * y);
      }

    ProblemBuilder b;
    const int x = b.add_var();
    const int y = b.add_var();
    b.minimize(c0 * LinExpr::var(x) + c1 * LinExpr::var(y));
    b.nonneg(LinExpr::var(x));
    b.nonneg(1.0 - LinExpr::var(x));
    b.nonneg(LinExpr::var(y));
    b.nonneg(1.0 - LinExpr::var(y));
    b.nonneg(LinExpr(cut_d) - cut_a * LinExpr::var(x) -
             cut_b * LinExpr::var(y));
    if (with_ball)
      b.soc({LinExpr(radius), LinExpr::var(x) - 0.5, LinExpr::var(y) - 0.5});
    const ConicSolution sol = solve(b.build());
    if (!sol.ok()) {
      worst_gap = 1e9;
      continue;
    }
    worst_gap = std::max(worst_gap, std::abs(sol.objective - ref));
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "grid gap %.2e (< 2e-3), worst KKT residual %.2e (< 1e-7) "
                "over %lld solves",
                worst_gap, worst_kkt, global_solver_stats().num_solves);
  report(10, "conic solver correctness", worst_gap < 2e-3 && worst_kkt < 1e-7,
         buf);
}

}  // namespace

int main() {
  const auto t0 = clk::now();
  criterion1_weight_identity();
  criterion2_minorant_dominance();

  const DeskRuns runs = run_desk_suite(25);
  criterion3_monotone(runs);
  criterion4_convergence_speed(runs);
  criterion5_feasibility(runs);
  criterion6_near_binary(runs);
  criterion7_benchmark_dominance(runs);
  criterion8_trends();
  criterion9_oracle_sandwich();

  // KKT audit covers every optimal solve issued by criteria 3-9 above.
  criterion10_solver(global_solver_stats().worst_residual);

  std::printf("acceptance total: %.0f s, %s (%d failures)\n", elapsed(t0),
              g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures);
  return g_failures == 0 ? 0 : 1;
}
