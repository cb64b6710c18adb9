// Compares the OpenMP kernels against their serial references: channel
// generation across pair batches, WMMSE refresh, and full desk-scale trials.
#include <chrono>
#include <cstdio>
#include <random>

#include "iccs/beamform.hpp"
#include "iccs/metrics.hpp"
#include "iccs/orchestrator.hpp"
#include "iccs/parallel.hpp"
#include "iccs/scenario.hpp"

using namespace iccs;
using clk = std::chrono::steady_clock;

namespace {

double seconds_since(clk::time_point t0) {
  return std::chrono::duration<double>(clk::now() - t0).count();
}

template <typename Fn>
double time_it(Fn&& fn, int reps) {
  const auto t0 = clk::now();
  for (int r = 0; r < reps; ++r) fn();
  return seconds_since(t0) / reps;
}

}  // namespace

int main() {
  ScenarioConfig cfg;  // full scale
  PathLossParams pl;
  TaskParams task;
  Geometry geom;
  ChannelSet ch;
  OffloadMatrix off = OffloadMatrix::zeros(cfg.num_vehicles, cfg.num_aps);
  ResourcePlan plan = ResourcePlan::zeros(cfg.num_vehicles, cfg.num_aps);
  for (int k = 0; k < cfg.num_vehicles; ++k) plan.f_loc(k) = task.f_loc_max;
  BeamformerSet beams;
  bool found = false;
  for (std::uint64_t seed = 1; seed <= 50 && !found; ++seed) {
    std::mt19937_64 rng(seed);
    geom = place_network(cfg, rng);
    ch = draw_channels(geom, cfg, pl, rng);
    BeamformContext bctx{&cfg, &geom, &ch, &task, &off, &plan};
    auto [b, feasible] = init_beams(bctx);
    if (feasible) {
      beams = std::move(b);
      found = true;
    }
  }
  if (!found) {
    std::printf("no feasible benchmark scenario found; aborting\n");
    return 1;
  }

  std::printf("threads available: %d\n\n", hardware_threads());
  std::printf("%-28s %12s %12s %8s\n", "kernel", "serial (ms)", "openmp (ms)",
              "speedup");

  {
    parallel_enabled() = false;
    const double ts =
        time_it([&] { beamform_reference::refresh_wmmse(beams, ch); }, 20);
    parallel_enabled() = true;
    const double tp = time_it([&] { refresh_wmmse(beams, ch); }, 20);
    std::printf("%-28s %12.3f %12.3f %8.2fx\n", "wmmse refresh", ts * 1e3,
                tp * 1e3, ts / tp);

    // agreement check
    const WmmseState a = beamform_reference::refresh_wmmse(beams, ch);
    const WmmseState b = refresh_wmmse(beams, ch);
    double worst = 0.0;
    for (int k = 0; k < cfg.num_vehicles; ++k)
      for (std::size_t j = 0; j < ch.serving[k].size(); ++j)
        worst = std::max(worst,
                         (a.v[k][j] - b.v[k][j]).norm() /
                             std::max(1e-300, a.v[k][j].norm()));
    std::printf("%-28s rel diff %.2e\n", "  (agreement)", worst);
  }

  {
    auto covariance_pass = [&] {
      CMat acc = CMat::Zero(cfg.antennas_per_ap, cfg.antennas_per_ap);
      for (int k = 0; k < cfg.num_vehicles; ++k)
        for (int m : ch.serving[k])
          acc += metrics::interference_cov(k, m, beams, ch);
      return acc;
    };
    auto covariance_ref = [&] {
      CMat acc = CMat::Zero(cfg.antennas_per_ap, cfg.antennas_per_ap);
      for (int k = 0; k < cfg.num_vehicles; ++k)
        for (int m : ch.serving[k])
          acc += metrics_reference::interference_cov(k, m, beams, ch);
      return acc;
    };
    const double ts = time_it([&] { covariance_ref(); }, 50);
    const double tp = time_it([&] { covariance_pass(); }, 50);
    std::printf("%-28s %12.3f %12.3f %8.2fx\n", "interference covariance",
                ts * 1e3, tp * 1e3, ts / tp);
    const double diff = (covariance_pass() - covariance_ref()).norm() /
                        covariance_ref().norm();
    std::printf("%-28s rel diff %.2e\n", "  (agreement)", diff);
  }

  {
    RunConfig rc = RunConfig::desk_scale();
    rc.trials = 4;
    auto batch = [&] {
      std::vector<TrialResult> out(rc.trials);
      parallel_for(rc.trials, [&](int i) {
        out[i] = run_ao(rc, rc.seed_base + i);
      });
      return out;
    };
    parallel_enabled() = false;
    const double ts = time_it([&] { batch(); }, 1);
    parallel_enabled() = true;
    const double tp = time_it([&] { batch(); }, 1);
    std::printf("%-28s %12.1f %12.1f %8.2fx\n", "desk-scale trial batch (4)",
                ts * 1e3, tp * 1e3, ts / tp);
  }
  return 0;
}
