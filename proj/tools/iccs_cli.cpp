#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "iccs/config_io.hpp"
#include "iccs/orchestrator.hpp"
#include "iccs/parallel.hpp"

using namespace iccs;

namespace {

void print_trial(const TrialResult& r) {
  std::printf("seed %llu  scheme %s\n",
              static_cast<unsigned long long>(r.seed),
              scheme_name(r.scheme).c_str());
  if (!r.feasible) {
    std::printf("  infeasible: no sensing-feasible start\n");
    return;
  }
  std::printf("  converged %s in %d outer iterations, %.3f s wall\n",
              r.converged ? "yes" : "no", r.outer_iterations, r.wall_time_s);
  std::printf("  max latency %.6f s (vehicle %d)\n", r.report.max_latency,
              r.report.argmax);
  for (int k = 0; k < r.report.t_total.size(); ++k)
    std::printf(
        "  vehicle %d: total %.6f s  local %.6f  mec %.6f  cc %.6f  "
        "x_b %.3f x_c %.3f\n",
        k, r.report.t_total(k), r.report.t_loc(k), r.report.t_mec(k),
        r.report.t_cc(k), r.off.x_b(k), r.off.x_c(k));
  std::printf("  sensing margin %.3e, violations %zu\n", r.min_sensing_margin,
              r.violations.size());
  for (const auto& v : r.violations)
    std::printf("    violated %s (k=%d m=%d) rel %.3e\n", v.name.c_str(), v.k,
                v.m, v.rel_slack);
  for (const auto& w : r.warnings) std::printf("  warning: %s\n", w.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cell-free massive MIMO ISAC offloading simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 1;
  int trials = -1;
  std::string scheme = "proposed";
  std::string axis;
  std::string out;
  bool serial = false;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--seed", seed, "base RNG seed");
  app.add_option("--trials", trials, "Monte-Carlo trials per point");
  app.add_option("--scheme", scheme, "proposed|local|mec|cc");
  app.add_option("--axis", axis, "sweep axis: L|F_cc|R_f|SINR_req_dB|N_t");
  app.add_option("--out", out, "output CSV path");
  app.add_flag("--serial", serial, "disable OpenMP parallel kernels");

  auto* run = app.add_subcommand("run", "single trial, prints the report");
  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo sweep over an axis");
  auto* conv = app.add_subcommand("convergence",
                                  "dump per-iteration objective traces");
  auto* oracle = app.add_subcommand(
      "oracle", "tiny-instance exhaustive comparison (K<=2, M<=2)");
  for (auto* sub : {run, sweep, conv, oracle}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);
  parallel_enabled() = !serial;

  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    cfg.scheme = scheme_from_name(scheme);
    if (trials > 0) cfg.trials = trials;
    if (!axis.empty()) cfg.sweep_axis = axis;
    if (!out.empty()) cfg.out_path = out;
    if (app.count("--seed")) cfg.seed_base = seed;

    if (run->parsed()) {
      print_trial(run_ao(cfg, cfg.seed_base));
    } else if (sweep->parsed()) {
      std::vector<TrialResult> trials_out;
      const auto rows = monte_carlo(cfg, &trials_out);
      emit_csv(rows, cfg.out_path);
      const std::string trace_path = cfg.out_path + ".traces.csv";
      emit_traces(trials_out, trace_path);
      std::printf("wrote %s and %s\n", cfg.out_path.c_str(),
                  trace_path.c_str());
      for (const auto& r : rows)
        std::printf("  %-12s %s mean %.6f s (se %.2e, n=%d, failed=%d)\n",
                    (cfg.sweep_axis + "=" + std::to_string(r.sweep_value))
                        .c_str(),
                    scheme_name(r.scheme).c_str(), r.mean_latency_s,
                    r.stderr_s, r.n_trials, r.n_failed);
    } else if (conv->parsed()) {
      std::vector<TrialResult> results;
      for (int t = 0; t < std::max(1, cfg.trials); ++t)
        results.push_back(run_ao(cfg, cfg.seed_base + t));
      const std::string path =
          cfg.out_path.empty() ? "convergence.csv" : cfg.out_path;
      emit_traces(results, path);
      std::printf("wrote %s\n", path.c_str());
      for (const auto& r : results) {
        std::printf("seed %llu:",
                    static_cast<unsigned long long>(r.seed));
        for (double v : r.outer_trace) std::printf(" %.6f", v);
        std::printf("\n");
      }
    } else if (oracle->parsed()) {
      if (cfg.scenario.num_vehicles > 2 || cfg.scenario.num_aps > 2) {
        std::fprintf(stderr,
                     "oracle needs K <= 2 and M <= 2 (try "
                     "--config configs/oracle.cfg)\n");
        return 1;
      }
      TrialResult ao = run_ao(cfg, cfg.seed_base);
      if (!ao.feasible) {
        std::printf("instance infeasible\n");
        return 1;
      }
      const OracleResult best =
          brute_force_oracle(cfg, cfg.seed_base, &ao);
      std::printf("oracle best  %.6f s over %d patterns (%d feasible)\n",
                  best.best_latency, best.patterns_tried,
                  best.patterns_feasible);
      std::printf("ao result    %.6f s\n", ao.final_latency());
      for (Scheme s : {Scheme::local, Scheme::mec, Scheme::cc}) {
        const TrialResult b = run_benchmark(cfg, cfg.seed_base, s);
        std::printf("%-10s   %.6f s\n", scheme_name(s).c_str(),
                    b.feasible ? b.final_latency() : -1.0);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
