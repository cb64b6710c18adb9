#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iccs/beamform.hpp"
#include "iccs/metrics.hpp"
#include "iccs/offload.hpp"
#include "iccs/resources.hpp"
#include "iccs/scenario.hpp"

namespace iccs {

enum class Scheme { proposed, local, mec, cc };

std::string scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct Tolerances {
  double zeta_offload = 0.01;
  double zeta_beam = 0.001;
  double zeta_outer = 0.01;
  int max_outer = 30;
  int max_inner_offload = 30;
  int max_inner_beam = 30;
};

struct RunConfig {
  ScenarioConfig scenario;
  PathLossParams pathloss;
  TaskParams task;
  Tolerances tol;
  Scheme scheme = Scheme::proposed;
  std::string sweep_axis = "L";
  std::vector<double> sweep_values;  // empty: axis defaults
  int trials = 20;
  std::string out_path = "sweep.csv";
  std::uint64_t seed_base = 1;

  void validate() const;
  static RunConfig desk_scale(std::uint64_t seed_base = 1);
};

struct BlockTrace {
  std::string name;
  std::vector<double> values;
};

struct TrialResult {
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::proposed;
  bool feasible = true;    // sensing-feasible start found
  bool converged = false;  // outer loop met its tolerance
  std::vector<std::string> warnings;
  std::vector<double> outer_trace;
  std::vector<BlockTrace> inner_traces;
  int outer_iterations = 0;
  double wall_time_s = 0.0;

  double pre_round_obj = 0.0;
  double post_round_obj = 0.0;
  double max_fractionality = 0.0;  // max over k of min(x, 1-x) at convergence

  LatencyReport report;
  std::vector<ConstraintSlack> violations;
  double min_sensing_margin = 0.0;  // min_k sinr/req - 1

  OffloadMatrix off;
  ResourcePlan plan;
  Mat rates;
  BeamformerSet beams;

  double final_latency() const { return report.max_latency; }
};

TrialResult run_ao(const RunConfig& cfg, std::uint64_t seed);
TrialResult run_benchmark(const RunConfig& cfg, std::uint64_t seed,
                          Scheme scheme);

// Exhaustive per-vehicle pattern search for tiny instances (K <= 2, M <= 2):
// local, every single-AP edge/cloud assignment, 0.1-step within-tier splits,
// plus the candidate pattern when given; beams and resources are optimized
// per pattern with the same block solvers.
struct OracleResult {
  double best_latency = 0.0;
  int patterns_tried = 0;
  int patterns_feasible = 0;
};
OracleResult brute_force_oracle(const RunConfig& cfg, std::uint64_t seed,
                                const TrialResult* candidate = nullptr);

struct SweepRow {
  double sweep_value = 0.0;
  Scheme scheme = Scheme::proposed;
  double mean_latency_s = 0.0;
  double stderr_s = 0.0;
  int n_trials = 0;
  int n_failed = 0;
};

std::vector<double> default_axis_values(const std::string& axis,
                                        const RunConfig& cfg);
RunConfig apply_axis(const RunConfig& cfg, const std::string& axis,
                     double value);

// Shared seeds across schemes and sweep points; failed trials excluded from
// the means and counted. Trials execute in parallel with isolated state.
std::vector<SweepRow> monte_carlo(const RunConfig& cfg,
                                  std::vector<TrialResult>* all_trials = nullptr);

void emit_csv(const std::vector<SweepRow>& rows, const std::string& path);
void emit_traces(const std::vector<TrialResult>& trials,
                 const std::string& path);

}  // namespace iccs
