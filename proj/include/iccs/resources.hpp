#pragma once

#include "iccs/conic.hpp"
#include "iccs/metrics.hpp"
#include "iccs/scenario.hpp"

namespace iccs {

struct ResourceContext {
  const ScenarioConfig* cfg;
  const ChannelSet* ch;
  const TaskParams* task;
  const OffloadMatrix* off;  // frozen pattern (step-thresholded)
  const Mat* rates;          // frozen
  const ResourcePlan* incoming;
  Vec tx_power_w;            // per-vehicle |g_k|^2 in watts, frozen
  Mat received_w;            // per-pair AP received power, watts, frozen
};

struct ResourceResult {
  ResourcePlan plan;
  double objective = 0.0;
  bool solved = false;  // false: solver failed, incoming plan kept
};

// Execution-frequency and fronthaul-share program with offloading and
// beamformers frozen; reciprocal latency terms and cubic power caps are
// cone-encoded. Never returns a plan worse than the incoming one.
ResourceResult solve_resources(const ResourceContext& ctx);

}  // namespace iccs
