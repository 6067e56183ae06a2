#pragma once

#include <cstdint>

#include "scrolltest/rng.h"
#include "scrolltest/trace_metrics.h"

namespace scrolltest::oracle {

// Recomputes every metric by brute force: containment is tested against the
// frame geometry directly, quiescence by scanning all event pairs, and each
// reversal by rescanning the current segment. Quadratic; verification only.
TrialMetrics replay_oracle(const TrialTrace& trace, const TrialGeometry& g,
                           const MetricsOptions& options = {});

// Geometric containment of the whole target row inside the frame at offset s.
bool target_inside_frame(const TrialGeometry& g, double s);

struct FuzzCase {
  TrialGeometry geometry;
  TrialTrace trace;
  MetricsOptions options;
};

// Small random reachable geometry on a quarter-pixel grid.
TrialGeometry random_small_geometry(Rng& rng);

// Random trace mixing approach runs, overshoots, jitter, rests inside and
// outside the band, and occasional post-completion motion. Offsets are on a
// quarter-pixel grid so that both computation routes stay exact.
FuzzCase random_case(Rng& rng);

struct SelfTestResult {
  int cases = 0;
  int mismatches = 0;
};

// Runs `cases` random traces through compute_metrics and the oracle.
SelfTestResult run_selftest(std::uint64_t seed, int cases);

}  // namespace scrolltest::oracle
