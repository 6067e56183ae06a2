#include "scrolltest/trace_metrics.h"

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "scrolltest/replay_oracle.h"

namespace scrolltest {
namespace {

// Containment band found by scanning integer offsets, independent of the
// closed form.
std::pair<double, double> scan_band(const TrialGeometry& g) {
  double lo = INFINITY, hi = -INFINITY;
  for (int s = -2000; s <= 20000; ++s) {
    if (oracle::target_inside_frame(g, s)) {
      lo = std::min(lo, static_cast<double>(s));
      hi = std::max(hi, static_cast<double>(s));
    }
  }
  return {lo, hi};
}

TrialTrace trace_of(std::vector<ScrollEvent> events) {
  TrialTrace t;
  t.events = std::move(events);
  return t;
}

// Geometry whose band is [sMin, sMax] = [225, 315]: 60 px rows, ten visible,
// frame of 2.5 rows, target row 10.
TrialGeometry sample_geometry() { return make_geometry(60.0, 2.5, 10, 104); }

TEST(TargetBand, ExplicitGeometryMatchesPixelScan) {
  TrialGeometry g;
  g.lineHeight = 90;
  g.rowCount = 60;
  g.viewportHeight = 980;
  g.frameTop = 400;
  g.frameBottom = 580;
  g.targetRowIndex = 35;
  g.targetTop = 3000;
  g.targetHeight = 90;
  const TargetBand band = compute_target_band(g);
  const auto [lo, hi] = scan_band(g);
  EXPECT_EQ(lo, 2510);
  EXPECT_EQ(hi, 2600);
  EXPECT_EQ(band.sMin, 2510);
  EXPECT_EQ(band.sMax, 2600);
  EXPECT_EQ(band.width(), 90);
}

TEST(TargetBand, UnitFrameHasSingleOffset) {
  const TargetBand band = compute_target_band(make_geometry(60.0, 1.0, 40, 104));
  EXPECT_EQ(band.sMin, band.sMax);
  EXPECT_EQ(band.width(), 0.0);
}

TEST(TargetBand, WidthIsFrameFactorMinusOneLines) {
  for (double h : {1.0, 1.5, 2.0, 2.5, 3.0}) {
    const TargetBand band = compute_target_band(make_geometry(60.0, h, 50, 104));
    EXPECT_DOUBLE_EQ(band.width(), (h - 1.0) * 60.0) << "H=" << h;
  }
}

TEST(TargetBand, FirstRowIsUnreachable) {
  TrialGeometry g = make_geometry(60.0, 1.0, 1, 104);
  ASSERT_EQ(g.targetTop, 0.0);
  ASSERT_GT(g.frameTop, 0.0);
  EXPECT_THROW(
      {
        try {
          compute_target_band(g);
        } catch (const GeometryError& e) {
          EXPECT_NE(std::string(e.what()).find("unreachable target"), std::string::npos);
          throw;
        }
      },
      GeometryError);
}

TEST(TargetBand, RowPastDocumentEndIsUnreachable) {
  // With no trailing rows the last row cannot reach a centered frame.
  EXPECT_THROW(compute_target_band(make_geometry(60.0, 1.0, 99, 99)), GeometryError);
  EXPECT_NO_THROW(compute_target_band(make_geometry(60.0, 1.0, 99, 104)));
}

TEST(TargetBand, RejectsMalformedFrames) {
  TrialGeometry g = make_geometry(60.0, 2.0, 30, 104);
  g.frameTop += 10;  // off center
  EXPECT_THROW(compute_target_band(g), GeometryError);
  TrialGeometry small = make_geometry(60.0, 1.0, 30, 104);
  small.frameBottom -= 1;
  small.frameTop += 1;  // shorter than the row
  EXPECT_THROW(compute_target_band(small), GeometryError);
}

TEST(TargetBand, ExhaustiveScanOnRandomSmallGeometries) {
  Rng rng(20240611);
  for (int i = 0; i < 50; ++i) {
    const TrialGeometry g = oracle::random_small_geometry(rng);
    const TargetBand band = compute_target_band(g);
    for (int s = -50; s <= static_cast<int>(g.document_height()) + 50; ++s) {
      ASSERT_EQ(band.contains(s), oracle::target_inside_frame(g, s)) << "case " << i << " s=" << s;
    }
  }
}

TEST(DetectTrialEnd, MonotoneApproachEndsAtLastEvent) {
  const TrialGeometry g = sample_geometry();
  std::vector<ScrollEvent> ev;
  for (int k = 1; k <= 150; ++k) ev.push_back({16 * k, 2.0 * k});  // ends at s = 300
  ev.back().t = 2400;
  const TrialTrace trace = trace_of(ev);
  const auto end = detect_trial_end(trace, compute_target_band(g));
  ASSERT_TRUE(end.has_value());
  EXPECT_EQ(*end, ev.size() - 1);
  EXPECT_EQ(compute_metrics(trace, g).movementTimeMs, 2400);
}

TEST(DetectTrialEnd, RestOutsideBandDoesNotComplete) {
  const TrialGeometry g = sample_geometry();
  const TrialTrace trace = trace_of({{100, 100}, {116, 200},  // rest of 100 ms below sMin
                                     {216, 210}, {232, 250}, {248, 260}});
  const auto end = detect_trial_end(trace, compute_target_band(g));
  ASSERT_TRUE(end.has_value());
  EXPECT_EQ(*end, 4u);
  EXPECT_EQ(oracle::replay_oracle(trace, g).endEventIndex, end);
  EXPECT_EQ(compute_metrics(trace, g).movementTimeMs, 248);
}

TEST(DetectTrialEnd, PassingThroughBandDoesNotComplete) {
  const TrialGeometry g = sample_geometry();
  // Crosses the band at 16 ms spacing and comes to rest above it.
  const TrialTrace trace = trace_of({{16, 200}, {32, 260}, {48, 300}, {64, 340}, {80, 360}});
  EXPECT_FALSE(detect_trial_end(trace, compute_target_band(g)).has_value());
  const TrialMetrics m = compute_metrics(trace, g);
  EXPECT_FALSE(m.completed);
  EXPECT_EQ(m.movementTimeMs, 80);
  EXPECT_EQ(m.maxOvershootPx, 45.0);
}

TEST(DetectTrialEnd, QuiescenceGapMustExceedTimeout) {
  const TrialGeometry g = sample_geometry();
  const TargetBand band = compute_target_band(g);
  // An event exactly 66 ms later still counts as motion.
  EXPECT_EQ(detect_trial_end(trace_of({{10, 250}, {76, 251}, {90, 400}}), band), std::nullopt);
  EXPECT_EQ(detect_trial_end(trace_of({{10, 250}, {77, 251}, {90, 400}}), band), 0u);
}

TEST(ComputeMetrics, MonotoneTraceHasNoErrors) {
  const TrialGeometry g = sample_geometry();
  const TrialMetrics m = compute_metrics(trace_of({{16, 50}, {32, 150}, {48, 240}}), g);
  EXPECT_TRUE(m.completed);
  EXPECT_EQ(m.switchbacks, 0);
  EXPECT_EQ(m.maxOvershootPx, 0.0);
}

TEST(ComputeMetrics, SingleOvershootIsOneSwitchback) {
  const TrialGeometry g = sample_geometry();
  // Up to sMax + 120 = 435, back down into the band, rest.
  const TrialTrace trace =
      trace_of({{16, 100}, {32, 300}, {48, 435}, {64, 420}, {80, 360}, {96, 300}});
  const TrialMetrics m = compute_metrics(trace, g);
  EXPECT_EQ(m, oracle::replay_oracle(trace, g));
  EXPECT_TRUE(m.completed);
  EXPECT_EQ(m.switchbacks, 1);
  EXPECT_EQ(m.maxOvershootPx, 120.0);
  EXPECT_EQ(m.switchbacksAfterOvershoot, 1);
  EXPECT_EQ(m.firstOvershootMs, 48);
}

TEST(ComputeMetrics, JitterBelowHysteresisIsIgnored) {
  const TrialGeometry g = sample_geometry();
  const TrialTrace trace = trace_of({{16, 150}, {32, 201}, {48, 199}, {64, 201}, {80, 199},
                                     {96, 201}, {112, 270}});
  EXPECT_EQ(compute_metrics(trace, g, {.epsilonPx = 2.0}).switchbacks, 0);
  EXPECT_EQ(compute_metrics(trace, g, {.epsilonPx = 0.0}).switchbacks, 4);
}

TEST(ComputeMetrics, BothDirectionChangesCount) {
  const TrialGeometry g = sample_geometry();
  // Over the band, back below it, up again into it.
  const TrialTrace trace = trace_of({{16, 400}, {32, 150}, {48, 260}});
  const TrialMetrics m = compute_metrics(trace, g);
  EXPECT_EQ(m.switchbacks, 2);
  EXPECT_EQ(m.maxOvershootPx, 85.0);
}

TEST(ComputeMetrics, StrictCountIgnoresReversalsBeforeFirstOvershoot) {
  const TrialGeometry g = sample_geometry();
  // Back and forth below the band, then one overshoot.
  const TrialTrace trace = trace_of({{16, 100}, {32, 50}, {48, 200}, {64, 330}, {80, 300}});
  const TrialMetrics m = compute_metrics(trace, g);
  EXPECT_EQ(m.switchbacks, 3);
  EXPECT_EQ(m.switchbacksAfterOvershoot, 1);
  EXPECT_EQ(m.firstOvershootMs, 64);
}

TEST(ComputeMetrics, EmptyTraceIsIncomplete) {
  const TrialGeometry g = sample_geometry();
  const TrialMetrics m = compute_metrics(TrialTrace{}, g);
  EXPECT_FALSE(m.completed);
  EXPECT_EQ(m.switchbacks, 0);
  EXPECT_EQ(m.maxOvershootPx, 0.0);
  EXPECT_EQ(m.movementTimeMs, 0);
  EXPECT_EQ(m, oracle::replay_oracle(TrialTrace{}, g));
}

TEST(ComputeMetrics, IncompleteTraceReportsWholeTrace) {
  const TrialGeometry g = sample_geometry();
  const TrialMetrics m = compute_metrics(trace_of({{16, 500}, {32, 100}}), g);
  EXPECT_FALSE(m.completed);
  EXPECT_FALSE(m.endEventIndex.has_value());
  EXPECT_EQ(m.movementTimeMs, 32);
  EXPECT_EQ(m.maxOvershootPx, 185.0);
  EXPECT_EQ(m.switchbacks, 1);
}

TEST(ComputeMetrics, PostCompletionEventsAreIgnored) {
  const TrialGeometry g = sample_geometry();
  TrialTrace trace = trace_of({{16, 300}, {32, 350}, {48, 280}});
  const TrialMetrics before = compute_metrics(trace, g);
  trace.events.push_back({300, 900});
  trace.events.push_back({316, 100});
  EXPECT_EQ(compute_metrics(trace, g), before);
}

TEST(ComputeMetrics, TimeShiftInvariance) {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    oracle::FuzzCase c = oracle::random_case(rng);
    const TrialMetrics base = compute_metrics(c.trace, c.geometry, c.options);
    c.trace.startClickT += 12345;
    for (ScrollEvent& e : c.trace.events) e.t += 12345;
    if (c.trace.clickT) *c.trace.clickT += 12345;
    EXPECT_EQ(compute_metrics(c.trace, c.geometry, c.options), base);
  }
}

TEST(ComputeMetrics, ClickModeEndsAtClickInsideBand) {
  const TrialGeometry g = sample_geometry();
  TrialTrace trace = trace_of({{16, 200}, {32, 260}, {48, 270}});
  trace.clickT = 40;
  TrialMetrics m = compute_metrics(trace, g);
  EXPECT_TRUE(m.completed);
  EXPECT_EQ(m.endEventIndex, 1u);
  EXPECT_EQ(m.movementTimeMs, 40);
  EXPECT_EQ(m, oracle::replay_oracle(trace, g));

  trace.clickT = 20;  // still at 200, below the band
  m = compute_metrics(trace, g);
  EXPECT_FALSE(m.completed);
  EXPECT_EQ(m, oracle::replay_oracle(trace, g));
}

TEST(ComputeMetrics, OvershootWithinHysteresisCanLackSwitchback) {
  // The band edge sits 1 px below the peak; returning 1 px does not clear a
  // 2 px hysteresis, so the overshoot is recorded without a switchback.
  const TrialGeometry g = sample_geometry();
  const TrialMetrics m = compute_metrics(trace_of({{16, 316}, {32, 315}}), g);
  EXPECT_TRUE(m.completed);
  EXPECT_EQ(m.maxOvershootPx, 1.0);
  EXPECT_EQ(m.switchbacks, 0);
}

TEST(ComputeMetrics, MatchesOracleOnRandomTraces) {
  Rng rng(1);
  int completed = 0;
  for (int i = 0; i < 1000; ++i) {
    const oracle::FuzzCase c = oracle::random_case(rng);
    const TrialMetrics m = compute_metrics(c.trace, c.geometry, c.options);
    ASSERT_EQ(m, oracle::replay_oracle(c.trace, c.geometry, c.options)) << "case " << i;
    completed += m.completed;
  }
  // The generator must exercise both outcomes.
  EXPECT_GT(completed, 100);
  EXPECT_LT(completed, 900);
}

TEST(ComputeMetrics, MonotoneTracesEndingInBandHaveNoErrors) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const TrialGeometry g = oracle::random_small_geometry(rng);
    const TargetBand band = compute_target_band(g);
    const double goal = std::max(0.0, std::round(rng.uniform(band.sMin, band.sMax)));
    if (!band.contains(goal)) continue;
    TrialTrace trace;
    double s = 0;
    std::int64_t t = 0;
    while (s < goal) {
      s = std::min(goal, s + static_cast<double>(rng.between(1, 7)));
      t += rng.between(1, 30);
      trace.events.push_back({t, s});
    }
    const TrialMetrics m = compute_metrics(trace, g);
    if (trace.events.empty()) continue;
    EXPECT_TRUE(m.completed);
    EXPECT_EQ(m.switchbacks, 0);
    EXPECT_EQ(m.maxOvershootPx, 0.0);
  }
}

TEST(ComputeMetrics, CompletedOvershootBeyondHysteresisImpliesSwitchback) {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const oracle::FuzzCase c = oracle::random_case(rng);
    const TrialMetrics m = compute_metrics(c.trace, c.geometry, c.options);
    if (m.completed && !c.trace.clickT && m.maxOvershootPx > c.options.epsilonPx) {
      EXPECT_GE(m.switchbacks, 1) << "case " << i;
    }
  }
}

TEST(ValidateTrace, RejectsBadEvents) {
  TrialTrace ok = trace_of({{1, 0}, {2, 10}});
  EXPECT_NO_THROW(validate_trace(ok, 100));
  EXPECT_THROW(validate_trace(trace_of({{5, 0}, {5, 1}}), 100), TraceError);
  EXPECT_THROW(validate_trace(trace_of({{5, 0}, {4, 1}}), 100), TraceError);
  EXPECT_THROW(validate_trace(trace_of({{-1, 0}}), 100), TraceError);
  EXPECT_THROW(validate_trace(trace_of({{1, -0.5}}), 100), TraceError);
  EXPECT_THROW(validate_trace(trace_of({{1, 100.5}}), 100), TraceError);
  TrialTrace q = ok;
  q.quiescenceMs = 0;
  EXPECT_THROW(validate_trace(q, 100), TraceError);
}

TEST(ValidateTrace, TiesKeepFirstEvent) {
  const std::vector<ScrollEvent> ev = {{1, 0}, {2, 10}, {2, 11}, {3, 12}};
  const auto kept = drop_timestamp_ties(ev);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[1].s, 10);
}

}  // namespace
}  // namespace scrolltest
