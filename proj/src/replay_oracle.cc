#include "scrolltest/replay_oracle.h"

#include <algorithm>
#include <array>
#include <cmath>

namespace scrolltest::oracle {

bool target_inside_frame(const TrialGeometry& g, double s) {
  const double top = g.targetTop - s;  // target top edge in viewport coordinates
  return g.frameTop <= top && top + g.targetHeight <= g.frameBottom;
}

namespace {

bool rests_after(const TrialTrace& trace, std::size_t i) {
  const std::int64_t t = trace.events[i].t;
  for (const ScrollEvent& e : trace.events) {
    if (e.t > t && e.t <= t + trace.quiescenceMs) return false;
  }
  return true;
}

std::optional<std::size_t> find_end(const TrialTrace& trace, const TrialGeometry& g) {
  const auto& ev = trace.events;
  if (trace.clickT) {
    std::optional<std::size_t> atClick;
    for (std::size_t i = 0; i < ev.size(); ++i) {
      if (ev[i].t <= *trace.clickT && (!atClick || ev[i].t > ev[*atClick].t)) atClick = i;
    }
    if (atClick && target_inside_frame(g, ev[*atClick].s)) return atClick;
    return std::nullopt;
  }
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (target_inside_frame(g, ev[i].s) && rests_after(trace, i)) return i;
  }
  return std::nullopt;
}

// Position k of the path that starts at the implicit offset 0 (k = 0) and
// continues with the events (k = i + 1).
double path_at(const std::vector<ScrollEvent>& ev, std::size_t k) {
  return k == 0 ? 0.0 : ev[k - 1].s;
}

}  // namespace

TrialMetrics replay_oracle(const TrialTrace& trace, const TrialGeometry& g,
                           const MetricsOptions& options) {
  TrialMetrics m;
  const auto& ev = trace.events;
  m.endEventIndex = find_end(trace, g);
  m.completed = m.endEventIndex.has_value();
  if (ev.empty()) return m;
  const std::size_t last = m.endEventIndex.value_or(ev.size() - 1);
  m.movementTimeMs = (m.completed && trace.clickT ? *trace.clickT : ev[last].t) - trace.startClickT;

  std::optional<std::size_t> firstOvershoot;
  for (std::size_t i = 0; i <= last; ++i) {
    const double above = g.frameTop - (g.targetTop - ev[i].s);
    if (above > 0.0) {
      m.maxOvershootPx = std::max(m.maxOvershootPx, above);
      if (!firstOvershoot) firstOvershoot = i;
    }
  }
  if (firstOvershoot) m.firstOvershootMs = ev[*firstOvershoot].t - trace.startClickT;

  // Each segment runs from an anchor; a reversal ends it at the first point
  // that lies more than epsilon back from the segment's extreme.
  std::size_t anchor = 0;
  bool up = true;
  for (std::size_t k = 1; k <= last + 1; ++k) {
    double extreme = path_at(ev, anchor);
    for (std::size_t j = anchor; j < k; ++j) {
      extreme = up ? std::max(extreme, path_at(ev, j)) : std::min(extreme, path_at(ev, j));
    }
    const double back = up ? extreme - path_at(ev, k) : path_at(ev, k) - extreme;
    if (back > options.epsilonPx) {
      ++m.switchbacks;
      if (firstOvershoot && k - 1 >= *firstOvershoot) ++m.switchbacksAfterOvershoot;
      anchor = k;
      up = !up;
    }
  }
  return m;
}

namespace {

constexpr std::array<double, 5> kFactors = {1.0, 1.5, 2.0, 2.5, 3.0};

double quantize(double s) { return std::round(s * 4.0) / 4.0; }

bool reachable(const TrialGeometry& g) {
  try {
    compute_target_band(g);
    return true;
  } catch (const GeometryError&) {
    return false;
  }
}

TrialGeometry random_geometry(Rng& rng, int minLine, int maxLine, int maxRows) {
  for (;;) {
    const double lineHeight = 2.0 * static_cast<double>(rng.between(minLine / 2, maxLine / 2));
    const int visible = static_cast<int>(rng.between(3, 10));
    const double factor = kFactors[rng.below(kFactors.size())];
    if (factor > visible) continue;
    const int rows = static_cast<int>(rng.between(visible + 1, maxRows));
    const int target = static_cast<int>(rng.between(1, rows));
    TrialGeometry g = make_geometry(lineHeight, factor, target, rows, visible);
    if (reachable(g)) return g;
  }
}

}  // namespace

TrialGeometry random_small_geometry(Rng& rng) { return random_geometry(rng, 2, 12, 20); }

FuzzCase random_case(Rng& rng) {
  FuzzCase c;
  c.geometry = random_geometry(rng, 10, 90, 110);
  const TrialGeometry& g = c.geometry;
  const TargetBand band = compute_target_band(g);
  const double maxScroll = g.max_scroll();
  constexpr std::array<double, 5> kEps = {0.0, 0.5, 2.0, 2.0, 5.0};
  c.options.epsilonPx = kEps[rng.below(kEps.size())];
  c.trace.quiescenceMs = rng.chance(0.8) ? kDefaultQuiescenceMs : rng.between(20, 150);

  auto& ev = c.trace.events;
  std::int64_t t = rng.between(0, 400);
  double s = 0.0;
  auto emit = [&](double pos, std::int64_t gap) {
    t += gap;
    s = std::clamp(quantize(pos), 0.0, maxScroll);
    ev.push_back({t, s});
  };

  const int waypoints = static_cast<int>(rng.between(0, 8));
  for (int w = 0; w < waypoints; ++w) {
    double goal;
    switch (rng.below(4)) {
      case 0: goal = rng.uniform(band.sMin, band.sMax); break;
      case 1: goal = band.sMax + rng.uniform(0.25, 3.0 * g.lineHeight); break;
      case 2: goal = band.sMin - rng.uniform(0.25, 3.0 * g.lineHeight); break;
      default: goal = rng.uniform(0.0, maxScroll); break;
    }
    goal = std::clamp(quantize(goal), 0.0, maxScroll);
    const double speed = rng.uniform(2.0, 80.0);
    while (std::abs(goal - s) > 0.0) {
      const double step = std::min(speed, std::abs(goal - s));
      emit(s + (goal > s ? step : -step), rng.between(4, 24));
    }
    const int jitter = rng.chance(0.3) ? static_cast<int>(rng.between(1, 6)) : 0;
    for (int k = 0; k < jitter; ++k) {
      emit(goal + rng.uniform(-3.0, 3.0), rng.between(4, 24));
    }
    // Rest before the next move: short, at the threshold, or long.
    switch (rng.below(4)) {
      case 0: t += rng.between(1, 40); break;
      case 1: t += c.trace.quiescenceMs - 1 + rng.between(0, 2); break;
      case 2: t += rng.between(80, 400); break;
      default: break;
    }
  }
  if (rng.chance(0.1) && !ev.empty()) {
    c.trace.clickT = ev[rng.below(ev.size())].t + rng.between(-5, 200);
    if (*c.trace.clickT < c.trace.startClickT) c.trace.clickT = c.trace.startClickT;
  }
  return c;
}

SelfTestResult run_selftest(std::uint64_t seed, int cases) {
  Rng rng(seed);
  SelfTestResult result;
  for (int i = 0; i < cases; ++i) {
    const FuzzCase c = random_case(rng);
    ++result.cases;
    if (compute_metrics(c.trace, c.geometry, c.options) !=
        replay_oracle(c.trace, c.geometry, c.options)) {
      ++result.mismatches;
    }
  }
  return result;
}

}  // namespace scrolltest::oracle
