#include "scrolltest/trace_metrics.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace scrolltest {

TrialGeometry make_geometry(double lineHeight, double frameFactor, int targetRowIndex,
                            int rowCount, int visibleRows) {
  TrialGeometry g;
  g.lineHeight = lineHeight;
  g.rowCount = rowCount;
  g.viewportHeight = visibleRows * lineHeight;
  const double frameHeight = frameFactor * lineHeight;
  g.frameTop = (g.viewportHeight - frameHeight) / 2.0;
  g.frameBottom = g.frameTop + frameHeight;
  g.targetRowIndex = targetRowIndex;
  g.targetTop = (targetRowIndex - 1) * lineHeight;
  g.targetHeight = lineHeight;
  return g;
}

TargetBand compute_target_band(const TrialGeometry& g) {
  if (!(g.lineHeight > 0.0) || !(g.targetHeight > 0.0)) {
    throw GeometryError("line and target heights must be positive");
  }
  if (g.rowCount < 1 || g.targetRowIndex < 1 || g.targetRowIndex > g.rowCount) {
    throw GeometryError("target row " + std::to_string(g.targetRowIndex) +
                        " outside document of " + std::to_string(g.rowCount) + " rows");
  }
  if (!(g.viewportHeight > 0.0) || g.viewportHeight > g.document_height()) {
    throw GeometryError("viewport must be positive and no taller than the document");
  }
  if (g.frameTop < 0.0 || g.frameBottom > g.viewportHeight) {
    throw GeometryError("frame extends outside the viewport");
  }
  if (g.frameBottom - g.frameTop < g.targetHeight) {
    throw GeometryError("frame is shorter than the target row");
  }
  if (std::abs(g.frameTop + g.frameBottom - g.viewportHeight) > 1.0) {
    throw GeometryError("frame is not vertically centered");
  }

  TargetBand band{g.targetTop + g.targetHeight - g.frameBottom, g.targetTop - g.frameTop};
  if (band.sMax < 0.0) {
    throw GeometryError("unreachable target: row " + std::to_string(g.targetRowIndex) +
                        " is above the frame at offset 0");
  }
  if (band.sMin > g.max_scroll()) {
    throw GeometryError("unreachable target: row " + std::to_string(g.targetRowIndex) +
                        " cannot be scrolled into the frame");
  }
  return band;
}

void validate_trace(const TrialTrace& trace, double maxScroll) {
  if (trace.quiescenceMs <= 0) {
    throw TraceError("quiescenceMs must be positive");
  }
  if (trace.clickT && *trace.clickT < trace.startClickT) {
    throw TraceError("clickT precedes the start click");
  }
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const ScrollEvent& e = trace.events[i];
    const std::string where = "events[" + std::to_string(i) + "]";
    if (e.t < trace.startClickT) {
      throw TraceError(where + ".t precedes the start click");
    }
    if (i > 0 && e.t <= trace.events[i - 1].t) {
      throw TraceError(where + ".t is not strictly increasing");
    }
    if (!std::isfinite(e.s) || e.s < 0.0 || e.s > maxScroll) {
      throw TraceError(where + ".s out of range [0, " + std::to_string(maxScroll) + "]");
    }
  }
}

std::vector<ScrollEvent> drop_timestamp_ties(std::span<const ScrollEvent> events) {
  std::vector<ScrollEvent> out;
  out.reserve(events.size());
  for (const ScrollEvent& e : events) {
    if (out.empty() || e.t != out.back().t) out.push_back(e);
  }
  return out;
}

bool same_reported_metrics(const TrialMetrics& a, const TrialMetrics& b) {
  return differing_fields(a, b).empty();
}

std::vector<std::string> differing_fields(const TrialMetrics& a, const TrialMetrics& b) {
  std::vector<std::string> fields;
  if (a.movementTimeMs != b.movementTimeMs) fields.emplace_back("movementTimeMs");
  if (a.switchbacks != b.switchbacks) fields.emplace_back("switchbacks");
  if (a.maxOvershootPx != b.maxOvershootPx) fields.emplace_back("maxOvershootPx");
  if (a.completed != b.completed) fields.emplace_back("completed");
  if (a.endEventIndex != b.endEventIndex) fields.emplace_back("endEventIndex");
  return fields;
}

std::optional<std::size_t> detect_trial_end(const TrialTrace& trace, const TargetBand& band) {
  const auto& ev = trace.events;
  if (trace.clickT) {
    // Click-to-confirm: the position in effect at the click decides.
    auto after = std::upper_bound(ev.begin(), ev.end(), *trace.clickT,
                                  [](std::int64_t t, const ScrollEvent& e) { return t < e.t; });
    if (after == ev.begin()) return std::nullopt;
    const auto i = static_cast<std::size_t>(after - ev.begin()) - 1;
    if (band.contains(ev[i].s)) return i;
    return std::nullopt;
  }
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (!band.contains(ev[i].s)) continue;
    if (i + 1 == ev.size() || ev[i + 1].t - ev[i].t > trace.quiescenceMs) return i;
  }
  return std::nullopt;
}

TrialMetrics compute_metrics(const TrialTrace& trace, const TrialGeometry& g,
                             const MetricsOptions& options) {
  const TargetBand band = compute_target_band(g);
  TrialMetrics m;
  m.endEventIndex = detect_trial_end(trace, band);
  m.completed = m.endEventIndex.has_value();

  const auto& ev = trace.events;
  if (ev.empty()) return m;
  const std::size_t last = m.endEventIndex.value_or(ev.size() - 1);

  if (m.completed && trace.clickT) {
    m.movementTimeMs = *trace.clickT - trace.startClickT;
  } else {
    m.movementTimeMs = ev[last].t - trace.startClickT;
  }

  // Hysteresis reversal counter. Motion starts upward from offset 0; `extreme`
  // is the furthest point reached in the current direction.
  bool up = true;
  double extreme = 0.0;
  std::optional<std::size_t> firstOvershoot;
  for (std::size_t i = 0; i <= last; ++i) {
    const double s = ev[i].s;
    if (s > band.sMax) {
      m.maxOvershootPx = std::max(m.maxOvershootPx, s - band.sMax);
      if (!firstOvershoot) firstOvershoot = i;
    }
    const bool reversed = up ? extreme - s > options.epsilonPx : s - extreme > options.epsilonPx;
    if (reversed) {
      up = !up;
      ++m.switchbacks;
      if (firstOvershoot) ++m.switchbacksAfterOvershoot;
      extreme = s;
    } else if (up ? s > extreme : s < extreme) {
      extreme = s;
    }
  }
  if (firstOvershoot) m.firstOvershootMs = ev[*firstOvershoot].t - trace.startClickT;
  return m;
}

}  // namespace scrolltest
