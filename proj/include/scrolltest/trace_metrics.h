#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace scrolltest {

inline constexpr std::int64_t kDefaultQuiescenceMs = 66;
inline constexpr double kDefaultEpsilonPx = 2.0;

// One sampled scroll position. `s` has scrollTop semantics: it grows as the
// document content moves up.
struct ScrollEvent {
  std::int64_t t = 0;  // ms since the start click
  double s = 0.0;      // CSS px from document top

  friend bool operator==(const ScrollEvent&, const ScrollEvent&) = default;
};

// Layout of one trial. Document coordinates for the target, viewport
// coordinates for the frame.
struct TrialGeometry {
  double lineHeight = 0.0;
  int rowCount = 0;
  double viewportHeight = 0.0;
  double frameTop = 0.0;
  double frameBottom = 0.0;
  int targetRowIndex = 1;  // 1-based
  double targetTop = 0.0;
  double targetHeight = 0.0;

  double document_height() const { return rowCount * lineHeight; }
  double max_scroll() const { return document_height() - viewportHeight; }

  friend bool operator==(const TrialGeometry&, const TrialGeometry&) = default;
};

// Builds the canonical geometry: a viewport of `visibleRows` rows with a
// vertically centered frame of `frameFactor` rows.
TrialGeometry make_geometry(double lineHeight, double frameFactor, int targetRowIndex,
                            int rowCount, int visibleRows = 10);

struct TargetBand {
  double sMin = 0.0;
  double sMax = 0.0;

  bool contains(double s) const { return s >= sMin && s <= sMax; }
  double width() const { return sMax - sMin; }
};

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TraceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Throws GeometryError for malformed layouts and for targets that can never
// be brought entirely inside the frame.
TargetBand compute_target_band(const TrialGeometry& g);

struct TrialTrace {
  std::int64_t startClickT = 0;
  std::vector<ScrollEvent> events;
  std::int64_t quiescenceMs = kDefaultQuiescenceMs;
  // Present only in click-to-confirm trials: time of the click on the target.
  std::optional<std::int64_t> clickT;

  friend bool operator==(const TrialTrace&, const TrialTrace&) = default;
};

// Throws TraceError when timestamps are not strictly increasing, precede the
// start click, or offsets are negative or beyond `maxScroll`.
void validate_trace(const TrialTrace& trace, double maxScroll);

// Drops events whose timestamp repeats the previous one, keeping the first.
std::vector<ScrollEvent> drop_timestamp_ties(std::span<const ScrollEvent> events);

struct MetricsOptions {
  double epsilonPx = kDefaultEpsilonPx;
};

struct TrialMetrics {
  std::int64_t movementTimeMs = 0;
  int switchbacks = 0;
  double maxOvershootPx = 0.0;
  bool completed = false;
  std::optional<std::size_t> endEventIndex;

  // Reversals detected at or after the first event past sMax, i.e. the count
  // that ignores back-and-forth motion before the first overshoot.
  int switchbacksAfterOvershoot = 0;
  std::optional<std::int64_t> firstOvershootMs;

  friend bool operator==(const TrialMetrics&, const TrialMetrics&) = default;
};

// Equality over the five fields exchanged with clients.
bool same_reported_metrics(const TrialMetrics& a, const TrialMetrics& b);

// Names of the reported fields on which `a` and `b` differ.
std::vector<std::string> differing_fields(const TrialMetrics& a, const TrialMetrics& b);

// Index of the event that ends the trial, or nullopt when the trace never
// comes to rest inside the band.
std::optional<std::size_t> detect_trial_end(const TrialTrace& trace, const TargetBand& band);

TrialMetrics compute_metrics(const TrialTrace& trace, const TrialGeometry& g,
                             const MetricsOptions& options = {});

}  // namespace scrolltest
