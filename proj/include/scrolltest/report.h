#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scrolltest/experiment_design.h"
#include "scrolltest/stats_models.h"
#include "scrolltest/trace_metrics.h"

namespace scrolltest {

// One trial as seen by the analysis layer.
struct TrialObservation {
  std::string technique;
  Condition condition = Condition::kUnknown;
  double frameHeightFactor = 1.0;
  int targetRowIndex = 0;
  DistanceGroup distanceGroup = DistanceGroup::kVisible;
  TrialMetrics metrics;
};

struct ReportOptions {
  bool perTrialFits = false;       // fit every trial instead of per-distance means
  bool includeIncomplete = false;  // incomplete trials are otherwise excluded and counted
  double alpha = 0.01;             // Tukey level
};

struct MetricMeans {
  double timeS = 0.0;
  double switchbacks = 0.0;
  double maxOvershootPx = 0.0;
  int n = 0;
};

struct Table1Row {
  std::string technique;
  Condition condition = Condition::kUnknown;
  double meanTimeS = 0.0;
  double meanSwitchbacks = 0.0;
  double meanMaxOvershootPx = 0.0;

  friend bool operator==(const Table1Row&, const Table1Row&) = default;
};

struct TechniqueSummary {
  std::string technique;
  Condition condition = Condition::kUnknown;
  MetricMeans means;
  int incomplete = 0;
  std::optional<FitComparison> fits;
  std::string fitError;
};

struct CorrelationRow {
  std::string metric1;
  std::string metric2;
  std::optional<double> rUnknown;
  std::optional<double> rKnown;
};

struct DistanceGroupRow {
  std::string technique;
  Condition condition = Condition::kUnknown;
  DistanceGroup group = DistanceGroup::kVisible;
  MetricMeans means;
};

struct FrameSizeRow {
  Condition condition = Condition::kUnknown;
  double frameHeightFactor = 1.0;
  MetricMeans means;
};

struct ConditionAnalysis {
  Condition condition = Condition::kUnknown;
  std::vector<std::string> techniques;  // group order used by the tests below
  std::optional<AnovaResult> perTrial;
  std::optional<AnovaResult> perCell;   // observations are (H, D) cell means
  std::optional<TukeyGrouping> tukey;   // on per-trial times
  std::optional<FitComparison> overall; // all techniques pooled, per-distance means
  std::optional<double> rFrameTime;
  std::optional<double> rFrameSwitchbacks;
  std::optional<double> rFrameOvershoot;
  std::vector<std::string> notes;
};

struct Report {
  std::vector<TechniqueSummary> techniques;  // technique x condition
  std::vector<CorrelationRow> correlations;  // over per-distance means
  std::vector<DistanceGroupRow> distanceGroups;
  std::vector<FrameSizeRow> frameSizes;
  std::vector<ConditionAnalysis> conditions;
  int completedTrials = 0;
  int incompleteTrials = 0;

  std::vector<Table1Row> table1() const;
};

// Throws std::invalid_argument when there is nothing to analyze.
Report aggregate_report(std::span<const TrialObservation> trials, const ReportOptions& options = {});

// Technique order for output: registry order first, then by id.
std::vector<std::string> ordered_techniques(std::vector<std::string> ids);

std::string table1_csv(std::span<const Table1Row> rows);
std::vector<Table1Row> parse_table1_csv(const std::string& csv);

std::string summary_csv(const Report& r);
std::string fits_csv(const Report& r);
std::string correlations_csv(const Report& r);
std::string distance_groups_csv(const Report& r);
std::string frame_sizes_csv(const Report& r);

// Aligned plain-text rendering of every table.
std::string render_text(const Report& r);

}  // namespace scrolltest
