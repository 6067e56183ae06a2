#include "scrolltest/report.h"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

namespace scrolltest {

namespace {

class MeanAccumulator {
 public:
  void add(const TrialMetrics& m) {
    time_ += m.movementTimeMs / 1000.0;
    switchbacks_ += m.switchbacks;
    overshoot_ += m.maxOvershootPx;
    ++n_;
  }
  MetricMeans means() const {
    if (n_ == 0) return {};
    return {time_ / n_, switchbacks_ / n_, overshoot_ / n_, n_};
  }

 private:
  double time_ = 0.0;
  double switchbacks_ = 0.0;
  double overshoot_ = 0.0;
  int n_ = 0;
};

constexpr Condition kConditions[] = {Condition::kUnknown, Condition::kKnown};

template <typename F>
std::optional<double> try_stat(F&& f) {
  try {
    return f();
  } catch (const StatsError&) {
    return std::nullopt;
  }
}

std::string fmt_opt(const std::optional<double>& v, const char* spec = "{:.4f}") {
  return v ? fmt::format(fmt::runtime(spec), *v) : std::string();
}

}  // namespace

std::vector<std::string> ordered_techniques(std::vector<std::string> ids) {
  const auto known = TechniqueRegistry::defaults().ids();
  auto rank = [&](const std::string& id) {
    const auto it = std::find(known.begin(), known.end(), id);
    return static_cast<std::size_t>(it - known.begin());
  };
  std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    return std::make_pair(rank(a), a) < std::make_pair(rank(b), b);
  });
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<Table1Row> Report::table1() const {
  std::vector<Table1Row> rows;
  for (const TechniqueSummary& s : techniques) {
    rows.push_back({s.technique, s.condition, s.means.timeS, s.means.switchbacks,
                    s.means.maxOvershootPx});
  }
  return rows;
}

Report aggregate_report(std::span<const TrialObservation> trials, const ReportOptions& options) {
  if (trials.empty()) throw std::invalid_argument("no trials to analyze");

  Report report;
  std::vector<const TrialObservation*> used;
  std::map<std::pair<std::string, Condition>, int> incomplete;
  for (const TrialObservation& t : trials) {
    if (!t.metrics.completed) {
      ++report.incompleteTrials;
      ++incomplete[{t.technique, t.condition}];
      if (!options.includeIncomplete) continue;
    } else {
      ++report.completedTrials;
    }
    used.push_back(&t);
  }
  if (used.empty()) throw std::invalid_argument("no completed trials to analyze");

  std::vector<std::string> ids;
  for (const auto* t : used) ids.push_back(t->technique);
  const std::vector<std::string> techniques = ordered_techniques(ids);

  using CellKey = std::tuple<std::string, Condition>;
  std::map<CellKey, MeanAccumulator> perTechnique;
  std::map<CellKey, std::vector<DistanceTime>> points;
  std::map<std::tuple<std::string, Condition, DistanceGroup>, MeanAccumulator> perGroup;
  std::map<std::tuple<Condition, double>, MeanAccumulator> perFrame;
  std::map<std::tuple<Condition, int>, MeanAccumulator> perDistance;
  std::map<CellKey, std::vector<double>> times;
  std::map<std::tuple<std::string, Condition, double, int>, std::pair<double, int>> cells;
  for (const auto* t : used) {
    const CellKey key{t->technique, t->condition};
    perTechnique[key].add(t->metrics);
    const double seconds = t->metrics.movementTimeMs / 1000.0;
    points[key].push_back({static_cast<double>(t->targetRowIndex), seconds});
    perGroup[{t->technique, t->condition, t->distanceGroup}].add(t->metrics);
    perFrame[{t->condition, t->frameHeightFactor}].add(t->metrics);
    perDistance[{t->condition, t->targetRowIndex}].add(t->metrics);
    times[key].push_back(seconds);
    auto& cell = cells[{t->technique, t->condition, t->frameHeightFactor, t->targetRowIndex}];
    cell.first += seconds;
    ++cell.second;
  }

  for (const std::string& id : techniques) {
    for (Condition c : kConditions) {
      const auto it = perTechnique.find({id, c});
      if (it == perTechnique.end()) continue;
      TechniqueSummary s;
      s.technique = id;
      s.condition = c;
      s.means = it->second.means();
      s.incomplete = incomplete[{id, c}];
      const auto& pts = points[{id, c}];
      try {
        s.fits = compare_fits(options.perTrialFits ? pts : mean_per_distance(pts));
      } catch (const StatsError& e) {
        s.fitError = e.what();
      }
      report.techniques.push_back(std::move(s));
      for (DistanceGroup g : {DistanceGroup::kVisible, DistanceGroup::kShort, DistanceGroup::kLong}) {
        const auto git = perGroup.find({id, c, g});
        if (git != perGroup.end()) report.distanceGroups.push_back({id, c, g, git->second.means()});
      }
    }
  }

  for (const auto& [key, acc] : perFrame) {
    report.frameSizes.push_back({std::get<0>(key), std::get<1>(key), acc.means()});
  }

  // Cross-metric correlations over per-distance means, one column per condition.
  std::map<Condition, std::vector<MetricMeans>> byDistance;
  for (const auto& [key, acc] : perDistance) byDistance[std::get<0>(key)].push_back(acc.means());
  auto column = [&](Condition c, auto member) {
    std::vector<double> out;
    for (const MetricMeans& m : byDistance[c]) out.push_back(m.*member);
    return out;
  };
  const std::tuple<const char*, const char*, double MetricMeans::*, double MetricMeans::*> pairs[] = {
      {"mean_time_s", "mean_switchbacks", &MetricMeans::timeS, &MetricMeans::switchbacks},
      {"mean_time_s", "mean_max_overshoot_px", &MetricMeans::timeS, &MetricMeans::maxOvershootPx},
      {"mean_switchbacks", "mean_max_overshoot_px", &MetricMeans::switchbacks,
       &MetricMeans::maxOvershootPx}};
  for (const auto& [n1, n2, m1, m2] : pairs) {
    CorrelationRow row{n1, n2, std::nullopt, std::nullopt};
    row.rUnknown = try_stat([&] {
      return pearson(column(Condition::kUnknown, m1), column(Condition::kUnknown, m2));
    });
    row.rKnown = try_stat([&] {
      return pearson(column(Condition::kKnown, m1), column(Condition::kKnown, m2));
    });
    report.correlations.push_back(row);
  }

  for (Condition c : kConditions) {
    ConditionAnalysis a;
    a.condition = c;
    std::vector<std::vector<double>> perTrialGroups;
    std::vector<std::vector<double>> perCellGroups;
    std::vector<DistanceTime> pooled;
    for (const std::string& id : techniques) {
      const auto it = times.find({id, c});
      if (it == times.end()) continue;
      a.techniques.push_back(id);
      perTrialGroups.push_back(it->second);
      std::vector<double> cellMeans;
      for (const auto& [key, sum] : cells) {
        if (std::get<0>(key) == id && std::get<1>(key) == c) {
          cellMeans.push_back(sum.first / sum.second);
        }
      }
      perCellGroups.push_back(std::move(cellMeans));
      const auto& pts = points[{id, c}];
      pooled.insert(pooled.end(), pts.begin(), pts.end());
    }
    if (a.techniques.empty()) continue;

    try {
      a.perTrial = anova_oneway(perTrialGroups);
      a.tukey = tukey_hsd(perTrialGroups, options.alpha);
    } catch (const StatsError& e) {
      a.notes.push_back(std::string("per-trial analysis skipped: ") + e.what());
    }
    try {
      a.perCell = anova_oneway(perCellGroups);
    } catch (const StatsError& e) {
      a.notes.push_back(std::string("per-cell ANOVA skipped: ") + e.what());
    }
    try {
      a.overall = compare_fits(mean_per_distance(pooled));
    } catch (const StatsError& e) {
      a.notes.push_back(std::string("overall fit skipped: ") + e.what());
    }
    std::vector<double> h, t, sb, os;
    for (const FrameSizeRow& f : report.frameSizes) {
      if (f.condition != c) continue;
      h.push_back(f.frameHeightFactor);
      t.push_back(f.means.timeS);
      sb.push_back(f.means.switchbacks);
      os.push_back(f.means.maxOvershootPx);
    }
    a.rFrameTime = try_stat([&] { return pearson(h, t); });
    a.rFrameSwitchbacks = try_stat([&] { return pearson(h, sb); });
    a.rFrameOvershoot = try_stat([&] { return pearson(h, os); });
    report.conditions.push_back(std::move(a));
  }
  return report;
}

std::string table1_csv(std::span<const Table1Row> rows) {
  std::string out = "technique,condition,mean_time_s,mean_switchbacks,mean_max_overshoot_px\n";
  for (const Table1Row& r : rows) {
    out += fmt::format("{},{},{:.3f},{:.3f},{:.3f}\n", r.technique, to_string(r.condition),
                       r.meanTimeS, r.meanSwitchbacks, r.meanMaxOvershootPx);
  }
  return out;
}

std::vector<Table1Row> parse_table1_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) ||
      line != "technique,condition,mean_time_s,mean_switchbacks,mean_max_overshoot_px") {
    throw std::invalid_argument("table1 csv: unexpected header");
  }
  std::vector<Table1Row> rows;
  int lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream fields(line);
    for (std::string f; std::getline(fields, f, ',');) cols.push_back(f);
    if (cols.size() != 5) {
      throw std::invalid_argument("table1 csv line " + std::to_string(lineNo) +
                                  ": expected 5 columns");
    }
    try {
      rows.push_back({cols[0], parse_condition(cols[1]), std::stod(cols[2]), std::stod(cols[3]),
                      std::stod(cols[4])});
    } catch (const std::logic_error& e) {
      throw std::invalid_argument("table1 csv line " + std::to_string(lineNo) + ": " + e.what());
    }
  }
  return rows;
}

std::string summary_csv(const Report& r) {
  // a and b belong to the condition's reference model: linear when the target
  // position is unknown, log2 when it is known.
  std::string out =
      "technique,condition,mean_time_s,mean_switchbacks,mean_max_overshoot_px,a,b,r2_linear,"
      "r2_log\n";
  for (const TechniqueSummary& s : r.techniques) {
    out += fmt::format("{},{},{:.3f},{:.3f},{:.3f}", s.technique, to_string(s.condition),
                       s.means.timeS, s.means.switchbacks, s.means.maxOvershootPx);
    if (s.fits) {
      const RegressionFit& ref = s.condition == Condition::kUnknown ? s.fits->linear : s.fits->log2;
      out += fmt::format(",{:.4f},{:.4f},{:.4f},{:.4f}\n", ref.a, ref.b, s.fits->linear.r2,
                         s.fits->log2.r2);
    } else {
      out += ",,,,\n";
    }
  }
  return out;
}

std::string fits_csv(const Report& r) {
  std::string out =
      "technique,condition,a_linear,b_linear,r2_linear,a_log,b_log,r2_log,better_model\n";
  for (const TechniqueSummary& s : r.techniques) {
    if (!s.fits) continue;
    const FitComparison& f = *s.fits;
    out += fmt::format("{},{},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{}\n", s.technique,
                       to_string(s.condition), f.linear.a, f.linear.b, f.linear.r2, f.log2.a,
                       f.log2.b, f.log2.r2, to_string(f.winner));
  }
  return out;
}

std::string correlations_csv(const Report& r) {
  std::string out = "metric_1,metric_2,pearson_r_unknown,pearson_r_known\n";
  for (const CorrelationRow& c : r.correlations) {
    out += fmt::format("{},{},{},{}\n", c.metric1, c.metric2, fmt_opt(c.rUnknown),
                       fmt_opt(c.rKnown));
  }
  return out;
}

std::string distance_groups_csv(const Report& r) {
  std::string out =
      "technique,condition,distance_group,mean_time_s,mean_switchbacks,mean_max_overshoot_px,n\n";
  for (const DistanceGroupRow& g : r.distanceGroups) {
    out += fmt::format("{},{},{},{:.3f},{:.3f},{:.3f},{}\n", g.technique, to_string(g.condition),
                       to_string(g.group), g.means.timeS, g.means.switchbacks,
                       g.means.maxOvershootPx, g.means.n);
  }
  return out;
}

std::string frame_sizes_csv(const Report& r) {
  std::string out = "condition,H,mean_time_s,mean_switchbacks,mean_max_overshoot_px,n\n";
  for (const FrameSizeRow& f : r.frameSizes) {
    out += fmt::format("{},{:.1f},{:.3f},{:.3f},{:.3f},{}\n", to_string(f.condition),
                       f.frameHeightFactor, f.means.timeS, f.means.switchbacks,
                       f.means.maxOvershootPx, f.means.n);
  }
  for (const ConditionAnalysis& a : r.conditions) {
    out += fmt::format("# {} pearson_r(H, time)={} (H, switchbacks)={} (H, overshoot)={}\n",
                       to_string(a.condition), fmt_opt(a.rFrameTime), fmt_opt(a.rFrameSwitchbacks),
                       fmt_opt(a.rFrameOvershoot));
  }
  return out;
}

namespace {

// Left-aligned first column, right-aligned rest.
std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return {};
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      if (i > 0) out += "  ";
      out += i == 0 ? fmt::format("{:<{}}", rows[r][i], width[i])
                    : fmt::format("{:>{}}", rows[r][i], width[i]);
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out += std::string(total - 2, '-') + '\n';
    }
  }
  return out;
}

}  // namespace

std::string render_text(const Report& r) {
  std::string out = fmt::format("Trials analyzed: {} completed, {} incomplete\n\n",
                                r.completedTrials, r.incompleteTrials);

  std::vector<std::vector<std::string>> t1 = {
      {"technique", "condition", "time (s)", "switchbacks", "max overshoot (px)", "n"}};
  for (const TechniqueSummary& s : r.techniques) {
    t1.push_back({s.technique, std::string(to_string(s.condition)),
                  fmt::format("{:.3f}", s.means.timeS), fmt::format("{:.3f}", s.means.switchbacks),
                  fmt::format("{:.3f}", s.means.maxOvershootPx), std::to_string(s.means.n)});
  }
  out += "Mean time and accuracy\n" + render_table(t1) + "\n";

  std::vector<std::vector<std::string>> t2 = {
      {"technique", "condition", "a (lin)", "b (lin)", "R2 (lin)", "a (log)", "b (log)",
       "R2 (log)", "better"}};
  for (const TechniqueSummary& s : r.techniques) {
    if (!s.fits) {
      t2.push_back({s.technique, std::string(to_string(s.condition)), "-", "-", "-", "-", "-", "-",
                    s.fitError});
      continue;
    }
    const FitComparison& f = *s.fits;
    t2.push_back({s.technique, std::string(to_string(s.condition)), fmt::format("{:.3f}", f.linear.a),
                  fmt::format("{:.4f}", f.linear.b), fmt::format("{:.2f}%", 100 * f.linear.r2),
                  fmt::format("{:.3f}", f.log2.a), fmt::format("{:.3f}", f.log2.b),
                  fmt::format("{:.2f}%", 100 * f.log2.r2), std::string(to_string(f.winner))});
  }
  out += "Time-distance models (T = a + b*D, T = a + b*log2 D)\n" + render_table(t2) + "\n";

  std::vector<std::vector<std::string>> t3 = {{"metric 1", "metric 2", "r unknown", "r known"}};
  for (const CorrelationRow& c : r.correlations) {
    t3.push_back({c.metric1, c.metric2, fmt_opt(c.rUnknown), fmt_opt(c.rKnown)});
  }
  out += "Correlations over per-distance means\n" + render_table(t3) + "\n";

  std::vector<std::vector<std::string>> tg = {
      {"technique", "condition", "group", "time (s)", "switchbacks", "max overshoot (px)"}};
  for (const DistanceGroupRow& g : r.distanceGroups) {
    tg.push_back({g.technique, std::string(to_string(g.condition)), std::string(to_string(g.group)),
                  fmt::format("{:.3f}", g.means.timeS), fmt::format("{:.3f}", g.means.switchbacks),
                  fmt::format("{:.3f}", g.means.maxOvershootPx)});
  }
  out += "Distance groups\n" + render_table(tg) + "\n";

  for (const ConditionAnalysis& a : r.conditions) {
    out += fmt::format("Condition {}\n", to_string(a.condition));
    if (a.overall) {
      out += fmt::format("  overall linear: T = {:.3f} + {:.4f} D (R2 {:.3f})\n", a.overall->linear.a,
                         a.overall->linear.b, a.overall->linear.r2);
      out += fmt::format("  overall log2:   T = {:.3f} + {:.3f} log2 D (R2 {:.3f})\n",
                         a.overall->log2.a, a.overall->log2.b, a.overall->log2.r2);
    }
    if (a.perTrial) {
      out += fmt::format("  ANOVA per trial: F({}, {}) = {:.2f}, p = {:.3g}\n", a.perTrial->dfBetween,
                         a.perTrial->dfWithin, a.perTrial->fStat, a.perTrial->pValue);
    }
    if (a.perCell) {
      out += fmt::format("  ANOVA per cell:  F({}, {}) = {:.2f}, p = {:.3g}\n", a.perCell->dfBetween,
                         a.perCell->dfWithin, a.perCell->fStat, a.perCell->pValue);
    }
    if (a.tukey) {
      out += fmt::format("  Tukey HSD (alpha {}), {} groups:\n", a.tukey->alpha, a.tukey->groups.size());
      for (std::size_t g = 0; g < a.tukey->groups.size(); ++g) {
        std::string members;
        for (std::size_t idx : a.tukey->groups[g]) {
          if (!members.empty()) members += ", ";
          members += a.techniques[idx];
        }
        out += fmt::format("    {}: {}\n", g + 1, members);
      }
    }
    out += fmt::format("  frame size r: time {}, switchbacks {}, overshoot {}\n",
                       fmt_opt(a.rFrameTime), fmt_opt(a.rFrameSwitchbacks),
                       fmt_opt(a.rFrameOvershoot));
    for (const std::string& n : a.notes) out += "  note: " + n + "\n";
    out += "\n";
  }
  return out;
}

}  // namespace scrolltest
