#include "scrolltest/stats_models.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include <boost/math/distributions/fisher_f.hpp>

namespace scrolltest {

#include "studentized_range_table.inc"

std::string_view to_string(Model m) { return m == Model::kLinear ? "linear" : "log2"; }

double RegressionFit::predict(double distance) const {
  return a + b * (model == Model::kLinear ? distance : std::log2(distance));
}

namespace {

// Neumaier-compensated running sum.
class Sum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double mean_of(std::span<const double> v) {
  Sum s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

RegressionFit ols(std::span<const double> x, std::span<const double> y, Model model) {
  const std::size_t n = x.size();
  if (n < 3) throw StatsError("regression needs at least 3 points");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  Sum sxx, sxy, syy;
  for (std::size_t i = 0; i < n; ++i) {
    sxx.add((x[i] - mx) * (x[i] - mx));
    sxy.add((x[i] - mx) * (y[i] - my));
    syy.add((y[i] - my) * (y[i] - my));
  }
  if (!(sxx.value() > 0.0)) throw StatsError("no variance in predictor");

  RegressionFit fit;
  fit.model = model;
  fit.n = static_cast<int>(n);
  fit.b = sxy.value() / sxx.value();
  fit.a = my - fit.b * mx;
  Sum ssres;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.a + fit.b * x[i]);
    ssres.add(r * r);
  }
  const double sstot = syy.value();
  fit.r2 = sstot > 0.0 ? std::clamp(1.0 - ssres.value() / sstot, 0.0, 1.0) : 1.0;
  return fit;
}

}  // namespace

RegressionFit fit_linear(std::span<const DistanceTime> points) {
  std::vector<double> x, y;
  for (const DistanceTime& p : points) {
    x.push_back(p.distance);
    y.push_back(p.time);
  }
  return ols(x, y, Model::kLinear);
}

RegressionFit fit_log2(std::span<const DistanceTime> points) {
  std::vector<double> x, y;
  for (const DistanceTime& p : points) {
    if (!(p.distance >= 1.0)) {
      throw StatsError("log2 model needs distances >= 1, got " + std::to_string(p.distance));
    }
    x.push_back(std::log2(p.distance));
    y.push_back(p.time);
  }
  return ols(x, y, Model::kLog2);
}

FitComparison compare_fits(std::span<const DistanceTime> points) {
  FitComparison c{fit_linear(points), fit_log2(points), Model::kLinear};
  if (c.log2.r2 > c.linear.r2) c.winner = Model::kLog2;
  return c;
}

std::vector<DistanceTime> mean_per_distance(std::span<const DistanceTime> points) {
  std::map<double, std::pair<Sum, int>> acc;
  for (const DistanceTime& p : points) {
    auto& [sum, count] = acc[p.distance];
    sum.add(p.time);
    ++count;
  }
  std::vector<DistanceTime> out;
  for (const auto& [d, sc] : acc) out.push_back({d, sc.first.value() / sc.second});
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatsError("pearson: length mismatch");
  if (x.size() < 2) throw StatsError("pearson: needs at least 2 pairs");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  Sum sxx, syy, sxy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx.add((x[i] - mx) * (x[i] - mx));
    syy.add((y[i] - my) * (y[i] - my));
    sxy.add((x[i] - mx) * (y[i] - my));
  }
  if (!(sxx.value() > 0.0) || !(syy.value() > 0.0)) throw StatsError("pearson: zero variance");
  return std::clamp(sxy.value() / std::sqrt(sxx.value() * syy.value()), -1.0, 1.0);
}

AnovaResult anova_oneway(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) throw StatsError("anova: needs at least 2 groups");
  std::vector<double> all;
  for (const auto& g : groups) {
    if (g.size() < 2) throw StatsError("anova: every group needs at least 2 observations");
    all.insert(all.end(), g.begin(), g.end());
  }
  std::vector<double> means;
  for (const auto& g : groups) means.push_back(mean_of(g));
  // Equal group means carry no between-group variation; the pooled mean can
  // differ from them in the last bit, so use the common value directly.
  const bool equalMeans = std::all_of(means.begin(), means.end(), [&](double m) { return m == means[0]; });
  const double grand = equalMeans ? means[0] : mean_of(all);
  Sum between, within, total;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    const double m = means[i];
    between.add(static_cast<double>(g.size()) * (m - grand) * (m - grand));
    for (double x : g) {
      within.add((x - m) * (x - m));
      total.add((x - grand) * (x - grand));
    }
  }
  AnovaResult r;
  r.dfBetween = static_cast<int>(groups.size()) - 1;
  r.dfWithin = static_cast<int>(all.size() - groups.size());
  r.ssBetween = between.value();
  r.ssWithin = within.value();
  r.ssTotal = total.value();
  const double msb = r.ssBetween / r.dfBetween;
  const double msw = r.ssWithin / r.dfWithin;
  if (msw > 0.0) {
    r.fStat = msb / msw;
    boost::math::fisher_f dist(r.dfBetween, r.dfWithin);
    r.pValue = boost::math::cdf(boost::math::complement(dist, r.fStat));
  } else if (msb > 0.0) {
    r.fStat = std::numeric_limits<double>::infinity();
    r.pValue = 0.0;
  } else {
    r.fStat = 0.0;
    r.pValue = 1.0;
  }
  return r;
}

double studentized_range_critical(int k, double df, double alpha) {
  const double (*table)[14] = nullptr;
  if (alpha == 0.05) {
    table = kQ05;
  } else if (alpha == 0.01) {
    table = kQ01;
  } else {
    throw StatsError("studentized range: alpha must be 0.05 or 0.01, got " +
                     std::to_string(alpha));
  }
  if (k < 2 || k > 15) {
    throw StatsError("studentized range: k must be in [2, 15], got " + std::to_string(k));
  }
  if (!(df >= 1.0)) {
    throw StatsError("studentized range: df must be >= 1, got " + std::to_string(df));
  }
  const int col = k - 2;
  constexpr int kRows = static_cast<int>(std::size(kLadderDf));
  if (df > kLadderDf[kRows - 1]) return table[kRows][col];
  int hi = 0;
  while (kLadderDf[hi] < df) ++hi;
  if (kLadderDf[hi] == df) return table[hi][col];
  const double dlo = kLadderDf[hi - 1];
  const double dhi = kLadderDf[hi];
  const double w = (1.0 / dlo - 1.0 / df) / (1.0 / dlo - 1.0 / dhi);
  return table[hi - 1][col] + w * (table[hi][col] - table[hi - 1][col]);
}

TukeyGrouping tukey_hsd(std::span<const std::vector<double>> groups, double alpha) {
  const AnovaResult anova = anova_oneway(groups);
  const std::size_t k = groups.size();
  TukeyGrouping out;
  out.alpha = alpha;
  out.qCritical = studentized_range_critical(static_cast<int>(k), anova.dfWithin, alpha);
  const double msw = anova.ssWithin / anova.dfWithin;
  for (const auto& g : groups) out.means.push_back(mean_of(g));

  out.q.assign(k, std::vector<double>(k, 0.0));
  out.significant.assign(k, std::vector<bool>(k, false));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double diff = std::abs(out.means[i] - out.means[j]);
      const double se = std::sqrt(msw / 2.0 *
                                  (1.0 / static_cast<double>(groups[i].size()) +
                                   1.0 / static_cast<double>(groups[j].size())));
      double q;
      if (se > 0.0) {
        q = diff / se;
      } else {
        q = diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
      }
      out.q[i][j] = out.q[j][i] = q;
      out.significant[i][j] = out.significant[j][i] = q > out.qCritical;
    }
  }

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.means[a] < out.means[b]; });
  for (std::size_t idx : order) {
    if (!out.groups.empty()) {
      auto& current = out.groups.back();
      const bool fits = std::none_of(current.begin(), current.end(),
                                     [&](std::size_t m) { return out.significant[m][idx]; });
      if (fits) {
        current.push_back(idx);
        continue;
      }
    }
    out.groups.push_back({idx});
  }
  return out;
}

}  // namespace scrolltest
