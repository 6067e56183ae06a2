#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace scrolltest {

class StatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Model { kLinear, kLog2 };

std::string_view to_string(Model m);

// One (distance, time) observation; distance in lines, time in seconds.
struct DistanceTime {
  double distance = 0.0;
  double time = 0.0;
};

struct RegressionFit {
  Model model = Model::kLinear;
  double a = 0.0;  // intercept, s
  double b = 0.0;  // s per line, or s per doubling of distance
  double r2 = 0.0;
  int n = 0;

  double predict(double distance) const;
};

// OLS of time on distance. Requires at least 3 points over at least 2
// distinct distances. When the response is constant r2 is reported as 1.
RegressionFit fit_linear(std::span<const DistanceTime> points);

// OLS of time on log2(distance). Distances must be >= 1.
RegressionFit fit_log2(std::span<const DistanceTime> points);

struct FitComparison {
  RegressionFit linear;
  RegressionFit log2;
  Model winner = Model::kLinear;  // higher r2; ties go to linear
};

FitComparison compare_fits(std::span<const DistanceTime> points);

// Averages time per distinct distance, ordered by distance.
std::vector<DistanceTime> mean_per_distance(std::span<const DistanceTime> points);

// Sample Pearson correlation. Throws StatsError on length mismatch, fewer
// than 2 pairs, or zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct AnovaResult {
  double fStat = 0.0;  // +infinity when within-group variance is zero but means differ
  int dfBetween = 0;
  int dfWithin = 0;
  double pValue = 1.0;
  double ssBetween = 0.0;
  double ssWithin = 0.0;
  double ssTotal = 0.0;
};

AnovaResult anova_oneway(std::span<const std::vector<double>> groups);

// Upper-alpha quantile of the studentized range for k means and df error
// degrees of freedom, from the embedded table (alpha 0.05 or 0.01, k in
// [2, 15], df >= 1; linear interpolation in 1/df between ladder rows, df
// above 120 read as infinity). Throws StatsError outside those bounds.
double studentized_range_critical(int k, double df, double alpha);

struct TukeyGrouping {
  double alpha = 0.05;
  double qCritical = 0.0;
  std::vector<double> means;
  std::vector<std::vector<double>> q;             // pairwise studentized range statistics
  std::vector<std::vector<bool>> significant;     // q > qCritical
  std::vector<std::vector<std::size_t>> groups;   // homogeneous subsets, by ascending mean
};

// Tukey-Kramer pairwise comparisons. Subsets are formed by walking groups in
// ascending mean order and extending the current subset while the next group
// is non-significant against every member.
TukeyGrouping tukey_hsd(std::span<const std::vector<double>> groups, double alpha);

}  // namespace scrolltest
