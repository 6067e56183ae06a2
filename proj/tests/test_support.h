#pragma once

// Fixture loaders and independent reference computations shared by the unit
// tests and the acceptance suite. Nothing here calls into the library's
// statistics code.

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scrolltest::testing {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::string fixture(const std::string& name) {
  return read_file(std::string(SCROLLTEST_FIXTURES) + "/" + name);
}

// Published time-distance coefficients per technique (seconds, lines).
struct Coefficients {
  std::string technique;
  double aUnknownLinear, bUnknownLinear;
  double aKnownLinear, bKnownLinear;
  double aKnownLog, bKnownLog;
};

inline std::vector<Coefficients> table2_fixture() {
  std::istringstream in(fixture("table2_coefficients.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<Coefficients> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream f(line);
    std::string cell;
    Coefficients c;
    std::getline(f, c.technique, ',');
    double* out[] = {&c.aUnknownLinear, &c.bUnknownLinear, &c.aKnownLinear,
                     &c.bKnownLinear,   &c.aKnownLog,      &c.bKnownLog};
    for (double* v : out) {
      std::getline(f, cell, ',');
      *v = std::stod(cell);
    }
    rows.push_back(c);
  }
  return rows;
}

// Simple regression by the textbook closed form in long double.
struct OlsOracle {
  long double a = 0, b = 0, r2 = 0;
};

inline OlsOracle ols_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const long double n = static_cast<long double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    sxy += static_cast<long double>(x[i]) * y[i];
    syy += static_cast<long double>(y[i]) * y[i];
  }
  OlsOracle o;
  o.b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  o.a = (sy - o.b * sx) / n;
  const long double r = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  o.r2 = r * r;
  return o;
}

// Pearson r straight from the definition.
inline double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

// Pooled two-sample t statistic.
inline double pooled_t(const std::vector<double>& g1, const std::vector<double>& g2) {
  auto mean = [](const std::vector<double>& g) {
    double s = 0;
    for (double v : g) s += v;
    return s / g.size();
  };
  const double m1 = mean(g1), m2 = mean(g2);
  double ss = 0;
  for (double v : g1) ss += (v - m1) * (v - m1);
  for (double v : g2) ss += (v - m2) * (v - m2);
  const double n1 = g1.size(), n2 = g2.size();
  const double sp2 = ss / (n1 + n2 - 2);
  return (m1 - m2) / std::sqrt(sp2 * (1 / n1 + 1 / n2));
}

// Studentized range distribution by direct numerical integration:
//   P(Q < q) = integral over s of f_nu(s) * P_k(q s),
//   P_k(w)   = k * integral over z of phi(z) [Phi(z) - Phi(z - w)]^(k-1),
// with s = sqrt(chi2_nu / nu). nu <= 0 means infinite df.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double range_cdf_known_sigma(double w, int k) {
  if (w <= 0) return 0.0;
  constexpr int kSteps = 400;  // Simpson, even; phi(z) vanishes outside [-9, 9]
  const double lo = -9.0, hi = 9.0;
  const double h = (hi - lo) / kSteps;
  double sum = 0;
  for (int i = 0; i <= kSteps; ++i) {
    const double z = lo + i * h;
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi);
    const double f = phi * std::pow(normal_cdf(z) - normal_cdf(z - w), k - 1);
    sum += f * (i == 0 || i == kSteps ? 1 : (i % 2 ? 4 : 2));
  }
  return k * sum * h / 3;
}

inline double studentized_range_cdf(double q, int k, double nu) {
  if (nu <= 0) return range_cdf_known_sigma(q, k);
  // Density of s = sqrt(chi2_nu / nu), integrated over [0, smax].
  const double logc = (nu / 2) * std::log(nu / 2) + std::log(2.0) - std::lgamma(nu / 2);
  const double smax = nu < 3 ? 12.0 : 1.0 + 10.0 / std::sqrt(nu);
  const int kSteps = nu < 3 ? 4000 : 600;
  const double h = smax / kSteps;
  double sum = 0;
  for (int i = 1; i <= kSteps; ++i) {
    const double s = i * h;
    const double dens = std::exp(logc + (nu - 1) * std::log(s) - nu * s * s / 2);
    sum += dens * range_cdf_known_sigma(q * s, k) * (i == kSteps ? 1 : (i % 2 ? 4 : 2));
  }
  return sum * h / 3;
}

}  // namespace scrolltest::testing
