#include "gcnn/stats.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "gcnn/error.hpp"

namespace gcnn::stats {

namespace {

// Continued fraction for I_x(a, b), valid for x < (a + 1) / (a + b + 2).
double beta_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw StatsError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
    throw StatsError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw StatsError("incomplete beta needs 0 <= x <= 1");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
  return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double f_survival(double f, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw StatsError("F distribution needs positive degrees of freedom");
  if (std::isnan(f)) throw StatsError("F statistic is NaN");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

double t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw StatsError("t distribution needs positive degrees of freedom");
  if (std::isnan(t)) throw StatsError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

namespace {

void check_groups(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw StatsError("need at least two groups");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].size() < 2) throw StatsError("group " + std::to_string(g) + " has fewer than two values");
    for (double v : groups[g])
      if (!std::isfinite(v)) throw StatsError("group " + std::to_string(g) + " holds a non-finite value");
  }
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double ss_about(const std::vector<double>& v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s;
}

}  // namespace

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups) {
  check_groups(groups);
  std::size_t total_n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    total_n += g.size();
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  grand /= static_cast<double>(total_n);
  AnovaResult r;
  for (const auto& g : groups) {
    const double m = mean_of(g);
    r.ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    r.ss_within += ss_about(g, m);
  }
  r.df_between = groups.size() - 1;
  r.df_within = total_n - groups.size();
  // Relative to the data scale, a between-group SS this small is rounding.
  double scale = 0.0;
  for (const auto& g : groups)
    for (double v : g) scale += v * v;
  if (r.ss_between <= 1e-24 * scale) r.ss_between = 0.0;
  if (r.ss_within <= 1e-24 * scale) {
    if (r.ss_between == 0.0) throw StatsError("all values are identical; F is undefined");
    throw StatsError("zero within-group variation; F is infinite");
  }
  r.f = (r.ss_between / r.df_between) / (r.ss_within / r.df_within);
  r.p = f_survival(r.f, static_cast<double>(r.df_between), static_cast<double>(r.df_within));
  return r;
}

std::vector<PairwiseTest> bonferroni_pairwise(const std::vector<std::vector<double>>& groups) {
  check_groups(groups);
  const std::size_t pairs = groups.size() * (groups.size() - 1) / 2;
  std::vector<PairwiseTest> out;
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      const auto& a = groups[i];
      const auto& b = groups[j];
      const double ma = mean_of(a), mb = mean_of(b);
      PairwiseTest t;
      t.first = i;
      t.second = j;
      t.df = a.size() + b.size() - 2;
      const double pooled = (ss_about(a, ma) + ss_about(b, mb)) / static_cast<double>(t.df);
      const double se = std::sqrt(pooled * (1.0 / a.size() + 1.0 / b.size()));
      if (!(se > 0.0)) {
        if (ma == mb) {
          t.t = 0.0;
          t.p_raw = 1.0;
        } else {
          throw StatsError("groups " + std::to_string(i) + " and " + std::to_string(j) + " have zero variance");
        }
      } else {
        t.t = (ma - mb) / se;
        t.p_raw = t_two_sided(t.t, static_cast<double>(t.df));
      }
      t.p_corrected = std::min(1.0, t.p_raw * static_cast<double>(pairs));
      out.push_back(t);
    }
  return out;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = mean_of(values);
  s.sd = values.size() > 1 ? std::sqrt(ss_about(values, s.mean) / static_cast<double>(values.size() - 1)) : 0.0;
  return s;
}

}  // namespace gcnn::stats
