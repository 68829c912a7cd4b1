#pragma once

#include <cstddef>
#include <vector>

namespace gcnn::stats {

/// I_x(a, b) by continued fraction (modified Lentz), relative accuracy ~1e-14.
double regularized_incomplete_beta(double a, double b, double x);
/// P(F > f) for an F(d1, d2) variable.
double f_survival(double f, double d1, double d2);
/// Two-sided P(|T| > |t|) for Student's t with df degrees of freedom.
double t_two_sided(double t, double df);

struct AnovaResult {
  double f = 0.0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  double p = 1.0;
};

/// Throws StatsError with fewer than 2 groups, a group of fewer than 2
/// values, non-finite data, or zero within-group variation.
AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups);

struct PairwiseTest {
  std::size_t first = 0;
  std::size_t second = 0;
  double t = 0.0;
  std::size_t df = 0;
  double p_raw = 1.0;
  double p_corrected = 1.0;  // min(1, p_raw * pairs)
};

/// Pooled-variance two-sample t tests for every pair, Bonferroni corrected.
std::vector<PairwiseTest> bonferroni_pairwise(const std::vector<std::vector<double>>& groups);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // n - 1 denominator; 0 for a single value
  std::size_t n = 0;
};
Summary summarize(const std::vector<double>& values);

}  // namespace gcnn::stats
