#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gcnn/error.hpp"
#include "gcnn/stats.hpp"

#ifdef GCNN_HAVE_BOOST_MATH
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#endif

using namespace gcnn;
using namespace gcnn::stats;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

// Two-sided permutation p value of the mean difference.
double permutation_p(const std::vector<double>& a, const std::vector<double>& b, int resamples, std::uint64_t seed) {
  std::vector<double> pool(a);
  pool.insert(pool.end(), b.begin(), b.end());
  const double observed = std::abs(mean(a) - mean(b));
  std::mt19937_64 rng(seed);
  int extreme = 0;
  for (int r = 0; r < resamples; ++r) {
    std::shuffle(pool.begin(), pool.end(), rng);
    double sa = 0, sb = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) (i < a.size() ? sa : sb) += pool[i];
    const double d = std::abs(sa / a.size() - sb / b.size());
    extreme += d >= observed - 1e-12;
  }
  return static_cast<double>(extreme) / resamples;
}

}  // namespace

TEST_CASE("hand-computed one-way ANOVA") {
  const auto r = one_way_anova({{1, 2, 3}, {2, 3, 4}, {3, 4, 5}});
  CHECK(std::abs(r.f - 3.0) < 1e-10);
  CHECK(r.df_between == 2);
  CHECK(r.df_within == 6);
  CHECK(r.ss_between == doctest::Approx(6.0));
  CHECK(r.ss_within == doctest::Approx(6.0));
  // P(F(2,6) > 3) = (1 + 3*2/6)^(-3) = 1/8.
  CHECK(std::abs(r.p - 0.125) < 1e-12);
}

TEST_CASE("three groups of ten") {
  // Shifted copies of one group: SSW = 3 * 82.5, SSB = 10 * 2 = 20.
  std::vector<double> base{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<std::vector<double>> g(3, base);
  for (double& v : g[0]) v -= 1;
  for (double& v : g[2]) v += 1;
  const auto r = one_way_anova(g);
  CHECK(r.df_between == 2);
  CHECK(r.df_within == 27);
  CHECK(std::abs(r.f - (20.0 / 2) / (247.5 / 27)) < 1e-10);
}

TEST_CASE("F distribution tail at the reported coordinates") {
  CHECK(std::abs(f_survival(4.472, 2, 27) - 0.021) < 0.002);
  CHECK(f_survival(0.0, 3, 10) == doctest::Approx(1.0));
  CHECK(f_survival(1e6, 3, 10) < 1e-10);
  // Closed form for d1 = 2.
  for (double f : {0.3, 1.0, 4.472, 12.0}) CHECK(std::abs(f_survival(f, 2, 27) - std::pow(1 + 2 * f / 27, -13.5)) < 1e-12);
}

TEST_CASE("incomplete beta identities") {
  CHECK(regularized_incomplete_beta(1, 1, 0.3) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(regularized_incomplete_beta(2, 3, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2, 3, 1.0) == 1.0);
  for (double x : {0.1, 0.5, 0.93})
    CHECK(regularized_incomplete_beta(2.5, 4, x) + regularized_incomplete_beta(4, 2.5, 1 - x) ==
          doctest::Approx(1.0).epsilon(1e-13));
  CHECK(t_two_sided(0.0, 8) == doctest::Approx(1.0));
  // t with 1 df is Cauchy: P(|T| > 1) = 1/2.
  CHECK(t_two_sided(1.0, 1) == doctest::Approx(0.5).epsilon(1e-13));
}

#ifdef GCNN_HAVE_BOOST_MATH
TEST_CASE("distribution functions agree with Boost") {
  for (double a : {0.5, 1.0, 3.5, 13.5})
    for (double b : {0.7, 2.0, 9.0})
      for (double x : {0.01, 0.2, 0.5, 0.8, 0.99})
        CHECK(std::abs(regularized_incomplete_beta(a, b, x) - boost::math::ibeta(a, b, x)) < 1e-12);
  for (double d1 : {1.0, 2.0, 5.0})
    for (double d2 : {6.0, 27.0, 100.0})
      for (double f : {0.2, 1.0, 4.472, 20.0}) {
        const boost::math::fisher_f dist(d1, d2);
        CHECK(std::abs(f_survival(f, d1, d2) - boost::math::cdf(boost::math::complement(dist, f))) < 1e-12);
      }
  for (double df : {3.0, 18.0})
    for (double t : {-2.5, 0.4, 3.1}) {
      const boost::math::students_t dist(df);
      const double p = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
      CHECK(std::abs(t_two_sided(t, df) - p) < 1e-12);
    }
}
#endif

TEST_CASE("Bonferroni pairwise tests against a permutation oracle") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> g(3, std::vector<double>(30));
  const double shift[] = {0.0, 0.45, 0.9};
  for (int k = 0; k < 3; ++k)
    for (double& v : g[k]) v = shift[k] + n(rng);
  const auto tests = bonferroni_pairwise(g);
  REQUIRE(tests.size() == 3);
  for (const auto& t : tests) {
    CHECK(t.df == 58);
    CHECK(t.p_corrected == doctest::Approx(std::min(1.0, 3 * t.p_raw)));
    const double perm = permutation_p(g[t.first], g[t.second], 100000, 7 + t.first * 3 + t.second);
    CHECK_MESSAGE(std::abs(perm - t.p_raw) < 0.01, "pair ", t.first, "-", t.second, " t ", t.p_raw, " perm ", perm);
    CHECK_MESSAGE(std::abs(std::min(1.0, 3 * perm) - t.p_corrected) < 0.03, "corrected");
  }
}

TEST_CASE("affine invariance") {
  const std::vector<std::vector<double>> g{{0.81, 0.84, 0.79, 0.88}, {0.75, 0.78, 0.74, 0.80}, {0.70, 0.77, 0.72, 0.69}};
  auto h = g;
  for (auto& grp : h)
    for (double& v : grp) v = 100 * v - 3;
  const auto a = one_way_anova(g), b = one_way_anova(h);
  CHECK(a.f == doctest::Approx(b.f).epsilon(1e-9));
  CHECK(a.p == doctest::Approx(b.p).epsilon(1e-9));
  const auto ta = bonferroni_pairwise(g), tb = bonferroni_pairwise(h);
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].t == doctest::Approx(tb[i].t).epsilon(1e-9));
}

TEST_CASE("degenerate inputs") {
  CHECK_THROWS_AS(one_way_anova({{1, 2, 3}}), StatsError);
  CHECK_THROWS_AS(one_way_anova({{1, 2}, {3}}), StatsError);
  CHECK_THROWS_AS(one_way_anova({{1, 1}, {2, 2}}), StatsError);
  CHECK_THROWS_AS(one_way_anova({{1, std::nan("")}, {2, 3}}), StatsError);
  const auto same = bonferroni_pairwise({{0.5, 0.5}, {0.5, 0.5}});
  REQUIRE(same.size() == 1);
  CHECK(same[0].t == 0.0);
  CHECK(same[0].p_raw == 1.0);
  const auto equal_means = one_way_anova({{1, 2, 3}, {3, 2, 1}});
  CHECK(equal_means.f == 0.0);
  CHECK(equal_means.p == doctest::Approx(1.0));
}
