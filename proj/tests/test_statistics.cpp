#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "covstat/cov_engine.hpp"
#include "covstat/distributions.hpp"
#include "covstat/statistics.hpp"

using namespace covstat;

TEST_SUITE_BEGIN("statistics");

TEST_CASE("d_p formula against high-precision values") {
  CHECK(compute_dp(3) == doctest::Approx(0.23005966158763164).epsilon(1e-13));
  CHECK(compute_dp(100) == doctest::Approx(3.3239446453149785).epsilon(1e-13));
  CHECK(compute_dp(5) == doctest::Approx(1.0371626356511588).epsilon(1e-13));
  CHECK_THROWS_AS(compute_dp(2), std::domain_error);
  CHECK_THROWS_AS(compute_dp(1), std::domain_error);

  // long double re-evaluation as an independent route
  for (std::size_t p : {3u, 10u, 100u, 5000u}) {
    const long double pt = 0.5L * p * (p - 1);
    const long double L = std::log(pt);
    const long double want =
        std::sqrt(2.0L * L) -
        (std::log(L) + std::log(4.0L * 3.14159265358979323846L)) /
            (2.0L * std::sqrt(L));
    CHECK(compute_dp(p) ==
          doctest::Approx(static_cast<double>(want)).epsilon(1e-14));
  }
}

TEST_CASE("mu_n exact values") {
  CHECK(mu_n(100, 50, 3.0) == doctest::Approx(75.5).epsilon(1e-15));
  CHECK(mu_n(4, 2, 1.0) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(mu_n(1, 1, 3.0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK_THROWS_AS(mu_n(10, 5, std::numeric_limits<double>::infinity()),
                  std::domain_error);
}

TEST_CASE("mu_n equals the exhaustive Bernoulli mean of tr(S^2)") {
  // Every +-1 matrix enumerated; all intermediate quantities are exact
  // dyadic rationals, so the average must match to full precision.
  for (const auto& [p, n] :
       std::vector<std::pair<std::size_t, std::size_t>>{{2, 2}, {2, 4}, {3, 3},
                                                        {4, 2}}) {
    const std::size_t bits = p * n;
    const std::uint64_t total = 1ULL << bits;
    double sum = 0.0;
    std::vector<double> values(bits);
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      for (std::size_t b = 0; b < bits; ++b)
        values[b] = (mask >> b) & 1 ? 1.0 : -1.0;
      sum += summarize(DataMatrix(p, n, values), 0, {}, 0.0).trace_s2;
    }
    const double mean = sum / static_cast<double>(total);
    CAPTURE(p);
    CAPTURE(n);
    CHECK(std::abs(mean - mu_n(n, p, 1.0)) <= 1e-12);
  }
}

TEST_CASE("sigma_n_sq exact values") {
  CHECK(sigma_n_sq(100, 50, 3.0) == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(sigma_n_sq(4, 2, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  for (const auto& [n, p] :
       std::vector<std::pair<std::size_t, std::size_t>>{{3, 7}, {100, 10}}) {
    const double r = static_cast<double>(p) / n;
    CHECK(sigma_n_sq(n, p, 1.0) == doctest::Approx(4.0 * r * r).epsilon(1e-15));
  }
}

TEST_CASE("z statistic") {
  CHECK(z_statistic(85.5, 100, 50, 3.0) ==
        doctest::Approx(3.1622776601683795).epsilon(1e-14));
  CHECK(z_statistic(mu_n(20, 7, 3.0), 20, 7, 3.0) == doctest::Approx(0.0));
  CHECK(z_statistic(2.5, 4, 2, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("stable statistic hand values") {
  // X = [[1,-1],[1,1]]: tr(S)=2, tr(S^2)=2.
  CHECK(stable_statistic(2.0, 2.0, 2, 2, 1.0) == doctest::Approx(0.0));
  // X = [[1,1],[1,1]]: tr(S)=2, tr(S^2)=4.
  CHECK(stable_statistic(2.0, 4.0, 2, 2, 1.0) == doctest::Approx(8.0));
  CHECK(stable_statistic(2.0, 4.0, 2, 2, 10.0) ==
        doctest::Approx(8.0e-4).epsilon(1e-12));
  CHECK_THROWS(stable_statistic(1.0, 1.0, 2, 2, 0.0));
}

TEST_CASE("stable decomposition hand values") {
  const StableDecomposition a =
      stable_decomposition(DataMatrix(2, 2, {1, -1, 1, 1}), 1.0);
  CHECK(a.main == doctest::Approx(4.0));
  CHECK(a.v1 == doctest::Approx(0.0));
  CHECK(a.v2 == doctest::Approx(0.0));
  CHECK(a.v3 == doctest::Approx(-4.0));

  const StableDecomposition b =
      stable_decomposition(DataMatrix(2, 2, {1, 1, 1, 1}), 1.0);
  CHECK(b.main == doctest::Approx(4.0));
  CHECK(b.v3 == doctest::Approx(4.0));

  const double c = 1.7;
  const StableDecomposition single =
      stable_decomposition(DataMatrix(1, 1, {c}), 1.0);
  CHECK(single.main == doctest::Approx(c * c * c * c).epsilon(1e-15));
  CHECK(single.v1 == 0.0);
  CHECK(single.v2 == 0.0);
  CHECK(single.v3 == 0.0);
  CHECK(stable_statistic(c * c, c * c * c * c, 1, 1, 1.0) ==
        doctest::Approx(single.total()).epsilon(1e-15));
}

TEST_CASE("decomposition identity over random matrices") {
  RandomStream stream = RandomStream::from_seed(2024);
  const NullModel models[4] = {
      NullModel::standard_normal(), NullModel::symmetric_bernoulli(),
      NullModel::student_t(3), NullModel::symmetric_pareto(3)};
  for (int it = 0; it < 200; ++it) {
    const std::size_t p = 1 + stream.next_u64() % 16;
    const std::size_t n = 1 + stream.next_u64() % 16;
    const double a_np = 0.25 + stream.next_unit() * 8.0;
    const DataMatrix data = sample_matrix(models[it % 4], p, n, stream);
    const CovSummary s = summarize(data, 0, {}, 0.0);
    const double direct = stable_statistic(s.trace_s, s.trace_s2, n, p, a_np);
    const StableDecomposition d = stable_decomposition(data, a_np);
    CHECK(std::abs(direct - d.total()) <=
          1e-10 * std::max(1.0, std::abs(direct)));
  }
}

TEST_CASE("normalize_g") {
  CHECK(normalize_g(0.0, 16, 2.5) == doctest::Approx(-6.25).epsilon(1e-15));
  CHECK(normalize_g(2.5 / 4.0, 16, 2.5) == doctest::Approx(0.0));
  CHECK(normalize_g(1.0, 4, 2.0) == doctest::Approx(0.0));
}

TEST_CASE("t statistics") {
  const std::vector<double> g = {2.0, 1.0, 0.5};
  const TStatistics t = t_statistics(g, 3);
  CHECK(t.t1 == 2.0);
  CHECK(t.t2k == doctest::Approx(1.5));
  CHECK(t.t3k == doctest::Approx(1.0));
  CHECK(t.t4k == doctest::Approx(1.25));

  const std::vector<double> tied = {1.0, 1.0, 1.0};
  const TStatistics t2 = t_statistics(tied, 3);
  CHECK(t2.t1 == 1.0);
  CHECK(t2.t2k == 0.0);
  CHECK(t2.t3k == 0.0);
  CHECK(t2.t4k == 0.0);

  const std::vector<double> one = {0.7};
  const TStatistics t3 = t_statistics(one, 1);
  CHECK(t3.t1 == 0.7);
  CHECK(t3.t2k == 0.0);

  CHECK_THROWS(t_statistics(one, 2));
}

TEST_CASE("p transforms") {
  TStatistics t;
  t.t1 = 0.0;
  const PValues p1 = p_transforms(t, 0.0, 1, nullptr);
  CHECK(p1.t1 == doctest::Approx(0.63212055882855768).epsilon(1e-14));
  CHECK(p1.z == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p1.t2k == 1.0);  // k = 1 convention
  CHECK(p1.t3k == 1.0);
  CHECK(p1.t4k == 1.0);

  const QuantileTable table = QuantileTable::build_f4k(3, 100000, 1);
  TStatistics t3;
  t3.t1 = 0.0;
  t3.t2k = std::log(2.0);
  t3.t3k = std::log(2.0);
  t3.t4k = 0.25;
  const PValues p3 = p_transforms(t3, 0.0, 3, &table);
  CHECK(p3.t2k == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(p3.t3k == doctest::Approx(1.0 - 0.375).epsilon(1e-12));
  CHECK(p3.t4k > 0.0);
  CHECK(p3.t4k < 1.0);

  CHECK_THROWS(p_transforms(t3, 0.0, 3, nullptr));
  const QuantileTable wrong_k = QuantileTable::build_f4k(2, 100000, 1);
  CHECK_THROWS(p_transforms(t3, 0.0, 3, &wrong_k));
}

TEST_CASE("combined tests") {
  PValues p;
  p.z = 0.5;
  p.t1 = 0.632;
  const TestOutcome a = combined_tests(p, 0.05);
  CHECK(a.combined[0] == doctest::Approx(0.5));
  CHECK(a.threshold == doctest::Approx(0.025320565519103609).epsilon(1e-12));
  CHECK_FALSE(a.reject[0]);

  PValues zero;
  zero.z = 0.0;
  zero.t1 = 0.9;
  for (double beta : {0.001, 0.05, 0.5, 0.999}) {
    const TestOutcome o = combined_tests(zero, beta);
    CHECK(o.combined[0] == 0.0);
    CHECK(o.reject[0]);
  }

  PValues small;
  small.z = 0.01;
  small.t1 = 0.9;
  CHECK(combined_tests(small, 0.05).reject[0]);

  CHECK_THROWS(combined_tests(p, 1.0));
  CHECK_THROWS(combined_tests(p, -0.1));
  // beta = 0: empty rejection region
  const TestOutcome never = combined_tests(zero, 0.0);
  CHECK(never.threshold == 0.0);
  CHECK_FALSE(never.reject[0]);
}

TEST_CASE("spacing statistic inequalities hold for random inputs") {
  RandomStream stream = RandomStream::from_seed(55);
  for (int it = 0; it < 200; ++it) {
    const std::size_t k = 2 + stream.next_u64() % 9;
    std::vector<double> g(k);
    for (auto& v : g) v = -3.0 + 6.0 * stream.next_unit();
    std::sort(g.rbegin(), g.rend());
    const TStatistics t = t_statistics(g, k);
    CHECK(t.t2k >= t.t3k);
    CHECK(t.t3k >= 0.0);
    CHECK(t.t4k >= 0.0);
    CHECK(t.t4k <= t.t2k * t.t2k + 1e-15);
  }
}

TEST_CASE("p-values are non-increasing in their statistic") {
  const QuantileTable table = QuantileTable::build_f4k(4, 100000, 2);
  PValues prev;
  bool first = true;
  for (double x = -2.0; x <= 6.0; x += 0.25) {
    TStatistics t;
    t.t1 = x;
    t.t2k = std::max(0.0, x);
    t.t3k = std::max(0.0, x);
    t.t4k = std::max(0.0, x);
    const PValues p = p_transforms(t, x, 4, &table);
    if (!first) {
      CHECK(p.t1 <= prev.t1 + 1e-14);
      CHECK(p.t2k <= prev.t2k + 1e-14);
      CHECK(p.t3k <= prev.t3k + 1e-14);
      CHECK(p.t4k <= prev.t4k + 1e-14);
      CHECK(p.z <= prev.z + 1e-14);
    }
    prev = p;
    first = false;
  }
}

TEST_CASE("rejection is monotone in beta") {
  RandomStream stream = RandomStream::from_seed(66);
  for (int it = 0; it < 100; ++it) {
    PValues p;
    p.z = stream.next_unit();
    p.t1 = stream.next_unit();
    p.t2k = stream.next_unit();
    p.t3k = stream.next_unit();
    p.t4k = stream.next_unit();
    bool prev[4] = {false, false, false, false};
    for (double beta : {0.01, 0.05, 0.1, 0.3, 0.7, 0.99}) {
      const TestOutcome o = combined_tests(p, beta);
      for (int i = 0; i < 4; ++i) {
        if (prev[i]) CHECK(o.reject[i]);  // once rejected, stays rejected
        prev[i] = o.reject[i];
      }
    }
  }
}

TEST_CASE("variable permutation leaves the gauged statistics unchanged") {
  RandomStream stream = RandomStream::from_seed(88);
  const std::size_t p = 11, n = 40, k = 5;
  const DataMatrix data = sample_matrix(NullModel::standard_normal(), p, n, stream);
  const double d_p = compute_dp(p);

  std::vector<double> reversed(p * n);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t t = 0; t < n; ++t)
      reversed[i * n + t] = data.at(p - 1 - i, t);
  const DataMatrix permuted(p, n, reversed);

  const CovSummary sa = summarize(data, k, {}, d_p);
  const CovSummary sb = summarize(permuted, k, {}, d_p);
  CHECK(sa.top_g == sb.top_g);  // multiset equality, exact
  const double za = z_statistic(sa.trace_s2, n, p, 3.0);
  const double zb = z_statistic(sb.trace_s2, n, p, 3.0);
  CHECK(std::abs(za - zb) <= 1e-12 * std::max(1.0, std::abs(za)));
}

TEST_SUITE_END();
