#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include "covstat/harness.hpp"
#include "covstat/limit_laws.hpp"

using namespace covstat;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Composite Simpson quadrature of the normal density on [0, x]; step small
// enough for ~1e-15 truncation error.
double phi_integral_oracle(double x) {
  const int steps = 20000;  // even
  const double h = x / steps;
  auto dens = [](double t) {
    return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
  };
  double acc = dens(0.0) + dens(x);
  for (int i = 1; i < steps; ++i) acc += dens(i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

double normal_cdf_oracle(double x) {
  if (x < 0.0) return 0.5 - phi_integral_oracle(-x);
  return 0.5 + phi_integral_oracle(x);
}

}  // namespace

TEST_SUITE_BEGIN("limit_laws");

TEST_CASE("gumbel cdf") {
  CHECK(gumbel_cdf(0.0) == doctest::Approx(0.36787944117144232).epsilon(1e-15));
  CHECK(gumbel_cdf(-40.0) < 1e-300);
  // Poisson void probability: Lambda(x) = exp(-mu((x,inf)))
  for (double x = -3.0; x <= 5.0; x += 0.5) {
    const double via_measure =
        std::exp(-mu_measure(IntervalUnion::open(x, kInf)));
    CHECK(gumbel_cdf(x) == doctest::Approx(via_measure).epsilon(1e-15));
  }
}

TEST_CASE("standard normal cdf against quadrature oracle") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std_normal_cdf(1.959964) == doctest::Approx(0.975).epsilon(1e-6));
  for (int i = 0; i < 25; ++i) {
    const double x = -6.0 + 0.5 * i;
    CHECK(std::abs(std_normal_cdf(x) - normal_cdf_oracle(x)) <= 1e-12);
  }
  for (double x = 0.25; x <= 8.0; x += 0.5)
    CHECK(std::abs(std_normal_cdf(-x) - (1.0 - std_normal_cdf(x))) <= 1e-14);
}

TEST_CASE("mu_measure") {
  CHECK(mu_measure(IntervalUnion::open(0.0, kInf)) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mu_measure(IntervalUnion::open(0.0, std::log(2.0))) ==
        doctest::Approx(0.5).epsilon(1e-14));
  CHECK(mu_measure(IntervalUnion()) == 0.0);
  const IntervalUnion two({Interval{0.0, 1.0}, Interval{2.0, kInf}});
  CHECK(mu_measure(two) ==
        doctest::Approx(1.0 - std::exp(-1.0) + std::exp(-2.0)).epsilon(1e-14));
  CHECK_THROWS_WITH_AS(mu_measure(IntervalUnion::whole_line()),
                       "infinite mean measure", std::domain_error);
}

TEST_CASE("f2k and f3k closed forms") {
  CHECK(f2k_cdf(std::log(2.0), 3) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(f2k_cdf(0.0, 5) == 0.0);
  CHECK(f2k_cdf(-1.0, 5) == 0.0);
  for (double x = 0.1; x < 4.0; x += 0.3)
    CHECK(f2k_cdf(x, 2) == doctest::Approx(1.0 - std::exp(-x)).epsilon(1e-14));
  CHECK_THROWS(f2k_cdf(1.0, 1));

  CHECK(f3k_cdf(std::log(2.0), 3) == doctest::Approx(0.375).epsilon(1e-14));
  for (double x = 0.1; x < 4.0; x += 0.3)
    CHECK(f3k_cdf(x, 2) == doctest::Approx(f2k_cdf(x, 2)).epsilon(1e-15));
  CHECK_THROWS(f3k_cdf(1.0, 1));

  // max spacing <= sum of spacings, so F3 dominates F2 pointwise
  for (std::size_t k : {2u, 3u, 5u, 10u})
    for (double x = 0.0; x < 6.0; x += 0.2)
      CHECK(f3k_cdf(x, k) >= f2k_cdf(x, k) - 1e-15);
}

TEST_CASE("closed forms match the Gamma-ratio simulation oracle") {
  // The CDFs are derived consequences of the Renyi representation; this is
  // the mandatory validation against direct simulation of the limit points.
  for (std::size_t k : {2u, 3u, 5u, 10u}) {
    RandomStream stream = RandomStream::derive(4242, StreamDomain::kOracle, k);
    const std::size_t draws = 1000000;
    std::vector<double> t2(draws), t3(draws);
    for (std::size_t s = 0; s < draws; ++s) {
      const std::vector<double> pts = sample_limit_points(k, stream);
      t2[s] = pts.front() - pts.back();
      double max_spacing = 0.0;
      for (std::size_t i = 1; i < k; ++i)
        max_spacing = std::max(max_spacing, pts[i - 1] - pts[i]);
      t3[s] = max_spacing;
    }
    const double gap2 =
        ks_statistic(std::move(t2), [k](double x) { return f2k_cdf(x, k); });
    const double gap3 =
        ks_statistic(std::move(t3), [k](double x) { return f3k_cdf(x, k); });
    CAPTURE(k);
    CHECK(gap2 < 0.005);
    CHECK(gap3 < 0.005);
  }
}

TEST_CASE("f4k table: k=2 closed form, range, determinism") {
  const QuantileTable table = QuantileTable::build_f4k(2, 1000000, 99);
  // k=2 limit is E^2 with E ~ Exp(1): CDF 1 - exp(-sqrt(x)).
  CHECK(table.cdf(1.0) == doctest::Approx(0.63212055882855768).epsilon(0.008));
  CHECK(table.cdf(0.0) == 0.0);
  CHECK(table.cdf(-1.0) == 0.0);
  CHECK(table.cdf(table.grid().back().second) >= 1.0 - 1.0 / 1000000.0);

  const QuantileTable again = QuantileTable::build_f4k(2, 1000000, 99);
  REQUIRE(table.grid().size() == again.grid().size());
  for (std::size_t i = 0; i < table.grid().size(); ++i) {
    CHECK(table.grid()[i].first == again.grid()[i].first);
    CHECK(table.grid()[i].second == again.grid()[i].second);
  }
  const QuantileTable other = QuantileTable::build_f4k(2, 1000000, 100);
  CHECK(other.grid() != table.grid());
}

TEST_CASE("f4k table round-trips bit-exactly through its file format") {
  const QuantileTable table = QuantileTable::build_f4k(3, 100000, 7);
  std::stringstream buffer;
  table.save(buffer);
  const std::string bytes = buffer.str();
  CHECK(bytes.rfind("f4k 3 100000 7\n", 0) == 0);

  std::stringstream in(bytes);
  const QuantileTable loaded = QuantileTable::load(in);
  CHECK(loaded.k() == 3);
  CHECK(loaded.sample_count() == 100000);
  CHECK(loaded.seed() == 7);
  REQUIRE(loaded.grid().size() == table.grid().size());
  for (std::size_t i = 0; i < table.grid().size(); ++i) {
    CHECK(loaded.grid()[i].first == table.grid()[i].first);    // bit exact
    CHECK(loaded.grid()[i].second == table.grid()[i].second);  // bit exact
  }
  std::stringstream buffer2;
  loaded.save(buffer2);
  CHECK(buffer2.str() == bytes);

  CHECK_THROWS(QuantileTable::build_f4k(1, 100000, 7));
  CHECK_THROWS(QuantileTable::build_f4k(3, 1000, 7));
}

TEST_CASE("minuv cdf and the level identity") {
  CHECK(minuv_cdf(0.5) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(minuv_cdf(1.0) == 1.0);
  CHECK(minuv_cdf(1.5) == 1.0);
  CHECK(minuv_cdf(-0.1) == 0.0);
  for (double beta : {0.01, 0.05, 0.1}) {
    const double threshold = 1.0 - std::sqrt(1.0 - beta);
    CHECK(std::abs(minuv_cdf(threshold) - beta) <= 1e-12);
  }
  CHECK(minuv_cdf(0.025320565519103609) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("poisson pmf") {
  CHECK(poisson_pmf(0, 1.0) ==
        doctest::Approx(0.36787944117144232).epsilon(1e-14));
  CHECK(poisson_pmf(0, 0.0) == 1.0);
  CHECK(poisson_pmf(3, 0.0) == 0.0);
  CHECK(poisson_pmf(2, 1.0) ==
        doctest::Approx(0.18393972058572116).epsilon(1e-14));
  double total = 0.0;
  for (std::uint64_t j = 0; j < 60; ++j) total += poisson_pmf(j, 3.5);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("limit point sampler") {
  RandomStream stream = RandomStream::from_seed(31);
  for (int it = 0; it < 50; ++it) {
    const std::vector<double> pts = sample_limit_points(8, stream);
    for (std::size_t i = 1; i < pts.size(); ++i) CHECK(pts[i] < pts[i - 1]);
  }

  // -log Gamma_1 is standard Gumbel.
  RandomStream gstream = RandomStream::from_seed(32);
  std::vector<double> first(100000);
  for (auto& v : first) v = sample_limit_points(1, gstream)[0];
  CHECK(ks_statistic(std::move(first), gumbel_cdf) < 0.01);

  // P(-log Gamma_2 > 0) = P(Gamma_2 < 1) = 1 - 2/e.
  RandomStream pstream = RandomStream::from_seed(33);
  double frac = 0.0;
  const std::size_t m = 100000;
  for (std::size_t s = 0; s < m; ++s)
    if (sample_limit_points(2, pstream)[1] > 0.0) frac += 1.0;
  CHECK(std::abs(frac / m - 0.26424111765711536) < 0.01);
}

TEST_CASE("fourth power oracle") {
  RandomStream stream = RandomStream::from_seed(34);
  CHECK_THROWS_AS(
      fourth_power_oracle(NullModel::symmetric_bernoulli(), 10, 10, stream),
      std::domain_error);
  const NullModel pareto3 = NullModel::symmetric_pareto(3.0);
  const std::size_t n = 40, p = 25;  // np = 1000
  const double a = quantile_a(pareto3, n * p);
  const double floor_value = std::pow(pareto3.scale(), 4) * 1000.0 /
                             (a * a * a * a);
  for (int it = 0; it < 20; ++it) {
    const double draw = fourth_power_oracle(pareto3, n, p, stream);
    CHECK(draw >= floor_value);
  }
  CHECK_THROWS_AS(fourth_power_oracle(NullModel::symmetric_pareto(5.0), 4, 4,
                                      stream),
                  std::domain_error);
}

TEST_CASE("truncated fourth moment follows the Karamata rate") {
  // For the exact Pareto tail the truncated moment integral is available in
  // closed form; quadrature of the density provides an independent route.
  const NullModel model = NullModel::symmetric_pareto(3.0);
  const double c = model.scale();
  const std::uint64_t np = 1000000;
  const double a = quantile_a(model, np);

  // density of |X| is 3 c^3 x^-4 on [c, inf): integrand of E[X^4 1{X^4<=a^4}]
  // is the constant 3 c^3, so the trapezoid rule is exact up to rounding.
  const int steps = 1 << 20;
  const double h = (a - c) / steps;
  double integral = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double x = c + i * h;
    const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
    integral += w * (x * x * x * x) * (3.0 * c * c * c / (x * x * x * x));
  }
  integral *= h;
  const double rate = np * integral / (a * a * a * a);
  CHECK(std::abs(rate - 3.0) <= 0.3);  // alpha/(4-alpha) = 3 within 10%

  // Monte Carlo spot check of the same expectation (heavy-tailed, so the
  // band is wide).
  RandomStream stream = RandomStream::from_seed(35);
  double mc = 0.0;
  for (std::uint64_t s = 0; s < np; ++s) {
    const double x = sample_value(model, stream);
    const double x4 = (x * x) * (x * x);
    if (x4 <= a * a * a * a) mc += x4;
  }
  CHECK(std::abs(mc / (a * a * a * a) - 3.0) <= 1.0);
}

TEST_CASE("cdf grid scan: monotone with limits 0 and 1") {
  const QuantileTable table = QuantileTable::build_f4k(4, 100000, 5);
  struct Named {
    const char* name;
    std::function<double(double)> cdf;
  };
  const Named cdfs[] = {
      {"gumbel", gumbel_cdf},
      {"normal", std_normal_cdf},
      {"minuv", minuv_cdf},
      {"f2k3", [](double x) { return f2k_cdf(x, 3); }},
      {"f3k4", [](double x) { return f3k_cdf(x, 4); }},
      {"f4k", [&](double x) { return table.cdf(x); }},
  };
  for (const auto& c : cdfs) {
    CAPTURE(c.name);
    double prev = -1.0;
    for (double x = -12.0; x <= 25.0; x += 0.125) {
      const double v = c.cdf(x);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(v >= prev - 1e-15);
      prev = v;
    }
    CHECK(c.cdf(-12.0) <= 1e-4);
    CHECK(c.cdf(25.0) >= 1.0 - 1e-3);
  }
}

TEST_SUITE_END();
