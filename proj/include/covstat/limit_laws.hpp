#ifndef COVSTAT_LIMIT_LAWS_HPP
#define COVSTAT_LIMIT_LAWS_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include "covstat/cov_engine.hpp"
#include "covstat/distributions.hpp"
#include "covstat/rng.hpp"

namespace covstat {

// Standard Gumbel distribution function exp(-e^-x).
double gumbel_cdf(double x);

// Standard normal distribution function, absolute error below 1e-12.
double std_normal_cdf(double x);

// Mean measure of the limiting Poisson process on a finite union of
// intervals: sum of e^-a - e^-b. Intervals unbounded below have infinite
// mass and are rejected.
double mu_measure(const IntervalUnion& u);

// Limit law of the gap between the largest and k-th largest point:
// (1 - e^-x)^(k-1) for x > 0. Validated against a Gamma-ratio simulation
// oracle in the test suite before use.
double f2k_cdf(double x, std::size_t k);

// Limit law of the maximum spacing among the top k points:
// prod_{i=1}^{k-1} (1 - e^-ix) for x > 0. Oracle-validated like f2k.
double f3k_cdf(double x, std::size_t k);

// P(min{U,V} <= x) = 2x - x^2 on [0,1] for independent uniforms.
double minuv_cdf(double x);

double poisson_pmf(std::uint64_t j, double lambda);

// Monte Carlo quantile table for the law of the sum of squared spacings
// (no closed form). Grid of (probability, quantile) pairs built from a
// seeded sample; evaluation by monotone linear interpolation.
class QuantileTable {
 public:
  static QuantileTable build_f4k(std::size_t k, std::size_t sample_count,
                                 std::uint64_t seed);

  double cdf(double x) const;

  std::size_t k() const { return k_; }
  std::size_t sample_count() const { return sample_count_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::pair<double, double>>& grid() const { return grid_; }

  // Plain text: line 1 "f4k <k> <sample_count> <seed>", then one
  // "probability<TAB>quantile" pair per line, ascending. Bit-exact
  // round-trip.
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static QuantileTable load(std::istream& in);
  static QuantileTable load(const std::filesystem::path& path);

 private:
  QuantileTable() = default;

  std::size_t k_ = 0;
  std::size_t sample_count_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::pair<double, double>> grid_;
};

inline double f4k_cdf(double x, const QuantileTable& table) {
  return table.cdf(x);
}

// First `count` points of the limiting Poisson process, (-log Gamma_1, ...,
// -log Gamma_count) with Gamma_i = E_1 + ... + E_i; strictly decreasing.
std::vector<double> sample_limit_points(std::size_t count,
                                        RandomStream& stream);

// One draw of a_np^-4 * sum of np fresh fourth powers: the proven
// distributional proxy for the stable limit. Requires a tail index in (2,4).
double fourth_power_oracle(const NullModel& model, std::size_t n,
                           std::size_t p, RandomStream& stream);

}  // namespace covstat

#endif  // COVSTAT_LIMIT_LAWS_HPP
