#include "covstat/limit_laws.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace covstat {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kGridPoints = 4097;
}  // namespace

double gumbel_cdf(double x) { return std::exp(-std::exp(-x)); }

// 0.5 erfc(-x/sqrt 2); the libm erfc keeps this within 1e-12 absolute,
// checked against a quadrature oracle in the test suite.
double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double mu_measure(const IntervalUnion& u) {
  double mass = 0.0;
  for (const Interval& iv : u.intervals()) {
    if (iv.lower == -kInf) throw std::domain_error("infinite mean measure");
    mass += std::exp(-iv.lower) - (iv.upper == kInf ? 0.0 : std::exp(-iv.upper));
  }
  return mass;
}

double f2k_cdf(double x, std::size_t k) {
  if (k < 2) throw std::invalid_argument("f2k_cdf: k >= 2");
  if (x <= 0.0) return 0.0;
  return std::pow(-std::expm1(-x), static_cast<double>(k - 1));
}

double f3k_cdf(double x, std::size_t k) {
  if (k < 2) throw std::invalid_argument("f3k_cdf: k >= 2");
  if (x <= 0.0) return 0.0;
  double prod = 1.0;
  for (std::size_t i = 1; i < k; ++i)
    prod *= -std::expm1(-static_cast<double>(i) * x);
  return prod;
}

double minuv_cdf(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return 2.0 * x - x * x;
}

double poisson_pmf(std::uint64_t j, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("poisson_pmf: lambda >= 0");
  if (lambda == 0.0) return j == 0 ? 1.0 : 0.0;
  const double dj = static_cast<double>(j);
  return std::exp(dj * std::log(lambda) - lambda - std::lgamma(dj + 1.0));
}

QuantileTable QuantileTable::build_f4k(std::size_t k, std::size_t sample_count,
                                       std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("build_f4k: k >= 2");
  if (sample_count < 100000)
    throw std::invalid_argument("build_f4k: sample_count >= 1e5");

  RandomStream stream = RandomStream::derive(seed, StreamDomain::kTable, k);
  std::vector<double> samples(sample_count);
  for (std::size_t s = 0; s < sample_count; ++s) {
    // Sum of squared spacings with independent Exp(i) spacings.
    double total = 0.0;
    for (std::size_t i = 1; i < k; ++i) {
      const double d = stream.next_exponential() / static_cast<double>(i);
      total += d * d;
    }
    samples[s] = total;
  }
  std::sort(samples.begin(), samples.end());

  QuantileTable table;
  table.k_ = k;
  table.sample_count_ = sample_count;
  table.seed_ = seed;
  table.grid_.reserve(kGridPoints);
  const std::uint64_t m = sample_count;
  for (std::size_t j = 0; j < kGridPoints; ++j) {
    const std::uint64_t rank =
        1 + (static_cast<std::uint64_t>(j) * (m - 1) + (kGridPoints - 1) / 2) /
                (kGridPoints - 1);
    const double prob =
        (static_cast<double>(rank) - 0.5) / static_cast<double>(m);
    table.grid_.emplace_back(prob, samples[rank - 1]);
  }
  return table;
}

double QuantileTable::cdf(double x) const {
  if (grid_.empty()) throw std::logic_error("QuantileTable: empty grid");
  if (x <= 0.0) return 0.0;
  if (x >= grid_.back().second) return grid_.back().first;
  // Invert the (probability, quantile) grid by monotone linear interpolation,
  // anchored at (0, 0) on the left since the law lives on (0, inf).
  double p_lo = 0.0, q_lo = 0.0;
  auto it = std::lower_bound(
      grid_.begin(), grid_.end(), x,
      [](const std::pair<double, double>& g, double v) { return g.second < v; });
  if (it != grid_.begin()) {
    const auto& prev = *(it - 1);
    p_lo = prev.first;
    q_lo = prev.second;
  }
  const double p_hi = it->first;
  const double q_hi = it->second;
  if (!(q_hi > q_lo)) return p_hi;
  const double w = (x - q_lo) / (q_hi - q_lo);
  return p_lo + w * (p_hi - p_lo);
}

void QuantileTable::save(std::ostream& out) const {
  out << "f4k " << k_ << ' ' << sample_count_ << ' ' << seed_ << '\n';
  char buf[64];
  for (const auto& [prob, quantile] : grid_) {
    std::snprintf(buf, sizeof(buf), "%.17g\t%.17g\n", prob, quantile);
    out << buf;
  }
}

void QuantileTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  save(out);
}

QuantileTable QuantileTable::load(std::istream& in) {
  std::string tag;
  QuantileTable table;
  if (!(in >> tag) || tag != "f4k")
    throw std::runtime_error("QuantileTable: bad header");
  if (!(in >> table.k_ >> table.sample_count_ >> table.seed_))
    throw std::runtime_error("QuantileTable: bad header");
  double prob, quantile;
  while (in >> prob >> quantile) {
    if (!table.grid_.empty()) {
      if (!(prob > table.grid_.back().first) ||
          quantile < table.grid_.back().second)
        throw std::runtime_error("QuantileTable: grid not monotone");
    }
    table.grid_.emplace_back(prob, quantile);
  }
  if (table.grid_.empty()) throw std::runtime_error("QuantileTable: no grid");
  return table;
}

QuantileTable QuantileTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load(in);
}

std::vector<double> sample_limit_points(std::size_t count,
                                        RandomStream& stream) {
  if (count < 1) throw std::invalid_argument("sample_limit_points: count >= 1");
  std::vector<double> out;
  out.reserve(count);
  double gamma = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    gamma += stream.next_exponential();
    out.push_back(-std::log(gamma));
  }
  return out;
}

double fourth_power_oracle(const NullModel& model, std::size_t n,
                           std::size_t p, RandomStream& stream) {
  const auto alpha = model.tail_index();
  if (!alpha || !(*alpha > 2.0 && *alpha < 4.0))
    throw std::domain_error(
        "fourth_power_oracle: requires a tail index in (2,4)");
  const std::uint64_t np = static_cast<std::uint64_t>(n) * p;
  const double a = quantile_a(model, np);
  const double inv_a4 = 1.0 / (a * a * a * a);
  double total = 0.0;
  for (std::uint64_t s = 0; s < np; ++s) {
    const double x = sample_value(model, stream);
    total += (x * x) * (x * x);
  }
  return total * inv_a4;
}

}  // namespace covstat
