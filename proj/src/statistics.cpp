#include "covstat/statistics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace covstat {

double compute_dp(std::size_t p) {
  if (p <= 2)
    throw std::domain_error("d_p undefined (log p_tilde <= 0)");
  const double pt = 0.5 * static_cast<double>(p) * static_cast<double>(p - 1);
  const double log_pt = std::log(pt);
  return std::sqrt(2.0 * log_pt) -
         (std::log(log_pt) + std::log(4.0 * std::numbers::pi)) /
             (2.0 * std::sqrt(log_pt));
}

namespace {
void require_finite_m4(double m4) {
  if (!(m4 >= 1.0))
    throw std::invalid_argument("m4 must be >= 1");
  if (std::isinf(m4))
    throw std::domain_error("CLT path requires finite fourth moment");
}
}  // namespace

double mu_n(std::size_t n, std::size_t p, double m4) {
  require_finite_m4(m4);
  const double dn = static_cast<double>(n);
  const double dp = static_cast<double>(p);
  return (dp / dn) * (dn + m4 - 2.0) + dp * dp / dn;
}

double sigma_n_sq(std::size_t n, std::size_t p, double m4) {
  require_finite_m4(m4);
  const double r = static_cast<double>(p) / static_cast<double>(n);
  return (r + 2.0 * r * r + r * r * r) * 4.0 * (m4 - 1.0) + 4.0 * r * r;
}

double z_statistic(double trace_s2, std::size_t n, std::size_t p, double m4) {
  return (trace_s2 - mu_n(n, p, m4)) / std::sqrt(sigma_n_sq(n, p, m4));
}

double stable_statistic(double trace_s, double trace_s2, std::size_t n,
                        std::size_t p, double a_np) {
  if (!(a_np > 0.0))
    throw std::invalid_argument("stable_statistic: a_np > 0");
  const double dn = static_cast<double>(n);
  const double dp = static_cast<double>(p);
  const double inv_a4 = 1.0 / (a_np * a_np * a_np * a_np);
  return inv_a4 * (dn * dn * trace_s2 - 2.0 * dn * (dn + dp - 2.0) * trace_s +
                   dn * dp * (dn + dp - 2.0));
}

StableDecomposition stable_decomposition(const DataMatrix& data, double a_np) {
  if (!(a_np > 0.0))
    throw std::invalid_argument("stable_decomposition: a_np > 0");
  const std::size_t p = data.p();
  const std::size_t n = data.n();
  const double inv_a4 = 1.0 / (a_np * a_np * a_np * a_np);

  // main = a^-4 sum X^4
  double main = 0.0;
  for (double v : data.values()) main += (v * v) * (v * v);
  main *= inv_a4;

  // v1 = 2 a^-4 sum_{i<j} sum_t y_it y_jt with y = X^2 - 1, via per-column
  // totals: sum_{i<j} y_i y_j = ((sum_i y_i)^2 - sum_i y_i^2) / 2.
  double v1 = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double col_sum = 0.0, col_sq = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      const double y = data.at(i, t) * data.at(i, t) - 1.0;
      col_sum += y;
      col_sq += y * y;
    }
    v1 += col_sum * col_sum - col_sq;
  }
  v1 *= inv_a4;

  // v2 = 2 a^-4 sum_i sum_{t<u} y_it y_iu, same identity per row.
  double v2 = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    double row_sum = 0.0, row_sq = 0.0;
    for (double v : data.row(i)) {
      const double y = v * v - 1.0;
      row_sum += y;
      row_sq += y * y;
    }
    v2 += row_sum * row_sum - row_sq;
  }
  v2 *= inv_a4;

  // v3 = 2 a^-4 sum_{i<j} sum_{t != u} X_it X_jt X_iu X_ju
  //    = 2 a^-4 sum_{i<j} (T_ij^2 - sum_t X_it^2 X_jt^2).
  double v3 = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    const auto row_i = data.row(i);
    for (std::size_t j = i + 1; j < p; ++j) {
      const auto row_j = data.row(j);
      double t_ij = 0.0, sq = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double prod = row_i[t] * row_j[t];
        t_ij += prod;
        sq += prod * prod;
      }
      v3 += t_ij * t_ij - sq;
    }
  }
  v3 *= 2.0 * inv_a4;

  return {main, v1, v2, v3};
}

TStatistics t_statistics(std::span<const double> g_top, std::size_t k) {
  if (k < 1) throw std::invalid_argument("t_statistics: k >= 1");
  if (g_top.size() < k)
    throw std::invalid_argument("t_statistics: fewer than k order statistics");
  TStatistics t;
  t.t1 = g_top[0];
  if (k == 1) return t;
  t.t2k = g_top[0] - g_top[k - 1];
  for (std::size_t i = 1; i < k; ++i) {
    const double spacing = g_top[i - 1] - g_top[i];
    t.t3k = std::max(t.t3k, spacing);
    t.t4k += spacing * spacing;
  }
  return t;
}

PValues p_transforms(const TStatistics& t, double z_n, std::size_t k,
                     const QuantileTable* f4k) {
  PValues p;
  p.t1 = 1.0 - gumbel_cdf(t.t1);
  p.z = 1.0 - std_normal_cdf(z_n);
  if (k >= 2) {
    if (f4k == nullptr || f4k->k() != k)
      throw std::invalid_argument("p_transforms: f4k table missing or wrong k");
    p.t2k = 1.0 - f2k_cdf(t.t2k, k);
    p.t3k = 1.0 - f3k_cdf(t.t3k, k);
    p.t4k = 1.0 - f4k->cdf(t.t4k);
  }
  return p;
}

TestOutcome combined_tests(const PValues& p, double beta) {
  // beta = 0 is the degenerate empty-rejection-region edge; beta = 1 is
  // invalid (threshold would be 1 and the level identity breaks down).
  if (!(beta >= 0.0 && beta < 1.0))
    throw std::invalid_argument("combined_tests: beta in [0,1)");
  TestOutcome out;
  out.p = p;
  out.beta = beta;
  out.threshold = 1.0 - std::sqrt(1.0 - beta);
  out.combined = {std::min(p.z, p.t1), std::min(p.z, p.t2k),
                  std::min(p.z, p.t3k), std::min(p.z, p.t4k)};
  for (std::size_t i = 0; i < 4; ++i)
    out.reject[i] = out.combined[i] < out.threshold;
  return out;
}

}  // namespace covstat
