#ifndef COVSTAT_STATISTICS_HPP
#define COVSTAT_STATISTICS_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "covstat/cov_engine.hpp"
#include "covstat/limit_laws.hpp"

namespace covstat {

// d_p = sqrt(2 log pt) - (log log pt + log 4 pi) / (2 sqrt(log pt)) with
// pt = p(p-1)/2. Requires p >= 3 so that log pt > 0.
double compute_dp(std::size_t p);

// mu_n = E[tr(S^2)] = (p/n)(n + m4 - 2) + p^2/n.
double mu_n(std::size_t n, std::size_t p, double m4);

// sigma_n^2 = (p/n + 2 p^2/n^2 + p^3/n^3) 4(m4 - 1) + 4 p^2/n^2.
double sigma_n_sq(std::size_t n, std::size_t p, double m4);

// Z_n = (tr(S^2) - mu_n) / sigma_n.
double z_statistic(double trace_s2, std::size_t n, std::size_t p, double m4);

// n^2/a^4 tr(S^2) - 2n(n+p-2)/a^4 tr(S) + np(n+p-2)/a^4.
double stable_statistic(double trace_s, double trace_s2, std::size_t n,
                        std::size_t p, double a_np);

// Exact algebraic split of the stable statistic: fourth-power main term plus
// the cross-variable, cross-observation and off-diagonal product terms.
struct StableDecomposition {
  double main;
  double v1;
  double v2;
  double v3;
  double total() const { return main + v1 + v2 + v3; }
};

StableDecomposition stable_decomposition(const DataMatrix& data, double a_np);

inline double normalize_g(double s_ij, std::size_t n, double d_p) {
  return d_p * (std::sqrt(static_cast<double>(n)) * s_ij - d_p);
}

struct GaugedStatistics {
  double z_n = 0.0;
  std::vector<double> g_top;  // descending
  std::optional<double> stable_stat;
};

// T1 = largest value; T2k = gap to the k-th largest; T3k = maximum spacing;
// T4k = sum of squared spacings. k = 1 yields zeros for the spacing
// statistics by convention.
struct TStatistics {
  double t1 = 0.0;
  double t2k = 0.0;
  double t3k = 0.0;
  double t4k = 0.0;
};

TStatistics t_statistics(std::span<const double> g_top, std::size_t k);

struct PValues {
  double t1 = 1.0;
  double t2k = 1.0;
  double t3k = 1.0;
  double t4k = 1.0;
  double z = 1.0;
};

// Upper-tail transforms through the limit laws. f4k must match k when
// k >= 2; for k = 1 the spacing p-values are 1 by convention.
PValues p_transforms(const TStatistics& t, double z_n, std::size_t k,
                     const QuantileTable* f4k);

struct TestOutcome {
  TStatistics t;
  PValues p;
  std::array<double, 4> combined{1.0, 1.0, 1.0, 1.0};
  double beta = 0.0;
  double threshold = 0.0;        // 1 - sqrt(1 - beta)
  std::array<bool, 4> reject{};  // reject test i iff combined[i] < threshold
};

TestOutcome combined_tests(const PValues& p, double beta);

}  // namespace covstat

#endif  // COVSTAT_STATISTICS_HPP
