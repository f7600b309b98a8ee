#ifndef COVSTAT_HARNESS_HPP
#define COVSTAT_HARNESS_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "covstat/cov_engine.hpp"
#include "covstat/distributions.hpp"
#include "covstat/statistics.hpp"

namespace covstat {

enum class ExperimentKind {
  kClt,
  kPointProcess,
  kJoint,
  kStable,
  kSize,
  kCorollary28,
};

std::string experiment_name(ExperimentKind kind);
ExperimentKind parse_experiment(std::string_view name);

struct M4Mode {
  enum class Kind { kExact, kPlugin, kExplicit };
  Kind kind = Kind::kExact;
  double value = 0.0;  // used by kExplicit

  static M4Mode exact() { return {Kind::kExact, 0.0}; }
  static M4Mode plugin() { return {Kind::kPlugin, 0.0}; }
  static M4Mode explicit_value(double v) { return {Kind::kExplicit, v}; }
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kClt;
  NullModel model = NullModel::standard_normal();
  std::size_t n = 100;
  std::size_t p = 10;
  std::size_t reps = 1;
  std::size_t k = 0;
  double beta = 0.05;
  std::vector<IntervalUnion> unions;
  std::vector<double> thresholds;  // y grid for joint/cor28 factorization
  std::uint64_t master_seed = 0;
  M4Mode m4_mode = M4Mode::exact();
  bool trace_s_expectation = false;  // replace tr(S) by E[tr(S)] = p
  unsigned workers = 1;
  std::size_t oracle_reps = 0;         // 0 means "same as reps"
  std::size_t f4k_samples = 1000000;   // table size for the size experiment
};

// Throws on invalid combinations (e.g. stable experiment with a finite-m4
// model). Growth-condition violations are warnings, not errors.
void validate_config(const ExperimentConfig& config);
std::vector<std::string> config_warnings(const ExperimentConfig& config);

// One replication worth of output. Unused fields stay empty and serialize
// as null.
struct RepRecord {
  std::uint64_t rep = 0;
  std::optional<double> z_n;
  std::vector<double> g_top;
  std::vector<std::uint64_t> counts;
  std::optional<double> stable_stat;
  std::optional<std::array<bool, 4>> decisions;
};

// One JSON object per line, fixed key order, 17 significant digits.
std::string serialize_record(const RepRecord& record);
RepRecord parse_record(const std::string& line);

struct EstimatorRow {
  std::string estimator;
  double value = 0.0;
  std::optional<double> stderr_value;
};

struct EmpiricalSummary {
  std::vector<RepRecord> records;
  std::vector<EstimatorRow> aggregates;
  // Provenance: the resolved configuration that produced the records; per-rep
  // streams are derive(master_seed, kReplication, rep).
  std::string experiment;
  std::string model;
  std::uint64_t master_seed = 0;
};

// Called once per record, in replication-index order, with the serialized
// line. Output is byte-identical regardless of worker count.
using RecordSink = std::function<void(const std::string& line)>;

EmpiricalSummary run_experiment(const ExperimentConfig& config,
                                const RecordSink& sink = {});

// Recomputes aggregates from persisted records; equals the in-run aggregates
// exactly (oracle draws are regenerated deterministically from the config).
std::vector<EstimatorRow> recompute_aggregates(
    const ExperimentConfig& config, std::span<const RepRecord> records);

// sup over the sorted sample of max(F(x_(i)) - (i-1)/m, i/m - F(x_(i))).
double ks_statistic(std::vector<double> samples,
                    const std::function<double(double)>& cdf);

double two_sample_ks(std::vector<double> a, std::vector<double> b);

struct PoissonCheck {
  double mean_gap = 0.0;  // |empirical mean - lambda|
  double void_gap = 0.0;  // |empirical P(count = 0) - e^-lambda|
  double chi2 = 0.0;      // binned frequencies vs poisson_pmf
};

PoissonCheck poisson_count_check(std::span<const std::uint64_t> counts,
                                 double lambda);

// |P(z <= y, count = 0) - P(z <= y) P(count = 0)| over the records, with
// counts[union_index] as the point-process count for the tested union.
double independence_gap(std::span<const RepRecord> records, double y,
                        std::size_t union_index);

struct Cor28Report {
  std::vector<double> margin_ks;      // two-sample KS per order statistic
  std::vector<EstimatorRow> joint_gaps;
};

// Compares the empirical law of (G_(1),...,G_(k)) against oracle draws of
// (-log Gamma_1,...,-log Gamma_k) margin by margin, plus the factorization
// gap with z_n on the (y, x) grid.
Cor28Report corollary28_check(std::span<const RepRecord> records,
                              const std::vector<std::vector<double>>& oracle,
                              std::span<const double> y_grid,
                              std::span<const double> x_grid);

struct SizeReport {
  std::array<double, 4> reject_rate{};
  std::array<double, 4> stderr_rate{};
};

// Empirical rejection frequencies of the four combined tests under H0.
SizeReport size_experiment(const ExperimentConfig& config,
                           const RecordSink& sink = {});

}  // namespace covstat

#endif  // COVSTAT_HARNESS_HPP
