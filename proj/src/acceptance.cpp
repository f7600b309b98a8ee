#include "covstat/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "covstat/cli_io.hpp"
#include "covstat/harness.hpp"
#include "covstat/limit_laws.hpp"
#include "covstat/statistics.hpp"

namespace covstat {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// Scale knobs: the full run pins the documented sizes and tolerances; the
// quick run shrinks replication counts and widens the statistical bands by
// the matching 1/sqrt(reps) factor so it stays a meaningful smoke check.
struct Params {
  std::size_t c1_matrices;
  std::size_t c2_reps;
  double c2_mc_tol;
  std::size_t c3_reps;
  double c3_tol;
  std::size_t c456_n, c456_p, c456_reps;
  double c4_mean0_tol, c4_void_tol, c4_mean1_tol;
  double c5_tol;
  double c6_tol;
  std::size_t c7_n, c7_p, c7_reps;
  double c7_tol, c7_delta_tol;
  std::size_t c8_draws, c8_f4k_samples;
  double c8_tol;
  std::size_t c9_n, c9_p, c9_reps;
  double c9_lo, c9_hi;
};

Params full_params() {
  Params q;
  q.c1_matrices = 1000;
  q.c2_reps = 20000;
  q.c2_mc_tol = 0.1;
  q.c3_reps = 5000;
  q.c3_tol = 0.05;
  q.c456_n = 2000;
  q.c456_p = 100;
  q.c456_reps = 5000;
  q.c4_mean0_tol = 0.1;
  q.c4_void_tol = 0.05;
  q.c4_mean1_tol = 0.05;
  q.c5_tol = 0.025;
  q.c6_tol = 0.06;
  q.c7_n = 500;
  q.c7_p = 100;
  q.c7_reps = 2000;
  q.c7_tol = 0.06;
  q.c7_delta_tol = 0.03;
  q.c8_draws = 1000000;
  q.c8_f4k_samples = 1000000;
  q.c8_tol = 0.005;
  q.c9_n = 2000;
  q.c9_p = 100;
  q.c9_reps = 10000;
  q.c9_lo = 0.02;
  q.c9_hi = 0.09;
  return q;
}

Params quick_params() {
  Params q = full_params();
  q.c1_matrices = 200;
  q.c2_reps = 2000;
  q.c2_mc_tol = 0.32;
  q.c3_reps = 500;
  q.c3_tol = 0.1;
  q.c456_n = 500;
  q.c456_p = 50;
  q.c456_reps = 600;
  q.c4_mean0_tol = 0.3;
  q.c4_void_tol = 0.15;
  q.c4_mean1_tol = 0.15;
  q.c5_tol = 0.075;
  q.c6_tol = 0.18;
  q.c7_n = 200;
  q.c7_p = 50;
  q.c7_reps = 400;
  q.c7_tol = 0.14;
  q.c7_delta_tol = 0.07;
  q.c8_draws = 100000;
  q.c8_f4k_samples = 100000;
  q.c8_tol = 0.016;
  q.c9_n = 800;
  q.c9_p = 60;
  q.c9_reps = 800;
  q.c9_lo = 0.005;
  q.c9_hi = 0.12;
  return q;
}

double find_value(const std::vector<EstimatorRow>& rows,
                  const std::string& name) {
  for (const auto& row : rows)
    if (row.estimator == name) return row.value;
  throw std::runtime_error("missing estimator row " + name);
}

using Clock = std::chrono::steady_clock;

CriterionResult timed(int id, const std::string& name,
                      const std::function<std::pair<bool, std::string>()>& fn) {
  CriterionResult result;
  result.id = id;
  result.name = name;
  const auto start = Clock::now();
  try {
    const auto [pass, detail] = fn();
    result.pass = pass;
    result.detail = detail;
  } catch (const std::exception& e) {
    result.pass = false;
    result.detail = std::string("exception: ") + e.what();
  }
  result.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

// --- criterion 1: four-term decomposition identity ---

CriterionResult check_decomposition(const Params& q, std::uint64_t seed) {
  return timed(1, "stable_decomposition_identity", [&] {
    RandomStream stream = RandomStream::derive(seed, StreamDomain::kAux, 1);
    const NullModel models[2] = {NullModel::standard_normal(),
                                 NullModel::symmetric_pareto(3.0)};
    double worst = 0.0;
    for (std::size_t it = 0; it < q.c1_matrices; ++it) {
      const NullModel& model = models[it % 2];
      const std::size_t p = 1 + stream.next_u64() % 16;
      const std::size_t n = 1 + stream.next_u64() % 16;
      const double a_np = 0.5 + 9.5 * stream.next_unit();
      const DataMatrix data = sample_matrix(model, p, n, stream);
      const CovSummary s = summarize(data, 0, {}, 0.0);
      const double direct =
          stable_statistic(s.trace_s, s.trace_s2, n, p, a_np);
      const StableDecomposition d = stable_decomposition(data, a_np);
      const double err = std::abs(direct - d.total()) /
                         std::max(1.0, std::abs(direct));
      worst = std::max(worst, err);
    }
    return std::make_pair(worst <= 1e-10,
                          "max relative gap " + fmt(worst) + " over " +
                              std::to_string(q.c1_matrices) +
                              " matrices (tol 1e-10)");
  });
}

// --- criterion 2: exact mean of tr(S^2) ---

double enumerate_bernoulli_mean(std::size_t p, std::size_t n) {
  const std::size_t bits = p * n;
  const std::uint64_t total = 1ULL << bits;
  double sum = 0.0;
  std::vector<double> values(p * n);
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    for (std::size_t b = 0; b < bits; ++b)
      values[b] = (mask >> b) & 1 ? 1.0 : -1.0;
    const DataMatrix data(p, n, values);
    sum += summarize(data, 0, {}, 0.0).trace_s2;
  }
  return sum / static_cast<double>(total);
}

CriterionResult check_exact_mean(const Params& q, std::uint64_t seed,
                                 unsigned workers) {
  return timed(2, "mu_n_exact_mean", [&] {
    std::string detail;
    bool pass = true;
    const std::pair<std::size_t, std::size_t> cases[3] = {{2, 2}, {2, 4}, {3, 3}};
    for (const auto& [p, n] : cases) {
      const double enumerated = enumerate_bernoulli_mean(p, n);
      const double expected = mu_n(n, p, 1.0);
      const double gap = std::abs(enumerated - expected);
      pass = pass && gap <= 1e-12;
      detail += "enum(p=" + std::to_string(p) + ",n=" + std::to_string(n) +
                ") gap " + fmt(gap) + "; ";
    }
    ExperimentConfig config;
    config.experiment = ExperimentKind::kClt;
    config.model = NullModel::standard_normal();
    config.n = 100;
    config.p = 50;
    config.reps = q.c2_reps;
    config.master_seed = seed + 2;
    config.workers = workers;
    const EmpiricalSummary summary = run_experiment(config);
    const double mc_mean = find_value(summary.aggregates, "trace_s2_mean");
    const double mc_gap = std::abs(mc_mean - 75.5);
    pass = pass && mc_gap <= q.c2_mc_tol;
    detail += "MC mean " + fmt(mc_mean) + " vs 75.5 (tol " + fmt(q.c2_mc_tol) +
              ")";
    return std::make_pair(pass, detail);
  });
}

// --- criterion 3: CLT for the Frobenius norm ---

CriterionResult check_clt(const Params& q, std::uint64_t seed,
                          unsigned workers) {
  return timed(3, "clt_ks_normal", [&] {
    std::string detail;
    bool pass = true;
    const NullModel models[2] = {NullModel::standard_normal(),
                                 NullModel::symmetric_bernoulli()};
    for (int m = 0; m < 2; ++m) {
      ExperimentConfig config;
      config.experiment = ExperimentKind::kClt;
      config.model = models[m];
      config.n = 1000;
      config.p = 100;
      config.reps = q.c3_reps;
      config.master_seed = seed + 30 + m;
      config.workers = workers;
      const EmpiricalSummary summary = run_experiment(config);
      const double ks = find_value(summary.aggregates, "z_ks_normal");
      pass = pass && ks < q.c3_tol;
      detail += config.model.name() + " KS " + fmt(ks) + "; ";
    }
    detail += "(tol " + fmt(q.c3_tol) + ")";
    return std::make_pair(pass, detail);
  });
}

// --- criteria 4-6 share one joint run ---

struct JointRun {
  EmpiricalSummary summary;
  ExperimentConfig config;
};

JointRun run_joint(const Params& q, std::uint64_t seed, unsigned workers) {
  JointRun run;
  run.config.experiment = ExperimentKind::kJoint;
  run.config.model = NullModel::standard_normal();
  run.config.n = q.c456_n;
  run.config.p = q.c456_p;
  run.config.reps = q.c456_reps;
  run.config.k = 3;
  run.config.unions = {IntervalUnion::open(0.0, kInf),
                       IntervalUnion::open(1.0, kInf)};
  run.config.thresholds = {-1.0, 0.0, 1.0};
  run.config.master_seed = seed + 4;
  run.config.workers = workers;
  run.summary = run_experiment(run.config);
  return run;
}

CriterionResult check_point_process(const JointRun& run, const Params& q) {
  return timed(4, "poisson_point_process", [&] {
    std::vector<std::uint64_t> counts0, counts1;
    for (const auto& r : run.summary.records) {
      counts0.push_back(r.counts[0]);
      counts1.push_back(r.counts[1]);
    }
    const PoissonCheck c0 = poisson_count_check(counts0, 1.0);
    const PoissonCheck c1 =
        poisson_count_check(counts1, std::exp(-1.0));
    const bool pass = c0.mean_gap < q.c4_mean0_tol &&
                      c0.void_gap < q.c4_void_tol &&
                      c1.mean_gap < q.c4_mean1_tol;
    return std::make_pair(
        pass, "U=(0,inf): mean gap " + fmt(c0.mean_gap) + " (tol " +
                  fmt(q.c4_mean0_tol) + "), void gap " + fmt(c0.void_gap) +
                  " (tol " + fmt(q.c4_void_tol) + "); U=(1,inf): mean gap " +
                  fmt(c1.mean_gap) + " (tol " + fmt(q.c4_mean1_tol) + ")");
  });
}

CriterionResult check_joint_independence(const JointRun& run, const Params& q) {
  return timed(5, "joint_independence_gaps", [&] {
    double worst = 0.0;
    for (std::size_t m = 0; m < run.config.unions.size(); ++m)
      for (double y : run.config.thresholds)
        worst = std::max(
            worst, independence_gap(run.summary.records, y, m));
    return std::make_pair(worst < q.c5_tol,
                          "max gap " + fmt(worst) + " over y grid x unions "
                          "(tol " + fmt(q.c5_tol) + ")");
  });
}

CriterionResult check_cor28(const JointRun& run, const Params& q) {
  return timed(6, "cor28_margin_ks", [&] {
    std::vector<std::vector<double>> oracle(run.summary.records.size());
    for (std::size_t j = 0; j < oracle.size(); ++j) {
      RandomStream stream = RandomStream::derive(run.config.master_seed,
                                                 StreamDomain::kOracle, j);
      oracle[j] = sample_limit_points(run.config.k, stream);
    }
    const std::vector<double> y_grid = {0.0};
    const std::vector<double> x_grid = {0.0, 1.0};
    const Cor28Report report =
        corollary28_check(run.summary.records, oracle, y_grid, x_grid);
    bool pass = true;
    std::string detail = "margin KS:";
    for (double ks : report.margin_ks) {
      pass = pass && ks < q.c6_tol;
      detail += ' ' + fmt(ks);
    }
    detail += " (tol " + fmt(q.c6_tol) + ")";
    return std::make_pair(pass, detail);
  });
}

// --- criterion 7: stable limit vs fourth-power oracle ---

CriterionResult check_stable(const Params& q, std::uint64_t seed,
                             unsigned workers) {
  return timed(7, "stable_two_sample_ks", [&] {
    ExperimentConfig config;
    config.experiment = ExperimentKind::kStable;
    config.model = NullModel::symmetric_pareto(3.0);
    config.n = q.c7_n;
    config.p = q.c7_p;
    config.reps = q.c7_reps;
    config.master_seed = seed + 7;
    config.workers = workers;
    const EmpiricalSummary with_data = run_experiment(config);
    config.trace_s_expectation = true;
    const EmpiricalSummary with_expectation = run_experiment(config);
    const double ks1 = find_value(with_data.aggregates, "stable_ks_oracle");
    const double ks2 =
        find_value(with_expectation.aggregates, "stable_ks_oracle");
    const double delta = std::abs(ks1 - ks2);
    const bool pass = ks1 < q.c7_tol && delta < q.c7_delta_tol;
    return std::make_pair(
        pass, "KS " + fmt(ks1) + " (tol " + fmt(q.c7_tol) +
                  "); trace-s=expectation KS " + fmt(ks2) + ", change " +
                  fmt(delta) + " (tol " + fmt(q.c7_delta_tol) + ")");
  });
}

// --- criterion 8: closed-form spacing laws vs Gamma-ratio oracle ---

CriterionResult check_closed_forms(const Params& q, std::uint64_t seed) {
  return timed(8, "limit_law_closed_forms", [&] {
    bool pass = true;
    std::string detail;
    const std::size_t ks[4] = {2, 3, 5, 10};
    for (std::size_t idx = 0; idx < 4; ++idx) {
      const std::size_t k = ks[idx];
      RandomStream stream =
          RandomStream::derive(seed + 8, StreamDomain::kOracle, k);
      std::vector<double> t2(q.c8_draws), t3(q.c8_draws);
      for (std::size_t s = 0; s < q.c8_draws; ++s) {
        const std::vector<double> pts = sample_limit_points(k, stream);
        t2[s] = pts.front() - pts.back();
        double max_spacing = 0.0;
        for (std::size_t i = 1; i < k; ++i)
          max_spacing = std::max(max_spacing, pts[i - 1] - pts[i]);
        t3[s] = max_spacing;
      }
      const double gap2 = ks_statistic(
          std::move(t2), [k](double x) { return f2k_cdf(x, k); });
      const double gap3 = ks_statistic(
          std::move(t3), [k](double x) { return f3k_cdf(x, k); });
      pass = pass && gap2 < q.c8_tol && gap3 < q.c8_tol;
      detail += "k=" + std::to_string(k) + ": f2 " + fmt(gap2) + " f3 " +
                fmt(gap3) + "; ";
    }
    // k = 2 special case of the squared-spacing law has the closed form
    // 1 - e^-sqrt(x).
    const QuantileTable table =
        QuantileTable::build_f4k(2, q.c8_f4k_samples, seed + 80);
    double worst = 0.0;
    for (int j = 1; j <= 20; ++j) {
      const double prob = static_cast<double>(j) / 21.0;
      const double x = std::log1p(-prob) * std::log1p(-prob);
      worst = std::max(worst,
                       std::abs(table.cdf(x) - (1.0 - std::exp(-std::sqrt(x)))));
    }
    pass = pass && worst < q.c8_tol;
    detail += "f4k(k=2) gap " + fmt(worst) + " (tol " + fmt(q.c8_tol) + ")";
    return std::make_pair(pass, detail);
  });
}

// --- criterion 9: empirical test level ---

CriterionResult check_test_level(const Params& q, std::uint64_t seed,
                                 unsigned workers) {
  return timed(9, "combined_test_level", [&] {
    ExperimentConfig config;
    config.experiment = ExperimentKind::kSize;
    config.model = NullModel::standard_normal();
    config.n = q.c9_n;
    config.p = q.c9_p;
    config.reps = q.c9_reps;
    config.k = 5;
    config.beta = 0.05;
    config.master_seed = seed + 9;
    config.workers = workers;
    const SizeReport report = size_experiment(config);
    bool pass = true;
    std::string detail = "rates:";
    for (double rate : report.reject_rate) {
      pass = pass && rate >= q.c9_lo && rate <= q.c9_hi;
      detail += ' ' + fmt(rate);
    }
    detail += " (band [" + fmt(q.c9_lo) + "," + fmt(q.c9_hi) + "])";
    for (double beta : {0.01, 0.05, 0.1}) {
      const double threshold = 1.0 - std::sqrt(1.0 - beta);
      const double level_gap = std::abs(minuv_cdf(threshold) - beta);
      pass = pass && level_gap <= 1e-12;
    }
    detail += "; minuv level identity to 1e-12";
    return std::make_pair(pass, detail);
  });
}

// --- criterion 10: blocked-vs-naive equivalence and full determinism ---

struct NaiveReference {
  double trace_s = 0.0;
  double trace_s2 = 0.0;
  std::vector<double> top_g;
  std::vector<std::uint64_t> counts;
};

NaiveReference naive_summary(const DataMatrix& data, std::size_t k,
                             const std::vector<IntervalUnion>& unions,
                             double d_p) {
  NaiveReference ref;
  const std::size_t p = data.p();
  const std::size_t n = data.n();
  for (double v : data.values()) ref.trace_s += v * v;
  ref.trace_s /= static_cast<double>(n);
  long double trs2 = 0.0L;
  for (std::size_t i = 0; i < p; ++i) {
    const double sii =
        detail::row_dot(data.row(i), data.row(i)) / static_cast<double>(n);
    trs2 += static_cast<long double>(sii) * sii;
  }
  const std::vector<double> offdiag = full_offdiag(data);
  for (double s : offdiag) trs2 += 2.0L * s * s;
  ref.trace_s2 = static_cast<double>(trs2);

  struct Entry {
    double g;
    std::size_t i, j;
  };
  std::vector<Entry> entries;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j, ++idx)
      entries.push_back({normalize_g(offdiag[idx], n, d_p), i, j});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.g != b.g) return a.g > b.g;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  for (std::size_t r = 0; r < std::min(k, entries.size()); ++r)
    ref.top_g.push_back(entries[r].g);
  ref.counts.assign(unions.size(), 0);
  for (const auto& e : entries)
    for (std::size_t m = 0; m < unions.size(); ++m)
      if (unions[m].contains(e.g)) ++ref.counts[m];
  return ref;
}

CriterionResult check_engineering(std::uint64_t seed,
                                  const std::filesystem::path& out_dir) {
  return timed(10, "engineering_equivalence_determinism", [&] {
    bool pass = true;
    std::string detail;

    // Blocked vs naive on random shapes, block sizes and thread counts.
    RandomStream stream = RandomStream::derive(seed, StreamDomain::kAux, 10);
    double worst_rel = 0.0;
    for (int it = 0; it < 30 && pass; ++it) {
      const std::size_t p = 2 + stream.next_u64() % 63;
      const std::size_t n = 1 + stream.next_u64() % 64;
      const NullModel model = (it % 3 == 0)
                                  ? NullModel::symmetric_bernoulli()
                                  : NullModel::standard_normal();
      const DataMatrix data = sample_matrix(model, p, n, stream);
      const double d_p = 0.5 + stream.next_unit();
      const std::uint64_t pairs = static_cast<std::uint64_t>(p) * (p - 1) / 2;
      const std::size_t k =
          std::min<std::uint64_t>(1 + stream.next_u64() % 8, pairs);
      const std::vector<IntervalUnion> unions = {
          IntervalUnion::open(0.0, kInf), IntervalUnion::open(-1.0, 2.0),
          IntervalUnion::whole_line()};
      SummarizeOptions options;
      options.block = 1 + stream.next_u64() % (p + 1);
      options.threads = 1 + static_cast<unsigned>(stream.next_u64() % 3);
      const CovSummary got = summarize(data, k, unions, d_p, options);
      const NaiveReference want = naive_summary(data, k, unions, d_p);
      const double rel_s = std::abs(got.trace_s - want.trace_s) /
                           std::max(1e-300, std::abs(want.trace_s));
      const double rel_s2 = std::abs(got.trace_s2 - want.trace_s2) /
                            std::max(1e-300, std::abs(want.trace_s2));
      worst_rel = std::max({worst_rel, rel_s, rel_s2});
      if (rel_s > 1e-12 || rel_s2 > 1e-12) pass = false;
      if (got.top_g != want.top_g) pass = false;
      if (got.interval_counts != want.counts) pass = false;
      if (got.interval_counts.back() != pairs) pass = false;
    }
    detail += "blocked-vs-naive worst trace rel err " + fmt(worst_rel) + "; ";

    // Byte-identical records across 1, 4 and 8 workers.
    ExperimentConfig config;
    config.experiment = ExperimentKind::kJoint;
    config.model = NullModel::standard_normal();
    config.n = 100;
    config.p = 20;
    config.reps = 64;
    config.k = 3;
    config.unions = {IntervalUnion::open(0.0, kInf)};
    config.thresholds = {0.0};
    config.master_seed = seed;
    std::vector<std::string> outputs;
    for (unsigned workers : {1u, 4u, 8u}) {
      config.workers = workers;
      std::string bytes;
      run_experiment(config, [&](const std::string& line) {
        bytes += line;
        bytes += '\n';
      });
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(out_dir /
                        ("records_w" + std::to_string(workers) + ".jsonl"));
        f << bytes;
      }
      outputs.push_back(std::move(bytes));
    }
    const bool identical =
        outputs[0] == outputs[1] && outputs[1] == outputs[2];
    pass = pass && identical;
    detail += identical ? "records byte-identical across 1/4/8 workers"
                        : "records DIFFER across worker counts";
    return std::make_pair(pass, detail);
  });
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options) {
  const Params q = options.full ? full_params() : quick_params();
  unsigned workers = options.workers;
  if (workers == 0)
    workers = std::max(1u, std::thread::hardware_concurrency());

  std::vector<CriterionResult> results;
  results.push_back(check_decomposition(q, options.seed));
  results.push_back(check_exact_mean(q, options.seed, workers));
  results.push_back(check_clt(q, options.seed, workers));
  const JointRun joint = run_joint(q, options.seed, workers);
  results.push_back(check_point_process(joint, q));
  results.push_back(check_joint_independence(joint, q));
  results.push_back(check_cor28(joint, q));
  results.push_back(check_stable(q, options.seed, workers));
  results.push_back(check_closed_forms(q, options.seed));
  results.push_back(check_test_level(q, options.seed, workers));
  results.push_back(check_engineering(options.seed, options.out_dir));
  return results;
}

}  // namespace covstat
