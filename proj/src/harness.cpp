#include "covstat/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "covstat/limit_laws.hpp"

namespace covstat {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

bool needs_dp(const ExperimentConfig& config) {
  switch (config.experiment) {
    case ExperimentKind::kClt:
      return config.k > 0 || !config.unions.empty();
    case ExperimentKind::kStable:
      return false;
    default:
      return true;
  }
}

bool needs_z(const ExperimentConfig& config) {
  switch (config.experiment) {
    case ExperimentKind::kClt:
    case ExperimentKind::kJoint:
    case ExperimentKind::kSize:
    case ExperimentKind::kCorollary28:
      return true;
    default:
      return false;
  }
}

// Per-experiment constants resolved once, shared read-only by the workers.
struct RepContext {
  double d_p = 0.0;
  bool use_dp = false;
  bool plugin_m4 = false;
  double m4 = 3.0;
  double a_np = 1.0;
  std::optional<QuantileTable> f4k;
};

RepContext make_context(const ExperimentConfig& config) {
  RepContext ctx;
  ctx.use_dp = needs_dp(config);
  if (ctx.use_dp) ctx.d_p = compute_dp(config.p);
  if (needs_z(config)) {
    switch (config.m4_mode.kind) {
      case M4Mode::Kind::kExact:
        ctx.m4 = exact_m4(config.model);
        if (std::isinf(ctx.m4))
          throw std::domain_error("CLT path requires finite fourth moment");
        break;
      case M4Mode::Kind::kExplicit:
        ctx.m4 = config.m4_mode.value;
        if (!(ctx.m4 >= 1.0) || std::isinf(ctx.m4))
          throw std::invalid_argument("explicit m4 must be finite and >= 1");
        break;
      case M4Mode::Kind::kPlugin:
        ctx.plugin_m4 = true;
        break;
    }
  }
  if (config.experiment == ExperimentKind::kStable)
    ctx.a_np = quantile_a(config.model,
                          static_cast<std::uint64_t>(config.n) * config.p);
  if (config.experiment == ExperimentKind::kSize && config.k >= 2)
    ctx.f4k = QuantileTable::build_f4k(config.k, config.f4k_samples,
                                       config.master_seed);
  return ctx;
}

RepRecord compute_record(const ExperimentConfig& config, const RepContext& ctx,
                         std::uint64_t rep) {
  RandomStream stream = RandomStream::derive(config.master_seed,
                                             StreamDomain::kReplication, rep);
  const DataMatrix data = sample_matrix(config.model, config.p, config.n, stream);

  RepRecord record;
  record.rep = rep;

  if (config.experiment == ExperimentKind::kStable) {
    const CovSummary summary = summarize(data, 0, {}, 0.0);
    const double trace_s = config.trace_s_expectation
                               ? static_cast<double>(config.p)
                               : summary.trace_s;
    record.stable_stat = stable_statistic(trace_s, summary.trace_s2, config.n,
                                          config.p, ctx.a_np);
    return record;
  }

  const CovSummary summary =
      summarize(data, config.k, config.unions, ctx.use_dp ? ctx.d_p : 0.0);
  record.g_top = summary.top_g;
  record.counts = summary.interval_counts;

  if (needs_z(config)) {
    const double m4 = ctx.plugin_m4 ? estimate_m4(data) : ctx.m4;
    record.z_n = z_statistic(summary.trace_s2, config.n, config.p, m4);
  }

  if (config.experiment == ExperimentKind::kSize) {
    const TStatistics t = t_statistics(record.g_top, config.k);
    const PValues p = p_transforms(t, *record.z_n, config.k,
                                   ctx.f4k ? &*ctx.f4k : nullptr);
    const TestOutcome outcome = combined_tests(p, config.beta);
    record.decisions = outcome.reject;
  }
  return record;
}

std::size_t resolved_oracle_reps(const ExperimentConfig& config) {
  return config.oracle_reps > 0 ? config.oracle_reps : config.reps;
}

std::vector<double> stable_oracle_draws(const ExperimentConfig& config) {
  const std::size_t count = resolved_oracle_reps(config);
  std::vector<double> out(count);
  for (std::size_t j = 0; j < count; ++j) {
    RandomStream stream =
        RandomStream::derive(config.master_seed, StreamDomain::kOracle, j);
    out[j] = fourth_power_oracle(config.model, config.n, config.p, stream);
  }
  return out;
}

std::vector<std::vector<double>> cor28_oracle_draws(
    const ExperimentConfig& config) {
  const std::size_t count = resolved_oracle_reps(config);
  std::vector<std::vector<double>> out(count);
  for (std::size_t j = 0; j < count; ++j) {
    RandomStream stream =
        RandomStream::derive(config.master_seed, StreamDomain::kOracle, j);
    out[j] = sample_limit_points(config.k, stream);
  }
  return out;
}

void append_clt_rows(std::span<const RepRecord> records,
                     const ExperimentConfig& config, const RepContext& ctx,
                     std::vector<EstimatorRow>& rows) {
  std::vector<double> zs;
  zs.reserve(records.size());
  for (const auto& r : records) zs.push_back(*r.z_n);
  const double m = static_cast<double>(zs.size());
  double mean = 0.0;
  for (double z : zs) mean += z;
  mean /= m;
  double var = 0.0;
  for (double z : zs) var += (z - mean) * (z - mean);
  var /= m;
  const double sd = std::sqrt(var);
  rows.push_back({"z_ks_normal", ks_statistic(zs, std_normal_cdf), std::nullopt});
  rows.push_back({"z_mean", mean, sd / std::sqrt(m)});
  rows.push_back({"z_sd", sd, std::nullopt});
  if (!ctx.plugin_m4) {
    const double mu = mu_n(config.n, config.p, ctx.m4);
    const double sigma = std::sqrt(sigma_n_sq(config.n, config.p, ctx.m4));
    rows.push_back({"trace_s2_mean", mu + sigma * mean,
                    sigma * sd / std::sqrt(m)});
  }
}

void append_pp_rows(std::span<const RepRecord> records,
                    const ExperimentConfig& config,
                    std::vector<EstimatorRow>& rows) {
  for (std::size_t m = 0; m < config.unions.size(); ++m) {
    std::vector<std::uint64_t> counts;
    counts.reserve(records.size());
    for (const auto& r : records) counts.push_back(r.counts[m]);
    const double lambda = mu_measure(config.unions[m]);
    const PoissonCheck check = poisson_count_check(counts, lambda);
    double mean = 0.0, voids = 0.0;
    for (auto c : counts) {
      mean += static_cast<double>(c);
      if (c == 0) voids += 1.0;
    }
    const double reps = static_cast<double>(counts.size());
    mean /= reps;
    voids /= reps;
    const std::string tag = "u" + std::to_string(m);
    rows.push_back({tag + "_lambda", lambda, std::nullopt});
    rows.push_back({tag + "_mean_count", mean,
                    std::sqrt(lambda / reps)});  // Poisson SE under H0
    rows.push_back({tag + "_void_frac", voids,
                    std::sqrt(voids * (1.0 - voids) / reps)});
    rows.push_back({tag + "_mean_gap", check.mean_gap, std::nullopt});
    rows.push_back({tag + "_void_gap", check.void_gap, std::nullopt});
    rows.push_back({tag + "_chi2", check.chi2, std::nullopt});
  }
}

std::vector<EstimatorRow> compute_aggregates(const ExperimentConfig& config,
                                             const RepContext& ctx,
                                             std::span<const RepRecord> records) {
  std::vector<EstimatorRow> rows;
  switch (config.experiment) {
    case ExperimentKind::kClt:
      append_clt_rows(records, config, ctx, rows);
      break;
    case ExperimentKind::kPointProcess:
      append_pp_rows(records, config, rows);
      break;
    case ExperimentKind::kJoint: {
      append_clt_rows(records, config, ctx, rows);
      append_pp_rows(records, config, rows);
      for (std::size_t m = 0; m < config.unions.size(); ++m)
        for (double y : config.thresholds)
          rows.push_back({"indep_gap_u" + std::to_string(m) + "_y" +
                              fmt_short(y),
                          independence_gap(records, y, m), std::nullopt});
      break;
    }
    case ExperimentKind::kStable: {
      const std::vector<double> oracle = stable_oracle_draws(config);
      std::vector<double> stats;
      stats.reserve(records.size());
      for (const auto& r : records) stats.push_back(*r.stable_stat);
      rows.push_back({"stable_ks_oracle", two_sample_ks(stats, oracle),
                      std::nullopt});
      std::nth_element(stats.begin(), stats.begin() + stats.size() / 2,
                       stats.end());
      rows.push_back({"stable_median", stats[stats.size() / 2], std::nullopt});
      break;
    }
    case ExperimentKind::kSize: {
      const double reps = static_cast<double>(records.size());
      for (std::size_t i = 0; i < 4; ++i) {
        double rate = 0.0;
        for (const auto& r : records)
          if ((*r.decisions)[i]) rate += 1.0;
        rate /= reps;
        rows.push_back({"reject_rate_T" + std::to_string(i + 1), rate,
                        std::sqrt(rate * (1.0 - rate) / reps)});
      }
      break;
    }
    case ExperimentKind::kCorollary28: {
      const auto oracle = cor28_oracle_draws(config);
      const std::vector<double> x_grid = {0.0, 1.0};
      const std::vector<double> y_grid =
          config.thresholds.empty() ? std::vector<double>{0.0}
                                    : config.thresholds;
      const Cor28Report report =
          corollary28_check(records, oracle, y_grid, x_grid);
      for (std::size_t i = 0; i < report.margin_ks.size(); ++i)
        rows.push_back({"cor28_ks_margin" + std::to_string(i + 1),
                        report.margin_ks[i], std::nullopt});
      for (const auto& row : report.joint_gaps) rows.push_back(row);
      break;
    }
  }
  return rows;
}

}  // namespace

std::string experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kClt: return "clt";
    case ExperimentKind::kPointProcess: return "pp";
    case ExperimentKind::kJoint: return "joint";
    case ExperimentKind::kStable: return "stable";
    case ExperimentKind::kSize: return "size";
    case ExperimentKind::kCorollary28: return "cor28";
  }
  return "?";
}

ExperimentKind parse_experiment(std::string_view name) {
  if (name == "clt") return ExperimentKind::kClt;
  if (name == "pp") return ExperimentKind::kPointProcess;
  if (name == "joint") return ExperimentKind::kJoint;
  if (name == "stable") return ExperimentKind::kStable;
  if (name == "size") return ExperimentKind::kSize;
  if (name == "cor28") return ExperimentKind::kCorollary28;
  throw std::invalid_argument("unknown experiment '" + std::string(name) + "'");
}

void validate_config(const ExperimentConfig& config) {
  if (config.reps < 1) throw std::invalid_argument("config: reps >= 1");
  if (config.n < 1 || config.p < 1)
    throw std::invalid_argument("config: n, p >= 1");
  const std::uint64_t pairs =
      static_cast<std::uint64_t>(config.p) * (config.p - 1) / 2;
  if (config.k > pairs)
    throw std::invalid_argument("config: k exceeds p(p-1)/2");
  if (!(config.beta >= 0.0 && config.beta < 1.0))
    throw std::invalid_argument("config: beta in [0,1)");
  if (needs_dp(config) && config.p < 3)
    throw std::invalid_argument(
        "config: p >= 3 required for experiments touching d_p");
  switch (config.experiment) {
    case ExperimentKind::kPointProcess:
    case ExperimentKind::kJoint:
      if (config.unions.empty())
        throw std::invalid_argument(
            "config: point-process experiments require interval unions");
      break;
    case ExperimentKind::kStable: {
      const auto alpha = config.model.tail_index();
      if (!alpha || !(*alpha > 2.0 && *alpha < 4.0))
        throw std::invalid_argument(
            "config: stable experiment requires a model with tail index in "
            "(2,4)");
      break;
    }
    case ExperimentKind::kSize:
    case ExperimentKind::kCorollary28:
      if (config.k < 1) throw std::invalid_argument("config: k >= 1");
      break;
    default:
      break;
  }
  if (config.experiment == ExperimentKind::kJoint && config.thresholds.empty())
    throw std::invalid_argument("config: joint experiment requires thresholds");
}

std::vector<std::string> config_warnings(const ExperimentConfig& config) {
  std::vector<std::string> warnings;
  const auto s = config.model.tail_index();  // finite moment order boundary
  if (s) {
    const double bound = std::pow(static_cast<double>(config.n),
                                  (*s - 2.0) / 4.0);
    if (static_cast<double>(config.p) > bound) {
      warnings.push_back(
          "growth condition violated: p = " + std::to_string(config.p) +
          " exceeds n^((s-2)/4) = " + fmt_short(bound) + " for s = " +
          fmt_short(*s) + "; limit theory is not guaranteed in this regime");
    }
  }
  return warnings;
}

std::string serialize_record(const RepRecord& record) {
  std::string out = "{\"rep\":" + std::to_string(record.rep);
  out += ",\"z_n\":";
  out += record.z_n ? fmt17(*record.z_n) : "null";
  out += ",\"g_top\":[";
  for (std::size_t i = 0; i < record.g_top.size(); ++i) {
    if (i) out += ',';
    out += fmt17(record.g_top[i]);
  }
  out += "],\"counts\":[";
  for (std::size_t i = 0; i < record.counts.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(record.counts[i]);
  }
  out += "],\"stable_stat\":";
  out += record.stable_stat ? fmt17(*record.stable_stat) : "null";
  out += ",\"decisions\":";
  if (record.decisions) {
    out += '[';
    for (std::size_t i = 0; i < 4; ++i) {
      if (i) out += ',';
      out += (*record.decisions)[i] ? "true" : "false";
    }
    out += ']';
  } else {
    out += "null";
  }
  out += '}';
  return out;
}

RepRecord parse_record(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  RepRecord record;
  record.rep = j.at("rep").get<std::uint64_t>();
  if (!j.at("z_n").is_null()) record.z_n = j.at("z_n").get<double>();
  record.g_top = j.at("g_top").get<std::vector<double>>();
  record.counts = j.at("counts").get<std::vector<std::uint64_t>>();
  if (!j.at("stable_stat").is_null())
    record.stable_stat = j.at("stable_stat").get<double>();
  if (!j.at("decisions").is_null()) {
    const auto d = j.at("decisions").get<std::vector<bool>>();
    if (d.size() != 4)
      throw std::runtime_error("record: decisions must have 4 entries");
    std::array<bool, 4> arr{};
    std::copy(d.begin(), d.end(), arr.begin());
    record.decisions = arr;
  }
  return record;
}

EmpiricalSummary run_experiment(const ExperimentConfig& config,
                                const RecordSink& sink) {
  validate_config(config);
  const RepContext ctx = make_context(config);

  std::vector<RepRecord> records(config.reps);
  const unsigned workers = std::max(1u, config.workers);

  if (workers == 1) {
    for (std::uint64_t rep = 0; rep < config.reps; ++rep) {
      records[rep] = compute_record(config, ctx, rep);
      if (sink) sink(serialize_record(records[rep]));
    }
  } else {
    // Workers claim replication indices; the caller thread appends records
    // to the sink strictly in index order as they complete.
    std::atomic<std::uint64_t> next{0};
    std::mutex mutex;
    std::condition_variable cv;
    std::vector<std::uint8_t> done(config.reps, 0);
    std::exception_ptr failure;

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::uint64_t rep = next.fetch_add(1);
          if (rep >= config.reps) return;
          try {
            records[rep] = compute_record(config, ctx, rep);
          } catch (...) {
            std::lock_guard<std::mutex> lock(mutex);
            if (!failure) failure = std::current_exception();
            done[rep] = 2;
            cv.notify_all();
            continue;
          }
          {
            std::lock_guard<std::mutex> lock(mutex);
            done[rep] = 1;
          }
          cv.notify_all();
        }
      });
    }

    for (std::uint64_t rep = 0; rep < config.reps; ++rep) {
      std::unique_lock<std::mutex> lock(mutex);
      cv.wait(lock, [&] { return done[rep] != 0; });
      if (done[rep] == 1 && sink) {
        const std::string line = serialize_record(records[rep]);
        lock.unlock();
        sink(line);
      }
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  EmpiricalSummary summary;
  summary.records = std::move(records);
  summary.aggregates = compute_aggregates(config, ctx, summary.records);
  summary.experiment = experiment_name(config.experiment);
  summary.model = config.model.name();
  summary.master_seed = config.master_seed;
  return summary;
}

std::vector<EstimatorRow> recompute_aggregates(
    const ExperimentConfig& config, std::span<const RepRecord> records) {
  validate_config(config);
  const RepContext ctx = make_context(config);
  return compute_aggregates(config, ctx, records);
}

double ks_statistic(std::vector<double> samples,
                    const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks_statistic: empty input");
  std::sort(samples.begin(), samples.end());
  const double m = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, f - static_cast<double>(i) / m);
    d = std::max(d, static_cast<double>(i + 1) / m - f);
  }
  return d;
}

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("two_sample_ks: empty input");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double m = static_cast<double>(a.size());
  const double n = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / m -
                             static_cast<double>(j) / n));
  }
  if (i < a.size()) d = std::max(d, 1.0 - static_cast<double>(j) / n);
  if (j < b.size()) d = std::max(d, 1.0 - static_cast<double>(i) / m);
  return d;
}

PoissonCheck poisson_count_check(std::span<const std::uint64_t> counts,
                                 double lambda) {
  if (counts.empty())
    throw std::invalid_argument("poisson_count_check: empty input");
  if (lambda < 0.0)
    throw std::invalid_argument("poisson_count_check: lambda >= 0");
  const double m = static_cast<double>(counts.size());
  double mean = 0.0, voids = 0.0;
  std::uint64_t max_count = 0;
  for (auto c : counts) {
    mean += static_cast<double>(c);
    if (c == 0) voids += 1.0;
    max_count = std::max(max_count, c);
  }
  mean /= m;
  voids /= m;

  PoissonCheck check;
  check.mean_gap = std::abs(mean - lambda);
  check.void_gap = std::abs(voids - std::exp(-lambda));

  // Chi-square on bins {0, 1, ..., J-1, >= J}; J chosen so the lumped tail
  // keeps an expected count of at least 5.
  std::vector<double> expected;
  double tail_prob = 1.0;
  for (std::uint64_t jj = 0; jj <= max_count; ++jj) {
    const double pj = poisson_pmf(jj, lambda);
    if (m * (tail_prob - pj) < 5.0) break;
    expected.push_back(m * pj);
    tail_prob -= pj;
  }
  std::vector<double> observed(expected.size() + 1, 0.0);
  for (auto c : counts) {
    const std::size_t bin = std::min<std::size_t>(c, expected.size());
    observed[bin] += 1.0;
  }
  double chi2 = 0.0;
  for (std::size_t bin = 0; bin < expected.size(); ++bin)
    if (expected[bin] > 0.0)
      chi2 += (observed[bin] - expected[bin]) * (observed[bin] - expected[bin]) /
              expected[bin];
  const double tail_expected = m * tail_prob;
  if (tail_expected > 0.0)
    chi2 += (observed.back() - tail_expected) * (observed.back() - tail_expected) /
            tail_expected;
  check.chi2 = chi2;
  return check;
}

double independence_gap(std::span<const RepRecord> records, double y,
                        std::size_t union_index) {
  if (records.empty())
    throw std::invalid_argument("independence_gap: empty records");
  const double m = static_cast<double>(records.size());
  double p_a = 0.0, p_b = 0.0, p_ab = 0.0;
  for (const auto& r : records) {
    if (!r.z_n || union_index >= r.counts.size())
      throw std::invalid_argument(
          "independence_gap: records lack z_n or the requested count");
    const bool a = *r.z_n <= y;
    const bool b = r.counts[union_index] == 0;
    p_a += a;
    p_b += b;
    p_ab += a && b;
  }
  p_a /= m;
  p_b /= m;
  p_ab /= m;
  return std::abs(p_ab - p_a * p_b);
}

Cor28Report corollary28_check(std::span<const RepRecord> records,
                              const std::vector<std::vector<double>>& oracle,
                              std::span<const double> y_grid,
                              std::span<const double> x_grid) {
  if (records.empty() || oracle.empty())
    throw std::invalid_argument("corollary28_check: empty input");
  const std::size_t k = oracle.front().size();
  Cor28Report report;
  for (std::size_t margin = 0; margin < k; ++margin) {
    std::vector<double> sample_a, sample_b;
    sample_a.reserve(records.size());
    sample_b.reserve(oracle.size());
    for (const auto& r : records) {
      if (r.g_top.size() < k)
        throw std::invalid_argument("corollary28_check: records lack margins");
      sample_a.push_back(r.g_top[margin]);
    }
    for (const auto& draw : oracle) sample_b.push_back(draw[margin]);
    report.margin_ks.push_back(two_sample_ks(std::move(sample_a),
                                             std::move(sample_b)));
  }

  const double m = static_cast<double>(records.size());
  for (double y : y_grid) {
    for (double x : x_grid) {
      double p_a = 0.0, p_b = 0.0, p_ab = 0.0;
      for (const auto& r : records) {
        if (!r.z_n)
          throw std::invalid_argument("corollary28_check: records lack z_n");
        const bool a = *r.z_n <= y;
        const bool b = r.g_top[0] <= x;
        p_a += a;
        p_b += b;
        p_ab += a && b;
      }
      report.joint_gaps.push_back(
          {"cor28_joint_gap_y" + fmt_short(y) + "_x" + fmt_short(x),
           std::abs(p_ab / m - (p_a / m) * (p_b / m)), std::nullopt});
    }
  }
  return report;
}

SizeReport size_experiment(const ExperimentConfig& config,
                           const RecordSink& sink) {
  if (config.experiment != ExperimentKind::kSize)
    throw std::invalid_argument("size_experiment: config.experiment must be size");
  const EmpiricalSummary summary = run_experiment(config, sink);
  SizeReport report;
  const double reps = static_cast<double>(summary.records.size());
  for (std::size_t i = 0; i < 4; ++i) {
    double rate = 0.0;
    for (const auto& r : summary.records)
      if ((*r.decisions)[i]) rate += 1.0;
    rate /= reps;
    report.reject_rate[i] = rate;
    report.stderr_rate[i] = std::sqrt(rate * (1.0 - rate) / reps);
  }
  return report;
}

}  // namespace covstat
