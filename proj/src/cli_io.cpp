#include "covstat/cli_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "covstat/acceptance.hpp"
#include "covstat/limit_laws.hpp"

namespace covstat {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Fixed seed for the F4k table used by the `test` subcommand, so a data
// analysis is reproducible without any flag.
constexpr std::uint64_t kTestTableSeed = 0x7461626c65ULL;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

bool parse_double_cell(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  char* end = nullptr;
  out = std::strtod(cell.c_str(), &end);
  return end == cell.c_str() + cell.size();
}

std::string trim(std::string s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && is_space(s[i])) ++i;
  return s.substr(i);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, sep)) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) cells.emplace_back();
  return cells;
}

double parse_endpoint(const std::string& text) {
  if (text == "inf" || text == "+inf") return kInf;
  if (text == "-inf") return -kInf;
  double v = 0.0;
  if (!parse_double_cell(text, v))
    throw std::invalid_argument("bad interval endpoint '" + text + "'");
  return v;
}

std::string union_to_string(const IntervalUnion& u) {
  std::string out;
  for (std::size_t i = 0; i < u.intervals().size(); ++i) {
    const Interval& iv = u.intervals()[i];
    if (i) out += " u ";
    out += '(' + fmt6(iv.lower) + ',' + fmt6(iv.upper) + ')';
  }
  return out;
}

}  // namespace

std::vector<IntervalUnion> parse_union_spec(const std::string& spec) {
  std::vector<IntervalUnion> unions;
  if (trim(spec).empty()) return unions;
  for (const std::string& part : split(spec, ';')) {
    const auto cells = split(part, ',');
    if (cells.size() != 2)
      throw std::invalid_argument("union spec: expected 'a,b', got '" + part +
                                  "'");
    unions.push_back(
        IntervalUnion::open(parse_endpoint(cells[0]), parse_endpoint(cells[1])));
  }
  return unions;
}

DataMatrix ingest_csv(const std::filesystem::path& path, bool raw) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::vector<std::vector<double>> rows;
  std::size_t columns = 0;
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    std::vector<double> values(cells.size());
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (!parse_double_cell(cells[c], values[c])) {
        numeric = false;
        break;
      }
    if (first) {
      first = false;
      columns = cells.size();
      if (!numeric) continue;  // header row
    } else if (!numeric) {
      throw std::runtime_error("non-numeric cell at line " +
                               std::to_string(line_no));
    }
    if (cells.size() != columns)
      throw std::runtime_error("ragged row at line " + std::to_string(line_no));
    rows.push_back(std::move(values));
  }
  if (columns == 0) throw std::runtime_error("empty CSV");
  const std::size_t n = rows.size();
  const std::size_t p = columns;
  if (n < 2) throw std::runtime_error("need at least 2 observations");

  // Transpose to variable-major.
  std::vector<double> values(p * n);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < p; ++i) values[i * n + t] = rows[t][i];

  if (!raw) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < p; ++i) {
      double mean = 0.0, mean_sq = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        mean += values[i * n + t];
        mean_sq += values[i * n + t] * values[i * n + t];
      }
      mean *= inv_n;
      mean_sq *= inv_n;
      double var = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double d = values[i * n + t] - mean;
        var += d * d;
      }
      var *= inv_n;
      if (!(var > mean_sq * 1e-30) || var == 0.0)
        throw std::runtime_error("degenerate variable (column " +
                                 std::to_string(i + 1) + ")");
      const double inv_sd = 1.0 / std::sqrt(var);
      for (std::size_t t = 0; t < n; ++t)
        values[i * n + t] = (values[i * n + t] - mean) * inv_sd;
    }
  }
  return DataMatrix(p, n, std::move(values));
}

RunTestResult run_test(const DataMatrix& data, std::size_t k, double beta,
                       std::optional<double> m4_override,
                       std::ostream& report) {
  if (data.n() < 2) throw std::invalid_argument("run_test: n >= 2");
  if (k < 1) throw std::invalid_argument("run_test: k >= 1");
  RunTestResult result;
  result.d_p = compute_dp(data.p());
  const CovSummary summary = summarize(data, k, {}, result.d_p);
  if (m4_override && !(*m4_override >= 1.0))
    throw std::invalid_argument("m4 override must be >= 1");
  result.m4 = m4_override ? *m4_override : estimate_m4(data);
  result.mu = mu_n(data.n(), data.p(), result.m4);
  result.sigma_sq = sigma_n_sq(data.n(), data.p(), result.m4);
  result.gauged.z_n = z_statistic(summary.trace_s2, data.n(), data.p(), result.m4);
  result.gauged.g_top = summary.top_g;

  const TStatistics t = t_statistics(result.gauged.g_top, k);
  std::optional<QuantileTable> table;
  if (k >= 2) table = QuantileTable::build_f4k(k, 1000000, kTestTableSeed);
  const PValues p = p_transforms(t, result.gauged.z_n, k,
                                 table ? &*table : nullptr);
  result.outcome = combined_tests(p, beta);
  result.outcome.t = t;

  report << "p = " << data.p() << ", n = " << data.n() << ", k = " << k
         << ", beta = " << fmt6(beta) << "\n";
  report << "d_p = " << fmt6(result.d_p) << ", m4 = " << fmt6(result.m4)
         << ", mu_n = " << fmt6(result.mu)
         << ", sigma_n = " << fmt6(std::sqrt(result.sigma_sq)) << "\n";
  report << "Z_n = " << fmt6(result.gauged.z_n) << " (P = " << fmt6(p.z)
         << ")\n";
  report << "T1 = " << fmt6(t.t1) << " (P = " << fmt6(p.t1) << ")\n";
  report << "T2," << k << " = " << fmt6(t.t2k) << " (P = " << fmt6(p.t2k)
         << ")\n";
  report << "T3," << k << " = " << fmt6(t.t3k) << " (P = " << fmt6(p.t3k)
         << ")\n";
  report << "T4," << k << " = " << fmt6(t.t4k) << " (P = " << fmt6(p.t4k)
         << ")\n";
  report << "threshold 1-sqrt(1-beta) = " << fmt6(result.outcome.threshold)
         << "\n";
  static const char* kNames[4] = {"T1", "T2k", "T3k", "T4k"};
  for (std::size_t i = 0; i < 4; ++i) {
    report << "combined " << kNames[i] << ": "
           << fmt6(result.outcome.combined[i]) << " -> "
           << (result.outcome.reject[i] ? "REJECT H0" : "no rejection") << "\n";
  }
  return result;
}

void emit_summary(const EmpiricalSummary& summary, SummaryFormat format,
                  const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream records(out_dir / "records.jsonl");
    if (!records)
      throw std::runtime_error("cannot write " +
                               (out_dir / "records.jsonl").string());
    for (const auto& record : summary.records)
      records << serialize_record(record) << '\n';
  }
  if (format == SummaryFormat::kCsv) {
    std::ofstream csv(out_dir / "summary.csv");
    csv << "estimator,value,stderr\n";
    for (const auto& row : summary.aggregates) {
      csv << row.estimator << ',' << fmt17(row.value) << ',';
      if (row.stderr_value) csv << fmt17(*row.stderr_value);
      csv << '\n';
    }
  } else {
    std::ofstream js(out_dir / "summary.json");
    js << "{\"experiment\":\"" << summary.experiment << "\",\"model\":\""
       << summary.model << "\",\"master_seed\":" << summary.master_seed
       << ",\"aggregates\":[";
    for (std::size_t i = 0; i < summary.aggregates.size(); ++i) {
      const auto& row = summary.aggregates[i];
      if (i) js << ',';
      js << "{\"estimator\":\"" << row.estimator
         << "\",\"value\":" << fmt17(row.value) << ",\"stderr\":";
      if (row.stderr_value)
        js << fmt17(*row.stderr_value);
      else
        js << "null";
      js << '}';
    }
    js << "]}\n";
  }
}

std::vector<RepRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<RepRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    records.push_back(parse_record(line));
  }
  return records;
}

namespace {

M4Mode parse_m4_mode(const std::string& text) {
  if (text == "exact") return M4Mode::exact();
  if (text == "plugin") return M4Mode::plugin();
  double v = 0.0;
  if (!parse_double_cell(text, v))
    throw std::invalid_argument("--m4 expects exact|plugin|FLOAT");
  return M4Mode::explicit_value(v);
}

void print_resolved_config(const ExperimentConfig& config) {
  std::cout << "# resolved config\n";
  std::cout << "experiment: " << experiment_name(config.experiment) << "\n";
  std::cout << "model: " << config.model.name() << "\n";
  std::cout << "n: " << config.n << "\n";
  std::cout << "p: " << config.p << "\n";
  std::cout << "reps: " << config.reps << "\n";
  std::cout << "k: " << config.k << "\n";
  std::cout << "beta: " << fmt17(config.beta) << "\n";
  std::cout << "seed: " << config.master_seed << "\n";
  std::cout << "workers: " << config.workers << "\n";
  std::cout << "unions:";
  if (config.unions.empty()) std::cout << " (none)";
  for (const auto& u : config.unions) std::cout << ' ' << union_to_string(u);
  std::cout << "\n";
  std::cout << "thresholds:";
  if (config.thresholds.empty()) std::cout << " (none)";
  for (double y : config.thresholds) std::cout << ' ' << fmt17(y);
  std::cout << "\n";
  std::cout << "m4 mode: ";
  switch (config.m4_mode.kind) {
    case M4Mode::Kind::kExact: std::cout << "exact"; break;
    case M4Mode::Kind::kPlugin: std::cout << "plugin"; break;
    case M4Mode::Kind::kExplicit:
      std::cout << "explicit " << fmt17(config.m4_mode.value);
      break;
  }
  std::cout << "\n";
  std::cout << "trace_s: " << (config.trace_s_expectation ? "expectation" : "data")
            << "\n";

  const bool dp_ok = config.p >= 3;
  std::cout << "derived d_p: "
            << (dp_ok ? fmt17(compute_dp(config.p)) : std::string("n/a"))
            << "\n";
  double m4 = std::numeric_limits<double>::infinity();
  if (config.m4_mode.kind == M4Mode::Kind::kExact)
    m4 = exact_m4(config.model);
  else if (config.m4_mode.kind == M4Mode::Kind::kExplicit)
    m4 = config.m4_mode.value;
  if (std::isfinite(m4)) {
    std::cout << "derived mu_n: " << fmt17(mu_n(config.n, config.p, m4)) << "\n";
    std::cout << "derived sigma_n: "
              << fmt17(std::sqrt(sigma_n_sq(config.n, config.p, m4))) << "\n";
  } else {
    std::cout << "derived mu_n: n/a\nderived sigma_n: n/a\n";
  }
  std::cout << "derived threshold: "
            << fmt17(1.0 - std::sqrt(1.0 - config.beta)) << "\n";
}

int cmd_simulate(const ExperimentConfig& config_in,
         const std::filesystem::path& out_dir, SummaryFormat format) {
  ExperimentConfig config = config_in;
  // Friendly defaults for the point-process experiments.
  if ((config.experiment == ExperimentKind::kPointProcess ||
       config.experiment == ExperimentKind::kJoint) &&
      config.unions.empty()) {
    config.unions.push_back(IntervalUnion::open(0.0, kInf));
    config.unions.push_back(IntervalUnion::open(1.0, kInf));
  }
  if (config.experiment == ExperimentKind::kJoint && config.thresholds.empty())
    config.thresholds = {-1.0, 0.0, 1.0};
  if (config.experiment == ExperimentKind::kCorollary28 && config.k == 0)
    config.k = 3;
  if (config.experiment == ExperimentKind::kSize && config.k == 0) config.k = 5;

  validate_config(config);
  print_resolved_config(config);
  for (const auto& warning : config_warnings(config))
    std::cout << "warning: " << warning << "\n";

  std::filesystem::create_directories(out_dir);
  std::ofstream records_out(out_dir / "records.jsonl");
  if (!records_out)
    throw std::runtime_error("cannot write records.jsonl under " +
                             out_dir.string());
  EmpiricalSummary summary = run_experiment(
      config, [&](const std::string& line) { records_out << line << '\n'; });
  records_out.close();

  emit_summary(summary, format, out_dir);
  std::cout << "# results\n";
  for (const auto& row : summary.aggregates) {
    std::cout << row.estimator << " = " << fmt6(row.value);
    if (row.stderr_value) std::cout << " (se " << fmt6(*row.stderr_value) << ")";
    std::cout << "\n";
  }
  std::cout << "records: " << (out_dir / "records.jsonl").string() << "\n";
  return 0;
}

int cmd_verify(bool full, std::uint64_t seed, unsigned workers,
               const std::filesystem::path& out_dir) {
  AcceptanceOptions options;
  options.full = full;
  options.seed = seed;
  options.workers = workers;
  options.out_dir = out_dir;
  const auto results = run_acceptance(options);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << " " << r.id << " " << r.name
              << ": " << r.detail << " [" << fmt6(r.seconds) << "s]\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << (all_pass ? "verify: all criteria passed"
                         : "verify: FAILURES present")
            << "\n";
  return all_pass ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Sum- and max-type statistics of a large sample covariance "
               "matrix, with a Monte Carlo verification harness"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo experiment");
  std::string experiment;
  sim->add_option("experiment", experiment, "clt|pp|joint|stable|size|cor28")
      ->required();
  std::size_t n = 100, p = 10, reps = 100, k = 0;
  double beta = 0.05;
  std::string model_text = "normal", unions_text, thresholds_text;
  std::string m4_text = "exact", trace_s_text = "data", out_text;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::size_t oracle_reps = 0;
  sim->add_option("--n", n, "observations per replication")->required();
  sim->add_option("--p", p, "variables per replication")->required();
  sim->add_option("--reps", reps, "number of replications")->required();
  sim->add_option("--model", model_text, "normal|bernoulli|t:DOF|pareto:ALPHA");
  sim->add_option("--k", k, "top-k order statistics to track");
  sim->add_option("--beta", beta, "test level");
  sim->add_option("--seed", seed, "master seed");
  sim->add_option("--unions", unions_text,
                  "semicolon-separated open intervals 'a,b' (inf allowed)");
  sim->add_option("--thresholds", thresholds_text,
                  "comma-separated y grid for joint factorization checks");
  sim->add_option("--out", out_text, "output directory")->required();
  sim->add_option("--m4", m4_text, "exact|plugin|FLOAT");
  sim->add_option("--trace-s", trace_s_text,
                  "data|expectation (stable statistic variant)");
  sim->add_option("--workers", workers, "worker threads");
  sim->add_option("--oracle-reps", oracle_reps,
                  "oracle draws (default: same as --reps)");
  std::string format_text = "csv";
  sim->add_option("--format", format_text, "summary format: csv|json");

  // test
  auto* test = app.add_subcommand("test", "run the combined tests on a CSV");
  std::string data_text, test_out_text;
  std::size_t test_k = 5;
  double test_beta = 0.05;
  bool raw = false;
  double m4_value = 0.0;
  bool m4_given = false;
  test->add_option("--data", data_text, "CSV file, rows = observations")
      ->required();
  test->add_option("--k", test_k, "number of order statistics");
  test->add_option("--beta", test_beta, "test level");
  test->add_flag("--raw", raw, "skip column standardization");
  test->add_option("--m4", m4_value, "explicit fourth moment")
      ->each([&](const std::string&) { m4_given = true; });
  test->add_option("--out", test_out_text, "output directory")->required();

  // tables
  auto* tables = app.add_subcommand("tables", "build limit-law tables");
  std::string table_kind;
  std::size_t table_k = 5, table_samples = 1000000;
  std::uint64_t table_seed = 0;
  std::string table_out;
  tables->add_option("kind", table_kind, "f4k")->required();
  tables->add_option("--k", table_k, "number of order statistics")->required();
  tables->add_option("--samples", table_samples, "Monte Carlo sample count");
  tables->add_option("--seed", table_seed, "table seed")->required();
  tables->add_option("--out", table_out, "output file")->required();

  // verify
  auto* verify = app.add_subcommand("verify", "run the verification suite");
  bool full = false;
  std::uint64_t verify_seed = 42;
  unsigned verify_workers = 0;
  std::string verify_out = "verify_out";
  verify->add_flag("--full", full, "full-scale run");
  verify->add_option("--seed", verify_seed, "master seed");
  verify->add_option("--workers", verify_workers,
                     "worker threads (0 = hardware)");
  verify->add_option("--out", verify_out, "directory for record files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim->parsed()) {
      ExperimentConfig config;
      config.experiment = parse_experiment(experiment);
      config.model = NullModel::parse(model_text);
      config.n = n;
      config.p = p;
      config.reps = reps;
      config.k = k;
      config.beta = beta;
      config.master_seed = seed;
      config.unions = parse_union_spec(unions_text);
      if (!trim(thresholds_text).empty())
        for (const auto& cell : split(thresholds_text, ','))
          config.thresholds.push_back(parse_endpoint(cell));
      config.m4_mode = parse_m4_mode(m4_text);
      if (trace_s_text == "expectation")
        config.trace_s_expectation = true;
      else if (trace_s_text != "data")
        throw std::invalid_argument("--trace-s expects data|expectation");
      config.workers = workers;
      config.oracle_reps = oracle_reps;
      const SummaryFormat format =
          format_text == "json" ? SummaryFormat::kJson : SummaryFormat::kCsv;
      return cmd_simulate(config, out_text, format);
    }
    if (test->parsed()) {
      const DataMatrix data = ingest_csv(data_text, raw);
      std::cout << "# resolved config\n";
      std::cout << "data: " << data_text << "\n";
      std::cout << "p: " << data.p() << "\n";
      std::cout << "n: " << data.n() << "\n";
      std::cout << "k: " << test_k << "\n";
      std::cout << "beta: " << fmt17(test_beta) << "\n";
      std::cout << "standardize: " << (raw ? "no" : "yes") << "\n";
      std::cout << "m4 source: " << (m4_given ? "explicit" : "plugin") << "\n";
      std::cout << "derived d_p: " << fmt17(compute_dp(data.p())) << "\n";
      std::cout << "derived threshold: "
                << fmt17(1.0 - std::sqrt(1.0 - test_beta)) << "\n";
      std::cout << "# report\n";
      const RunTestResult result = run_test(
          data, test_k, test_beta,
          m4_given ? std::optional<double>(m4_value) : std::nullopt, std::cout);
      std::filesystem::create_directories(test_out_text);
      std::ofstream js(std::filesystem::path(test_out_text) /
                       "test_outcome.json");
      js << "{\"z_n\":" << fmt17(result.gauged.z_n)
         << ",\"d_p\":" << fmt17(result.d_p) << ",\"m4\":" << fmt17(result.m4)
         << ",\"t\":[" << fmt17(result.outcome.t.t1) << ','
         << fmt17(result.outcome.t.t2k) << ',' << fmt17(result.outcome.t.t3k)
         << ',' << fmt17(result.outcome.t.t4k) << "],\"p\":["
         << fmt17(result.outcome.p.t1) << ',' << fmt17(result.outcome.p.t2k)
         << ',' << fmt17(result.outcome.p.t3k) << ','
         << fmt17(result.outcome.p.t4k) << ',' << fmt17(result.outcome.p.z)
         << "],\"combined\":[" << fmt17(result.outcome.combined[0]) << ','
         << fmt17(result.outcome.combined[1]) << ','
         << fmt17(result.outcome.combined[2]) << ','
         << fmt17(result.outcome.combined[3]) << "],\"threshold\":"
         << fmt17(result.outcome.threshold) << ",\"reject\":["
         << (result.outcome.reject[0] ? "true" : "false") << ','
         << (result.outcome.reject[1] ? "true" : "false") << ','
         << (result.outcome.reject[2] ? "true" : "false") << ','
         << (result.outcome.reject[3] ? "true" : "false") << "]}\n";
      return 0;
    }
    if (tables->parsed()) {
      if (table_kind != "f4k")
        throw std::invalid_argument("tables: unknown kind '" + table_kind + "'");
      const QuantileTable table =
          QuantileTable::build_f4k(table_k, table_samples, table_seed);
      table.save(std::filesystem::path(table_out));
      std::cout << "wrote " << table_out << " (k = " << table_k
                << ", samples = " << table_samples << ", seed = " << table_seed
                << ")\n";
      return 0;
    }
    if (verify->parsed())
      return cmd_verify(full, verify_seed, verify_workers, verify_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace covstat
