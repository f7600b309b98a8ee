#ifndef COVSTAT_CLI_IO_HPP
#define COVSTAT_CLI_IO_HPP

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "covstat/cov_engine.hpp"
#include "covstat/harness.hpp"
#include "covstat/statistics.hpp"

namespace covstat {

// Reads a CSV of observations (rows = observations t, columns = variables i)
// into a variable-major DataMatrix. A non-numeric first row is treated as a
// header. Columns are centered and scaled to unit sample variance unless
// raw = true.
DataMatrix ingest_csv(const std::filesystem::path& path, bool raw = false);

// Parses the CLI union spec: semicolon-separated open intervals "a,b" with
// "inf"/"-inf" accepted; e.g. "0,inf;1,inf".
std::vector<IntervalUnion> parse_union_spec(const std::string& spec);

struct RunTestResult {
  TestOutcome outcome;
  GaugedStatistics gauged;
  double d_p = 0.0;
  double mu = 0.0;
  double sigma_sq = 0.0;
  double m4 = 0.0;
};

// Full test pipeline on one dataset: d_p, top-k summary, Z_n, p-values and
// decisions; writes a human-readable report. m4_override takes precedence
// over the plug-in estimate.
RunTestResult run_test(const DataMatrix& data, std::size_t k, double beta,
                       std::optional<double> m4_override, std::ostream& report);

enum class SummaryFormat { kCsv, kJson };

// Writes records.jsonl plus summary.csv/summary.json under out_dir.
void emit_summary(const EmpiricalSummary& summary, SummaryFormat format,
                  const std::filesystem::path& out_dir);

std::vector<RepRecord> load_records(const std::filesystem::path& path);

// CLI entry point shared by the binary and the tests.
int run_cli(int argc, const char* const* argv);

}  // namespace covstat

#endif  // COVSTAT_CLI_IO_HPP
