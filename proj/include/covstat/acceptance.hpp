#ifndef COVSTAT_ACCEPTANCE_HPP
#define COVSTAT_ACCEPTANCE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace covstat {

struct AcceptanceOptions {
  bool full = false;  // false: scaled-down smoke run with widened bands
  std::uint64_t seed = 42;
  unsigned workers = 0;  // 0 means hardware_concurrency
  std::filesystem::path out_dir;  // record files for the determinism check
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

// Runs the verification suite; one result per criterion. Tolerances for the
// full run are pinned in code.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options);

}  // namespace covstat

#endif  // COVSTAT_ACCEPTANCE_HPP
