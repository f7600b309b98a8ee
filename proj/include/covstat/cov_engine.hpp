#ifndef COVSTAT_COV_ENGINE_HPP
#define COVSTAT_COV_ENGINE_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace covstat {

// Observation matrix, p variables by n observations, row-contiguous
// (variable-major). All entries must be finite.
class DataMatrix {
 public:
  DataMatrix(std::size_t p, std::size_t n, std::vector<double> values);

  std::size_t p() const { return p_; }
  std::size_t n() const { return n_; }
  double at(std::size_t i, std::size_t t) const { return values_[i * n_ + t]; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * n_, n_};
  }
  std::span<const double> values() const { return values_; }

 private:
  std::size_t p_;
  std::size_t n_;
  std::vector<double> values_;
};

// Finite union of pairwise disjoint intervals, sorted by lower endpoint.
// Endpoints may be +/-infinity; openness is tracked per endpoint.
struct Interval {
  double lower;
  double upper;
  bool lower_open = true;
  bool upper_open = true;
};

class IntervalUnion {
 public:
  IntervalUnion() = default;
  explicit IntervalUnion(std::vector<Interval> intervals);

  static IntervalUnion open(double lower, double upper) {
    return IntervalUnion({Interval{lower, upper, true, true}});
  }
  static IntervalUnion whole_line();

  bool empty() const { return intervals_.empty(); }
  bool contains(double x) const;
  const std::vector<Interval>& intervals() const { return intervals_; }

 private:
  std::vector<Interval> intervals_;
};

// Everything downstream needs from S = (1/n) X X^T, computed without ever
// materializing the p x p matrix. top_g holds the k largest normalized
// off-diagonal values d_p (sqrt(n) S_ij - d_p) over i < j, descending;
// interval_counts[m] counts pairs whose normalized value lies in unions[m].
struct CovSummary {
  std::size_t p = 0;
  std::size_t n = 0;
  double trace_s = 0.0;
  double trace_s2 = 0.0;
  std::vector<double> top_g;
  std::vector<std::uint64_t> interval_counts;
  std::uint64_t total_offdiag = 0;
};

struct SummarizeOptions {
  std::size_t block = 128;  // rows per block; correctness never depends on it
  unsigned threads = 1;     // worker threads over block pairs
};

CovSummary summarize(const DataMatrix& data, std::size_t k,
                     const std::vector<IntervalUnion>& unions, double d_p,
                     const SummarizeOptions& options = {});

// Naive oracle path: all p(p-1)/2 raw S_ij, i < j, in pair order
// (1,2),(1,3),... Guarded against materializing more than 1e7 values.
std::vector<double> full_offdiag(const DataMatrix& data);

namespace detail {
// Fixed-order dot product shared by summarize and full_offdiag so both paths
// produce bit-identical S_ij values.
double row_dot(std::span<const double> a, std::span<const double> b);
}  // namespace detail

}  // namespace covstat

#endif  // COVSTAT_COV_ENGINE_HPP
