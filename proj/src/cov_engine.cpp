#include "covstat/cov_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace covstat {

namespace {

// Neumaier compensated accumulator; merge order is fixed by the caller.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }

  void merge(const CompensatedSum& other) {
    add(other.sum);
    add(other.comp);
  }

  double value() const { return sum + comp; }
};

struct TopEntry {
  double g;
  std::uint32_t i;
  std::uint32_t j;
};

// Total order for selection: larger g first, ties broken by lexicographic
// pair order. Makes the top-k set unique, hence merge-order independent.
inline bool better(const TopEntry& a, const TopEntry& b) {
  if (a.g != b.g) return a.g > b.g;
  if (a.i != b.i) return a.i < b.i;
  return a.j < b.j;
}

// Bounded tracker of the k best entries (min-heap on the total order).
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}

  void push(const TopEntry& e) {
    if (k_ == 0) return;
    if (heap_.size() < k_) {
      heap_.push_back(e);
      std::push_heap(heap_.begin(), heap_.end(), better);
      return;
    }
    if (better(e, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), better);
      heap_.back() = e;
      std::push_heap(heap_.begin(), heap_.end(), better);
    }
  }

  void merge(const TopK& other) {
    for (const auto& e : other.heap_) push(e);
  }

  std::vector<double> sorted_values() const {
    std::vector<TopEntry> entries = heap_;
    std::sort(entries.begin(), entries.end(), better);
    std::vector<double> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.g);
    return out;
  }

 private:
  std::size_t k_;
  std::vector<TopEntry> heap_;
};

struct BlockPartial {
  CompensatedSum offdiag_sq;
  TopK top;
  std::vector<std::uint64_t> counts;

  BlockPartial(std::size_t k, std::size_t n_unions)
      : top(k), counts(n_unions, 0) {}
};

}  // namespace

DataMatrix::DataMatrix(std::size_t p, std::size_t n,
                       std::vector<double> values)
    : p_(p), n_(n), values_(std::move(values)) {
  if (p_ < 1 || n_ < 1) throw std::invalid_argument("DataMatrix: p, n >= 1");
  if (values_.size() != p_ * n_)
    throw std::invalid_argument("DataMatrix: values size != p * n");
  for (double v : values_) {
    if (!std::isfinite(v))
      throw std::invalid_argument("DataMatrix: non-finite entry");
  }
}

IntervalUnion::IntervalUnion(std::vector<Interval> intervals)
    : intervals_(std::move(intervals)) {
  for (std::size_t m = 0; m < intervals_.size(); ++m) {
    const Interval& iv = intervals_[m];
    if (std::isnan(iv.lower) || std::isnan(iv.upper))
      throw std::invalid_argument("IntervalUnion: NaN endpoint");
    if (!(iv.lower < iv.upper))
      throw std::invalid_argument("IntervalUnion: requires lower < upper");
    if (m > 0) {
      const Interval& prev = intervals_[m - 1];
      const bool touching_ok =
          prev.upper == iv.lower && (prev.upper_open || iv.lower_open);
      if (!(prev.upper < iv.lower || touching_ok))
        throw std::invalid_argument(
            "IntervalUnion: intervals must be sorted and disjoint");
    }
  }
}

IntervalUnion IntervalUnion::whole_line() {
  return IntervalUnion({Interval{-std::numeric_limits<double>::infinity(),
                                 std::numeric_limits<double>::infinity(), true,
                                 true}});
}

bool IntervalUnion::contains(double x) const {
  for (const Interval& iv : intervals_) {
    const bool above = iv.lower_open ? x > iv.lower : x >= iv.lower;
    const bool below = iv.upper_open ? x < iv.upper : x <= iv.upper;
    if (above && below) return true;
    if (x < iv.lower) break;  // sorted; no later interval can match
  }
  return false;
}

namespace detail {

double row_dot(std::span<const double> a, std::span<const double> b) {
  const double* x = a.data();
  const double* y = b.data();
  const std::size_t m = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  double s4 = 0.0, s5 = 0.0, s6 = 0.0, s7 = 0.0;
  std::size_t t = 0;
  for (; t + 8 <= m; t += 8) {
    s0 += x[t] * y[t];
    s1 += x[t + 1] * y[t + 1];
    s2 += x[t + 2] * y[t + 2];
    s3 += x[t + 3] * y[t + 3];
    s4 += x[t + 4] * y[t + 4];
    s5 += x[t + 5] * y[t + 5];
    s6 += x[t + 6] * y[t + 6];
    s7 += x[t + 7] * y[t + 7];
  }
  double tail = 0.0;
  for (; t < m; ++t) tail += x[t] * y[t];
  return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7)) + tail;
}

}  // namespace detail

CovSummary summarize(const DataMatrix& data, std::size_t k,
                     const std::vector<IntervalUnion>& unions, double d_p,
                     const SummarizeOptions& options) {
  const std::size_t p = data.p();
  const std::size_t n = data.n();
  const std::uint64_t total_offdiag =
      static_cast<std::uint64_t>(p) * (p - 1) / 2;

  if (k > total_offdiag)
    throw std::invalid_argument("summarize: k exceeds p(p-1)/2");
  if ((k > 0 || !unions.empty()) && p < 2)
    throw std::invalid_argument("summarize: p >= 2 required for pair summaries");
  if (!std::isfinite(d_p))
    throw std::invalid_argument("summarize: d_p must be finite");

  const double inv_n = 1.0 / static_cast<double>(n);
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  CovSummary out;
  out.p = p;
  out.n = n;
  out.total_offdiag = total_offdiag;

  // tr(S) = (1/n) sum of squared entries, row-major order.
  CompensatedSum trs;
  for (double v : data.values()) trs.add(v * v);
  out.trace_s = trs.value() * inv_n;

  // Diagonal part of tr(S^2).
  CompensatedSum diag_sq;
  for (std::size_t i = 0; i < p; ++i) {
    const double sii = detail::row_dot(data.row(i), data.row(i)) * inv_n;
    diag_sq.add(sii * sii);
  }

  // Off-diagonal pass over row-block pairs (I, J), I <= J. Each task fills a
  // private partial; partials are merged in task order, so the result does
  // not depend on the thread count.
  const std::size_t block = std::max<std::size_t>(1, options.block);
  const std::size_t n_blocks = (p + block - 1) / block;
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t bi = 0; bi < n_blocks; ++bi)
    for (std::size_t bj = bi; bj < n_blocks; ++bj) tasks.emplace_back(bi, bj);

  std::vector<BlockPartial> partials(tasks.size(),
                                     BlockPartial(k, unions.size()));

  auto run_task = [&](std::size_t task_id) {
    const auto [bi, bj] = tasks[task_id];
    BlockPartial& part = partials[task_id];
    const std::size_t i_end = std::min(p, (bi + 1) * block);
    const std::size_t j_end = std::min(p, (bj + 1) * block);
    for (std::size_t i = bi * block; i < i_end; ++i) {
      const std::size_t j_begin = std::max(i + 1, bj * block);
      const auto row_i = data.row(i);
      for (std::size_t j = j_begin; j < j_end; ++j) {
        const double s_ij = detail::row_dot(row_i, data.row(j)) * inv_n;
        part.offdiag_sq.add(2.0 * s_ij * s_ij);
        const double g = d_p * (sqrt_n * s_ij - d_p);
        if (k > 0)
          part.top.push({g, static_cast<std::uint32_t>(i),
                         static_cast<std::uint32_t>(j)});
        for (std::size_t m = 0; m < unions.size(); ++m)
          if (unions[m].contains(g)) ++part.counts[m];
      }
    }
  };

  const unsigned workers =
      std::max(1u, std::min<unsigned>(options.threads,
                                      static_cast<unsigned>(tasks.size())));
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t t = next.fetch_add(1);
          if (t >= tasks.size()) return;
          run_task(t);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  CompensatedSum offdiag_sq;
  TopK top(k);
  out.interval_counts.assign(unions.size(), 0);
  for (const BlockPartial& part : partials) {
    offdiag_sq.merge(part.offdiag_sq);
    top.merge(part.top);
    for (std::size_t m = 0; m < unions.size(); ++m)
      out.interval_counts[m] += part.counts[m];
  }

  out.trace_s2 = diag_sq.value() + offdiag_sq.value();
  out.top_g = top.sorted_values();
  return out;
}

std::vector<double> full_offdiag(const DataMatrix& data) {
  const std::size_t p = data.p();
  const std::uint64_t pairs = static_cast<std::uint64_t>(p) * (p - 1) / 2;
  if (pairs > 10000000ULL)
    throw std::invalid_argument("full_offdiag: too many pairs to materialize");
  const double inv_n = 1.0 / static_cast<double>(data.n());
  std::vector<double> out;
  out.reserve(pairs);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j)
      out.push_back(detail::row_dot(data.row(i), data.row(j)) * inv_n);
  return out;
}

}  // namespace covstat
