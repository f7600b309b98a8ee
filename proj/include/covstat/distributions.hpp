#ifndef COVSTAT_DISTRIBUTIONS_HPP
#define COVSTAT_DISTRIBUTIONS_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "covstat/cov_engine.hpp"
#include "covstat/rng.hpp"

namespace covstat {

enum class ModelKind {
  kStandardNormal,
  kSymmetricBernoulli,
  kStudentT,
  kSymmetricPareto,
};

// Null sampling law for the iid entries X_it, standardized to mean 0 and
// variance 1. StudentT(dof) is scaled by sqrt((dof-2)/dof); SymmetricPareto
// is sign * Y with P(Y > y) = y^-alpha for y >= 1, scaled by
// sqrt((alpha-2)/alpha). The slowly varying tail factor is the constant 1,
// so a_k = scale * k^(1/alpha) exactly.
class NullModel {
 public:
  static NullModel standard_normal();
  static NullModel symmetric_bernoulli();
  static NullModel student_t(double dof);        // requires dof > 2
  static NullModel symmetric_pareto(double alpha);  // requires alpha > 2

  // Accepts "normal", "bernoulli", "t:DOF", "pareto:ALPHA".
  static NullModel parse(std::string_view text);

  ModelKind kind() const { return kind_; }
  double param() const { return param_; }  // dof or alpha; 0 otherwise
  double scale() const { return scale_; }
  // Regular-variation index: alpha for SymmetricPareto, dof for StudentT.
  std::optional<double> tail_index() const;
  std::string name() const;

 private:
  NullModel(ModelKind kind, double param, double scale)
      : kind_(kind), param_(param), scale_(scale) {}

  ModelKind kind_;
  double param_;
  double scale_;
};

// Moment and tail constants of the standardized variable. m4 may be
// +infinity. a_scale is set for SymmetricPareto so that a_k is exact.
struct MomentProfile {
  double m4 = 1.0;
  std::optional<double> alpha;
  std::optional<double> a_scale;
};

MomentProfile moment_profile(const NullModel& model);

// p x n matrix of iid draws; deterministic given the stream state.
DataMatrix sample_matrix(const NullModel& model, std::size_t p, std::size_t n,
                         RandomStream& stream);

// Single draw from the standardized law.
double sample_value(const NullModel& model, RandomStream& stream);

// Population fourth moment of the standardized X; +infinity for
// StudentT(dof <= 4) and SymmetricPareto(alpha <= 4).
double exact_m4(const NullModel& model);

// Plug-in estimator: max(1, mean of fourth powers of the per-variable
// standardized entries). Throws "degenerate variable" on zero variance.
double estimate_m4(const DataMatrix& data);

// a_k = inf{x : P(|X| > x) <= 1/k} for the standardized variable. Exact for
// SymmetricPareto; bisection on the t tail probability (relative accuracy
// 1e-10) for StudentT with dof <= 4. Throws for models without a usable
// tail index.
double quantile_a(const NullModel& model, std::uint64_t k);

}  // namespace covstat

#endif  // COVSTAT_DISTRIBUTIONS_HPP
