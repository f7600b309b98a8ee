#include "covstat/distributions.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace covstat {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Regularized incomplete beta I_x(a,b) by Lentz continued fraction.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

// P(|T| > x) for T ~ t_dof, x >= 0.
double student_t_abs_tail(double x, double dof) {
  const double z = dof / (dof + x * x);
  return ibeta(0.5 * dof, 0.5, z);
}

// Gamma(shape, 1) by Marsaglia-Tsang; valid for shape >= 1.
double sample_gamma(double shape, RandomStream& stream) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = stream.next_normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = stream.next_unit();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

NullModel NullModel::standard_normal() {
  return NullModel(ModelKind::kStandardNormal, 0.0, 1.0);
}

NullModel NullModel::symmetric_bernoulli() {
  return NullModel(ModelKind::kSymmetricBernoulli, 0.0, 1.0);
}

NullModel NullModel::student_t(double dof) {
  if (!(dof > 2.0))
    throw std::invalid_argument("NullModel: StudentT requires dof > 2");
  return NullModel(ModelKind::kStudentT, dof, std::sqrt((dof - 2.0) / dof));
}

NullModel NullModel::symmetric_pareto(double alpha) {
  if (!(alpha > 2.0))
    throw std::invalid_argument("NullModel: SymmetricPareto requires alpha > 2");
  return NullModel(ModelKind::kSymmetricPareto, alpha,
                   std::sqrt((alpha - 2.0) / alpha));
}

NullModel NullModel::parse(std::string_view text) {
  if (text == "normal") return standard_normal();
  if (text == "bernoulli") return symmetric_bernoulli();
  const auto colon = text.find(':');
  if (colon != std::string_view::npos) {
    const std::string_view head = text.substr(0, colon);
    const std::string tail(text.substr(colon + 1));
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(tail, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == tail.size() && !tail.empty()) {
      if (head == "t") return student_t(value);
      if (head == "pareto") return symmetric_pareto(value);
    }
  }
  throw std::invalid_argument(
      "NullModel: expected normal|bernoulli|t:DOF|pareto:ALPHA, got '" +
      std::string(text) + "'");
}

std::optional<double> NullModel::tail_index() const {
  switch (kind_) {
    case ModelKind::kSymmetricPareto:
    case ModelKind::kStudentT:
      return param_;
    default:
      return std::nullopt;
  }
}

std::string NullModel::name() const {
  char buf[64];
  switch (kind_) {
    case ModelKind::kStandardNormal:
      return "normal";
    case ModelKind::kSymmetricBernoulli:
      return "bernoulli";
    case ModelKind::kStudentT:
      std::snprintf(buf, sizeof(buf), "t:%g", param_);
      return buf;
    case ModelKind::kSymmetricPareto:
      std::snprintf(buf, sizeof(buf), "pareto:%g", param_);
      return buf;
  }
  return "?";
}

MomentProfile moment_profile(const NullModel& model) {
  MomentProfile profile;
  profile.m4 = exact_m4(model);
  profile.alpha = model.tail_index();
  if (model.kind() == ModelKind::kSymmetricPareto)
    profile.a_scale = model.scale();
  return profile;
}

double exact_m4(const NullModel& model) {
  switch (model.kind()) {
    case ModelKind::kStandardNormal:
      return 3.0;
    case ModelKind::kSymmetricBernoulli:
      return 1.0;
    case ModelKind::kStudentT: {
      const double nu = model.param();
      if (nu <= 4.0) return kInf;
      return 3.0 * (nu - 2.0) / (nu - 4.0);
    }
    case ModelKind::kSymmetricPareto: {
      const double a = model.param();
      if (a <= 4.0) return kInf;
      return (a - 2.0) * (a - 2.0) / (a * (a - 4.0));
    }
  }
  return kInf;
}

double sample_value(const NullModel& model, RandomStream& stream) {
  switch (model.kind()) {
    case ModelKind::kStandardNormal:
      return stream.next_normal();
    case ModelKind::kSymmetricBernoulli:
      return stream.next_sign_bit() ? -1.0 : 1.0;
    case ModelKind::kStudentT: {
      const double nu = model.param();
      const double z = stream.next_normal();
      const double chi2 = 2.0 * sample_gamma(0.5 * nu, stream);
      return model.scale() * z * std::sqrt(nu / chi2);
    }
    case ModelKind::kSymmetricPareto: {
      const double y = std::pow(stream.next_unit(), -1.0 / model.param());
      const bool negative = stream.next_sign_bit();
      return model.scale() * (negative ? -y : y);
    }
  }
  return 0.0;
}

DataMatrix sample_matrix(const NullModel& model, std::size_t p, std::size_t n,
                         RandomStream& stream) {
  if (p < 1 || n < 1)
    throw std::invalid_argument("sample_matrix: p, n >= 1");
  const std::size_t total = p * n;
  std::vector<double> values(total);
  if (model.kind() == ModelKind::kStandardNormal) {
    std::size_t idx = 0;
    for (; idx + 1 < total; idx += 2)
      stream.next_normal_pair(values[idx], values[idx + 1]);
    if (idx < total) values[idx] = stream.next_normal();
  } else {
    for (std::size_t idx = 0; idx < total; ++idx)
      values[idx] = sample_value(model, stream);
  }
  return DataMatrix(p, n, std::move(values));
}

double estimate_m4(const DataMatrix& data) {
  const std::size_t p = data.p();
  const std::size_t n = data.n();
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    const auto row = data.row(i);
    double mean = 0.0, mean_sq = 0.0;
    for (double v : row) {
      mean += v;
      mean_sq += v * v;
    }
    mean *= inv_n;
    mean_sq *= inv_n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var *= inv_n;
    if (!(var > mean_sq * 1e-30) || var == 0.0)
      throw std::domain_error("degenerate variable");
    const double inv_sd = 1.0 / std::sqrt(var);
    for (double v : row) {
      const double z = (v - mean) * inv_sd;
      total += (z * z) * (z * z);
    }
  }
  return std::max(1.0, total / static_cast<double>(p * n));
}

double quantile_a(const NullModel& model, std::uint64_t k) {
  if (k < 1) throw std::invalid_argument("quantile_a: k >= 1");
  switch (model.kind()) {
    case ModelKind::kSymmetricPareto:
      return model.scale() *
             std::pow(static_cast<double>(k), 1.0 / model.param());
    case ModelKind::kStudentT: {
      const double nu = model.param();
      if (nu > 4.0) throw std::domain_error("a_k undefined for this model");
      if (k == 1) return 0.0;
      const double target = 1.0 / static_cast<double>(k);
      const double s = model.scale();
      auto tail = [&](double x) { return student_t_abs_tail(x / s, nu); };
      double lo = 0.0, hi = 1.0;
      while (tail(hi) > target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) throw std::runtime_error("quantile_a: bracket failure");
      }
      for (int iter = 0; iter < 200 && (hi - lo) > 1e-10 * hi; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (tail(mid) > target)
          lo = mid;
        else
          hi = mid;
      }
      return 0.5 * (lo + hi);
    }
    default:
      throw std::domain_error("a_k undefined for this model");
  }
}

}  // namespace covstat
