#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amx/amlib.hpp"

namespace amx {

// Neumaier-compensated running sum; the summation order is the call order.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Dense row-major real matrix.
class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static RealMatrix outer(std::span<const double> col, std::span<const double> row);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  RealMatrix& operator+=(const RealMatrix& other);
  RealMatrix& operator*=(double k);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Signed deviation a' - a of an AM for every operand pair, indexed [x][w].
class ErrorMatrix {
 public:
  explicit ErrorMatrix(std::vector<std::int32_t> delta);
  static ErrorMatrix zero() { return ErrorMatrix(std::vector<std::int32_t>(kLutEntries, 0)); }

  std::int32_t operator()(int x, int w) const { return delta_[static_cast<std::size_t>(x) * kOperandCodes + w]; }
  std::span<const std::int32_t> values() const { return delta_; }
  RealMatrix as_real() const;
  bool is_zero() const;

  ErrorMatrix operator+(const ErrorMatrix& other) const;
  ErrorMatrix operator*(std::int32_t k) const;
  bool operator==(const ErrorMatrix&) const = default;

 private:
  std::vector<std::int32_t> delta_;
};

ErrorMatrix error_matrix(const AmLut& am);

// Joint pmf d(x, w) of multiplier operands.
class JointDistribution {
 public:
  enum class Kind { UniformJoint, OuterProduct, Custom };

  static JointDistribution uniform();
  static JointDistribution outer_product(std::span<const double> p, std::span<const double> f);
  static JointDistribution from_matrix(RealMatrix d);

  const RealMatrix& matrix() const { return d_; }
  Kind kind() const { return kind_; }

 private:
  JointDistribution(RealMatrix d, Kind kind);
  RealMatrix d_;
  Kind kind_;
};

struct MetricsReport {
  double er = 0, me = 0, mre = 0, med = 0, mred = 0;
  double vare = 0, varre = 0, vared = 0, varred = 0;
  double mse = 0, rmse = 0, wce = 0, wcre = 0;
  std::size_t n = 0;    // error samples (all operand pairs)
  std::size_t n_r = 0;  // relative-error samples (pairs with non-zero exact product)
};

// Relative statistics exclude pairs whose exact product is zero and are
// weighted by the distribution renormalised over the remaining pairs. WCE and
// WCRE are maxima over every pair regardless of its probability.
MetricsReport compute_metrics(const ErrorMatrix& delta, const JointDistribution& dist);

double frobenius_inner(const RealMatrix& a, const RealMatrix& b);
double frobenius_inner(const RealMatrix& a, const ErrorMatrix& delta);

// Checks that `v` is a pmf (non-negative, sums to 1 within 1e-9).
void validate_pmf(std::span<const double> v, const std::string& what);

}  // namespace amx
