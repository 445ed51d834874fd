#include "amx/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "amx/errors.hpp"

namespace amx {

RealMatrix::RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw ParameterError("matrix data size does not match its dimensions");
}

RealMatrix RealMatrix::outer(std::span<const double> col, std::span<const double> row) {
  RealMatrix m(col.size(), row.size());
  for (std::size_t r = 0; r < col.size(); ++r)
    for (std::size_t c = 0; c < row.size(); ++c) m(r, c) = col[r] * row[c];
  return m;
}

RealMatrix& RealMatrix::operator+=(const RealMatrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw ParameterError("matrix dimension mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

RealMatrix& RealMatrix::operator*=(double k) {
  for (auto& v : data_) v *= k;
  return *this;
}

ErrorMatrix::ErrorMatrix(std::vector<std::int32_t> delta) : delta_(std::move(delta)) {
  if (delta_.size() != kLutEntries) throw ParameterError("error matrix must hold 65536 entries");
}

RealMatrix ErrorMatrix::as_real() const {
  std::vector<double> d(delta_.begin(), delta_.end());
  return RealMatrix(kOperandCodes, kOperandCodes, std::move(d));
}

bool ErrorMatrix::is_zero() const {
  return std::all_of(delta_.begin(), delta_.end(), [](std::int32_t v) { return v == 0; });
}

ErrorMatrix ErrorMatrix::operator+(const ErrorMatrix& other) const {
  std::vector<std::int32_t> out(kLutEntries);
  for (std::size_t i = 0; i < kLutEntries; ++i) out[i] = delta_[i] + other.delta_[i];
  return ErrorMatrix(std::move(out));
}

ErrorMatrix ErrorMatrix::operator*(std::int32_t k) const {
  std::vector<std::int32_t> out(kLutEntries);
  for (std::size_t i = 0; i < kLutEntries; ++i) out[i] = delta_[i] * k;
  return ErrorMatrix(std::move(out));
}

ErrorMatrix error_matrix(const AmLut& am) {
  std::vector<std::int32_t> delta(kLutEntries);
  const auto table = am.table();
  for (std::int32_t x = 0; x < kOperandCodes; ++x)
    for (std::int32_t w = 0; w < kOperandCodes; ++w) {
      const auto i = static_cast<std::size_t>(x * kOperandCodes + w);
      delta[i] = static_cast<std::int32_t>(table[i]) - x * w;
    }
  return ErrorMatrix(std::move(delta));
}

void validate_pmf(std::span<const double> v, const std::string& what) {
  CompensatedSum s;
  for (double x : v) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ParameterError(what + " has a negative or non-finite entry");
    s.add(x);
  }
  if (std::abs(s.value() - 1.0) > 1e-9) throw ParameterError(what + " does not sum to 1");
}

JointDistribution::JointDistribution(RealMatrix d, Kind kind) : d_(std::move(d)), kind_(kind) {
  if (d_.rows() != kOperandCodes || d_.cols() != kOperandCodes)
    throw ParameterError("joint distribution must be 256x256");
  validate_pmf(d_.values(), "joint distribution");
}

JointDistribution JointDistribution::uniform() {
  return JointDistribution(RealMatrix(kOperandCodes, kOperandCodes, 1.0 / static_cast<double>(kLutEntries)),
                           Kind::UniformJoint);
}

JointDistribution JointDistribution::outer_product(std::span<const double> p, std::span<const double> f) {
  if (p.size() != kOperandCodes || f.size() != kOperandCodes)
    throw ParameterError("outer-product marginals must have 256 entries");
  validate_pmf(p, "activation pmf");
  validate_pmf(f, "weight pmf");
  return JointDistribution(RealMatrix::outer(p, f), Kind::OuterProduct);
}

JointDistribution JointDistribution::from_matrix(RealMatrix d) { return JointDistribution(std::move(d), Kind::Custom); }

MetricsReport compute_metrics(const ErrorMatrix& delta, const JointDistribution& dist) {
  const auto& d = dist.matrix();
  MetricsReport r;
  r.n = kLutEntries;

  // First pass: means and maxima.
  CompensatedSum er, me, med, mse, mass_r, mre, mred;
  double wce = 0.0, wcre = 0.0;
  for (int x = 0; x < kOperandCodes; ++x)
    for (int w = 0; w < kOperandCodes; ++w) {
      const double p = d(x, w);
      const double e = delta(x, w);
      if (e != 0.0) er.add(p);
      me.add(p * e);
      med.add(p * std::abs(e));
      mse.add(p * e * e);
      wce = std::max(wce, std::abs(e));
      const int a = x * w;
      if (a == 0) continue;
      ++r.n_r;
      const double er_rel = e / a;
      mass_r.add(p);
      mre.add(p * er_rel);
      mred.add(p * std::abs(er_rel));
      wcre = std::max(wcre, std::abs(er_rel));
    }
  r.er = er.value();
  r.me = me.value();
  r.med = med.value();
  r.mse = mse.value();
  r.rmse = std::sqrt(r.mse);
  r.wce = wce;
  r.wcre = wcre;
  const double wr = mass_r.value();
  if (wr > 0.0) {
    r.mre = mre.value() / wr;
    r.mred = mred.value() / wr;
  }

  // Second pass: population variances about the first-pass means.
  CompensatedSum vare, vared, varre, varred;
  for (int x = 0; x < kOperandCodes; ++x)
    for (int w = 0; w < kOperandCodes; ++w) {
      const double p = d(x, w);
      const double e = delta(x, w);
      vare.add(p * (e - r.me) * (e - r.me));
      vared.add(p * (std::abs(e) - r.med) * (std::abs(e) - r.med));
      const int a = x * w;
      if (a == 0 || wr <= 0.0) continue;
      const double rel = e / a;
      varre.add(p * (rel - r.mre) * (rel - r.mre));
      varred.add(p * (std::abs(rel) - r.mred) * (std::abs(rel) - r.mred));
    }
  r.vare = vare.value();
  r.vared = vared.value();
  if (wr > 0.0) {
    r.varre = varre.value() / wr;
    r.varred = varred.value() / wr;
  }
  return r;
}

double frobenius_inner(const RealMatrix& a, const RealMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ParameterError("frobenius_inner: dimension mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  CompensatedSum s;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) s.add(av[i] * bv[i]);
  return s.value();
}

double frobenius_inner(const RealMatrix& a, const ErrorMatrix& delta) {
  if (a.rows() != kOperandCodes || a.cols() != kOperandCodes)
    throw ParameterError("frobenius_inner: matrix must be 256x256 to pair with an error matrix");
  CompensatedSum s;
  const auto av = a.values();
  const auto dv = delta.values();
  for (std::size_t i = 0; i < av.size(); ++i) s.add(av[i] * static_cast<double>(dv[i]));
  return s.value();
}

}  // namespace amx
