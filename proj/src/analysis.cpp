#include "amx/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "amx/binary_io.hpp"
#include "amx/errors.hpp"

namespace amx {

namespace {

struct MetricInfo {
  Metric metric;
  const char* name;
  bool is_signed;
};

constexpr std::array<MetricInfo, 14> kMetrics{{
    {Metric::Ame, "ame", true},     {Metric::Er, "er", false},       {Metric::Me, "me", true},
    {Metric::Mre, "mre", true},     {Metric::Med, "med", false},     {Metric::Mred, "mred", false},
    {Metric::Vare, "vare", false},  {Metric::Varre, "varre", false}, {Metric::Vared, "vared", false},
    {Metric::Varred, "varred", false}, {Metric::Mse, "mse", false},  {Metric::Rmse, "rmse", false},
    {Metric::Wce, "wce", false},    {Metric::Wcre, "wcre", false},
}};

const MetricInfo& info(Metric m) {
  for (const auto& i : kMetrics)
    if (i.metric == m) return i;
  throw ParameterError("unknown metric");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<const SamplePoint*> capped(std::span<const SamplePoint> samples, double cap) {
  std::vector<const SamplePoint*> out;
  for (const auto& s : samples)
    if (s.degradation <= cap) out.push_back(&s);
  return out;
}

// Solves the n x n system in place by Gaussian elimination with partial
// pivoting; false when a pivot vanishes relative to the matrix scale.
template <std::size_t N>
bool solve(std::array<std::array<double, N>, N> a, std::array<double, N> b, std::array<double, N>& x) {
  double scale = 0;
  for (const auto& r : a)
    for (double v : r) scale = std::max(scale, std::abs(v));
  if (scale == 0) return false;
  for (std::size_t c = 0; c < N; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < N; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) <= 1e-12 * scale) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < N; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < N; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = N; c-- > 0;) {
    double s = b[c];
    for (std::size_t k = c + 1; k < N; ++k) s -= a[c][k] * x[k];
    x[c] = s / a[c][c];
  }
  return true;
}

// Least squares of degree D in standardized t = (m - mu) / sd.
template <std::size_t D>
bool fit_degree(std::span<const double> ms, std::span<const double> ys, double mu, double sd, std::array<double, D + 1>& coef) {
  std::array<std::array<double, D + 1>, D + 1> a{};
  std::array<double, D + 1> b{};
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const double t = (ms[i] - mu) / sd;
    std::array<double, D + 1> pw{};
    pw[0] = 1;
    for (std::size_t k = 1; k <= D; ++k) pw[k] = pw[k - 1] * t;
    for (std::size_t r = 0; r <= D; ++r) {
      for (std::size_t c = 0; c <= D; ++c) a[r][c] += pw[r] * pw[c];
      b[r] += pw[r] * ys[i];
    }
  }
  return solve(a, b, coef);
}

}  // namespace

std::string metric_name(Metric m) { return info(m).name; }

Metric metric_from_name(const std::string& name) {
  for (const auto& i : kMetrics)
    if (name == i.name) return i.metric;
  throw ParameterError("unknown metric '" + name + "'");
}

bool is_signed(Metric m) { return info(m).is_signed; }

const std::vector<Metric>& all_metrics() {
  static const std::vector<Metric> all = [] {
    std::vector<Metric> v;
    for (const auto& i : kMetrics) v.push_back(i.metric);
    return v;
  }();
  return all;
}

double SamplePoint::value(Metric m) const {
  switch (m) {
    case Metric::Ame: return ame;
    case Metric::Er: return metrics.er;
    case Metric::Me: return metrics.me;
    case Metric::Mre: return metrics.mre;
    case Metric::Med: return metrics.med;
    case Metric::Mred: return metrics.mred;
    case Metric::Vare: return metrics.vare;
    case Metric::Varre: return metrics.varre;
    case Metric::Vared: return metrics.vared;
    case Metric::Varred: return metrics.varred;
    case Metric::Mse: return metrics.mse;
    case Metric::Rmse: return metrics.rmse;
    case Metric::Wce: return metrics.wce;
    case Metric::Wcre: return metrics.wcre;
  }
  return 0.0;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ParameterError("pearson needs equally long inputs");
  if (xs.size() < 3) throw ParameterError("pearson needs at least 3 points");
  const double n = static_cast<double>(xs.size());
  CompensatedSum sx, sy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx.add(xs[i]);
    sy.add(ys[i]);
  }
  const double mx = sx.value() / n, my = sy.value() / n;
  CompensatedSum cxy, cxx, cyy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    cxy.add(dx * dy);
    cxx.add(dx * dx);
    cyy.add(dy * dy);
  }
  if (cxx.value() <= 0 || cyy.value() <= 0) throw EstimationError("correlation undefined: zero variance");
  return std::clamp(cxy.value() / std::sqrt(cxx.value() * cyy.value()), -1.0, 1.0);
}

CorrelationResult correlation_study(std::span<const SamplePoint> samples, Metric metric, double cap) {
  CorrelationResult r;
  r.metric = metric;
  r.split = is_signed(metric);
  std::vector<double> pm, pa, nm, na;
  for (const auto* s : capped(samples, cap)) {
    const double v = s->value(metric);
    if (!r.split || v >= 0) {
      pm.push_back(v);
      pa.push_back(s->accuracy);
    } else {
      nm.push_back(v);
      na.push_back(s->accuracy);
    }
  }
  r.positive.count = pm.size();
  r.negative.count = nm.size();
  if (pm.size() >= 3) r.positive.pcc = pearson(pm, pa);
  if (nm.size() >= 3) r.negative.pcc = pearson(nm, na);
  return r;
}

Prediction QuadModel::predict(double m) const {
  Prediction p;
  if (m < lo || m > hi) {
    p.clamped = true;
    m = std::clamp(m, lo, hi);
  }
  p.accuracy = (c2 * m + c1) * m + c0;
  return p;
}

Prediction QuadFit::predict(double m) const {
  const bool neg = split && m < 0;
  const auto& primary = neg ? negative : positive;
  const auto& other = neg ? positive : negative;
  if (primary) return primary->predict(m);
  if (other) return other->predict(m);
  throw StateError("fit holds no model");
}

QuadModel fit_points(std::span<const double> ms, std::span<const double> acc, std::string* warning) {
  if (ms.size() != acc.size()) throw ParameterError("fit needs equally long inputs");
  if (ms.empty()) throw ParameterError("fit needs at least one point");
  const double n = static_cast<double>(ms.size());
  double mu = 0;
  for (double m : ms) mu += m;
  mu /= n;
  double var = 0;
  for (double m : ms) var += (m - mu) * (m - mu);
  const double sd = var > 0 ? std::sqrt(var / n) : 1.0;

  QuadModel q;
  q.lo = *std::min_element(ms.begin(), ms.end());
  q.hi = *std::max_element(ms.begin(), ms.end());
  // Coefficients in t are mapped back to m: t = (m - mu) / sd.
  std::array<double, 3> c3{};
  std::array<double, 2> c2{};
  if (ms.size() >= 3 && fit_degree<2>(ms, acc, mu, sd, c3)) {
    const double a = c3[2] / (sd * sd), b = c3[1] / sd;
    q.c2 = a;
    q.c1 = b - 2 * a * mu;
    q.c0 = c3[0] - b * mu + a * mu * mu;
    return q;
  }
  q.linear = true;
  if (warning) *warning = "rank-deficient quadratic fit; using a linear model";
  if (ms.size() >= 2 && fit_degree<1>(ms, acc, mu, sd, c2)) {
    q.c1 = c2[1] / sd;
    q.c0 = c2[0] - q.c1 * mu;
    return q;
  }
  double mean = 0;
  for (double a : acc) mean += a;
  q.c0 = mean / n;
  if (warning) *warning = "degenerate fit; using a constant model";
  return q;
}

QuadFit fit_quadratic(std::span<const SamplePoint> samples, Metric metric, double cap, std::vector<std::string>* warnings) {
  QuadFit fit;
  fit.metric = metric;
  fit.split = is_signed(metric);
  std::vector<double> pm, pa, nm, na;
  for (const auto* s : capped(samples, cap)) {
    const double v = s->value(metric);
    if (!fit.split || v >= 0) {
      pm.push_back(v);
      pa.push_back(s->accuracy);
    } else {
      nm.push_back(v);
      na.push_back(s->accuracy);
    }
  }
  auto branch = [&](const std::vector<double>& m, const std::vector<double>& a, const char* label) -> std::optional<QuadModel> {
    if (m.size() < 3) return std::nullopt;
    std::string w;
    auto q = fit_points(m, a, &w);
    if (!w.empty() && warnings) warnings->push_back(std::string(label) + " branch: " + w);
    return q;
  };
  fit.positive = branch(pm, pa, fit.split ? "positive" : "unsplit");
  fit.negative = branch(nm, na, "negative");
  if (!fit.positive && !fit.negative) throw EstimationError("no branch has the 3 samples a fit needs");
  return fit;
}

double mape(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw ParameterError("mape needs equally long inputs");
  if (actual.empty()) throw ParameterError("mape needs at least one value");
  CompensatedSum s;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] == 0) throw ParameterError("mape is undefined for an actual value of 0");
    s.add(std::abs((actual[i] - predicted[i]) / actual[i]));
  }
  return 100.0 * s.value() / static_cast<double>(actual.size());
}

CrossValidation cross_validated_mape(std::span<const SamplePoint> samples, Metric metric, int folds, double cap) {
  if (folds < 2) throw ParameterError("cross-validation needs at least 2 folds");
  auto pool = capped(samples, cap);
  std::stable_sort(pool.begin(), pool.end(), [](auto* a, auto* b) { return a->am < b->am; });
  if (pool.size() < static_cast<std::size_t>(folds)) throw ParameterError("fewer samples than folds");
  CrossValidation cv;
  std::vector<double> all_pred, all_act;
  for (int k = 0; k < folds; ++k) {
    std::vector<SamplePoint> train;
    std::vector<const SamplePoint*> test;
    for (std::size_t i = 0; i < pool.size(); ++i)
      (static_cast<int>(i % static_cast<std::size_t>(folds)) == k ? test.push_back(pool[i]) : train.push_back(*pool[i]));
    const auto fit = fit_quadratic(train, metric, cap);
    std::vector<double> pred, act;
    for (const auto* s : test) {
      pred.push_back(fit.predict(s->value(metric)).accuracy);
      act.push_back(s->accuracy);
    }
    cv.fold_mape.push_back(mape(pred, act));
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_act.insert(all_act.end(), act.begin(), act.end());
  }
  cv.mape = mape(all_pred, all_act);
  return cv;
}

namespace {

constexpr const char* kStudyHeader =
    "am,cost,ame,er,me,mre,med,mred,vare,varre,vared,varred,mse,rmse,wce,wcre,accuracy,degradation";

}  // namespace

std::string study_csv(std::span<const SamplePoint> samples) {
  std::string out = std::string(kStudyHeader) + "\n";
  for (const auto& s : samples) {
    if (s.am.find_first_of(",\n\"") != std::string::npos) throw ParameterError("AM name '" + s.am + "' cannot be written to CSV");
    const auto& m = s.metrics;
    out += s.am;
    for (double v : {s.cost, s.ame, m.er, m.me, m.mre, m.med, m.mred, m.vare, m.varre, m.vared, m.varred, m.mse, m.rmse,
                     m.wce, m.wcre, s.accuracy, s.degradation})
      out += "," + fmt(v);
    out += "\n";
  }
  return out;
}

void save_study(std::span<const SamplePoint> samples, const std::filesystem::path& path) {
  io::write_text(path, study_csv(samples));
}

std::vector<SamplePoint> load_study(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != kStudyHeader) throw FormatError("study CSV header mismatch", 1);
  std::vector<SamplePoint> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 18) throw FormatError("study row needs 18 columns", lineno);
    std::vector<double> v;
    try {
      for (std::size_t i = 1; i < f.size(); ++i) {
        std::size_t used = 0;
        v.push_back(std::stod(f[i], &used));
        if (used != f[i].size()) throw std::invalid_argument(f[i]);
      }
    } catch (const std::exception&) {
      throw FormatError("non-numeric study value", lineno);
    }
    SamplePoint s;
    s.am = f[0];
    s.cost = v[0];
    s.ame = v[1];
    auto& m = s.metrics;
    m.er = v[2], m.me = v[3], m.mre = v[4], m.med = v[5], m.mred = v[6], m.vare = v[7], m.varre = v[8];
    m.vared = v[9], m.varred = v[10], m.mse = v[11], m.rmse = v[12], m.wce = v[13], m.wcre = v[14];
    s.accuracy = v[15];
    s.degradation = v[16];
    out.push_back(std::move(s));
  }
  return out;
}

void save_fit(const QuadFit& fit, const std::filesystem::path& path) {
  using nlohmann::json;
  auto model = [](const std::optional<QuadModel>& q) -> json {
    if (!q) return nullptr;
    return {{"c2", q->c2}, {"c1", q->c1}, {"c0", q->c0}, {"lo", q->lo}, {"hi", q->hi}, {"linear", q->linear}};
  };
  json j = {{"metric", metric_name(fit.metric)}, {"split", fit.split}, {"positive", model(fit.positive)},
            {"negative", model(fit.negative)}};
  io::write_text(path, j.dump(2) + "\n");
}

QuadFit load_fit(const std::filesystem::path& path) {
  using nlohmann::json;
  try {
    const json j = json::parse(io::read_text(path));
    auto model = [](const json& m) -> std::optional<QuadModel> {
      if (m.is_null()) return std::nullopt;
      QuadModel q{m.at("c2").get<double>(), m.at("c1").get<double>(), m.at("c0").get<double>(),
                  m.at("lo").get<double>(), m.at("hi").get<double>(), m.at("linear").get<bool>()};
      if (!(q.lo <= q.hi)) throw FormatError("fit bounds are not ordered", 0);
      return q;
    };
    QuadFit f;
    f.metric = metric_from_name(j.at("metric").get<std::string>());
    f.split = j.at("split").get<bool>();
    f.positive = model(j.at("positive"));
    f.negative = model(j.at("negative"));
    if (!f.positive && !f.negative) throw FormatError("fit file holds no model", 0);
    return f;
  } catch (const json::exception& e) {
    throw FormatError("malformed fit file: " + std::string(e.what()), 0);
  }
}

}  // namespace amx
