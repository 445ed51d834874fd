#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "amx/analysis.hpp"
#include "amx/errors.hpp"

using namespace amx;

namespace {

SamplePoint point(const std::string& name, double ame, double accuracy, double baseline = 1.0) {
  SamplePoint s;
  s.am = name;
  s.ame = ame;
  s.metrics.med = std::abs(ame);
  s.metrics.me = ame / 2;
  s.accuracy = accuracy;
  s.degradation = baseline - accuracy;
  return s;
}

std::vector<SamplePoint> constructed(int n) {
  std::vector<SamplePoint> v;
  for (int i = 0; i < n; ++i) {
    const double m = (i - n / 2) * 0.01;
    v.push_back(point("am" + std::to_string(100 + i), m, 1.0 - std::abs(m)));
  }
  return v;
}

}  // namespace

TEST_CASE("pearson examples") {
  const std::vector<double> a{1, 2, 3};
  CHECK(pearson(a, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson(a, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(pearson(a, std::vector<double>{1, 1, 1}), EstimationError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ParameterError);
  CHECK_THROWS_AS(pearson(a, std::vector<double>{1, 2}), ParameterError);
}

TEST_CASE("pearson is symmetric and affine invariant") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(30), y(30), x2(30), y2(30);
    for (int i = 0; i < 30; ++i) {
      x[i] = n(rng);
      y[i] = 0.5 * x[i] + n(rng);
      x2[i] = 3.5 * x[i] - 7;
      y2[i] = 0.25 * y[i] + 100;
    }
    const double r = pearson(x, y);
    CHECK(r >= -1.0);
    CHECK(r <= 1.0);
    CHECK(pearson(y, x) == doctest::Approx(r).epsilon(1e-12));
    CHECK(pearson(x2, y2) == doctest::Approx(r).epsilon(1e-12));
  }
}

TEST_CASE("correlation study splits signed metrics") {
  const auto samples = constructed(21);
  const auto r = correlation_study(samples, Metric::Ame);
  CHECK(r.split);
  REQUIRE(r.positive.pcc);
  REQUIRE(r.negative.pcc);
  CHECK(*r.positive.pcc == doctest::Approx(-1.0));
  CHECK(*r.negative.pcc == doctest::Approx(1.0));
  CHECK(r.positive.count + r.negative.count == 21);

  const auto med = correlation_study(samples, Metric::Med);
  CHECK_FALSE(med.split);
  CHECK(*med.positive.pcc == doctest::Approx(-1.0));

  // The cap drops samples beyond 30% degradation.
  auto extra = samples;
  extra.push_back(point("zz", 5.0, 0.1));
  CHECK(correlation_study(extra, Metric::Ame).positive.count == r.positive.count);

  std::vector<SamplePoint> few{point("a", 0.1, 0.9), point("b", 0.2, 0.8), point("c", -0.1, 0.9)};
  CHECK_FALSE(correlation_study(few, Metric::Ame).negative.pcc.has_value());

  std::vector<SamplePoint> dupes(5, point("exact", 0.0, 1.0));
  CHECK_THROWS_AS(correlation_study(dupes, Metric::Ame), EstimationError);
}

TEST_CASE("quadratic fit") {
  std::vector<double> m, y;
  for (int i = -5; i <= 5; ++i) {
    m.push_back(i * 0.3);
    y.push_back(2 * (i * 0.3) * (i * 0.3) + 1);
  }
  const auto q = fit_points(m, y);
  CHECK(q.c2 == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(q.c1 == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(q.c0 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_FALSE(q.linear);
  CHECK(q.lo == doctest::Approx(-1.5));
  CHECK(q.hi == doctest::Approx(1.5));

  const auto out = q.predict(3.0);
  CHECK(out.clamped);
  CHECK(out.accuracy == doctest::Approx(2 * 1.5 * 1.5 + 1));
  CHECK_FALSE(q.predict(0.3).clamped);
}

TEST_CASE("degenerate fits fall back with a warning") {
  std::string warning;
  const std::vector<double> m{1, 1, 2, 2}, y{0.5, 0.7, 0.9, 0.9};
  const auto lin = fit_points(m, y, &warning);
  CHECK(lin.linear);
  CHECK_FALSE(warning.empty());
  // Identical m values average their targets.
  CHECK(lin.predict(1).accuracy == doctest::Approx(0.6));
  CHECK(lin.predict(2).accuracy == doctest::Approx(0.9));

  warning.clear();
  const std::vector<double> same{3, 3, 3}, acc{0.2, 0.4, 0.9};
  const auto c = fit_points(same, acc, &warning);
  CHECK(c.predict(3).accuracy == doctest::Approx(0.5));
  CHECK_FALSE(warning.empty());
  CHECK_THROWS_AS(fit_points(std::vector<double>{}, std::vector<double>{}), ParameterError);
}

TEST_CASE("least squares beats the best constant") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> m(40), y(40);
  double mean = 0;
  for (int i = 0; i < 40; ++i) {
    m[i] = u(rng);
    y[i] = 0.9 - 0.3 * m[i] * m[i] + 0.05 * u(rng);
    mean += y[i] / 40;
  }
  const auto q = fit_points(m, y);
  double sse = 0, sse0 = 0;
  for (int i = 0; i < 40; ++i) {
    sse += std::pow(q.predict(m[i]).accuracy - y[i], 2);
    sse0 += std::pow(mean - y[i], 2);
  }
  CHECK(sse <= sse0);
}

TEST_CASE("sign-split fit predicts each branch") {
  const auto samples = constructed(31);
  const auto fit = fit_quadratic(samples, Metric::Ame);
  CHECK(fit.split);
  REQUIRE(fit.positive);
  REQUIRE(fit.negative);
  CHECK(fit.predict(0.05).accuracy == doctest::Approx(0.95).epsilon(1e-9));
  CHECK(fit.predict(-0.05).accuracy == doctest::Approx(0.95).epsilon(1e-9));

  const auto path = std::filesystem::temp_directory_path() / ("amx_fit_" + std::to_string(::getpid()) + ".json");
  save_fit(fit, path);
  const auto back = load_fit(path);
  CHECK(back.metric == Metric::Ame);
  CHECK(back.predict(-0.07).accuracy == fit.predict(-0.07).accuracy);
  std::filesystem::remove(path);

  std::vector<SamplePoint> one_sided;
  for (const auto& s : samples)
    if (s.ame >= 0) one_sided.push_back(s);
  const auto half = fit_quadratic(one_sided, Metric::Ame);
  CHECK_FALSE(half.negative);
  CHECK(half.predict(-0.01).accuracy == half.positive->predict(-0.01).accuracy);
  CHECK_THROWS_AS(fit_quadratic(std::vector<SamplePoint>{point("a", 0.1, 0.9)}, Metric::Ame), EstimationError);
}

TEST_CASE("mape") {
  const std::vector<double> a{100, 50};
  CHECK(mape(a, a) == 0.0);
  CHECK(mape(std::vector<double>{90}, std::vector<double>{100}) == doctest::Approx(10.0));
  CHECK_THROWS_AS(mape(std::vector<double>{1}, std::vector<double>{0}), ParameterError);
  CHECK_THROWS_AS(mape(std::vector<double>{1, 2}, std::vector<double>{1}), ParameterError);
}

TEST_CASE("cross-validation is deterministic and small on exact data") {
  auto samples = constructed(40);
  const auto cv = cross_validated_mape(samples, Metric::Ame, 5);
  CHECK(cv.fold_mape.size() == 5);
  // Only held-out extremes clamped to the training range contribute error.
  CHECK(cv.mape < 0.5);
  std::reverse(samples.begin(), samples.end());
  CHECK(cross_validated_mape(samples, Metric::Ame, 5).mape == cv.mape);
}

TEST_CASE("metric names and study files") {
  for (Metric m : all_metrics()) CHECK(metric_from_name(metric_name(m)) == m);
  CHECK(is_signed(Metric::Me));
  CHECK_FALSE(is_signed(Metric::Med));
  CHECK_THROWS_AS(metric_from_name("bogus"), ParameterError);

  auto samples = constructed(5);
  samples[2].metrics.wcre = 0.123456789012345678;
  samples[3].cost = 0.3;
  const auto path = std::filesystem::temp_directory_path() / ("amx_study_" + std::to_string(::getpid()) + ".csv");
  save_study(samples, path);
  const auto back = load_study(path);
  REQUIRE(back.size() == 5);
  CHECK(study_csv(back) == study_csv(samples));
  CHECK(back[2].metrics.wcre == samples[2].metrics.wcre);
  CHECK(study_csv(samples).rfind("am,cost,ame,er,me,mre,med,mred,vare,varre,vared,varred,mse,rmse,wce,wcre,accuracy,degradation\n", 0) == 0);
  std::filesystem::remove(path);
}
