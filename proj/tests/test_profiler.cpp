#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <random>

#include "amx/errors.hpp"
#include "amx/profiler.hpp"
#include "fixtures.hpp"

using namespace amx;
using namespace amx::qsim;

namespace {

Dataset constant_images(Shape s, std::uint32_t count, std::uint8_t value) {
  Dataset ds{count, static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w), static_cast<std::uint32_t>(s.c), 2, {}, {}};
  ds.images.assign(count * s.size(), value);
  ds.labels.assign(count, 0);
  return ds;
}

Dataset random_images(Shape s, std::uint32_t count, std::uint64_t seed) {
  auto ds = constant_images(s, count, 0);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> px(0, 255);
  for (auto& v : ds.images) v = static_cast<std::uint8_t>(px(rng));
  return ds;
}

// input (1x6x6) -> 3x3 approximate conv -> relu -> 1x1 exact conv (unit
// weight) -> flatten -> dense. The 1x1 layer passes its input error through.
QuantModel passthrough_chain() {
  ArchSpec a;
  a.input = {1, 6, 6};
  a.classes = 2;
  a.layers = {{"input", NodeKind::Input, {}},
              {"conv1", NodeKind::Conv2D, {0}, 1, 3, 1, 1, 0},
              {"relu", NodeKind::ReLU, {1}},
              {"conv2", NodeKind::Conv2D, {2}, 1, 1, 1, 0, 0},
              {"flatten", NodeKind::Flatten, {3}},
              {"fc", NodeKind::Dense, {4}, 0, 1, 1, 0, 2}};
  auto m = fixture::hand_model(a);
  m.edges[0].q = {1.0 / 255, 0};
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> code(0, 255);
  auto& c1 = m.nodes[1];
  for (int i = 0; i < 9; ++i) c1.weight.push_back(static_cast<std::uint8_t>(code(rng)));
  c1.weight_q = {1.0 / 128, 128};
  c1.bias = {0};
  c1.approximate = true;
  m.edges[1] = {{1.0 / 255 / 128, 0}, true, true};
  m.edges[2].q = {4.0 / 255, 0};
  auto& c2 = m.nodes[3];
  c2.weight = {1};
  c2.weight_q = {1.0, 0};
  c2.bias = {0};
  m.edges[3] = {{4.0 / 255, 0}, true, true};
  m.edges[4] = m.edges[3];
  m.edges[5] = m.edges[3];
  m.nodes[5].weight.assign(2 * 36, 0);
  m.nodes[5].bias.assign(2, 0);
  return m;
}

}  // namespace

TEST_CASE("distributions are pmfs and independent of any AM") {
  const auto& d = fixture::desk();
  const auto profiles = profile_distributions(d.model, d.train.slice(0, 50));
  CHECK(profiles.size() == d.model.conv_nodes().size());
  for (const auto& p : profiles) {
    CHECK(std::accumulate(p.p.begin(), p.p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::accumulate(p.f.begin(), p.f.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.n_per_filter == d.model.arch.weights_per_filter(p.node));
    CHECK(p.samples == 50);
  }
  CHECK(profiles[0].approximate);
  CHECK(profile_distributions(d.model, d.train.slice(0, 50), 3)[2].p == profiles[2].p);
}

TEST_CASE("constant-zero images put all input mass on the zero point") {
  const auto& d = fixture::desk();
  const auto profiles = profile_distributions(d.model, constant_images({1, 16, 16}, 4, 0));
  const auto& first = profiles[0];
  const auto zx = static_cast<std::size_t>(d.model.edges[0].q.zero_point);
  CHECK(first.p[zx] == 1.0);
}

TEST_CASE("constant weights put all weight mass on one code") {
  auto m = fixture::desk().model;
  const auto conv2 = static_cast<std::size_t>(m.arch.find("conv2"));
  std::fill(m.nodes[conv2].weight.begin(), m.nodes[conv2].weight.end(), 7);
  const auto profiles = profile_distributions(m, fixture::desk().train.slice(0, 4));
  for (const auto& p : profiles)
    if (p.node == static_cast<int>(conv2)) CHECK(p.f[7] == 1.0);
}

TEST_CASE("exact AM has no error in either mode") {
  const auto& d = fixture::desk();
  const auto exact = make_exact();
  const auto data = d.train.slice(0, 20);
  for (int node : d.model.conv_nodes()) {
    CHECK(measure_layer_error(d.model, exact, data, node, ErrorMode::Full) == 0.0);
    CHECK(measure_layer_error(d.model, exact, data, node, ErrorMode::Intrinsic) == 0.0);
  }
}

TEST_CASE("single lookup error in real units") {
  auto m = fixture::conv_model({1, 1, 1}, 1, 1, 3);
  m.edges[0].q.scale = 0.5;
  m.nodes[1].weight_q.scale = 0.25;
  for (std::size_t i = 1; i < 4; ++i) m.edges[i].q.scale = 0.125;
  const auto data = constant_images({1, 1, 1}, 5, 3);
  const auto trunc = make_truncated(2);
  CHECK(measure_layer_error(m, trunc, data, 1, ErrorMode::Full) == doctest::Approx(-0.125).epsilon(1e-15));
  CHECK(measure_layer_error(m, trunc, data, 1, ErrorMode::Intrinsic) == doctest::Approx(-0.125).epsilon(1e-15));
}

TEST_CASE("the first approximate layer has no upstream error") {
  const auto& d = fixture::desk();
  const auto data = d.train.slice(0, 30);
  const int conv1 = d.model.arch.find("conv1");
  for (const auto& am : {make_truncated(9), make_mitchell(), make_perforated({1, 2})})
    CHECK(measure_layer_error(d.model, am, data, conv1, ErrorMode::Full) ==
          measure_layer_error(d.model, am, data, conv1, ErrorMode::Intrinsic));
}

TEST_CASE("deeper layers differ between full and intrinsic error") {
  const auto& d = fixture::desk();
  const auto data = d.train.slice(0, 30);
  const auto am = make_truncated(10);
  const int conv3 = d.model.arch.find("conv3");
  CHECK(measure_layer_error(d.model, am, data, conv3, ErrorMode::Full) !=
        measure_layer_error(d.model, am, data, conv3, ErrorMode::Intrinsic));
  CHECK_THROWS_AS(measure_layer_error(d.model, am, data, d.model.arch.find("bn3"), ErrorMode::Full), ParameterError);
}

TEST_CASE("a unit 1x1 layer passes error through with alpha 1") {
  const auto m = passthrough_chain();
  const auto data = random_images({1, 6, 6}, 40, 8);
  std::vector<TypicalAm> typical{{make_truncated(10), 0.05}, {make_mitchell(), 0.03}};
  LayerAlpha trail;
  const double alpha = estimate_alpha(m, typical, data, 3, {}, &trail);
  CHECK(alpha == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(trail.samples.size() == 2);
}

TEST_CASE("alpha is independent of the typical-AM order") {
  const auto& d = fixture::desk();
  const auto data = d.train.slice(0, 30);
  std::vector<TypicalAm> typical{{make_truncated(10), 0.04}, {make_perforated({2}), 0.06}, {make_mitchell(), 0.03}};
  const int conv3 = d.model.arch.find("conv3");
  const double a = estimate_alpha(d.model, typical, data, conv3);
  std::reverse(typical.begin(), typical.end());
  CHECK(estimate_alpha(d.model, typical, data, conv3) == a);
  std::swap(typical[0], typical[1]);
  CHECK(estimate_alpha(d.model, typical, data, conv3) == a);
}

TEST_CASE("alpha estimation rejects out-of-band AMs") {
  const auto& d = fixture::desk();
  const auto data = d.train.slice(0, 10);
  std::vector<TypicalAm> typical{{make_truncated(10), 0.5}, {make_mitchell(), 0.001}};
  LayerAlpha trail;
  CHECK_THROWS_AS(estimate_alpha(d.model, typical, data, d.model.arch.find("conv3"), {}, &trail), EstimationError);
  std::vector<std::string> warnings;
  const auto report = estimate_alphas(d.model, typical, data, {}, [&](const std::string& w) { warnings.push_back(w); });
  for (const auto& t : report.typical) CHECK_FALSE(t.admitted);
  for (const auto& l : report.layers) CHECK_FALSE(l.alpha.has_value());
  CHECK(!warnings.empty());
}

TEST_CASE("alpha report covers every convolution fed by approximation error") {
  const auto& d = fixture::desk();
  const auto data = d.train.slice(0, 20);
  std::vector<TypicalAm> typical{{make_truncated(10), 0.04}, {make_mitchell(), 0.05}};
  const auto report = estimate_alphas(d.model, typical, data);
  std::vector<std::string> names;
  for (const auto& l : report.layers) {
    names.push_back(l.name);
    if (l.alpha) CHECK(std::abs(*l.alpha) < 10);
    for (const auto& s : l.samples)
      if (s.alpha) CHECK(*s.alpha == doctest::Approx((s.full - s.intrinsic) / s.upstream));
  }
  CHECK(names == std::vector<std::string>{"conv2", "conv3", "conv4", "shortcut", "conv5"});

  const auto dir = std::filesystem::temp_directory_path() / ("amx_prof_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  save_alpha_report(report, dir / "a.json");
  const auto back = load_alpha_report(dir / "a.json");
  REQUIRE(back.layers.size() == report.layers.size());
  for (std::size_t i = 0; i < back.layers.size(); ++i) CHECK(back.layers[i].alpha == report.layers[i].alpha);

  auto profiles = profile_distributions(d.model, data);
  apply_alphas(profiles, report);
  save_profiles(profiles, dir / "p.json");
  const auto loaded = load_profiles(dir / "p.json");
  REQUIRE(loaded.size() == profiles.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].p == profiles[i].p);
    CHECK(loaded[i].f == profiles[i].f);
    CHECK(loaded[i].alpha == profiles[i].alpha);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("typical AMs come from the degradation band") {
  std::vector<AmLut> lib;
  std::vector<double> acc;
  const double baseline = 0.95;
  for (int k = 1; k <= 12; ++k) {
    lib.push_back(make_truncated(k));
    acc.push_back(baseline - 0.01 * k);
  }
  const std::vector<double> targets{0.03, 0.05, 0.08};
  const auto picked = select_typical_ams(lib, acc, baseline, targets);
  REQUIRE(picked.size() == 3);
  for (const auto& t : picked) {
    CHECK(t.degradation >= 0.02);
    CHECK(t.degradation <= 0.10);
  }
  CHECK(picked[0].am.name() == "trunc_k3");
  CHECK(picked[2].am.name() == "trunc_k8");

  // Targets outside the band still only admit in-band AMs.
  const std::vector<double> far{0.5};
  const auto one = select_typical_ams(lib, acc, baseline, far);
  REQUIRE(one.size() == 1);
  CHECK(one[0].degradation <= 0.10 + 1e-12);
  CHECK(select_typical_ams(std::span(lib).first(1), std::span(acc).first(1), baseline, targets).empty());
}
