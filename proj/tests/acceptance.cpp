// End-to-end acceptance run: trains and simulates the desk setup through the
// pipeline, then checks each criterion and prints one PASS/FAIL line per item.
// Usage: acceptance [output-dir] [--reuse]

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "amx/ame.hpp"
#include "amx/analysis.hpp"
#include "amx/binary_io.hpp"
#include "amx/pareto.hpp"
#include "amx/pipeline.hpp"
#include "amx/profiler.hpp"
#include "oracles.hpp"

using namespace amx;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

struct Run {
  fs::path out;
  qsim::QuantModel model;
  std::vector<AmLut> library;
  std::vector<LayerProfile> profiles;
  AlphaReport alphas;
  AccuracyTable accuracy;
  std::vector<SamplePoint> study;
  Dataset train, test;
  json manifest;
};

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

LayerProfile random_profile(int node, std::mt19937_64& rng) {
  LayerProfile p;
  p.node = node;
  p.approximate = true;
  p.p = oracle::random_pmf(rng);
  p.f = oracle::random_pmf(rng);
  p.n_per_filter = 1 + static_cast<int>(rng() % 300);
  p.scale = 1e-4 * (1 + static_cast<double>(rng() % 100));
  return p;
}

// Criterion 1: the exact multiplier is an identity everywhere.
void exact_identity(const Run& r, Outcome& o) {
  const auto exact = make_exact();
  const auto delta = error_matrix(exact);
  o.require(delta.is_zero(), "delta is zero");
  const auto m = compute_metrics(delta, JointDistribution::uniform());
  for (double v : {m.er, m.me, m.mre, m.med, m.mred, m.vare, m.varre, m.vared, m.varred, m.mse, m.rmse, m.wce, m.wcre})
    o.require(v == 0.0, "metric is zero");

  const qsim::Executor direct(r.model), lut(r.model, &exact);
  std::size_t identical = 0;
  for (std::size_t i = 0; i < r.test.count; ++i) identical += direct.run(r.test.image(i)) == lut.run(r.test.image(i));
  o.require(identical == r.test.count, "bit-identical inference");

  auto profiles = r.profiles;
  apply_alphas(profiles, r.alphas);
  o.require(compute_ame(build_arch_matrices(r.model, profiles).total, delta) == 0.0, "desk AME");
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    PropagationGraph g;
    g.add({"input", qsim::NodeKind::Input, {}, false, {}});
    std::vector<LayerProfile> ps;
    for (int i = 1; i <= 4; ++i) {
      g.add({"c" + std::to_string(i), qsim::NodeKind::Conv2D, {i - 1}, true, 0.5 + static_cast<double>(rng() % 100) / 50});
      ps.push_back(random_profile(i, rng));
    }
    o.require(compute_ame(build_arch_matrices(g, ps).total, delta) == 0.0, "random architecture AME");
  }
  o.detail << identical << "/" << r.test.count << " images bit-identical, all metrics and AME exactly 0";
}

// Criterion 2: metric engine against the naive oracle.
void metric_oracle(Outcome& o) {
  std::mt19937_64 rng(2);
  double worst = 0;
  auto compare = [&](const MetricsReport& got, const oracle::Metrics& want) {
    const std::pair<long double, double> pairs[] = {
        {want.er, got.er},       {want.me, got.me},       {want.mre, got.mre},       {want.med, got.med},
        {want.mred, got.mred},   {want.vare, got.vare},   {want.varre, got.varre},   {want.vared, got.vared},
        {want.varred, got.varred}, {want.mse, got.mse},   {want.rmse, got.rmse},     {want.wce, got.wce},
        {want.wcre, got.wcre}};
    for (const auto& [w, g] : pairs) {
      if (w == 0 && g == 0) continue;
      worst = std::max(worst, static_cast<double>(std::fabs(w - g) / std::fabs(w)));
    }
  };
  int me_ok = 0;
  for (int i = 0; i < 20; ++i) {
    const auto am = oracle::random_lut(rng, i);
    const auto delta = error_matrix(am);
    const auto uni = JointDistribution::uniform();
    compare(compute_metrics(delta, uni), oracle::metrics(am, oracle::uniform_pmf()));
    const auto p = oracle::random_pmf(rng), f = oracle::random_pmf(rng);
    const auto outer = JointDistribution::outer_product(p, f);
    const auto got = compute_metrics(delta, outer);
    compare(got, oracle::metrics(am, oracle::outer_pmf(p, f)));
    me_ok += rel_diff(got.me, frobenius_inner(outer.matrix(), delta)) <= 1e-12;
  }
  o.require(worst <= 1e-12, "relative error <= 1e-12");
  o.require(me_ok == 20, "ME equals the Frobenius form");
  o.detail << "40 LUT/distribution pairs, worst relative deviation " << fmt(worst) << ", ME==<D,delta> on " << me_ok << "/20";
}

// Criterion 3: per-layer estimate against measured intrinsic error on the
// last approximate layer.
void layer_fidelity(const Run& r, Outcome& o) {
  const int last = r.model.approximate_conv_nodes().back();
  const LayerProfile* prof = nullptr;
  for (const auto& p : r.profiles)
    if (p.node == last) prof = &p;
  o.require(prof != nullptr, "profile of the last approximate layer");
  if (!prof) return;
  const auto data = r.train.slice(0, 200);
  std::vector<double> est, meas;
  for (std::size_t i = 0; i < r.library.size(); i += 3) {
    const auto& am = r.library[i];
    est.push_back(estimate_layer_error(*prof, error_matrix(am)));
    meas.push_back(measure_layer_error(r.model, am, data, last, ErrorMode::Intrinsic, FeatureMask::All));
  }
  const double pcc = pearson(est, meas);
  o.require(est.size() >= 50, ">= 50 AMs");
  o.require(pcc >= 0.95, "PCC >= 0.95");
  o.detail << prof->name << ", " << est.size() << " AMs, PCC " << fmt(pcc);
}

// Criterion 4: fused, per-layer and recursive AME agree; worked example.
void ame_consistency(const Run& r, Outcome& o) {
  auto profiles = r.profiles;
  apply_alphas(profiles, r.alphas);
  const auto graph = propagation_graph(r.model, profiles);
  const auto arch = build_arch_matrices(graph, profiles);
  std::mt19937_64 rng(4);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const auto delta = error_matrix(oracle::random_lut(rng, i));
    const double ame = compute_ame(arch.total, delta);
    double per_layer = 0;
    for (const auto& m : arch.layers) per_layer += frobenius_inner(m.a, delta);
    const double rec = compute_layerwise_estimates(graph, profiles, delta)[static_cast<std::size_t>(arch.target)];
    worst = std::max({worst, rel_diff(ame, per_layer), rel_diff(ame, rec)});
  }
  o.require(worst <= 1e-9, "formulations agree to 1e-9");

  double worst_coeff = 0;
  std::uniform_real_distribution<double> u(-3, 3);
  for (int t = 0; t < 50; ++t) {
    const double a1 = u(rng), a2 = u(rng), a3 = u(rng);
    PropagationGraph g;
    g.add({"input", qsim::NodeKind::Input, {}, false, {}});
    g.add({"L0", qsim::NodeKind::Conv2D, {0}, true, std::nullopt});
    g.add({"L1", qsim::NodeKind::Conv2D, {1}, true, a1});
    g.add({"L2", qsim::NodeKind::Conv2D, {2}, false, a2});
    g.add({"L3", qsim::NodeKind::Conv2D, {1}, false, a3});
    g.add({"add", qsim::NodeKind::Add, {3, 4}, false, {}});
    const auto res = build_arch_matrices(g, {random_profile(1, rng), random_profile(2, rng)}, 5);
    worst_coeff = std::max({worst_coeff, std::abs(res.layers[0].coefficient - (a1 * a2 + a3)), std::abs(res.layers[1].coefficient - a2)});
  }
  o.require(worst_coeff <= 1e-12, "residual example coefficients");
  o.detail << "20 random AMs, worst relative gap " << fmt(worst) << "; residual example worst coefficient gap " << fmt(worst_coeff);
}

std::string pcc_text(const BranchStats& b) { return b.pcc ? fmt(*b.pcc) : "n/a"; }
double abs_pcc(const BranchStats& b) { return b.pcc ? std::abs(*b.pcc) : 0.0; }

// Criterion 5: AME correlates better with accuracy than the baseline metrics.
void correlation(const Run& r, Outcome& o) {
  const auto ame = correlation_study(r.study, Metric::Ame);
  const auto me = correlation_study(r.study, Metric::Me);
  const auto med = correlation_study(r.study, Metric::Med);
  const auto er = correlation_study(r.study, Metric::Er);
  const double pos = abs_pcc(ame.positive), neg = abs_pcc(ame.negative);
  o.require(ame.positive.pcc && ame.negative.pcc, "both AME branches present");
  o.require(pos >= 0.7 && neg >= 0.7, "|PCC| >= 0.7 on both branches");
  o.require(pos >= abs_pcc(me.positive) && neg >= abs_pcc(me.negative), "AME >= ME per branch");
  o.require(std::min(pos, neg) >= abs_pcc(med.positive), "AME >= MED");
  o.require(std::min(pos, neg) >= abs_pcc(er.positive), "AME >= ER");
  o.detail << "AME positive branch " << pcc_text(ame.positive) << " (n=" << ame.positive.count << "), negative branch "
           << pcc_text(ame.negative) << " (n=" << ame.negative.count << "); ME " << pcc_text(me.positive) << " / "
           << pcc_text(me.negative) << "; MED " << pcc_text(med.positive) << "; ER " << pcc_text(er.positive);
}

// Criterion 6: cross-validated prediction error.
void prediction(const Run& r, Outcome& o) {
  std::map<Metric, double> mape;
  for (Metric m : {Metric::Ame, Metric::Me, Metric::Med, Metric::Er}) mape[m] = cross_validated_mape(r.study, m, 5).mape;
  const double a = mape[Metric::Ame];
  o.require(a <= mape[Metric::Me] && a <= mape[Metric::Med] && a <= mape[Metric::Er], "AME MAPE lowest");
  o.require(a <= 8.0, "AME MAPE <= 8%");
  o.detail << "5-fold MAPE: AME " << fmt(a) << "%, ME " << fmt(mape[Metric::Me]) << "%, MED " << fmt(mape[Metric::Med]) << "%, ER "
           << fmt(mape[Metric::Er]) << "%";
}

// Criterion 7: pseudo-Pareto coverage of the simulated front.
void coverage(const Run& r, Outcome& o) {
  std::vector<ParetoItem> search, truth;
  for (const auto& s : r.study) {
    search.push_back({s.am, s.cost, std::abs(s.ame), std::nullopt});
    truth.push_back({s.am, s.cost, 0.0, s.accuracy});
  }
  std::vector<double> cov;
  std::set<std::string> previous;
  bool monotone = true, disjoint = true;
  std::size_t true_size = 0;
  for (int n = 1; n <= 6; ++n) {
    const auto res = iterative_search(search, n);
    std::set<std::string> seen;
    for (const auto& f : res.fronts)
      for (const auto& i : f) disjoint = disjoint && seen.insert(i.name).second;
    monotone = monotone && std::includes(seen.begin(), seen.end(), previous.begin(), previous.end());
    previous = seen;
    std::vector<std::string> names(seen.begin(), seen.end());
    const auto rep = coverage_report(names, truth, r.accuracy.baseline, 0.30);
    cov.push_back(rep.coverage);
    true_size = rep.true_front.size();
  }
  o.require(cov[1] >= 0.9, "n=2 coverage >= 90%");
  o.require(cov[2] == 1.0, "n=3 coverage 100%");
  o.require(monotone && disjoint, "monotone and disjoint fronts");
  o.detail << "true front " << true_size << " AMs; coverage n=1.." << cov.size() << ":";
  for (double c : cov) o.detail << " " << fmt(c);
}

// Criterion 8: AME evaluation is far cheaper than simulation.
void speedup(const Run& r, Outcome& o) {
  const auto& t = r.manifest.at("timing");
  const double ratio = t.at("ame_to_simulation_ratio").get<double>();
  o.require(ratio > 0 && ratio <= 1e-3, "ratio <= 1e-3");
  o.detail << "AME " << fmt(t.at("ame_seconds_per_am").get<double>()) << " s/AM, simulation "
           << fmt(t.at("simulation_seconds_per_am").get<double>()) << " s/AM, ratio " << fmt(ratio);
}

// Criterion 9: propagation through batch norm, add and max pool.
void propagation_laws(const Run& r, Outcome& o, const std::vector<AmLut>& typical) {
  const auto& m = r.model;
  const qsim::Executor exact(m);
  const int bn = m.arch.find("bn3"), add = m.arch.find("add"), relu4 = m.arch.find("relu4"), pool2 = m.arch.find("pool2");
  const int conv3 = m.arch.layers[static_cast<std::size_t>(bn)].inputs[0];
  const auto& conv_q = m.edges[static_cast<std::size_t>(conv3)].q;
  const auto& bn_node = m.nodes[static_cast<std::size_t>(bn)];
  const auto& layer_add = m.arch.layers[static_cast<std::size_t>(add)];
  double bn_worst = 0;
  std::size_t add_checked = 0, add_bad = 0;
  for (const auto& am : typical) {
    const qsim::Executor approx(m, &am);
    for (std::size_t i = 0; i < 20; ++i) {
      const auto e = exact.run(r.test.image(i));
      const auto a = approx.run(r.test.image(i));
      // Batch norm in float reference mode on the dequantized conv output.
      const auto& xe = e[static_cast<std::size_t>(conv3)];
      const auto& xa = a[static_cast<std::size_t>(conv3)];
      const auto hw = static_cast<std::size_t>(xe.shape.h * xe.shape.w);
      for (std::size_t j = 0; j < xe.data.size(); ++j) {
        const int c = static_cast<int>(j / hw);
        const double in_err = conv_q.dequantize(xa.data[j]) - conv_q.dequantize(xe.data[j]);
        const double out_err = bn_node.bn_apply_real(c, conv_q.dequantize(xa.data[j])) - bn_node.bn_apply_real(c, conv_q.dequantize(xe.data[j]));
        const double want = bn_node.bn_factor[static_cast<std::size_t>(c)] * in_err;
        bn_worst = std::max(bn_worst, std::abs(out_err - want) / std::max(1.0, std::abs(want)));
      }
      // Add in the integer accumulator domain.
      const auto& p1e = e[static_cast<std::size_t>(layer_add.inputs[0])].data;
      const auto& p2e = e[static_cast<std::size_t>(layer_add.inputs[1])].data;
      const auto& p1a = a[static_cast<std::size_t>(layer_add.inputs[0])].data;
      const auto& p2a = a[static_cast<std::size_t>(layer_add.inputs[1])].data;
      for (std::size_t j = 0; j < p1e.size(); ++j) {
        const __int128 base = exact.add_accumulate(add, p1e[j], p2e[j]);
        const __int128 out_err = exact.add_accumulate(add, p1a[j], p2a[j]) - base;
        const __int128 e1 = exact.add_accumulate(add, p1a[j], p2e[j]) - base;
        const __int128 e2 = exact.add_accumulate(add, p1e[j], p2a[j]) - base;
        ++add_checked;
        add_bad += out_err != e1 + e2;
      }
    }
  }
  o.require(bn_worst <= 1e-9, "batch norm error scales by g_c");
  o.require(add_bad == 0, "add error is the sum of input errors");

  const auto data = r.train.slice(0, 200);
  const std::vector<int> nodes{relu4, pool2};
  double pool_worst = 0;
  for (const auto& am : typical) {
    const auto e = measure_node_errors(m, am, data, nodes, ErrorMode::Full, FeatureMask::Positive);
    pool_worst = std::max(pool_worst, rel_diff(e[0], e[1]));
    o.detail << am.name() << " before/after pool " << fmt(e[0]) << "/" << fmt(e[1]) << "; ";
  }
  o.require(pool_worst <= 0.2, "max-pool error within 20%");
  o.detail << "BN worst gap " << fmt(bn_worst) << ", add " << add_checked - add_bad << "/" << add_checked << " exact";
}

// Criterion 10: alpha principles.
void alpha_audit(const Run& r, Outcome& o, const std::vector<TypicalAm>& typical) {
  std::size_t kept = 0;
  double largest = 0;
  for (const auto& l : r.alphas.layers) {
    for (const auto& s : l.samples)
      if (s.alpha) {
        ++kept;
        largest = std::max(largest, std::abs(*s.alpha));
      }
    if (l.alpha) largest = std::max(largest, std::abs(*l.alpha));
  }
  o.require(largest < 10, "|alpha| < 10");
  for (const auto& t : r.alphas.typical) {
    const bool in_band = t.degradation >= 0.02 && t.degradation <= 0.10;
    o.require(t.admitted == in_band, "admission follows the band");
    const auto* row = r.accuracy.find(t.am);
    o.require(row && std::abs((r.accuracy.baseline - row->accuracy) - t.degradation) < 1e-12, "degradation matches simulation");
  }
  o.require(!typical.empty(), "typical AMs available");

  // Order invariance on one propagated layer.
  const auto data = r.train.slice(0, 200);
  const int conv3 = r.model.arch.find("conv3");
  auto shuffled = typical;
  const double forward = estimate_alpha(r.model, shuffled, data, conv3);
  std::reverse(shuffled.begin(), shuffled.end());
  const double reversed = estimate_alpha(r.model, shuffled, data, conv3);
  o.require(forward == reversed, "order invariance");
  o.detail << r.alphas.typical.size() << " typical AMs (";
  for (const auto& t : r.alphas.typical) o.detail << t.am << " " << fmt(t.degradation) << (t.admitted ? "" : " rejected") << ", ";
  o.detail << "), " << kept << " alpha samples, max |alpha| " << fmt(largest) << ", conv3 alpha " << fmt(forward) << " in both orders";
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance-out";
  bool reuse = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--reuse")
      reuse = true;
    else
      out = a;
  }
  if (!reuse) fs::remove_all(out);

  Run r;
  try {
    PipelineConfig cfg;
    cfg.output = out;
    const auto res = run_pipeline(cfg, [](const std::string& m) { std::cerr << m << "\n"; });
    r.out = out;
    r.model = qsim::load_quant_model(out / "model.json");
    r.library = apply_costs(load_library(out / "luts"), out / "costs.csv");
    r.profiles = load_profiles(out / "profiles.json");
    r.alphas = load_alpha_report(out / "alphas.json");
    r.accuracy = load_accuracies(out / "accuracy.csv");
    r.study = load_study(out / "study.csv");
    r.train = load_dataset(out / "data" / "train.amd");
    r.test = load_dataset(out / "data" / "test.amd");
    r.manifest = json::parse(io::read_text(res.manifest));
  } catch (const std::exception& e) {
    std::cerr << "pipeline failed: " << e.what() << "\n";
    for (int i = 1; i <= 10; ++i) std::cout << "criterion " << i << ": FAIL (pipeline did not complete)\n";
    return 1;
  }

  std::vector<TypicalAm> typical;
  for (const auto& t : r.alphas.typical)
    if (t.admitted)
      for (const auto& am : r.library)
        if (am.name() == t.am) typical.push_back({am, t.degradation});
  std::vector<AmLut> typical_luts;
  for (const auto& t : typical) typical_luts.push_back(t.am);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"exact-multiplier identity", [&](Outcome& o) { exact_identity(r, o); }},
      {"metric oracle equivalence", [&](Outcome& o) { metric_oracle(o); }},
      {"per-layer estimate fidelity", [&](Outcome& o) { layer_fidelity(r, o); }},
      {"AME formulation consistency", [&](Outcome& o) { ame_consistency(r, o); }},
      {"correlation dominance", [&](Outcome& o) { correlation(r, o); }},
      {"prediction quality", [&](Outcome& o) { prediction(r, o); }},
      {"Pareto coverage", [&](Outcome& o) { coverage(r, o); }},
      {"AME speedup", [&](Outcome& o) { speedup(r, o); }},
      {"propagation unit laws", [&](Outcome& o) { propagation_laws(r, o, typical_luts); }},
      {"alpha principles audit", [&](Outcome& o) { alpha_audit(r, o, typical); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [error: " << e.what() << "]";
    }
    failed += !o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": " << o.detail.str() << "\n"
              << std::flush;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed, "
            << criteria.size() << " evaluated\n";
  return failed == 0 ? 0 : 1;
}
