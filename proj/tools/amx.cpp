// amx: approximate-multiplier characterization, AME estimation and selection.

#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "amx/ame.hpp"
#include "amx/analysis.hpp"
#include "amx/binary_io.hpp"
#include "amx/errors.hpp"
#include "amx/pareto.hpp"
#include "amx/pipeline.hpp"
#include "amx/profiler.hpp"
#include "amx/qsim/infer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace amx;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  int jobs = 1;
};

std::set<int> parse_rows(const std::string& s) {
  std::set<int> rows;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ','))
    if (!cell.empty()) rows.insert(std::stoi(cell));
  return rows;
}

json metrics_json(const MetricsReport& m) {
  return {{"er", m.er},       {"me", m.me},       {"mre", m.mre},       {"med", m.med},   {"mred", m.mred},
          {"vare", m.vare},   {"varre", m.varre}, {"vared", m.vared},   {"varred", m.varred}, {"mse", m.mse},
          {"rmse", m.rmse},   {"wce", m.wce},     {"wcre", m.wcre},     {"n", m.n},       {"n_r", m.n_r}};
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

int node_by_name_or_id(const qsim::ArchSpec& arch, const std::string& s) {
  std::size_t used = 0;
  int id = -1;
  try {
    id = std::stoi(s, &used);
  } catch (const std::exception&) {
  }
  if (used == s.size() && id >= 0 && static_cast<std::size_t>(id) < arch.layers.size()) return id;
  return arch.find(s);
}

bool is_text(const fs::path& p) { return p.extension() == ".txt"; }

std::vector<AmLut> library_with_costs(const fs::path& dir, const std::string& costs) {
  auto lib = load_library(dir);
  if (lib.empty()) throw ParameterError("no LUTs in " + dir.string());
  return costs.empty() ? lib : apply_costs(std::move(lib), costs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate multiplier toolkit: metrics, AME, simulation and Pareto selection"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->envname("AMX_SEED");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate one AM LUT, or the whole built-in library");
  std::string family, rows, gen_out;
  int param = -1;
  bool compensated = false, whole_library = false;
  gen->add_option("--family", family, "exact|truncated|perforated|mitchell|drum");
  gen->add_option("--param", param, "Truncated bits (truncated) or kept bits (drum)");
  gen->add_option("--rows", rows, "Comma-separated removed partial-product rows (perforated)");
  gen->add_flag("--compensated", compensated, "Add constant error compensation (truncated, perforated)");
  gen->add_flag("--library", whole_library, "Write every built-in AM plus costs.csv into --out");
  gen->add_option("--out", gen_out, "Output LUT path (.amx binary, .txt text) or directory")->required();
  gen->callback([&] {
    if (whole_library) {
      const auto lib = generate_library();
      save_library(lib, gen_out);
      save_costs(lib, fs::path(gen_out) / "costs.csv");
      std::cout << lib.size() << " AMs written to " << gen_out << "\n";
      return;
    }
    const auto comp = compensated ? Compensation::Constant : Compensation::None;
    const Family f = family_from_name(family);
    auto need_param = [&] {
      if (param < 0) throw ParameterError("--param is required for family " + family);
      return param;
    };
    AmLut am = [&] {
      switch (f) {
        case Family::Exact: return make_exact();
        case Family::Truncated: return make_truncated(need_param(), comp);
        case Family::Perforated: return make_perforated(parse_rows(rows), comp);
        case Family::Mitchell: return make_mitchell();
        case Family::DynamicRange: return make_drum(need_param());
        default: throw ParameterError("family " + family + " cannot be generated");
      }
    }();
    if (is_text(gen_out))
      save_lut_text(am, gen_out);
    else
      save_lut(am, gen_out);
    std::cout << am.name() << "\n";
  });

  // dataset
  auto* ds = app.add_subcommand("dataset", "Render a synthetic dataset");
  SyntheticOptions so;
  std::string ds_out;
  ds->add_option("--count", so.count)->required();
  ds->add_option("--classes", so.classes);
  ds->add_option("--height", so.height);
  ds->add_option("--width", so.width);
  ds->add_option("--noise", so.noise);
  ds->add_option("--jitter", so.jitter);
  ds->add_option("--out", ds_out)->required();
  ds->callback([&] {
    so.seed = g.seed;
    save_dataset(generate_synthetic(so), ds_out);
  });

  // train
  auto* train = app.add_subcommand("train", "Train the float reference model");
  std::string train_data, train_out;
  qsim::TrainOptions to;
  train->add_option("--dataset", train_data)->required();
  train->add_option("--epochs", to.epochs);
  train->add_option("--batch-size", to.batch_size);
  train->add_option("--lr", to.learning_rate);
  train->add_option("--min-accuracy", to.min_accuracy);
  train->add_option("--out", train_out, "Model manifest (.json)")->required();
  train->callback([&] {
    to.seed = g.seed;
    const auto data = load_dataset(train_data);
    const auto arch = qsim::desk_architecture(static_cast<int>(data.classes),
                                              {static_cast<int>(data.channels), static_cast<int>(data.height),
                                               static_cast<int>(data.width)});
    qsim::TrainReport rep;
    const auto model = qsim::train_reference(data, arch, to, &rep);
    qsim::save_float_model(model, train_out);
    if (!rep.epoch_accuracy.empty()) std::cout << "train accuracy " << rep.epoch_accuracy.back() << "\n";
  });

  // quantize
  auto* quant = app.add_subcommand("quantize", "Quantize a float model to uint8");
  std::string q_float, q_data, q_out;
  std::uint32_t calib = 500;
  quant->add_option("--float-model", q_float)->required();
  quant->add_option("--dataset", q_data, "Calibration images are taken from its start")->required();
  quant->add_option("--calib", calib)->check(CLI::PositiveNumber);
  quant->add_option("--out", q_out)->required();
  quant->callback([&] {
    const auto model = qsim::load_float_model(q_float);
    const auto data = load_dataset(q_data).slice(0, calib);
    qsim::save_quant_model(qsim::quantize(model, data, [](const std::string& w) { std::cerr << "warning: " << w << "\n"; }), q_out);
  });

  // profile
  auto* prof = app.add_subcommand("profile", "Collect operand distributions of every convolution");
  std::string p_model, p_data, p_out;
  std::uint32_t p_count = 500;
  prof->add_option("--model", p_model)->required();
  prof->add_option("--dataset", p_data)->required();
  prof->add_option("--count", p_count, "Images used from the start of the dataset");
  prof->add_option("--out", p_out)->required();
  prof->callback([&] {
    const auto model = qsim::load_quant_model(p_model);
    save_profiles(profile_distributions(model, load_dataset(p_data).slice(0, p_count), g.jobs), p_out);
  });

  // alpha
  auto* alpha = app.add_subcommand("alpha", "Estimate error propagation factors from typical AMs");
  std::string a_model, a_luts, a_data, a_eval, a_acc, a_out;
  std::uint32_t a_count = 200;
  std::vector<double> targets{0.03, 0.05, 0.08};
  alpha->add_option("--model", a_model)->required();
  alpha->add_option("--luts", a_luts)->required();
  alpha->add_option("--dataset", a_data, "Images for error measurement")->required();
  alpha->add_option("--eval-dataset", a_eval, "Images for accuracy degradation (default: --dataset)");
  alpha->add_option("--accuracies", a_acc, "Reuse simulated accuracies (accuracy CSV)");
  alpha->add_option("--count", a_count, "Images used for error measurement");
  alpha->add_option("--targets", targets, "Degradation targets for typical-AM selection")->delimiter(',');
  alpha->add_option("--out", a_out)->required();
  alpha->callback([&] {
    const auto model = qsim::load_quant_model(a_model);
    const auto lib = load_library(a_luts);
    const auto eval = load_dataset(a_eval.empty() ? a_data : a_eval);
    const auto table = a_acc.empty() ? simulate_library(model, lib, eval, g.jobs) : load_accuracies(a_acc);
    std::vector<double> acc;
    for (const auto& am : lib) {
      const auto* r = table.find_hash(am.table_hash());
      if (!r) throw ParameterError("no accuracy for AM '" + am.name() + "'");
      acc.push_back(r->accuracy);
    }
    AlphaOptions o;
    o.jobs = g.jobs;
    const auto typical = select_typical_ams(lib, acc, table.baseline, targets, o);
    if (typical.empty()) throw EstimationError("no library AM degrades accuracy by 2-10%");
    const auto report = estimate_alphas(model, typical, load_dataset(a_data).slice(0, a_count), o,
                                        [](const std::string& w) { std::cerr << "warning: " << w << "\n"; });
    save_alpha_report(report, a_out);
  });

  // arch
  auto* arch = app.add_subcommand("arch", "Build the architecture matrix");
  std::string r_model, r_prof, r_alpha, r_out;
  arch->add_option("--model", r_model)->required();
  arch->add_option("--profiles", r_prof)->required();
  arch->add_option("--alphas", r_alpha)->required();
  arch->add_option("--out", r_out)->required();
  arch->callback([&] {
    const auto model = qsim::load_quant_model(r_model);
    auto profiles = load_profiles(r_prof);
    apply_alphas(profiles, load_alpha_report(r_alpha));
    const auto result = build_arch_matrices(model, profiles);
    save_arch(result, r_out);
    for (const auto& l : result.layers) std::cout << l.name << " c=" << l.coefficient << "\n";
  });

  // metrics
  auto* met = app.add_subcommand("metrics", "Error metrics of one AM");
  std::string m_lut, m_dist = "uniform", m_prof, m_layer, m_out;
  met->add_option("--lut", m_lut)->required();
  met->add_option("--dist", m_dist, "uniform");
  met->add_option("--profile", m_prof, "Use a layer's operand distribution from a profile file");
  met->add_option("--layer", m_layer, "Layer name within --profile (default: last approximate)");
  met->add_option("--out", m_out)->required();
  met->callback([&] {
    const auto am = load_lut(m_lut);
    JointDistribution dist = JointDistribution::uniform();
    if (!m_prof.empty()) {
      const auto profiles = load_profiles(m_prof);
      const LayerProfile* pick = nullptr;
      for (const auto& p : profiles)
        if (m_layer.empty() ? p.approximate : p.name == m_layer) pick = &p;
      if (!pick) throw ParameterError("profile has no matching layer");
      dist = JointDistribution::outer_product(pick->p, pick->f);
    } else if (m_dist != "uniform") {
      throw ParameterError("unknown distribution '" + m_dist + "'");
    }
    auto j = metrics_json(compute_metrics(error_matrix(am), dist));
    j["am"] = am.name();
    write_json(m_out, j);
  });

  // ame
  auto* ame = app.add_subcommand("ame", "Print the signed AME of one AM");
  std::string e_arch, e_lut;
  ame->add_option("--arch", e_arch)->required();
  ame->add_option("--lut", e_lut)->required();
  ame->callback([&] {
    const auto a = load_arch(e_arch);
    std::cout << std::setprecision(17) << compute_ame(a.total, error_matrix(load_lut(e_lut))) << "\n";
  });

  // simulate
  auto* sim = app.add_subcommand("simulate", "Bit-exact inference with an AM");
  std::string s_model, s_lut, s_data, s_out, s_tap;
  sim->add_option("--model", s_model)->required();
  sim->add_option("--lut", s_lut, "AM LUT (omit for the exact integer baseline)");
  sim->add_option("--dataset", s_data)->required();
  sim->add_option("--out", s_out)->required();
  sim->add_option("--tap-layer", s_tap, "Layer name or id whose feature maps are saved next to --out");
  sim->callback([&] {
    const auto model = qsim::load_quant_model(s_model);
    const auto data = load_dataset(s_data);
    std::optional<AmLut> am;
    if (!s_lut.empty()) am = load_lut(s_lut);
    std::optional<int> tap;
    if (!s_tap.empty()) tap = node_by_name_or_id(model.arch, s_tap);
    const auto r = qsim::infer(model, am ? &*am : nullptr, data, tap, g.jobs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.count; ++i) correct += r.predictions[i] == data.labels[i];
    if (data.empty()) throw ParameterError("cannot evaluate accuracy on an empty dataset");
    json j = {{"am", am ? am->name() : "none"}, {"images", data.count},
              {"accuracy", static_cast<double>(correct) / data.count}, {"predictions", r.predictions}};
    if (tap) {
      // "AMT1", u32 count/c/h/w, then int32 feature maps in image order.
      io::Writer w;
      const auto& s = model.shapes[static_cast<std::size_t>(*tap)];
      w.tag("AMT1");
      for (auto v : {static_cast<std::uint32_t>(data.count), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
                     static_cast<std::uint32_t>(s.w)})
        w.u32(v);
      for (const auto& t : r.taps)
        for (auto v : t.data) w.i32(v);
      fs::path tap_path = s_out;
      tap_path.replace_extension(".tap.bin");
      io::write_file(tap_path, w.take());
      const auto& q = model.edges[static_cast<std::size_t>(*tap)];
      j["tap"] = {{"layer", model.arch.layers[static_cast<std::size_t>(*tap)].name}, {"file", tap_path.filename().string()},
                  {"scale", q.q.scale}, {"zero_point", q.q.zero_point}, {"wide", q.wide}};
    }
    write_json(s_out, j);
  });

  // study
  auto* study = app.add_subcommand("study", "Simulate the library and tabulate metrics against accuracy");
  std::string t_model, t_arch, t_luts, t_data, t_costs, t_acc, t_out;
  study->add_option("--model", t_model)->required();
  study->add_option("--arch", t_arch)->required();
  study->add_option("--luts", t_luts)->required();
  study->add_option("--dataset", t_data)->required();
  study->add_option("--costs", t_costs);
  study->add_option("--accuracies", t_acc, "Accuracy CSV used as a simulation cache and updated in place");
  study->add_option("--out", t_out)->required();
  study->callback([&] {
    const auto model = qsim::load_quant_model(t_model);
    const auto lib = library_with_costs(t_luts, t_costs);
    std::optional<AccuracyTable> cache;
    if (!t_acc.empty() && fs::exists(t_acc)) cache = load_accuracies(t_acc);
    const auto table = simulate_library(model, lib, load_dataset(t_data), g.jobs, cache ? &*cache : nullptr);
    if (!t_acc.empty()) save_accuracies(table, t_acc);
    save_study(build_study(lib, load_arch(t_arch).total, table), t_out);
  });

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the sign-split quadratic accuracy predictor");
  std::string f_study, f_metric = "ame", f_out;
  double f_cap = 0.30;
  fit->add_option("--study", f_study)->required();
  fit->add_option("--metric", f_metric);
  fit->add_option("--cap", f_cap, "Maximum accuracy degradation of training samples");
  fit->add_option("--out", f_out)->required();
  fit->callback([&] {
    const auto samples = load_study(f_study);
    const Metric m = metric_from_name(f_metric);
    std::vector<std::string> warnings;
    save_fit(fit_quadratic(samples, m, f_cap, &warnings), f_out);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    const auto cv = cross_validated_mape(samples, m, 5, f_cap);
    std::cout << "5-fold MAPE " << cv.mape << "%\n";
  });

  // predict
  auto* pred = app.add_subcommand("predict", "Predict accuracy for one AM");
  std::string d_fit, d_lut, d_arch;
  pred->add_option("--fit", d_fit)->required();
  pred->add_option("--lut", d_lut)->required();
  pred->add_option("--arch", d_arch, "Architecture matrix (required for the ame metric)");
  pred->callback([&] {
    const auto f = load_fit(d_fit);
    const auto am = load_lut(d_lut);
    const auto delta = error_matrix(am);
    SamplePoint s;
    if (f.metric == Metric::Ame) {
      if (d_arch.empty()) throw ParameterError("--arch is required for an ame fit");
      s.ame = compute_ame(load_arch(d_arch).total, delta);
    } else {
      s.metrics = compute_metrics(delta, JointDistribution::uniform());
    }
    const auto p = f.predict(s.value(f.metric));
    std::cout << json{{"am", am.name()}, {"metric", metric_name(f.metric)}, {"value", s.value(f.metric)},
                      {"accuracy", p.accuracy}, {"clamped", p.clamped}}.dump()
              << "\n";
  });

  // select
  auto* sel = app.add_subcommand("select", "Iterative pseudo-Pareto search over (cost, |AME|)");
  std::string l_arch, l_luts, l_costs, l_out;
  int iters = 2;
  sel->add_option("--arch", l_arch)->required();
  sel->add_option("--luts", l_luts)->required();
  sel->add_option("--costs", l_costs);
  sel->add_option("--iters", iters)->check(CLI::PositiveNumber);
  sel->add_option("--out", l_out)->required();
  sel->callback([&] {
    const auto a = load_arch(l_arch);
    std::vector<ParetoItem> items;
    for (const auto& am : library_with_costs(l_luts, l_costs))
      items.push_back({am.name(), am.cost(), std::abs(compute_ame(a.total, error_matrix(am))), std::nullopt});
    const auto r = iterative_search(items, iters);
    if (r.exhausted) std::cerr << "note: library exhausted after " << r.fronts.size() << " iterations\n";
    save_front(r, l_out);
  });

  // validate-front
  auto* val = app.add_subcommand("validate-front", "Check a pseudo-Pareto set against simulated accuracies");
  std::string v_front, v_model, v_data, v_luts, v_costs, v_acc, v_out;
  double v_cap = 0.30;
  val->add_option("--front", v_front)->required();
  val->add_option("--model", v_model)->required();
  val->add_option("--dataset", v_data)->required();
  val->add_option("--luts", v_luts)->required();
  val->add_option("--costs", v_costs);
  val->add_option("--accuracies", v_acc, "Accuracy CSV used as a simulation cache");
  val->add_option("--cap", v_cap);
  val->add_option("--out", v_out)->required();
  val->callback([&] {
    const auto model = qsim::load_quant_model(v_model);
    const auto lib = library_with_costs(v_luts, v_costs);
    std::optional<AccuracyTable> cache;
    if (!v_acc.empty() && fs::exists(v_acc)) cache = load_accuracies(v_acc);
    const auto table = simulate_library(model, lib, load_dataset(v_data), g.jobs, cache ? &*cache : nullptr);
    std::vector<ParetoItem> items;
    for (std::size_t i = 0; i < lib.size(); ++i) items.push_back({lib[i].name(), lib[i].cost(), 0.0, table.rows[i].accuracy});
    const auto names = load_front_names(v_front);
    if (names.empty()) throw ParameterError("front file lists no AMs");
    const auto r = coverage_report(names, items, table.baseline, v_cap);
    save_coverage(r, v_out);
    std::cout << "coverage " << r.coverage << " (" << r.contained.size() << "/" << r.true_front.size() << ")\n";
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run every stage with content-hash caching");
  std::string c_config, c_out, c_luts;
  std::optional<int> c_iters;
  std::optional<double> c_cap;
  pipe->add_option("--config", c_config, "INI configuration file");
  pipe->add_option("--out", c_out, "Output directory (overrides the config)");
  pipe->add_option("--luts", c_luts, "LUT directory (overrides the config)");
  pipe->add_option("--iters", c_iters);
  pipe->add_option("--cap", c_cap);
  pipe->callback([&] {
    PipelineConfig cfg = c_config.empty() ? PipelineConfig{} : load_config(c_config);
    if (!c_out.empty()) cfg.output = c_out;
    if (!c_luts.empty()) cfg.luts = c_luts;
    if (c_iters) cfg.iterations = *c_iters;
    if (c_cap) cfg.cap = *c_cap;
    if (app.get_option("--seed")->count() > 0 || std::getenv("AMX_SEED")) cfg.seed = g.seed;
    if (app.get_option("--jobs")->count() > 0) cfg.jobs = g.jobs;
    const auto r = run_pipeline(cfg, [](const std::string& m) { std::cerr << m << "\n"; });
    std::cout << "manifest " << r.manifest.string() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "amx: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
