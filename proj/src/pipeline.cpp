#include "amx/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string/trim.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "amx/ame.hpp"
#include "amx/binary_io.hpp"
#include "amx/errors.hpp"
#include "amx/pareto.hpp"
#include "amx/parallel.hpp"
#include "amx/profiler.hpp"
#include "amx/qsim/infer.hpp"

namespace amx {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr const char* kBaselineRow = "(baseline)";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

const AccuracyRow* AccuracyTable::find(const std::string& am) const {
  for (const auto& r : rows)
    if (r.am == am) return &r;
  return nullptr;
}

const AccuracyRow* AccuracyTable::find_hash(std::uint64_t hash) const {
  for (const auto& r : rows)
    if (r.lut_hash == hash) return &r;
  return nullptr;
}

AccuracyTable simulate_library(const qsim::QuantModel& model, std::span<const AmLut> library, const Dataset& dataset,
                               int jobs, const AccuracyTable* cache, SimulationTiming* timing) {
  AccuracyTable t;
  t.baseline = cache ? cache->baseline : qsim::evaluate_accuracy(model, nullptr, dataset, jobs);
  t.rows.resize(library.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < library.size(); ++i) {
    const auto h = library[i].table_hash();
    t.rows[i] = {library[i].name(), h, 0.0};
    if (const auto* hit = cache ? cache->find_hash(h) : nullptr)
      t.rows[i].accuracy = hit->accuracy;
    else
      todo.push_back(i);
  }
  // One AM per worker; each simulation runs single-threaded.
  std::vector<double> secs(todo.size());
  parallel_for(todo.size(), jobs, [&](std::size_t k) {
    const auto t0 = Clock::now();
    t.rows[todo[k]].accuracy = qsim::evaluate_accuracy(model, &library[todo[k]], dataset, 1);
    secs[k] = seconds_since(t0);
  });
  if (timing) {
    timing->simulated = todo.size();
    double s = 0;
    for (double v : secs) s += v;
    timing->seconds_per_am = todo.empty() ? 0.0 : s / static_cast<double>(todo.size());
  }
  return t;
}

void save_accuracies(const AccuracyTable& t, const fs::path& path) {
  std::string out = "am,lut_hash,accuracy\n";
  out += std::string(kBaselineRow) + ",0," + fmt(t.baseline) + "\n";
  for (const auto& r : t.rows) out += r.am + "," + io::hex64(r.lut_hash) + "," + fmt(r.accuracy) + "\n";
  io::write_text(path, out);
}

AccuracyTable load_accuracies(const fs::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "am,lut_hash,accuracy") throw FormatError("accuracy CSV header mismatch", 1);
  AccuracyTable t;
  bool have_baseline = false;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 3) throw FormatError("accuracy rows need three columns", lineno);
    double acc = 0;
    std::uint64_t hash = 0;
    try {
      std::size_t used = 0;
      acc = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument(f[2]);
      hash = std::stoull(f[1], &used, 16);
      if (used != f[1].size()) throw std::invalid_argument(f[1]);
    } catch (const std::exception&) {
      throw FormatError("malformed accuracy row", lineno);
    }
    if (f[0] == kBaselineRow) {
      t.baseline = acc;
      have_baseline = true;
    } else {
      t.rows.push_back({f[0], hash, acc});
    }
  }
  if (!have_baseline) throw FormatError("accuracy CSV has no baseline row", lineno);
  return t;
}

std::vector<SamplePoint> build_study(std::span<const AmLut> library, const RealMatrix& arch_total,
                                     const AccuracyTable& accuracies, double* ame_seconds_per_am) {
  std::vector<SamplePoint> out;
  double ame_secs = 0;
  std::size_t timed = 0;
  for (const auto& am : library) {
    const auto* row = accuracies.find_hash(am.table_hash());
    if (!row) continue;
    SamplePoint s;
    s.am = am.name();
    s.cost = am.cost();
    // The two per-AM steps once the architecture matrix exists.
    const auto t0 = Clock::now();
    const auto delta = error_matrix(am);
    s.ame = compute_ame(arch_total, delta);
    ame_secs += seconds_since(t0);
    ++timed;
    s.metrics = compute_metrics(delta, JointDistribution::uniform());
    s.accuracy = row->accuracy;
    s.degradation = accuracies.baseline - row->accuracy;
    out.push_back(std::move(s));
  }
  if (ame_seconds_per_am) *ame_seconds_per_am = timed ? ame_secs / static_cast<double>(timed) : 0.0;
  return out;
}

std::vector<AmLut> apply_costs(std::vector<AmLut> library, const fs::path& costs_csv) {
  const auto costs = load_costs(costs_csv);
  for (auto& am : library)
    if (auto it = costs.find(am.name()); it != costs.end()) am = am.with_cost(it->second);
  return library;
}

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ConfigError("'" + s + "' is not a comma-separated number list");
    }
  }
  return v;
}

}  // namespace

PipelineConfig load_config(const fs::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  PipelineConfig c;
  const std::map<std::string, std::set<std::string>> known{
      {"paths", {"output", "luts", "costs"}},
      {"dataset", {"classes", "height", "width", "noise", "jitter", "train_count", "test_count"}},
      {"train", {"epochs", "batch_size", "learning_rate", "min_accuracy"}},
      {"profile", {"calibration_count", "alpha_count", "typical_targets"}},
      {"select", {"cap", "iterations"}},
      {"run", {"seed", "jobs"}}};
  for (const auto& [section, body] : tree) {
    auto it = known.find(section);
    if (it == known.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, _] : body)
      if (!it->second.count(key)) throw ConfigError("unknown config key '" + key + "' in [" + section + "]");
  }
  // Relative paths resolve against the config file's directory.
  const auto base = path.parent_path();
  auto get_path = [&](const char* key, fs::path& dst) {
    if (auto v = tree.get_optional<std::string>(std::string("paths.") + key); v && !v->empty())
      dst = fs::path(*v).is_absolute() ? fs::path(*v) : base / *v;
  };
  auto read = [&](const char* key, auto& dst) {
    using T = std::remove_reference_t<decltype(dst)>;
    if (auto v = tree.get_optional<std::string>(key)) {
      const auto text = boost::algorithm::trim_copy(*v);
      try {
        if (std::is_unsigned_v<T> && text.rfind('-', 0) == 0) throw boost::bad_lexical_cast();
        dst = boost::lexical_cast<T>(text);
      } catch (const boost::bad_lexical_cast&) {
        throw ConfigError(std::string("bad config value for '") + key + "': " + *v);
      }
    }
  };
  try {
    get_path("output", c.output);
    get_path("luts", c.luts);
    get_path("costs", c.costs);
    read("dataset.classes", c.dataset.classes);
    read("dataset.height", c.dataset.height);
    read("dataset.width", c.dataset.width);
    read("dataset.noise", c.dataset.noise);
    read("dataset.jitter", c.dataset.jitter);
    read("dataset.train_count", c.train_count);
    read("dataset.test_count", c.test_count);
    read("train.epochs", c.epochs);
    read("train.batch_size", c.batch_size);
    read("train.learning_rate", c.learning_rate);
    read("train.min_accuracy", c.min_accuracy);
    read("profile.calibration_count", c.calibration_count);
    read("profile.alpha_count", c.alpha_count);
    if (auto v = tree.get_optional<std::string>("profile.typical_targets")) c.typical_targets = parse_list(*v);
    read("select.cap", c.cap);
    read("select.iterations", c.iterations);
    read("run.seed", c.seed);
    read("run.jobs", c.jobs);
  } catch (const pt::ptree_bad_data& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  if (c.iterations < 1) throw ConfigError("iterations must be at least 1");
  if (c.calibration_count == 0 || c.alpha_count == 0) throw ConfigError("calibration and alpha counts must be positive");
  return c;
}

std::string config_text(const PipelineConfig& c) {
  std::ostringstream o;
  std::string targets;
  for (double t : c.typical_targets) targets += (targets.empty() ? "" : ",") + fmt(t);
  o << "[paths]\noutput = " << c.output.string() << "\nluts = " << c.luts.string() << "\ncosts = " << c.costs.string()
    << "\n\n[dataset]\nclasses = " << c.dataset.classes << "\nheight = " << c.dataset.height << "\nwidth = " << c.dataset.width
    << "\nnoise = " << fmt(c.dataset.noise) << "\njitter = " << c.dataset.jitter << "\ntrain_count = " << c.train_count
    << "\ntest_count = " << c.test_count << "\n\n[train]\nepochs = " << c.epochs << "\nbatch_size = " << c.batch_size
    << "\nlearning_rate = " << fmt(c.learning_rate) << "\nmin_accuracy = " << fmt(c.min_accuracy)
    << "\n\n[profile]\ncalibration_count = " << c.calibration_count << "\nalpha_count = " << c.alpha_count
    << "\ntypical_targets = " << targets << "\n\n[select]\ncap = " << fmt(c.cap) << "\niterations = " << c.iterations
    << "\n\n[run]\nseed = " << c.seed << "\njobs = " << c.jobs << "\n";
  return o.str();
}

namespace {

// Content hash of a file, or of a directory's (name, content) pairs.
std::uint64_t hash_path(const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = io::fnv1a({});
    for (const auto& f : files) {
      const auto name = f.filename().string();
      h = io::fnv1a({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()}, h);
      const auto bytes = io::read_file(f);
      h = io::fnv1a(bytes, h);
    }
    return h;
  }
  return io::fnv1a(io::read_file(p));
}

std::uint64_t hash_text(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  return io::fnv1a({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, seed);
}

struct Stage {
  std::string name;
  std::vector<std::string> upstream;
  std::vector<fs::path> inputs;
  std::string params;
  std::vector<fs::path> outputs;
  std::function<void()> body;
};

class Runner {
 public:
  Runner(fs::path out, LogSink log) : out_(std::move(out)), log_(std::move(log)) {
    state_path_ = out_ / ".amx-state.json";
    if (fs::exists(state_path_)) {
      try {
        state_ = json::parse(io::read_text(state_path_));
      } catch (const json::exception&) {
        state_ = json::object();
      }
    }
    if (!state_.is_object()) state_ = json::object();
  }

  void run(const Stage& s) {
    StageStatus st;
    st.name = s.name;
    try {
      bool upstream_ran = false;
      for (const auto& u : s.upstream) upstream_ran = upstream_ran || ran_.count(u);
      std::uint64_t h = hash_text(s.params);
      for (const auto& in : s.inputs) {
        h = hash_text(key(in), h);
        h ^= hash_path(in) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      }
      st.input_hash = io::hex64(h);
      const bool cached = !upstream_ran && state_.contains(s.name) && state_[s.name].value("input_hash", "") == st.input_hash &&
                          outputs_intact(s);
      if (cached) {
        if (log_) log_("[" + s.name + "] up to date");
      } else {
        if (log_) log_("[" + s.name + "] running");
        const auto t0 = Clock::now();
        s.body();
        st.seconds = seconds_since(t0);
        st.ran = true;
        ran_.insert(s.name);
        json outs = json::object();
        for (const auto& o : s.outputs) outs[rel(o)] = io::hex64(hash_path(o));
        state_[s.name] = {{"input_hash", st.input_hash}, {"outputs", outs}};
        io::write_text(state_path_, state_.dump(2) + "\n");
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(s.name, e.what());
    }
    statuses_.push_back(st);
  }

  const std::vector<StageStatus>& statuses() const { return statuses_; }
  const json& state() const { return state_; }
  std::string rel(const fs::path& p) const { return fs::relative(p, out_).generic_string(); }
  // Inputs inside the output directory are named relative to it, others absolutely.
  std::string key(const fs::path& p) const {
    const auto r = rel(p);
    return r.rfind("..", 0) == 0 ? fs::absolute(p).lexically_normal().generic_string() : r;
  }

 private:
  bool outputs_intact(const Stage& s) const {
    const auto& rec = state_[s.name]["outputs"];
    for (const auto& o : s.outputs) {
      if (!fs::exists(o) || !rec.contains(rel(o))) return false;
      if (rec[rel(o)].get<std::string>() != io::hex64(hash_path(o))) return false;
    }
    return true;
  }

  fs::path out_;
  LogSink log_;
  fs::path state_path_;
  json state_;
  std::set<std::string> ran_;
  std::vector<StageStatus> statuses_;
};

json read_json_or_empty(const fs::path& p) {
  if (!fs::exists(p)) return json::object();
  try {
    return json::parse(io::read_text(p));
  } catch (const json::exception&) {
    return json::object();
  }
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const LogSink& log) {
  const fs::path out = fs::absolute(cfg.output);
  fs::create_directories(out);
  const int jobs = std::max(1, cfg.jobs);
  Runner runner(out, log);

  const fs::path train_path = out / "data" / "train.amd";
  const fs::path test_path = out / "data" / "test.amd";
  const fs::path lut_dir = cfg.luts.empty() ? out / "luts" : cfg.luts;
  const fs::path costs_path = out / "costs.csv";
  const fs::path float_path = out / "float_model.json";
  const fs::path model_path = out / "model.json";
  const fs::path acc_path = out / "accuracy.csv";
  const fs::path profiles_path = out / "profiles.json";
  const fs::path alphas_path = out / "alphas.json";
  const fs::path arch_path = out / "arch.bin";
  const fs::path arch_json = out / "arch.json";
  const fs::path study_path = out / "study.csv";
  const fs::path fit_path = out / "fit.json";
  const fs::path analysis_path = out / "analysis.json";
  const fs::path front_path = out / "front.csv";
  const fs::path coverage_path = out / "coverage.json";
  const fs::path timing_path = out / "timing.json";
  auto bin_of = [](fs::path p) { return p.replace_extension(".bin"); };

  auto library = [&] {
    auto lib = load_library(lut_dir);
    if (lib.empty()) throw ConfigError("no LUTs found in " + lut_dir.string());
    return cfg.costs.empty() ? lib : apply_costs(std::move(lib), cfg.costs);
  };
  auto update_timing = [&](const char* key, double v) {
    auto t = read_json_or_empty(timing_path);
    t[key] = v;
    io::write_text(timing_path, t.dump(2) + "\n");
  };

  const auto& ds = cfg.dataset;
  const std::string data_params = std::to_string(ds.classes) + " " + std::to_string(ds.height) + " " + std::to_string(ds.width) +
                                  " " + fmt(ds.noise) + " " + std::to_string(ds.jitter) + " " + std::to_string(cfg.train_count) +
                                  " " + std::to_string(cfg.test_count) + " " + std::to_string(cfg.seed);
  runner.run({"data", {}, {}, data_params, {train_path, test_path}, [&] {
                auto o = cfg.dataset;
                o.count = cfg.train_count;
                o.seed = cfg.seed;
                save_dataset(generate_synthetic(o), train_path);
                o.count = cfg.test_count;
                o.seed = cfg.seed + 1;
                save_dataset(generate_synthetic(o), test_path);
              }});

  if (cfg.luts.empty())
    runner.run({"library", {}, {}, std::string("builtin ") + kVersion, {lut_dir}, [&] {
                  if (fs::exists(lut_dir)) fs::remove_all(lut_dir);
                  save_library(generate_library(), lut_dir);
                }});
  std::vector<fs::path> cost_inputs{lut_dir};
  if (!cfg.costs.empty()) cost_inputs.push_back(cfg.costs);
  runner.run({"costs", {"library"}, cost_inputs, "", {costs_path}, [&] { save_costs(library(), costs_path); }});

  const std::string train_params = std::to_string(cfg.epochs) + " " + std::to_string(cfg.batch_size) + " " +
                                   fmt(cfg.learning_rate) + " " + fmt(cfg.min_accuracy) + " " + std::to_string(cfg.seed);
  runner.run({"train", {"data"}, {train_path}, train_params, {float_path, bin_of(float_path)}, [&] {
                qsim::TrainOptions o;
                o.epochs = cfg.epochs;
                o.batch_size = cfg.batch_size;
                o.learning_rate = cfg.learning_rate;
                o.min_accuracy = cfg.min_accuracy;
                o.seed = cfg.seed;
                const auto arch = qsim::desk_architecture(
                    static_cast<int>(cfg.dataset.classes),
                    {1, static_cast<int>(cfg.dataset.height), static_cast<int>(cfg.dataset.width)});
                qsim::save_float_model(qsim::train_reference(load_dataset(train_path), arch, o), float_path);
              }});

  runner.run({"quantize", {"train"}, {float_path, bin_of(float_path), train_path}, std::to_string(cfg.calibration_count),
              {model_path, bin_of(model_path)}, [&] {
                const auto calib = load_dataset(train_path).slice(0, cfg.calibration_count);
                const auto q = qsim::quantize(qsim::load_float_model(float_path), calib, [&](const std::string& w) {
                  if (log) log("warning: " + w);
                });
                qsim::save_quant_model(q, model_path);
              }});

  runner.run({"simulate", {"quantize", "library"}, {model_path, bin_of(model_path), test_path, lut_dir}, "", {acc_path}, [&] {
                const auto model = qsim::load_quant_model(model_path);
                const auto test = load_dataset(test_path);
                // Results survive library edits: cached per (model, dataset) by table hash.
                const auto key = io::hex64(hash_path(model_path) ^ hash_path(bin_of(model_path)) ^ (hash_path(test_path) << 1));
                const fs::path cache_path = out / "cache" / ("sim-" + key + ".csv");
                std::optional<AccuracyTable> cache;
                if (fs::exists(cache_path)) cache = load_accuracies(cache_path);
                SimulationTiming timing;
                const auto lib = library();
                const auto table = simulate_library(model, lib, test, jobs, cache ? &*cache : nullptr, &timing);
                save_accuracies(table, acc_path);
                AccuracyTable merged = table;
                if (cache)
                  for (const auto& r : cache->rows)
                    if (!merged.find_hash(r.lut_hash)) merged.rows.push_back(r);
                save_accuracies(merged, cache_path);
                if (timing.simulated > 0) update_timing("simulation_seconds_per_am", timing.seconds_per_am);
                if (log) log("simulated " + std::to_string(timing.simulated) + " of " + std::to_string(lib.size()) + " AMs");
              }});

  runner.run({"profile", {"quantize"}, {model_path, bin_of(model_path), train_path}, std::to_string(cfg.calibration_count),
              {profiles_path}, [&] {
                const auto calib = load_dataset(train_path).slice(0, cfg.calibration_count);
                save_profiles(profile_distributions(qsim::load_quant_model(model_path), calib, jobs), profiles_path);
              }});

  std::string alpha_params = std::to_string(cfg.alpha_count);
  for (double t : cfg.typical_targets) alpha_params += " " + fmt(t);
  runner.run({"alpha", {"quantize", "simulate"}, {model_path, bin_of(model_path), train_path, acc_path, lut_dir}, alpha_params,
              {alphas_path}, [&] {
                const auto model = qsim::load_quant_model(model_path);
                const auto lib = library();
                const auto table = load_accuracies(acc_path);
                std::vector<double> acc;
                for (const auto& am : lib) acc.push_back(table.find_hash(am.table_hash())->accuracy);
                AlphaOptions o;
                o.jobs = jobs;
                const auto typical = select_typical_ams(lib, acc, table.baseline, cfg.typical_targets, o);
                if (typical.empty()) throw EstimationError("no library AM degrades accuracy by 2-10%");
                const auto data = load_dataset(train_path).slice(0, cfg.alpha_count);
                const auto report = estimate_alphas(model, typical, data, o, [&](const std::string& w) {
                  if (log) log("warning: " + w);
                });
                save_alpha_report(report, alphas_path);
              }});

  runner.run({"arch", {"profile", "alpha"}, {model_path, bin_of(model_path), profiles_path, alphas_path}, "", {arch_path, arch_json},
              [&] {
                const auto model = qsim::load_quant_model(model_path);
                auto profiles = load_profiles(profiles_path);
                apply_alphas(profiles, load_alpha_report(alphas_path));
                const auto arch = build_arch_matrices(model, profiles);
                save_arch(arch, arch_path);
                json layers = json::array();
                for (const auto& l : arch.layers) {
                  json paths = json::array();
                  for (const auto& p : l.provenance) paths.push_back({{"path", p.path}, {"gain", p.gain}});
                  layers.push_back({{"node", l.node}, {"name", l.name}, {"coefficient", l.coefficient},
                                    {"n_per_filter", l.n_per_filter}, {"scale", l.scale}, {"paths", paths}});
                }
                io::write_text(arch_json, json{{"target", model.arch.layers[static_cast<std::size_t>(arch.target)].name},
                                                {"layers", layers}}.dump(2) + "\n");
              }});

  runner.run({"study", {"arch", "simulate"}, {arch_path, acc_path, lut_dir, costs_path}, "", {study_path}, [&] {
                double ame_secs = 0;
                const auto lib = apply_costs(library(), costs_path);
                const auto samples = build_study(lib, load_arch(arch_path).total, load_accuracies(acc_path), &ame_secs);
                save_study(samples, study_path);
                update_timing("ame_seconds_per_am", ame_secs);
              }});

  runner.run({"fit", {"study"}, {study_path}, fmt(cfg.cap), {fit_path, analysis_path}, [&] {
                const auto samples = load_study(study_path);
                std::vector<std::string> warnings;
                save_fit(fit_quadratic(samples, Metric::Ame, cfg.cap, &warnings), fit_path);
                for (const auto& w : warnings)
                  if (log) log("warning: " + w);
                json metrics = json::array();
                for (Metric m : all_metrics()) {
                  json row = {{"metric", metric_name(m)}, {"split", is_signed(m)}};
                  try {
                    const auto c = correlation_study(samples, m, cfg.cap);
                    row["positive"] = {{"count", c.positive.count}, {"pcc", opt_json(c.positive.pcc)}};
                    row["negative"] = {{"count", c.negative.count}, {"pcc", opt_json(c.negative.pcc)}};
                  } catch (const std::exception& e) {
                    row["correlation_error"] = e.what();
                  }
                  try {
                    const auto cv = cross_validated_mape(samples, m, 5, cfg.cap);
                    row["cv_mape"] = cv.mape;
                    row["fold_mape"] = cv.fold_mape;
                  } catch (const std::exception& e) {
                    row["cv_error"] = e.what();
                  }
                  metrics.push_back(row);
                }
                io::write_text(analysis_path, json{{"cap", cfg.cap}, {"metrics", metrics}}.dump(2) + "\n");
              }});

  runner.run({"select", {"study"}, {study_path}, std::to_string(cfg.iterations), {front_path}, [&] {
                std::vector<ParetoItem> items;
                for (const auto& s : load_study(study_path)) items.push_back({s.am, s.cost, std::abs(s.ame), std::nullopt});
                save_front(iterative_search(items, cfg.iterations), front_path);
              }});

  runner.run({"validate", {"select", "simulate"}, {front_path, study_path, acc_path}, fmt(cfg.cap), {coverage_path}, [&] {
                // Every AM was already simulated; the oracle reuses those accuracies.
                std::vector<ParetoItem> items;
                for (const auto& s : load_study(study_path)) items.push_back({s.am, s.cost, std::abs(s.ame), s.accuracy});
                const double baseline = load_accuracies(acc_path).baseline;
                save_coverage(coverage_report(load_front_names(front_path), items, baseline, cfg.cap), coverage_path);
              }});

  PipelineResult result;
  result.stages = runner.statuses();
  const auto timing = read_json_or_empty(timing_path);
  result.simulation_seconds_per_am = timing.value("simulation_seconds_per_am", 0.0);
  result.ame_seconds_per_am = timing.value("ame_seconds_per_am", 0.0);
  result.manifest = out / "manifest.json";

  json stages = json::array();
  for (const auto& st : result.stages)
    stages.push_back({{"name", st.name}, {"status", st.ran ? "ran" : "cached"}, {"seconds", st.seconds},
                      {"input_hash", st.input_hash}, {"outputs", runner.state()[st.name]["outputs"]}});
  json manifest = {
      {"version", kVersion},
      {"seed", cfg.seed},
      {"jobs", jobs},
      {"config_hash", io::hex64(hash_text(config_text(cfg)))},
      {"stages", stages},
      {"timing",
       {{"simulation_seconds_per_am", result.simulation_seconds_per_am},
        {"ame_seconds_per_am", result.ame_seconds_per_am},
        {"ame_to_simulation_ratio",
         result.simulation_seconds_per_am > 0 ? result.ame_seconds_per_am / result.simulation_seconds_per_am : 0.0}}}};
  io::write_text(result.manifest, manifest.dump(2) + "\n");
  return result;
}

}  // namespace amx
