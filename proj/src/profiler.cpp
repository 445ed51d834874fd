#include "amx/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "amx/binary_io.hpp"
#include "amx/errors.hpp"
#include "amx/metrics.hpp"
#include "amx/parallel.hpp"

namespace amx {

using qsim::NodeKind;
using qsim::QuantModel;
using nlohmann::json;

namespace {

// Node whose exact output decides which features of `node` count as positive.
int mask_node(const QuantModel& model, const std::vector<std::vector<int>>& succ, int node) {
  const auto& layers = model.arch.layers;
  if (layers[static_cast<std::size_t>(node)].kind != NodeKind::Conv2D) return node;
  int v = node;
  while (succ[static_cast<std::size_t>(v)].size() == 1) {
    const int s = succ[static_cast<std::size_t>(v)][0];
    const auto k = layers[static_cast<std::size_t>(s)].kind;
    if (k == NodeKind::ReLU) return s;
    if (k != NodeKind::BatchNorm && k != NodeKind::Add) break;
    v = s;
  }
  return node;
}

void check_node(const QuantModel& model, int node) {
  if (node < 0 || static_cast<std::size_t>(node) >= model.arch.layers.size())
    throw ParameterError("node " + std::to_string(node) + " does not exist");
}

std::vector<double> normalized(const std::vector<std::int64_t>& hist, const std::string& what) {
  const double total = static_cast<double>(std::accumulate(hist.begin(), hist.end(), std::int64_t{0}));
  if (total <= 0) throw EstimationError(what + " was never executed");
  std::vector<double> p(hist.size());
  for (std::size_t i = 0; i < hist.size(); ++i) p[i] = static_cast<double>(hist[i]) / total;
  return p;
}

// Mean full and intrinsic errors of one AM at a set of nodes.
struct AmErrors {
  std::map<int, double> full, intrinsic;
};

AmErrors measure_for_alpha(const QuantModel& model, const AmLut& am, const Dataset& data, const std::vector<int>& convs,
                           int jobs) {
  std::vector<int> full_nodes;
  for (int t : convs) {
    full_nodes.push_back(t);
    full_nodes.push_back(model.arch.layers[static_cast<std::size_t>(t)].inputs[0]);
  }
  std::sort(full_nodes.begin(), full_nodes.end());
  full_nodes.erase(std::unique(full_nodes.begin(), full_nodes.end()), full_nodes.end());
  const auto full = measure_node_errors(model, am, data, full_nodes, ErrorMode::Full, FeatureMask::Positive, jobs);
  const auto intr = measure_node_errors(model, am, data, convs, ErrorMode::Intrinsic, FeatureMask::Positive, jobs);
  AmErrors e;
  for (std::size_t i = 0; i < full_nodes.size(); ++i) e.full[full_nodes[i]] = full[i];
  for (std::size_t i = 0; i < convs.size(); ++i) e.intrinsic[convs[i]] = intr[i];
  return e;
}

bool admitted(double degradation, const AlphaOptions& opts) {
  return degradation >= opts.min_degradation && degradation <= opts.max_degradation;
}

std::vector<const TypicalAm*> by_name(std::span<const TypicalAm> typical) {
  std::vector<const TypicalAm*> order;
  for (const auto& t : typical) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->am.name() < b->am.name(); });
  return order;
}

LayerAlpha assemble(const QuantModel& model, int node, const std::vector<const TypicalAm*>& order,
                    const std::vector<std::optional<AmErrors>>& errors, const AlphaOptions& opts) {
  LayerAlpha la;
  la.node = node;
  la.name = model.arch.layers[static_cast<std::size_t>(node)].name;
  const int in = model.arch.layers[static_cast<std::size_t>(node)].inputs[0];
  double sum = 0;
  int kept = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    AlphaSample s;
    s.am = order[i]->am.name();
    if (!errors[i]) {
      s.note = "degradation outside the admitted band";
      la.samples.push_back(std::move(s));
      continue;
    }
    s.full = errors[i]->full.at(node);
    s.intrinsic = errors[i]->intrinsic.at(node);
    s.upstream = errors[i]->full.at(in);
    if (std::abs(s.upstream) < opts.eps_div) {
      s.note = "upstream mean error below the division floor";
    } else {
      const double a = (s.full - s.intrinsic) / s.upstream;
      if (!std::isfinite(a) || std::abs(a) >= opts.max_abs_alpha) {
        s.note = "alpha magnitude above the validity bound";
      } else {
        s.alpha = a;
        sum += a;
        ++kept;
      }
    }
    la.samples.push_back(std::move(s));
  }
  if (kept > 0) la.alpha = sum / kept;
  return la;
}

}  // namespace

std::vector<LayerProfile> profile_distributions(const QuantModel& model, const Dataset& calibration, int jobs) {
  if (calibration.empty()) throw ParameterError("calibration set must not be empty");
  calibration.validate();
  const qsim::Executor exec(model);
  const auto succ = model.arch.successors();
  const auto convs = model.conv_nodes();

  // Per-image tap histograms of each convolution's input codes.
  std::vector<std::vector<std::vector<std::int64_t>>> hist(calibration.count);
  parallel_for(calibration.count, jobs, [&](std::size_t i) {
    const auto out = exec.run(calibration.image(i));
    auto& h = hist[i];
    h.assign(convs.size(), std::vector<std::int64_t>(kOperandCodes, 0));
    for (std::size_t ci = 0; ci < convs.size(); ++ci) {
      const auto& l = model.arch.layers[static_cast<std::size_t>(convs[ci])];
      const auto& in = out[static_cast<std::size_t>(l.inputs[0])];
      const auto& os = model.shapes[static_cast<std::size_t>(convs[ci])];
      const int zx = model.edges[static_cast<std::size_t>(l.inputs[0])].q.zero_point;
      for (int c = 0; c < in.shape.c; ++c)
        for (int oy = 0; oy < os.h; ++oy)
          for (int ox = 0; ox < os.w; ++ox)
            for (int ky = 0; ky < l.kernel; ++ky)
              for (int kx = 0; kx < l.kernel; ++kx) {
                const int iy = oy * l.stride - l.padding + ky;
                const int ix = ox * l.stride - l.padding + kx;
                const bool inside = iy >= 0 && iy < in.shape.h && ix >= 0 && ix < in.shape.w;
                ++h[ci][static_cast<std::size_t>(inside ? in.data[static_cast<std::size_t>((c * in.shape.h + iy) * in.shape.w + ix)] : zx)];
              }
    }
  });

  std::vector<LayerProfile> profiles;
  for (std::size_t ci = 0; ci < convs.size(); ++ci) {
    const int t = convs[ci];
    const auto id = static_cast<std::size_t>(t);
    const auto& node = model.nodes[id];
    LayerProfile lp;
    lp.node = t;
    lp.name = model.arch.layers[id].name;
    lp.approximate = node.approximate;
    std::vector<std::int64_t> acc(kOperandCodes, 0);
    for (const auto& h : hist)
      for (int c = 0; c < kOperandCodes; ++c) acc[static_cast<std::size_t>(c)] += h[ci][static_cast<std::size_t>(c)];
    lp.p = normalized(acc, "layer '" + lp.name + "'");
    std::vector<std::int64_t> wh(kOperandCodes, 0);
    for (auto w : node.weight) ++wh[w];
    lp.f = normalized(wh, "weights of '" + lp.name + "'");
    lp.n_per_filter = model.arch.weights_per_filter(t);
    lp.scale = model.edges[id].q.scale;
    const auto& s = succ[id];
    if (s.size() == 1 && model.arch.layers[static_cast<std::size_t>(s[0])].kind == NodeKind::BatchNorm)
      lp.bn_factor = model.nodes[static_cast<std::size_t>(s[0])].mean_bn_factor();
    lp.samples = calibration.count;
    lp.maps = static_cast<std::size_t>(model.shapes[id].c);
    lp.height = static_cast<std::size_t>(model.shapes[id].h);
    lp.width = static_cast<std::size_t>(model.shapes[id].w);
    profiles.push_back(std::move(lp));
  }
  return profiles;
}

std::vector<double> measure_node_errors(const QuantModel& model, const AmLut& am, const Dataset& data,
                                        std::span<const int> nodes, ErrorMode mode, FeatureMask mask, int jobs) {
  if (data.empty()) throw ParameterError("error measurement needs a non-empty dataset");
  for (int t : nodes) {
    check_node(model, t);
    if (t == 0) throw ParameterError("the input node carries no multiplier error");
  }
  const qsim::Executor exact(model);
  const qsim::Executor approx(model, &am);
  const auto succ = model.arch.successors();
  std::vector<int> masks;
  for (int t : nodes) masks.push_back(mask == FeatureMask::Positive ? mask_node(model, succ, t) : -1);

  // Integer code differences summed per image; exact whatever the order.
  std::vector<std::vector<std::int64_t>> diff(data.count), count(data.count);
  parallel_for(data.count, jobs, [&](std::size_t i) {
    const auto ref = exact.run(data.image(i));
    std::vector<qsim::Tensor> full;
    if (mode == ErrorMode::Full) full = approx.run(data.image(i));
    diff[i].assign(nodes.size(), 0);
    count[i].assign(nodes.size(), 0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const auto id = static_cast<std::size_t>(nodes[k]);
      const auto& y = ref[id].data;
      const auto y2 = mode == ErrorMode::Full ? full[id] : approx.eval_node(nodes[k], ref);
      const std::vector<std::int32_t>* m = masks[k] >= 0 ? &ref[static_cast<std::size_t>(masks[k])].data : nullptr;
      const int mz = masks[k] >= 0 ? model.edges[static_cast<std::size_t>(masks[k])].q.zero_point : 0;
      for (std::size_t j = 0; j < y.size(); ++j) {
        if (m && (*m)[j] <= mz) continue;
        diff[i][k] += static_cast<std::int64_t>(y2.data[j]) - y[j];
        ++count[i][k];
      }
    }
  });

  std::vector<double> means(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    std::int64_t d = 0, n = 0;
    for (std::size_t i = 0; i < data.count; ++i) {
      d += diff[i][k];
      n += count[i][k];
    }
    const auto id = static_cast<std::size_t>(nodes[k]);
    if (n == 0) throw EstimationError("no positive features at '" + model.arch.layers[id].name + "'");
    means[k] = model.edges[id].q.scale * static_cast<double>(d) / static_cast<double>(n);
  }
  return means;
}

double measure_layer_error(const QuantModel& model, const AmLut& am, const Dataset& data, int node, ErrorMode mode,
                           FeatureMask mask, int jobs) {
  check_node(model, node);
  if (model.arch.layers[static_cast<std::size_t>(node)].kind != NodeKind::Conv2D)
    throw ParameterError("'" + model.arch.layers[static_cast<std::size_t>(node)].name + "' is not a convolution");
  const int nodes[] = {node};
  return measure_node_errors(model, am, data, nodes, mode, mask, jobs)[0];
}

std::vector<TypicalAm> select_typical_ams(std::span<const AmLut> library, std::span<const double> accuracies,
                                          double baseline, std::span<const double> targets, const AlphaOptions& opts) {
  if (library.size() != accuracies.size()) throw ParameterError("one accuracy per library AM is required");
  std::vector<TypicalAm> picked;
  for (double target : targets) {
    const AmLut* best = nullptr;
    double best_deg = 0, best_gap = INFINITY;
    for (std::size_t i = 0; i < library.size(); ++i) {
      const double deg = baseline - accuracies[i];
      if (!admitted(deg, opts)) continue;
      const double gap = std::abs(deg - target);
      if (gap < best_gap || (gap == best_gap && library[i].name() < best->name())) {
        best = &library[i];
        best_deg = deg;
        best_gap = gap;
      }
    }
    if (!best) continue;
    const bool dup = std::any_of(picked.begin(), picked.end(), [&](const TypicalAm& t) { return t.am.name() == best->name(); });
    if (!dup) picked.push_back({*best, best_deg});
  }
  return picked;
}

double estimate_alpha(const QuantModel& model, std::span<const TypicalAm> typical, const Dataset& data, int node,
                      const AlphaOptions& opts, LayerAlpha* trail) {
  check_node(model, node);
  if (model.arch.layers[static_cast<std::size_t>(node)].kind != NodeKind::Conv2D)
    throw ParameterError("'" + model.arch.layers[static_cast<std::size_t>(node)].name + "' is not a convolution");
  const auto order = by_name(typical);
  std::vector<std::optional<AmErrors>> errors(order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    if (admitted(order[i]->degradation, opts)) errors[i] = measure_for_alpha(model, order[i]->am, data, {node}, opts.jobs);
  auto la = assemble(model, node, order, errors, opts);
  if (trail) *trail = la;
  if (!la.alpha) throw EstimationError("no typical AM gives a valid alpha for '" + la.name + "'");
  return *la.alpha;
}

AlphaReport estimate_alphas(const QuantModel& model, std::span<const TypicalAm> typical, const Dataset& data,
                            const AlphaOptions& opts, const qsim::WarningSink& warn) {
  const auto& layers = model.arch.layers;
  // A node carries approximation error if an approximate convolution feeds it.
  std::vector<bool> tainted(layers.size(), false);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (int in : layers[i].inputs) tainted[i] = tainted[i] || tainted[static_cast<std::size_t>(in)];
    if (model.nodes[i].approximate) tainted[i] = true;
  }
  std::vector<int> convs;
  for (int t : model.conv_nodes())
    if (tainted[static_cast<std::size_t>(layers[static_cast<std::size_t>(t)].inputs[0])]) convs.push_back(t);

  AlphaReport report;
  const auto order = by_name(typical);
  std::vector<std::optional<AmErrors>> errors(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const bool ok = admitted(order[i]->degradation, opts);
    report.typical.push_back({order[i]->am.name(), order[i]->degradation, ok});
    if (!ok) {
      if (warn) warn("typical AM '" + order[i]->am.name() + "' is outside the degradation band; skipped");
      continue;
    }
    if (!convs.empty()) errors[i] = measure_for_alpha(model, order[i]->am, data, convs, opts.jobs);
  }
  for (int t : convs) {
    auto la = assemble(model, t, order, errors, opts);
    if (!la.alpha && warn) warn("no valid alpha for '" + la.name + "'");
    report.layers.push_back(std::move(la));
  }
  return report;
}

void apply_alphas(std::vector<LayerProfile>& profiles, const AlphaReport& report) {
  for (auto& p : profiles) {
    p.alpha.reset();
    for (const auto& l : report.layers)
      if (l.node == p.node) p.alpha = l.alpha;
  }
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json parse_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + " is not valid JSON: " + e.what(), e.byte);
  }
}

}  // namespace

void save_profiles(const std::vector<LayerProfile>& profiles, const std::filesystem::path& path) {
  json layers = json::array();
  for (const auto& p : profiles)
    layers.push_back({{"node", p.node},
                      {"name", p.name},
                      {"approximate", p.approximate},
                      {"n_per_filter", p.n_per_filter},
                      {"scale", p.scale},
                      {"bn_factor", p.bn_factor},
                      {"alpha", opt_json(p.alpha)},
                      {"samples", p.samples},
                      {"maps", p.maps},
                      {"height", p.height},
                      {"width", p.width},
                      {"p", p.p},
                      {"f", p.f}});
  io::write_text(path, json{{"layers", layers}}.dump(1) + "\n");
}

std::vector<LayerProfile> load_profiles(const std::filesystem::path& path) {
  const json j = parse_json_file(path);
  try {
    std::vector<LayerProfile> out;
    for (const auto& l : j.at("layers")) {
      LayerProfile p;
      p.node = l.at("node").get<int>();
      p.name = l.at("name").get<std::string>();
      p.approximate = l.at("approximate").get<bool>();
      p.n_per_filter = l.at("n_per_filter").get<int>();
      p.scale = l.at("scale").get<double>();
      p.bn_factor = l.at("bn_factor").get<double>();
      p.alpha = opt_from(l.at("alpha"));
      p.samples = l.at("samples").get<std::size_t>();
      p.maps = l.at("maps").get<std::size_t>();
      p.height = l.at("height").get<std::size_t>();
      p.width = l.at("width").get<std::size_t>();
      p.p = l.at("p").get<std::vector<double>>();
      p.f = l.at("f").get<std::vector<double>>();
      if (p.p.size() != kOperandCodes || p.f.size() != kOperandCodes)
        throw FormatError("profile of '" + p.name + "' must hold 256-entry pmfs", 0);
      validate_pmf(p.p, "p of " + p.name);
      validate_pmf(p.f, "f of " + p.name);
      out.push_back(std::move(p));
    }
    return out;
  } catch (const json::exception& e) {
    throw FormatError("malformed profile file: " + std::string(e.what()), 0);
  }
}

void save_alpha_report(const AlphaReport& report, const std::filesystem::path& path) {
  json typical = json::array();
  for (const auto& t : report.typical)
    typical.push_back({{"am", t.am}, {"degradation", t.degradation}, {"admitted", t.admitted}});
  json layers = json::array();
  for (const auto& l : report.layers) {
    json samples = json::array();
    for (const auto& s : l.samples)
      samples.push_back({{"am", s.am}, {"full", s.full}, {"intrinsic", s.intrinsic}, {"upstream", s.upstream},
                         {"alpha", opt_json(s.alpha)}, {"note", s.note}});
    layers.push_back({{"node", l.node}, {"name", l.name}, {"alpha", opt_json(l.alpha)}, {"samples", samples}});
  }
  io::write_text(path, json{{"typical", typical}, {"layers", layers}}.dump(2) + "\n");
}

AlphaReport load_alpha_report(const std::filesystem::path& path) {
  const json j = parse_json_file(path);
  try {
    AlphaReport r;
    for (const auto& t : j.at("typical"))
      r.typical.push_back({t.at("am").get<std::string>(), t.at("degradation").get<double>(), t.at("admitted").get<bool>()});
    for (const auto& l : j.at("layers")) {
      LayerAlpha la;
      la.node = l.at("node").get<int>();
      la.name = l.at("name").get<std::string>();
      la.alpha = opt_from(l.at("alpha"));
      for (const auto& s : l.at("samples"))
        la.samples.push_back({s.at("am").get<std::string>(), s.at("full").get<double>(), s.at("intrinsic").get<double>(),
                              s.at("upstream").get<double>(), opt_from(s.at("alpha")), s.at("note").get<std::string>()});
      r.layers.push_back(std::move(la));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError("malformed alpha file: " + std::string(e.what()), 0);
  }
}

}  // namespace amx
