#include "amx/ame.hpp"

#include <algorithm>
#include <functional>
#include <limits>

#include "amx/binary_io.hpp"
#include "amx/errors.hpp"

namespace amx {

using qsim::NodeKind;

namespace {

constexpr std::size_t kMaxProvenance = 256;

const LayerProfile& profile_of(const std::vector<LayerProfile>& profiles, int node, const std::string& name) {
  for (const auto& p : profiles)
    if (p.node == node) return p;
  throw ConfigError("no profile for approximate layer '" + name + "'");
}

std::vector<bool> reaching(const std::vector<int>& order, const std::vector<std::vector<int>>& succ, int target) {
  std::vector<bool> r(succ.size(), false);
  r[static_cast<std::size_t>(target)] = true;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    for (int s : succ[static_cast<std::size_t>(*it)])
      if (r[static_cast<std::size_t>(s)]) r[static_cast<std::size_t>(*it)] = true;
  return r;
}

}  // namespace

double PropagationGraph::edge_gain(int v) const {
  const auto& n = nodes[static_cast<std::size_t>(v)];
  switch (n.kind) {
    case NodeKind::Conv2D:
      if (!n.gain) throw ConfigError("layer '" + n.name + "' has no measured alpha");
      return *n.gain;
    case NodeKind::BatchNorm:
      return n.gain.value_or(1.0);
    case NodeKind::Dense:
      throw ConfigError("error propagation through dense layer '" + n.name + "' is not modelled");
    default:
      return 1.0;
  }
}

std::vector<std::vector<int>> PropagationGraph::successors() const {
  std::vector<std::vector<int>> s(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (int in : nodes[i].inputs) {
      if (in < 0 || static_cast<std::size_t>(in) >= nodes.size())
        throw ConfigError("node '" + nodes[i].name + "' references missing input " + std::to_string(in));
      s[static_cast<std::size_t>(in)].push_back(static_cast<int>(i));
    }
  return s;
}

std::vector<int> PropagationGraph::topological_order() const {
  const auto succ = successors();
  std::vector<int> indeg(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) indeg[i] = static_cast<int>(nodes[i].inputs.size());
  std::vector<int> ready, order;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (indeg[i] == 0) ready.push_back(static_cast<int>(i));
  // Lowest id first keeps the order stable for graphs already listed topologically.
  while (!ready.empty()) {
    const auto it = std::min_element(ready.begin(), ready.end());
    const int v = *it;
    ready.erase(it);
    order.push_back(v);
    for (int s : succ[static_cast<std::size_t>(v)])
      if (--indeg[static_cast<std::size_t>(s)] == 0) ready.push_back(s);
  }
  if (order.size() != nodes.size()) throw ConfigError("propagation graph contains a cycle");
  return order;
}

int PropagationGraph::last_approximate() const {
  int last = -1;
  for (int v : topological_order())
    if (nodes[static_cast<std::size_t>(v)].approximate) last = v;
  if (last < 0) throw ConfigError("graph has no approximate layer");
  return last;
}

PropagationGraph propagation_graph(const qsim::QuantModel& model, const std::vector<LayerProfile>& profiles) {
  PropagationGraph g;
  for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
    const auto& l = model.arch.layers[i];
    PropagationGraph::Node n{l.name, l.kind, l.inputs, model.nodes[i].approximate, std::nullopt};
    if (l.kind == NodeKind::BatchNorm) n.gain = model.nodes[i].mean_bn_factor();
    if (l.kind == NodeKind::Conv2D)
      for (const auto& p : profiles)
        if (p.node == static_cast<int>(i)) n.gain = p.alpha;
    g.add(std::move(n));
  }
  return g;
}

ArchResult build_arch_matrices(const PropagationGraph& graph, const std::vector<LayerProfile>& profiles,
                               std::optional<int> target) {
  const auto order = graph.topological_order();
  const int tgt = target ? *target : graph.last_approximate();
  if (tgt < 0 || static_cast<std::size_t>(tgt) >= graph.nodes.size()) throw ParameterError("target node does not exist");
  const auto succ = graph.successors();

  // Gains are only demanded along paths that reach the target.
  const auto reaches = reaching(order, succ, tgt);

  // G(v): summed gain of all paths from v's output to the target's output,
  // memoized and evaluated only where asked so unused gains are never read.
  std::vector<std::optional<double>> memo(graph.nodes.size());
  std::function<double(int)> G = [&](int v) -> double {
    auto& m = memo[static_cast<std::size_t>(v)];
    if (!m) {
      double g = v == tgt ? 1.0 : 0.0;
      if (v != tgt)
        for (int s : succ[static_cast<std::size_t>(v)])
          if (reaches[static_cast<std::size_t>(s)]) g += graph.edge_gain(s) * G(s);
      m = g;
    }
    return *m;
  };

  ArchResult r;
  r.target = tgt;
  r.total = RealMatrix(kOperandCodes, kOperandCodes);
  for (int v : order) {
    const auto& n = graph.nodes[static_cast<std::size_t>(v)];
    if (!n.approximate) continue;
    const auto& prof = profile_of(profiles, v, n.name);
    validate_pmf(prof.p, "p of " + n.name);
    validate_pmf(prof.f, "f of " + n.name);
    ArchMatrix m;
    m.node = v;
    m.name = n.name;
    m.coefficient = reaches[static_cast<std::size_t>(v)] ? G(v) : 0.0;
    m.n_per_filter = prof.n_per_filter;
    m.scale = prof.scale;
    m.a = RealMatrix::outer(prof.p, prof.f);
    m.a *= m.coefficient * prof.n_per_filter * prof.scale;

    // Explicit path listing for the provenance record.
    std::vector<int> stack{v};
    std::function<void(int, double)> walk = [&](int u, double gain) {
      if (m.provenance.size() >= kMaxProvenance) return;
      if (u == tgt) {
        std::string s;
        for (int w : stack) s += (s.empty() ? "" : " > ") + graph.nodes[static_cast<std::size_t>(w)].name;
        m.provenance.push_back({s, gain});
        return;
      }
      for (int s : succ[static_cast<std::size_t>(u)]) {
        if (!reaches[static_cast<std::size_t>(s)]) continue;
        stack.push_back(s);
        walk(s, gain * graph.edge_gain(s));
        stack.pop_back();
      }
    };
    if (reaches[static_cast<std::size_t>(v)]) walk(v, 1.0);

    r.total += m.a;
    r.layers.push_back(std::move(m));
  }
  return r;
}

ArchResult build_arch_matrices(const qsim::QuantModel& model, const std::vector<LayerProfile>& profiles) {
  return build_arch_matrices(propagation_graph(model, profiles), profiles);
}

double estimate_layer_error(const LayerProfile& profile, const ErrorMatrix& delta) {
  CompensatedSum s;
  for (int x = 0; x < kOperandCodes; ++x) {
    const double px = profile.p[static_cast<std::size_t>(x)];
    if (px == 0) continue;
    for (int w = 0; w < kOperandCodes; ++w) s.add(px * profile.f[static_cast<std::size_t>(w)] * delta(x, w));
  }
  return profile.n_per_filter * profile.scale * s.value();
}

double compute_ame(const RealMatrix& total, const ErrorMatrix& delta) { return frobenius_inner(total, delta); }

std::vector<double> compute_layerwise_estimates(const PropagationGraph& graph, const std::vector<LayerProfile>& profiles,
                                                const ErrorMatrix& delta, std::optional<int> target) {
  const auto order = graph.topological_order();
  const int tgt = target ? *target : graph.last_approximate();
  if (tgt < 0 || static_cast<std::size_t>(tgt) >= graph.nodes.size()) throw ParameterError("target node does not exist");
  const auto succ = graph.successors();
  const auto reaches = reaching(order, succ, tgt);
  std::vector<double> e(graph.nodes.size(), 0.0);
  // Structurally error-free nodes never need a gain.
  std::vector<bool> carries(graph.nodes.size(), false);
  for (int v : order) {
    const auto id = static_cast<std::size_t>(v);
    if (!reaches[id]) continue;
    const auto& n = graph.nodes[id];
    bool in_err = false;
    double sum = 0;
    for (int in : n.inputs) {
      in_err = in_err || carries[static_cast<std::size_t>(in)];
      sum += e[static_cast<std::size_t>(in)];
    }
    if (in_err) {
      // Add passes the sum of its inputs; single-input nodes scale theirs.
      e[id] = n.kind == NodeKind::Add ? sum : graph.edge_gain(v) * sum;
    }
    if (n.approximate) e[id] += estimate_layer_error(profile_of(profiles, v, n.name), delta);
    carries[id] = in_err || n.approximate;
  }
  for (std::size_t i = 0; i < e.size(); ++i)
    if (!reaches[i]) e[i] = std::numeric_limits<double>::quiet_NaN();
  return e;
}

void save_arch(const ArchResult& arch, const std::filesystem::path& path) {
  io::Writer w;
  w.tag("AMA1");
  w.u32(static_cast<std::uint32_t>(arch.layers.size()));
  for (const auto& l : arch.layers) w.f64(l.coefficient);
  for (double v : arch.total.values()) w.f64(v);
  io::write_file(path, w.take());
}

ArchFile load_arch(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::Reader r(bytes);
  r.expect_tag("AMA1");
  const auto n = r.u32();
  if (n > r.remaining() / 8) throw FormatError("layer count exceeds the file size", r.offset() - 4);
  ArchFile f;
  for (std::uint32_t i = 0; i < n; ++i) f.coefficients.push_back(r.f64());
  std::vector<double> total(kLutEntries);
  for (auto& v : total) v = r.f64();
  r.expect_end();
  f.total = RealMatrix(kOperandCodes, kOperandCodes, std::move(total));
  return f;
}

}  // namespace amx
