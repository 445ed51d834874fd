#include <algorithm>
#include <cmath>
#include <limits>

#include "amx/errors.hpp"
#include "amx/qsim/quant_model.hpp"

namespace amx::qsim {

int QuantParams::quantize(double real) const {
  const double q = std::nearbyint(real / scale) + zero_point;
  return static_cast<int>(std::clamp(q, 0.0, 255.0));
}

QuantParams choose_params(double lo, double hi, bool* degenerate) {
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  if (degenerate) *degenerate = false;
  if (!(hi > lo)) {
    if (degenerate) *degenerate = true;
    // The only constant left after widening to contain 0 is 0 itself.
    return {1.0, 0};
  }
  const double scale = (hi - lo) / 255.0;
  const int zp = static_cast<int>(std::clamp(std::nearbyint(-lo / scale), 0.0, 255.0));
  return {scale, zp};
}

double QuantNode::mean_bn_factor() const {
  if (bn_factor.empty()) return 1.0;
  double s = 0;
  for (double g : bn_factor) s += g;
  return s / static_cast<double>(bn_factor.size());
}

std::vector<int> QuantModel::conv_nodes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < arch.layers.size(); ++i)
    if (arch.layers[i].kind == NodeKind::Conv2D) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> QuantModel::approximate_conv_nodes() const {
  std::vector<int> out;
  for (int i : conv_nodes())
    if (nodes[static_cast<std::size_t>(i)].approximate) out.push_back(i);
  return out;
}

void QuantModel::require_calibrated() const {
  if (edges.size() != arch.layers.size() || nodes.size() != arch.layers.size())
    throw StateError("quantized model is incomplete");
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (!edges[i].calibrated) throw StateError("edge after node '" + arch.layers[i].name + "' is not calibrated");
}

namespace {

void quantize_weights(const FloatParams& p, double input_scale, QuantNode& node, const std::string& name,
                      const WarningSink& warn) {
  const auto [lo, hi] = std::minmax_element(p.weight.begin(), p.weight.end());
  bool degenerate = false;
  node.weight_q = choose_params(*lo, *hi, &degenerate);
  if (degenerate && warn) warn("weights of '" + name + "' are constant; using scale 1");
  node.weight.resize(p.weight.size());
  for (std::size_t j = 0; j < p.weight.size(); ++j)
    node.weight[j] = static_cast<std::uint8_t>(node.weight_q.quantize(p.weight[j]));
  const double acc_scale = input_scale * node.weight_q.scale;
  node.bias.resize(p.bias.size());
  for (std::size_t j = 0; j < p.bias.size(); ++j) {
    const double b = std::nearbyint(p.bias[j] / acc_scale);
    if (std::abs(b) > std::numeric_limits<std::int32_t>::max())
      throw StateError("bias of '" + name + "' overflows the 32-bit accumulator");
    node.bias[j] = static_cast<std::int32_t>(b);
  }
}

}  // namespace

QuantModel quantize(const FloatModel& model, const Dataset& calibration, const WarningSink& warn) {
  if (calibration.empty()) throw ParameterError("calibration set must not be empty");
  QuantModel q;
  q.arch = model.arch;
  q.shapes = model.arch.infer_shapes();
  const auto n = model.arch.layers.size();
  q.nodes.resize(n);
  q.edges.resize(n);
  const auto ranges = float_ranges(model, calibration);

  auto calibrated_edge = [&](std::size_t i) {
    bool degenerate = false;
    EdgeQuant e{choose_params(ranges[i].first, ranges[i].second, &degenerate), false, true};
    if (degenerate && warn) warn("activation range after '" + model.arch.layers[i].name + "' is degenerate; using scale 1");
    return e;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = model.arch.layers[i];
    const auto& p = model.params[i];
    auto& node = q.nodes[i];
    const EdgeQuant* in = l.inputs.empty() ? nullptr : &q.edges[static_cast<std::size_t>(l.inputs[0])];
    switch (l.kind) {
      case NodeKind::Input:
        q.edges[i] = {{1.0 / 255.0, 0}, false, true};
        break;
      case NodeKind::Conv2D:
      case NodeKind::Dense:
        if (in->wide)
          throw ConfigError("'" + l.name + "' consumes a 32-bit accumulator; insert batch norm or an activation first");
        quantize_weights(p, in->q.scale, node, l.name, warn);
        node.approximate = l.kind == NodeKind::Conv2D && l.kernel > 1;
        q.edges[i] = {{in->q.scale * node.weight_q.scale, 0}, true, true};
        break;
      case NodeKind::BatchNorm: {
        const auto c = p.gamma.size();
        node.bn_eps = p.eps;
        node.bn_gamma.assign(p.gamma.begin(), p.gamma.end());
        node.bn_beta.assign(p.beta.begin(), p.beta.end());
        node.bn_mean.assign(p.running_mean.begin(), p.running_mean.end());
        node.bn_var.assign(p.running_var.begin(), p.running_var.end());
        node.bn_factor.resize(c);
        node.bn_offset.resize(c);
        for (std::size_t ch = 0; ch < c; ++ch) {
          node.bn_factor[ch] = node.bn_gamma[ch] / std::sqrt(node.bn_var[ch] + node.bn_eps);
          node.bn_offset[ch] = node.bn_beta[ch] - node.bn_factor[ch] * node.bn_mean[ch];
        }
        q.edges[i] = calibrated_edge(i);
        break;
      }
      case NodeKind::ReLU:
      case NodeKind::Add:
        q.edges[i] = calibrated_edge(i);
        break;
      case NodeKind::MaxPool:
      case NodeKind::AvgPool:
      case NodeKind::Flatten:
        q.edges[i] = *in;
        break;
    }
  }
  return q;
}

}  // namespace amx::qsim
