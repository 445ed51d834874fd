#include "amx/qsim/graph.hpp"

#include <map>

#include "amx/errors.hpp"

namespace amx::qsim {

std::string kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Input: return "input";
    case NodeKind::Conv2D: return "conv2d";
    case NodeKind::BatchNorm: return "batchnorm";
    case NodeKind::ReLU: return "relu";
    case NodeKind::MaxPool: return "maxpool";
    case NodeKind::AvgPool: return "avgpool";
    case NodeKind::Add: return "add";
    case NodeKind::Flatten: return "flatten";
    case NodeKind::Dense: return "dense";
  }
  return "input";
}

NodeKind kind_from_name(std::string_view name) {
  static const std::map<std::string, NodeKind, std::less<>> names = {
      {"input", NodeKind::Input},     {"conv2d", NodeKind::Conv2D}, {"batchnorm", NodeKind::BatchNorm},
      {"relu", NodeKind::ReLU},       {"maxpool", NodeKind::MaxPool}, {"avgpool", NodeKind::AvgPool},
      {"add", NodeKind::Add},         {"flatten", NodeKind::Flatten}, {"dense", NodeKind::Dense}};
  auto it = names.find(name);
  if (it == names.end()) throw ConfigError("unknown node kind '" + std::string(name) + "'");
  return it->second;
}

std::vector<Shape> ArchSpec::infer_shapes() const {
  if (layers.empty() || layers[0].kind != NodeKind::Input) throw ConfigError("architecture must start with an input node");
  if (classes < 2) throw ConfigError("architecture needs at least two classes");
  std::vector<Shape> shapes(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::size_t want = l.kind == NodeKind::Input ? 0 : l.kind == NodeKind::Add ? 2 : 1;
    if (l.inputs.size() != want)
      throw ConfigError("node '" + l.name + "' has " + std::to_string(l.inputs.size()) + " inputs, expected " +
                        std::to_string(want));
    for (int in : l.inputs)
      if (in < 0 || static_cast<std::size_t>(in) >= i)
        throw ConfigError("node '" + l.name + "' references a later or invalid node (cycle or bad order)");
    if (l.kind == NodeKind::Input && i != 0) throw ConfigError("only node 0 may be an input");
    const Shape in = want > 0 ? shapes[static_cast<std::size_t>(l.inputs[0])] : input;
    Shape out = in;
    switch (l.kind) {
      case NodeKind::Input: out = input; break;
      case NodeKind::Conv2D: {
        if (l.kernel < 1 || l.stride < 1 || l.padding < 0 || l.out_channels < 1)
          throw ConfigError("conv '" + l.name + "' has invalid hyper-parameters");
        out.c = l.out_channels;
        out.h = (in.h + 2 * l.padding - l.kernel) / l.stride + 1;
        out.w = (in.w + 2 * l.padding - l.kernel) / l.stride + 1;
        break;
      }
      case NodeKind::MaxPool:
      case NodeKind::AvgPool:
        if (l.kernel < 1 || l.stride < 1) throw ConfigError("pool '" + l.name + "' has invalid window");
        out.h = (in.h - l.kernel) / l.stride + 1;
        out.w = (in.w - l.kernel) / l.stride + 1;
        break;
      case NodeKind::Add:
        if (shapes[static_cast<std::size_t>(l.inputs[1])] != in)
          throw ConfigError("add '" + l.name + "' joins tensors of different shapes");
        break;
      case NodeKind::Flatten: out = {static_cast<int>(in.size()), 1, 1}; break;
      case NodeKind::Dense:
        if (l.units < 1) throw ConfigError("dense '" + l.name + "' needs units");
        out = {l.units, 1, 1};
        break;
      case NodeKind::BatchNorm:
      case NodeKind::ReLU: break;
    }
    if (out.h < 1 || out.w < 1) throw ConfigError("node '" + l.name + "' produces an empty feature map");
    shapes[i] = out;
  }
  if (layers.back().kind != NodeKind::Dense || layers.back().units != classes)
    throw ConfigError("last node must be a dense layer with one unit per class");
  return shapes;
}

std::vector<std::vector<int>> ArchSpec::successors() const {
  std::vector<std::vector<int>> succ(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i)
    for (int in : layers[i].inputs) succ[static_cast<std::size_t>(in)].push_back(static_cast<int>(i));
  return succ;
}

int ArchSpec::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return static_cast<int>(i);
  throw ConfigError("no node named '" + std::string(name) + "'");
}

int ArchSpec::weights_per_filter(int node) const {
  const auto& l = layers.at(static_cast<std::size_t>(node));
  if (l.kind != NodeKind::Conv2D) throw ConfigError("node '" + l.name + "' is not a convolution");
  const auto shapes = infer_shapes();
  return shapes[static_cast<std::size_t>(l.inputs[0])].c * l.kernel * l.kernel;
}

ArchSpec desk_architecture(int classes, Shape input) {
  ArchSpec a;
  a.input = input;
  a.classes = classes;
  auto add = [&](LayerSpec l) {
    a.layers.push_back(std::move(l));
    return static_cast<int>(a.layers.size()) - 1;
  };
  auto conv = [&](const std::string& name, int in, int out, int k) {
    return add({name, NodeKind::Conv2D, {in}, out, k, 1, k / 2, 0});
  };
  auto unary = [&](const std::string& name, NodeKind kind, int in) { return add({name, kind, {in}}); };

  int x = add({"input", NodeKind::Input, {}});
  x = conv("conv1", x, 8, 3);
  x = unary("bn1", NodeKind::BatchNorm, x);
  x = unary("relu1", NodeKind::ReLU, x);
  x = conv("conv2", x, 16, 3);
  x = unary("bn2", NodeKind::BatchNorm, x);
  x = unary("relu2", NodeKind::ReLU, x);
  const int block_in = add({"pool1", NodeKind::MaxPool, {x}, 0, 2, 2});
  x = conv("conv3", block_in, 16, 3);
  x = unary("bn3", NodeKind::BatchNorm, x);
  x = unary("relu3", NodeKind::ReLU, x);
  x = conv("conv4", x, 16, 3);
  const int main_path = unary("bn4", NodeKind::BatchNorm, x);
  int sc = conv("shortcut", block_in, 16, 1);
  sc = unary("bn_sc", NodeKind::BatchNorm, sc);
  x = add({"add", NodeKind::Add, {main_path, sc}});
  x = unary("relu4", NodeKind::ReLU, x);
  x = add({"pool2", NodeKind::MaxPool, {x}, 0, 2, 2});
  x = conv("conv5", x, 32, 3);
  x = unary("bn5", NodeKind::BatchNorm, x);
  x = unary("relu5", NodeKind::ReLU, x);
  x = unary("flatten", NodeKind::Flatten, x);
  add({"fc", NodeKind::Dense, {x}, 0, 1, 1, 0, classes});
  return a;
}

}  // namespace amx::qsim
