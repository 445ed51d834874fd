#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace amx::qsim {

enum class NodeKind { Input, Conv2D, BatchNorm, ReLU, MaxPool, AvgPool, Add, Flatten, Dense };

std::string kind_name(NodeKind k);
NodeKind kind_from_name(std::string_view name);

struct Shape {
  int c = 0, h = 0, w = 0;
  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
};

// One node of the layer DAG. Fields not used by a kind stay at defaults.
struct LayerSpec {
  std::string name;
  NodeKind kind = NodeKind::Input;
  std::vector<int> inputs;
  int out_channels = 0;  // Conv2D
  int kernel = 1;        // Conv2D kernel, pool window
  int stride = 1;        // Conv2D, pools
  int padding = 0;       // Conv2D
  int units = 0;         // Dense

  bool operator==(const LayerSpec&) const = default;
};

// Layer DAG in topological order; layers[0] is the single Input node.
struct ArchSpec {
  Shape input;
  int classes = 0;
  std::vector<LayerSpec> layers;

  // Validates arity and ordering and returns each node's output shape.
  std::vector<Shape> infer_shapes() const;
  std::vector<std::vector<int>> successors() const;
  int find(std::string_view name) const;
  int output_node() const { return static_cast<int>(layers.size()) - 1; }
  // Weights per filter of a Conv2D node (in_channels * k * k).
  int weights_per_filter(int node) const;

  bool operator==(const ArchSpec&) const = default;
};

// Six convolutions (five 3x3 plus a 1x1 residual shortcut), batch norm after
// each, one residual block, two max pools and a dense classifier head.
ArchSpec desk_architecture(int classes = 4, Shape input = {1, 16, 16});

}  // namespace amx::qsim
