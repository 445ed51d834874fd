#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "amx/metrics.hpp"
#include "amx/profiler.hpp"
#include "amx/qsim/quant_model.hpp"

namespace amx {

// Layer DAG reduced to what error propagation needs: how each node scales an
// error arriving on its input(s).
struct PropagationGraph {
  struct Node {
    std::string name;
    qsim::NodeKind kind = qsim::NodeKind::Input;
    std::vector<int> inputs;
    bool approximate = false;    // contributes intrinsic error (Conv2D only)
    std::optional<double> gain;  // alpha for Conv2D, mean factor for BatchNorm; unused otherwise
  };
  std::vector<Node> nodes;

  int add(Node n) {
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
  }
  // Error gain of passing through node v (1 for ReLU, pools, flatten, add).
  // Throws ConfigError when a convolution has no alpha.
  double edge_gain(int v) const;
  std::vector<std::vector<int>> successors() const;
  // Topological order; throws ConfigError on a cycle or a dangling input.
  std::vector<int> topological_order() const;
  // Last approximate node in topological order.
  int last_approximate() const;
};

// Convolution gains from profile alphas, batch-norm gains from the folded
// per-channel factors of the model.
PropagationGraph propagation_graph(const qsim::QuantModel& model, const std::vector<LayerProfile>& profiles);

struct PathRecord {
  std::string path;  // node names joined by " > "
  double gain = 0.0;
};

struct ArchMatrix {
  int node = -1;
  std::string name;
  double coefficient = 0.0;  // c_t, summed gain of all paths to the target
  int n_per_filter = 0;
  double scale = 1.0;        // s_x * s_w absorbed into `a`
  RealMatrix a;              // c_t * N_t * scale * outer(p_t, f_t)
  std::vector<PathRecord> provenance;
};

struct ArchResult {
  int target = -1;
  std::vector<ArchMatrix> layers;  // approximate layers, topological order
  RealMatrix total;
};

// `profiles` must cover every approximate node (matched by node id). The
// target defaults to the last approximate node. Never reads an AM.
ArchResult build_arch_matrices(const PropagationGraph& graph, const std::vector<LayerProfile>& profiles,
                               std::optional<int> target = std::nullopt);
ArchResult build_arch_matrices(const qsim::QuantModel& model, const std::vector<LayerProfile>& profiles);

// N * scale * <outer(p, f), delta>: expected intrinsic error of the layer.
double estimate_layer_error(const LayerProfile& profile, const ErrorMatrix& delta);

double compute_ame(const RealMatrix& total, const ErrorMatrix& delta);

// Forward recursion of expected errors over the graph. Entry v is E(e_v) for
// every node that reaches the target (default: last approximate node), NaN
// elsewhere; the target entry equals the AME.
std::vector<double> compute_layerwise_estimates(const PropagationGraph& graph, const std::vector<LayerProfile>& profiles,
                                                const ErrorMatrix& delta, std::optional<int> target = std::nullopt);

// "AMA1" container: u32 layer count, f64 c_t per layer, 65,536 f64 of the
// total matrix.
struct ArchFile {
  std::vector<double> coefficients;
  RealMatrix total;
};
void save_arch(const ArchResult& arch, const std::filesystem::path& path);
ArchFile load_arch(const std::filesystem::path& path);

}  // namespace amx
