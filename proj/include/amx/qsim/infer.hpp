#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "amx/amlib.hpp"
#include "amx/datakit.hpp"
#include "amx/qsim/quant_model.hpp"

namespace amx::qsim {

// Integer feature map in CHW order. Narrow tensors hold uint8 codes, wide
// tensors raw 32-bit accumulators.
struct Tensor {
  Shape shape;
  std::vector<std::int32_t> data;

  bool operator==(const Tensor&) const = default;
};

// Real-valued multiplier applied in fixed point with 32 fractional bits.
struct FixedMultiplier {
  static constexpr int kFracBits = 32;
  std::int64_t raw = 0;

  static FixedMultiplier from_real(double r);
  __int128 mul(std::int64_t v) const { return static_cast<__int128>(raw) * v; }
};

// Rounds a 32-fractional-bit fixed-point value to the nearest integer.
std::int64_t round_fixed(__int128 v);

// Bit-exact integer inference. Approximate Conv2D nodes look the raw product
// q_x * q_w up in the AM table; the zero-point cross terms stay exact:
//   acc = sum(LUT(q_x, q_w) - z_w q_x - z_x q_w + z_x z_w) + bias.
// Constructed without an AM, every convolution multiplies directly.
class Executor {
 public:
  explicit Executor(const QuantModel& model, const AmLut* am = nullptr);

  const QuantModel& model() const { return *model_; }
  bool uses_lut() const { return lut_ != nullptr; }

  Tensor input_tensor(std::span<const std::uint8_t> image) const;
  // Every node output for one image, indexed by node id.
  std::vector<Tensor> run(std::span<const std::uint8_t> image) const;
  // Recomputes a single node from the given outputs of its predecessors.
  Tensor eval_node(int node, const std::vector<Tensor>& outputs) const;
  // Convolution of `input`; `use_am` selects the AM table even for nodes not
  // marked approximate (ignored when the executor has no AM).
  Tensor conv(int node, const Tensor& input, bool use_am) const;
  int classify(std::span<const std::uint8_t> image) const;

  // Pre-requantization fixed-point accumulators (32 fractional bits, output
  // code units) of BatchNorm and Add nodes.
  __int128 bn_accumulate(int node, int channel, std::int32_t q) const;
  __int128 add_accumulate(int node, std::int32_t q1, std::int32_t q2) const;

 private:
  struct NodePlan {
    std::vector<FixedMultiplier> mult;   // BN per channel; ReLU [0]; Add [0], [1]
    std::vector<__int128> offset;        // BN per channel
    std::vector<std::int64_t> weight_sum;  // conv/dense per output channel
  };

  const QuantModel* model_;
  std::shared_ptr<const std::vector<std::uint16_t>> lut_;  // [w][x] transposed
  std::vector<NodePlan> plans_;
};

struct InferenceResult {
  std::vector<int> predictions;
  std::vector<Tensor> taps;  // per image, image order; empty without a tap
};

InferenceResult infer(const QuantModel& model, const AmLut* am, const Dataset& batch,
                      std::optional<int> tap_node = std::nullopt, int jobs = 1);

// Top-1 accuracy; throws ParameterError for an empty dataset.
double evaluate_accuracy(const QuantModel& model, const AmLut* am, const Dataset& data, int jobs = 1);

}  // namespace amx::qsim
