#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "amx/datakit.hpp"
#include "amx/qsim/float_model.hpp"
#include "amx/qsim/graph.hpp"

namespace amx::qsim {

// Per-tensor asymmetric affine uint8: real = scale * (q - zero_point).
struct QuantParams {
  double scale = 1.0;
  int zero_point = 0;

  int quantize(double real) const;
  double dequantize(std::int64_t q) const { return scale * static_cast<double>(q - zero_point); }
  bool operator==(const QuantParams&) const = default;
};

// Range [lo, hi] is widened to contain 0. Degenerate ranges (lo == hi after
// widening) give scale 1 and set *degenerate.
QuantParams choose_params(double lo, double hi, bool* degenerate = nullptr);

// Quantization of a node's output tensor. Wide edges carry raw 32-bit
// accumulators (conv/dense outputs at scale s_x * s_w, zero point 0).
struct EdgeQuant {
  QuantParams q;
  bool wide = false;
  bool calibrated = false;

  bool operator==(const EdgeQuant&) const = default;
};

struct QuantNode {
  // Conv2D / Dense
  std::vector<std::uint8_t> weight;  // OIHW or [out][in] codes
  QuantParams weight_q;
  std::vector<std::int32_t> bias;    // at the accumulator scale
  bool approximate = false;
  // BatchNorm folded as y = factor[c] * x + offset[c]; source parameters kept
  // for provenance.
  std::vector<double> bn_factor, bn_offset;
  std::vector<double> bn_gamma, bn_beta, bn_mean, bn_var;
  double bn_eps = 0.0;

  // Mean over channels of gamma / sqrt(var + eps).
  double mean_bn_factor() const;
  // Float reference of the folded affine map, one channel.
  double bn_apply_real(int channel, double x) const { return bn_factor[static_cast<std::size_t>(channel)] * x + bn_offset[static_cast<std::size_t>(channel)]; }

  bool operator==(const QuantNode&) const = default;
};

struct QuantModel {
  ArchSpec arch;
  std::vector<Shape> shapes;
  std::vector<QuantNode> nodes;
  std::vector<EdgeQuant> edges;  // output quantization of each node

  int classes() const { return arch.classes; }
  // Conv2D node ids in topological order.
  std::vector<int> conv_nodes() const;
  std::vector<int> approximate_conv_nodes() const;
  // Throws StateError naming the first edge without calibrated parameters.
  void require_calibrated() const;

  bool operator==(const QuantModel&) const = default;
};

using WarningSink = std::function<void(const std::string&)>;

// Calibrates activation ranges with the float model in inference mode and
// quantizes weights per tensor. Conv2D nodes with kernel > 1 are marked
// approximate; 1x1 convolutions and dense layers stay exact.
QuantModel quantize(const FloatModel& model, const Dataset& calibration, const WarningSink& warn = {});

// JSON manifest plus a little-endian blob (`<manifest stem>.bin` next to it).
void save_float_model(const FloatModel& model, const std::filesystem::path& manifest);
FloatModel load_float_model(const std::filesystem::path& manifest);
void save_quant_model(const QuantModel& model, const std::filesystem::path& manifest);
QuantModel load_quant_model(const std::filesystem::path& manifest);

}  // namespace amx::qsim
