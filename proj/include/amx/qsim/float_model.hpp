#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "amx/datakit.hpp"
#include "amx/qsim/graph.hpp"

namespace amx::qsim {

// Trainable parameters of one node. Conv weights are OIHW, dense weights
// [out][in]. Batch-norm nodes keep gamma/beta and running statistics.
struct FloatParams {
  std::vector<float> weight, bias;
  std::vector<float> gamma, beta, running_mean, running_var;
  float eps = 1e-5f;

  bool operator==(const FloatParams&) const = default;
};

struct FloatModel {
  ArchSpec arch;
  std::vector<FloatParams> params;  // one per node

  bool operator==(const FloatModel&) const = default;
};

FloatModel init_float_model(const ArchSpec& arch, std::uint64_t seed);

struct TrainOptions {
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 2e-3;
  std::uint64_t seed = 1;
  // Training accuracy required after the last epoch; 0 disables the check.
  double min_accuracy = 0.9;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;
};

// Adam on softmax cross-entropy with batch-statistics batch norm. Zero epochs
// returns the seeded initial model. Throws EstimationError when the final
// training accuracy stays below opts.min_accuracy.
FloatModel train_reference(const Dataset& data, const ArchSpec& arch, const TrainOptions& opts,
                           TrainReport* report = nullptr);

// Inference-mode forward pass of one image (pixels / 255 as input). Returns
// every node output; the last entry holds the logits.
std::vector<std::vector<float>> float_forward(const FloatModel& model, std::span<const std::uint8_t> image);

// Per-node [min, max] of inference-mode outputs over a dataset.
std::vector<std::pair<float, float>> float_ranges(const FloatModel& model, const Dataset& data);

std::vector<int> float_predict(const FloatModel& model, const Dataset& data);
double float_accuracy(const FloatModel& model, const Dataset& data);

}  // namespace amx::qsim
