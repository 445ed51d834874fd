#include "amx/qsim/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "amx/errors.hpp"
#include "amx/parallel.hpp"

namespace amx::qsim {

namespace {

constexpr __int128 kOne = static_cast<__int128>(1) << FixedMultiplier::kFracBits;

std::int32_t clamp_code(__int128 acc) {
  const std::int64_t v = round_fixed(acc);
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(v, 0, 255));
}

std::int32_t checked_acc(std::int64_t acc, const std::string& node) {
  if (acc < std::numeric_limits<std::int32_t>::min() || acc > std::numeric_limits<std::int32_t>::max())
    throw StateError("32-bit accumulator overflow in '" + node + "'");
  return static_cast<std::int32_t>(acc);
}

__int128 fixed_constant(double v) {
  const double scaled = std::nearbyint(v * static_cast<double>(kOne));
  if (!std::isfinite(scaled) || std::abs(scaled) > 1e36) throw StateError("fixed-point constant out of range");
  return static_cast<__int128>(scaled);
}

}  // namespace

FixedMultiplier FixedMultiplier::from_real(double r) {
  const double scaled = std::nearbyint(r * static_cast<double>(kOne));
  if (!std::isfinite(scaled) || std::abs(scaled) >= 0x1p62) throw StateError("requantization multiplier out of range");
  return {static_cast<std::int64_t>(scaled)};
}

std::int64_t round_fixed(__int128 v) {
  return static_cast<std::int64_t>((v + (kOne >> 1)) >> FixedMultiplier::kFracBits);
}

Executor::Executor(const QuantModel& model, const AmLut* am) : model_(&model) {
  model.require_calibrated();
  if (am) {
    auto t = std::make_shared<std::vector<std::uint16_t>>(kLutEntries);
    for (int x = 0; x < kOperandCodes; ++x)
      for (int w = 0; w < kOperandCodes; ++w)
        (*t)[static_cast<std::size_t>(w) * kOperandCodes + x] = (*am)(static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(w));
    lut_ = std::move(t);
  }
  const auto& layers = model.arch.layers;
  plans_.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto& node = model.nodes[i];
    auto& plan = plans_[i];
    const auto& out = model.edges[i].q;
    switch (l.kind) {
      case NodeKind::Conv2D:
      case NodeKind::Dense: {
        const auto o = static_cast<std::size_t>(model.shapes[i].c);
        const auto k = node.weight.size() / o;
        plan.weight_sum.assign(o, 0);
        for (std::size_t a = 0; a < o; ++a)
          for (std::size_t j = 0; j < k; ++j) plan.weight_sum[a] += node.weight[a * k + j];
        break;
      }
      case NodeKind::BatchNorm: {
        const auto& in = model.edges[static_cast<std::size_t>(l.inputs[0])].q;
        for (std::size_t c = 0; c < node.bn_factor.size(); ++c) {
          plan.mult.push_back(FixedMultiplier::from_real(node.bn_factor[c] * in.scale / out.scale));
          plan.offset.push_back(fixed_constant(node.bn_offset[c] / out.scale + out.zero_point));
        }
        break;
      }
      case NodeKind::ReLU: {
        const auto& in = model.edges[static_cast<std::size_t>(l.inputs[0])].q;
        plan.mult.push_back(FixedMultiplier::from_real(in.scale / out.scale));
        break;
      }
      case NodeKind::Add:
        for (int src : l.inputs)
          plan.mult.push_back(FixedMultiplier::from_real(model.edges[static_cast<std::size_t>(src)].q.scale / out.scale));
        break;
      default: break;
    }
  }
}

Tensor Executor::input_tensor(std::span<const std::uint8_t> image) const {
  const Shape s = model_->shapes[0];
  if (image.size() != s.size()) throw ParameterError("image size does not match the model input");
  Tensor t{s, std::vector<std::int32_t>(s.size())};
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < s.c; ++c)
        t.data[static_cast<std::size_t>((c * s.h + y) * s.w + x)] = image[static_cast<std::size_t>((y * s.w + x) * s.c + c)];
  return t;
}

Tensor Executor::conv(int node, const Tensor& input, bool use_am) const {
  const auto id = static_cast<std::size_t>(node);
  const auto& l = model_->arch.layers[id];
  const auto& qn = model_->nodes[id];
  const Shape& is = input.shape;
  const Shape& os = model_->shapes[id];
  const int zx = model_->edges[static_cast<std::size_t>(l.inputs[0])].q.zero_point;
  const int zw = qn.weight_q.zero_point;
  const int k = l.kernel;
  const int K = is.c * k * k;
  const int P = os.h * os.w;

  // Patch matrix of input codes; padding holds the code of real zero.
  std::vector<std::uint8_t> col(static_cast<std::size_t>(K) * P);
  std::vector<std::int64_t> patch_sum(static_cast<std::size_t>(P), 0);
  for (int c = 0; c < is.c; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        std::uint8_t* row = col.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        for (int oy = 0; oy < os.h; ++oy) {
          const int iy = oy * l.stride - l.padding + ky;
          for (int ox = 0; ox < os.w; ++ox) {
            const int ix = ox * l.stride - l.padding + kx;
            const int q = (iy >= 0 && iy < is.h && ix >= 0 && ix < is.w)
                              ? input.data[static_cast<std::size_t>((c * is.h + iy) * is.w + ix)]
                              : zx;
            row[oy * os.w + ox] = static_cast<std::uint8_t>(q);
            patch_sum[static_cast<std::size_t>(oy * os.w + ox)] += q;
          }
        }
      }

  const bool lut = use_am && lut_;
  Tensor out{os, std::vector<std::int32_t>(os.size())};
  std::vector<std::int64_t> acc(static_cast<std::size_t>(P));
  for (int o = 0; o < os.c; ++o) {
    std::fill(acc.begin(), acc.end(), 0);
    const std::uint8_t* wrow = qn.weight.data() + static_cast<std::size_t>(o) * K;
    for (int j = 0; j < K; ++j) {
      const std::uint8_t* xrow = col.data() + static_cast<std::size_t>(j) * P;
      if (lut) {
        const std::uint16_t* prod = lut_->data() + static_cast<std::size_t>(wrow[j]) * kOperandCodes;
        for (int p = 0; p < P; ++p) acc[static_cast<std::size_t>(p)] += prod[xrow[p]];
      } else {
        const std::int64_t w = wrow[j];
        for (int p = 0; p < P; ++p) acc[static_cast<std::size_t>(p)] += w * xrow[p];
      }
    }
    const std::int64_t fixed = static_cast<std::int64_t>(K) * zx * zw - static_cast<std::int64_t>(zx) * plans_[id].weight_sum[static_cast<std::size_t>(o)] +
                               qn.bias[static_cast<std::size_t>(o)];
    for (int p = 0; p < P; ++p)
      out.data[static_cast<std::size_t>(o * P + p)] =
          checked_acc(acc[static_cast<std::size_t>(p)] - zw * patch_sum[static_cast<std::size_t>(p)] + fixed, l.name);
  }
  return out;
}

__int128 Executor::bn_accumulate(int node, int channel, std::int32_t q) const {
  const auto id = static_cast<std::size_t>(node);
  const int zin = model_->edges[static_cast<std::size_t>(model_->arch.layers[id].inputs[0])].q.zero_point;
  const auto& plan = plans_[id];
  const auto c = static_cast<std::size_t>(channel);
  return plan.mult[c].mul(static_cast<std::int64_t>(q) - zin) + plan.offset[c];
}

__int128 Executor::add_accumulate(int node, std::int32_t q1, std::int32_t q2) const {
  const auto id = static_cast<std::size_t>(node);
  const auto& l = model_->arch.layers[id];
  const auto& plan = plans_[id];
  const int z1 = model_->edges[static_cast<std::size_t>(l.inputs[0])].q.zero_point;
  const int z2 = model_->edges[static_cast<std::size_t>(l.inputs[1])].q.zero_point;
  return plan.mult[0].mul(static_cast<std::int64_t>(q1) - z1) + plan.mult[1].mul(static_cast<std::int64_t>(q2) - z2) +
         static_cast<__int128>(model_->edges[id].q.zero_point) * kOne;
}

Tensor Executor::eval_node(int node, const std::vector<Tensor>& outputs) const {
  const auto id = static_cast<std::size_t>(node);
  const auto& l = model_->arch.layers[id];
  const Shape& os = model_->shapes[id];
  if (l.kind == NodeKind::Input) throw ParameterError("the input node has no predecessor to evaluate");
  const Tensor& in = outputs[static_cast<std::size_t>(l.inputs[0])];
  Tensor out{os, std::vector<std::int32_t>(os.size())};
  switch (l.kind) {
    case NodeKind::Conv2D:
      return conv(node, in, model_->nodes[id].approximate);
    case NodeKind::BatchNorm: {
      const auto hw = static_cast<std::size_t>(os.h) * os.w;
      for (int c = 0; c < os.c; ++c)
        for (std::size_t j = 0; j < hw; ++j) {
          const auto idx = static_cast<std::size_t>(c) * hw + j;
          out.data[idx] = clamp_code(bn_accumulate(node, c, in.data[idx]));
        }
      break;
    }
    case NodeKind::ReLU: {
      const int zin = model_->edges[static_cast<std::size_t>(l.inputs[0])].q.zero_point;
      const __int128 zout = static_cast<__int128>(model_->edges[id].q.zero_point) * kOne;
      const auto& m = plans_[id].mult[0];
      for (std::size_t j = 0; j < out.data.size(); ++j)
        out.data[j] = clamp_code(m.mul(std::max<std::int64_t>(0, static_cast<std::int64_t>(in.data[j]) - zin)) + zout);
      break;
    }
    case NodeKind::Add: {
      const Tensor& in2 = outputs[static_cast<std::size_t>(l.inputs[1])];
      for (std::size_t j = 0; j < out.data.size(); ++j) out.data[j] = clamp_code(add_accumulate(node, in.data[j], in2.data[j]));
      break;
    }
    case NodeKind::MaxPool:
    case NodeKind::AvgPool: {
      const Shape& is = in.shape;
      const bool is_max = l.kind == NodeKind::MaxPool;
      const std::int64_t n = static_cast<std::int64_t>(l.kernel) * l.kernel;
      for (int c = 0; c < os.c; ++c)
        for (int oy = 0; oy < os.h; ++oy)
          for (int ox = 0; ox < os.w; ++ox) {
            std::int64_t best = std::numeric_limits<std::int64_t>::min(), sum = 0;
            for (int ky = 0; ky < l.kernel; ++ky)
              for (int kx = 0; kx < l.kernel; ++kx) {
                const std::int64_t v = in.data[static_cast<std::size_t>((c * is.h + oy * l.stride + ky) * is.w + ox * l.stride + kx)];
                best = std::max(best, v);
                sum += v;
              }
            // Average rounds half up: floor((2 * sum + n) / (2 * n)).
            const std::int64_t num = 2 * sum + n, den = 2 * n;
            const std::int64_t avg = num >= 0 ? num / den : -((-num + den - 1) / den);
            out.data[static_cast<std::size_t>((c * os.h + oy) * os.w + ox)] = static_cast<std::int32_t>(is_max ? best : avg);
          }
      break;
    }
    case NodeKind::Flatten:
      out.data = in.data;
      break;
    case NodeKind::Dense: {
      const auto& qn = model_->nodes[id];
      const int zx = model_->edges[static_cast<std::size_t>(l.inputs[0])].q.zero_point;
      const int zw = qn.weight_q.zero_point;
      const auto k = in.data.size();
      std::int64_t xsum = 0;
      for (auto v : in.data) xsum += v;
      for (int o = 0; o < os.c; ++o) {
        const std::uint8_t* w = qn.weight.data() + static_cast<std::size_t>(o) * k;
        std::int64_t acc = 0;
        for (std::size_t j = 0; j < k; ++j) acc += static_cast<std::int64_t>(w[j]) * in.data[j];
        acc += static_cast<std::int64_t>(k) * zx * zw - zw * xsum - static_cast<std::int64_t>(zx) * plans_[id].weight_sum[static_cast<std::size_t>(o)] +
               qn.bias[static_cast<std::size_t>(o)];
        out.data[static_cast<std::size_t>(o)] = checked_acc(acc, l.name);
      }
      break;
    }
    case NodeKind::Input: break;
  }
  return out;
}

std::vector<Tensor> Executor::run(std::span<const std::uint8_t> image) const {
  const auto n = model_->arch.layers.size();
  std::vector<Tensor> outputs(n);
  outputs[0] = input_tensor(image);
  for (std::size_t i = 1; i < n; ++i) outputs[i] = eval_node(static_cast<int>(i), outputs);
  return outputs;
}

int Executor::classify(std::span<const std::uint8_t> image) const {
  const auto outputs = run(image);
  const auto& logits = outputs.back().data;
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

InferenceResult infer(const QuantModel& model, const AmLut* am, const Dataset& batch, std::optional<int> tap_node, int jobs) {
  batch.validate();
  const Executor exec(model, am);
  if (batch.image_size() != model.shapes[0].size()) throw ParameterError("dataset image shape does not match the model input");
  if (tap_node && (*tap_node < 0 || static_cast<std::size_t>(*tap_node) >= model.arch.layers.size()))
    throw ParameterError("tap node " + std::to_string(*tap_node) + " does not exist");
  InferenceResult r;
  r.predictions.resize(batch.count);
  if (tap_node) r.taps.resize(batch.count);
  parallel_for(batch.count, jobs, [&](std::size_t i) {
    auto outputs = exec.run(batch.image(i));
    const auto& logits = outputs.back().data;
    r.predictions[i] = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (tap_node) r.taps[i] = std::move(outputs[static_cast<std::size_t>(*tap_node)]);
  });
  return r;
}

double evaluate_accuracy(const QuantModel& model, const AmLut* am, const Dataset& data, int jobs) {
  if (data.empty()) throw ParameterError("cannot evaluate accuracy on an empty dataset");
  const auto r = infer(model, am, data, std::nullopt, jobs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.count; ++i) correct += r.predictions[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.count);
}

}  // namespace amx::qsim
