#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "amx/errors.hpp"
#include "amx/qsim/float_model.hpp"

namespace amx::qsim {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Unfolds one CHW image into a (C*k*k) x (Ho*Wo) patch matrix.
void im2col(const float* x, const Shape& in, const LayerSpec& l, const Shape& out, float* col) {
  const int k = l.kernel;
  const int P = out.h * out.w;
  for (int c = 0; c < in.c; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        for (int oy = 0; oy < out.h; ++oy) {
          const int iy = oy * l.stride - l.padding + ky;
          for (int ox = 0; ox < out.w; ++ox) {
            const int ix = ox * l.stride - l.padding + kx;
            row[oy * out.w + ox] =
                (iy >= 0 && iy < in.h && ix >= 0 && ix < in.w) ? x[(c * in.h + iy) * in.w + ix] : 0.0f;
          }
        }
      }
}

void col2im(const float* col, const Shape& in, const LayerSpec& l, const Shape& out, float* dx) {
  const int k = l.kernel;
  const int P = out.h * out.w;
  for (int c = 0; c < in.c; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        for (int oy = 0; oy < out.h; ++oy) {
          const int iy = oy * l.stride - l.padding + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (int ox = 0; ox < out.w; ++ox) {
            const int ix = ox * l.stride - l.padding + kx;
            if (ix >= 0 && ix < in.w) dx[(c * in.h + iy) * in.w + ix] += row[oy * out.w + ox];
          }
        }
      }
}

// Batched forward/backward over the layer DAG.
class Network {
 public:
  // `trainable` is written (running statistics) only by training-mode passes.
  Network(const FloatModel& model, FloatModel* trainable, int batch)
      : model_(model), trainable_(trainable), shapes_(model.arch.infer_shapes()), batch_(batch) {
    const auto n = model_.arch.layers.size();
    act_.resize(n);
    grad_.resize(n);
    cols_.resize(n);
    bn_xhat_.resize(n);
    bn_invstd_.resize(n);
    pool_idx_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      act_[i].resize(static_cast<std::size_t>(batch) * shapes_[i].size());
      grad_[i].resize(act_[i].size());
    }
  }

  const Shape& shape(std::size_t i) const { return shapes_[i]; }
  const std::vector<float>& activation(std::size_t i) const { return act_[i]; }
  int batch() const { return batch_; }
  std::vector<float>& input() { return act_[0]; }
  const std::vector<float>& output() const { return act_.back(); }
  std::vector<float>& output_grad() { return grad_.back(); }

  void forward(int bsz, bool train) {
    const auto& layers = model_.arch.layers;
    for (std::size_t i = 1; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const auto in_id = static_cast<std::size_t>(l.inputs[0]);
      const Shape& is = shapes_[in_id];
      const Shape& os = shapes_[i];
      const float* x = act_[in_id].data();
      float* y = act_[i].data();
      const auto& p = model_.params[i];
      switch (l.kind) {
        case NodeKind::Conv2D: {
          const int K = is.c * l.kernel * l.kernel;
          const int P = os.h * os.w;
          if (train) cols_[i].resize(static_cast<std::size_t>(bsz) * K * P);
          std::vector<float> scratch;
          if (!train) scratch.resize(static_cast<std::size_t>(K) * P);
          ConstMapMat W(p.weight.data(), os.c, K);
          for (int b = 0; b < bsz; ++b) {
            float* col = train ? cols_[i].data() + static_cast<std::size_t>(b) * K * P : scratch.data();
            im2col(x + b * is.size(), is, l, os, col);
            MapMat out(y + b * os.size(), os.c, P);
            out.noalias() = W * ConstMapMat(col, K, P);
            for (int o = 0; o < os.c; ++o) out.row(o).array() += p.bias[static_cast<std::size_t>(o)];
          }
          break;
        }
        case NodeKind::BatchNorm: {
          const int HW = os.h * os.w;
          if (train) {
            bn_xhat_[i].resize(static_cast<std::size_t>(bsz) * os.size());
            bn_invstd_[i].resize(static_cast<std::size_t>(os.c));
          }
          for (int c = 0; c < os.c; ++c) {
            float mean, var;
            if (train) {
              double s = 0, s2 = 0;
              for (int b = 0; b < bsz; ++b)
                for (int j = 0; j < HW; ++j) {
                  const double v = x[b * os.size() + c * HW + j];
                  s += v;
                  s2 += v * v;
                }
              const double m = static_cast<double>(bsz) * HW;
              mean = static_cast<float>(s / m);
              var = static_cast<float>(std::max(0.0, s2 / m - (s / m) * (s / m)));
              auto& tp = trainable_->params[i];
              tp.running_mean[c] = 0.9f * tp.running_mean[c] + 0.1f * mean;
              tp.running_var[c] = 0.9f * tp.running_var[c] + 0.1f * var * static_cast<float>(m / std::max(1.0, m - 1));
            } else {
              mean = p.running_mean[c];
              var = p.running_var[c];
            }
            const float invstd = 1.0f / std::sqrt(var + p.eps);
            if (train) bn_invstd_[i][c] = invstd;
            for (int b = 0; b < bsz; ++b)
              for (int j = 0; j < HW; ++j) {
                const std::size_t idx = b * os.size() + c * HW + j;
                const float xh = (x[idx] - mean) * invstd;
                if (train) bn_xhat_[i][idx] = xh;
                y[idx] = p.gamma[c] * xh + p.beta[c];
              }
          }
          break;
        }
        case NodeKind::ReLU:
          for (std::size_t j = 0; j < static_cast<std::size_t>(bsz) * os.size(); ++j) y[j] = std::max(0.0f, x[j]);
          break;
        case NodeKind::MaxPool:
        case NodeKind::AvgPool: {
          const bool is_max = l.kind == NodeKind::MaxPool;
          if (train && is_max) pool_idx_[i].resize(static_cast<std::size_t>(bsz) * os.size());
          for (int b = 0; b < bsz; ++b)
            for (int c = 0; c < os.c; ++c)
              for (int oy = 0; oy < os.h; ++oy)
                for (int ox = 0; ox < os.w; ++ox) {
                  float best = -INFINITY, sum = 0;
                  std::size_t arg = 0;
                  for (int ky = 0; ky < l.kernel; ++ky)
                    for (int kx = 0; kx < l.kernel; ++kx) {
                      const std::size_t idx =
                          b * is.size() + (c * is.h + oy * l.stride + ky) * is.w + ox * l.stride + kx;
                      sum += x[idx];
                      if (x[idx] > best) {
                        best = x[idx];
                        arg = idx;
                      }
                    }
                  const std::size_t o = b * os.size() + (c * os.h + oy) * os.w + ox;
                  y[o] = is_max ? best : sum / static_cast<float>(l.kernel * l.kernel);
                  if (train && is_max) pool_idx_[i][o] = arg;
                }
          break;
        }
        case NodeKind::Add: {
          const float* x2 = act_[static_cast<std::size_t>(l.inputs[1])].data();
          for (std::size_t j = 0; j < static_cast<std::size_t>(bsz) * os.size(); ++j) y[j] = x[j] + x2[j];
          break;
        }
        case NodeKind::Flatten:
          std::copy(x, x + static_cast<std::size_t>(bsz) * os.size(), y);
          break;
        case NodeKind::Dense: {
          const int in = static_cast<int>(is.size());
          ConstMapMat W(p.weight.data(), os.c, in);
          ConstMapMat X(x, bsz, in);
          MapMat Y(y, bsz, os.c);
          Y.noalias() = X * W.transpose();
          for (int b = 0; b < bsz; ++b)
            for (int o = 0; o < os.c; ++o) Y(b, o) += p.bias[static_cast<std::size_t>(o)];
          break;
        }
        case NodeKind::Input: break;
      }
    }
  }

  // Accumulates parameter gradients into `pg`; expects output_grad() set.
  void backward(int bsz, std::vector<FloatParams>& pg) {
    const auto& layers = model_.arch.layers;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      std::fill(grad_[i].begin(), grad_[i].begin() + static_cast<std::ptrdiff_t>(bsz * shapes_[i].size()), 0.0f);
    for (std::size_t i = layers.size() - 1; i >= 1; --i) {
      const auto& l = layers[i];
      const auto in_id = static_cast<std::size_t>(l.inputs[0]);
      const Shape& is = shapes_[in_id];
      const Shape& os = shapes_[i];
      const float* dy = grad_[i].data();
      float* dx = grad_[in_id].data();
      const auto& p = model_.params[i];
      auto& g = pg[i];
      switch (l.kind) {
        case NodeKind::Conv2D: {
          const int K = is.c * l.kernel * l.kernel;
          const int P = os.h * os.w;
          MapMat dW(g.weight.data(), os.c, K);
          ConstMapMat W(p.weight.data(), os.c, K);
          std::vector<float> dcol(static_cast<std::size_t>(K) * P);
          for (int b = 0; b < bsz; ++b) {
            ConstMapMat col(cols_[i].data() + static_cast<std::size_t>(b) * K * P, K, P);
            ConstMapMat dY(dy + b * os.size(), os.c, P);
            dW.noalias() += dY * col.transpose();
            for (int o = 0; o < os.c; ++o) g.bias[static_cast<std::size_t>(o)] += dY.row(o).sum();
            if (in_id == 0) continue;
            MapMat(dcol.data(), K, P).noalias() = W.transpose() * dY;
            col2im(dcol.data(), is, l, os, dx + b * is.size());
          }
          break;
        }
        case NodeKind::BatchNorm: {
          const int HW = os.h * os.w;
          const double m = static_cast<double>(bsz) * HW;
          for (int c = 0; c < os.c; ++c) {
            double sum_dy = 0, sum_dy_xh = 0;
            for (int b = 0; b < bsz; ++b)
              for (int j = 0; j < HW; ++j) {
                const std::size_t idx = b * os.size() + c * HW + j;
                sum_dy += dy[idx];
                sum_dy_xh += dy[idx] * bn_xhat_[i][idx];
              }
            g.gamma[c] += static_cast<float>(sum_dy_xh);
            g.beta[c] += static_cast<float>(sum_dy);
            const double k = p.gamma[c] * bn_invstd_[i][c] / m;
            for (int b = 0; b < bsz; ++b)
              for (int j = 0; j < HW; ++j) {
                const std::size_t idx = b * os.size() + c * HW + j;
                dx[idx] += static_cast<float>(k * (m * dy[idx] - sum_dy - bn_xhat_[i][idx] * sum_dy_xh));
              }
          }
          break;
        }
        case NodeKind::ReLU: {
          const float* y = act_[i].data();
          for (std::size_t j = 0; j < static_cast<std::size_t>(bsz) * os.size(); ++j)
            if (y[j] > 0.0f) dx[j] += dy[j];
          break;
        }
        case NodeKind::MaxPool:
          for (std::size_t j = 0; j < static_cast<std::size_t>(bsz) * os.size(); ++j) dx[pool_idx_[i][j]] += dy[j];
          break;
        case NodeKind::AvgPool: {
          const float inv = 1.0f / static_cast<float>(l.kernel * l.kernel);
          for (int b = 0; b < bsz; ++b)
            for (int c = 0; c < os.c; ++c)
              for (int oy = 0; oy < os.h; ++oy)
                for (int ox = 0; ox < os.w; ++ox) {
                  const float d = dy[b * os.size() + (c * os.h + oy) * os.w + ox] * inv;
                  for (int ky = 0; ky < l.kernel; ++ky)
                    for (int kx = 0; kx < l.kernel; ++kx)
                      dx[b * is.size() + (c * is.h + oy * l.stride + ky) * is.w + ox * l.stride + kx] += d;
                }
          break;
        }
        case NodeKind::Add: {
          float* dx2 = grad_[static_cast<std::size_t>(l.inputs[1])].data();
          for (std::size_t j = 0; j < static_cast<std::size_t>(bsz) * os.size(); ++j) {
            dx[j] += dy[j];
            dx2[j] += dy[j];
          }
          break;
        }
        case NodeKind::Flatten:
          for (std::size_t j = 0; j < static_cast<std::size_t>(bsz) * os.size(); ++j) dx[j] += dy[j];
          break;
        case NodeKind::Dense: {
          const int in = static_cast<int>(is.size());
          ConstMapMat dY(dy, bsz, os.c);
          ConstMapMat X(act_[in_id].data(), bsz, in);
          MapMat(g.weight.data(), os.c, in).noalias() += dY.transpose() * X;
          for (int b = 0; b < bsz; ++b)
            for (int o = 0; o < os.c; ++o) g.bias[static_cast<std::size_t>(o)] += dY(b, o);
          MapMat dX(dx, bsz, in);
          dX.noalias() += dY * ConstMapMat(p.weight.data(), os.c, in);
          break;
        }
        case NodeKind::Input: break;
      }
    }
  }

 private:
  const FloatModel& model_;
  FloatModel* trainable_;
  std::vector<Shape> shapes_;
  int batch_;
  std::vector<std::vector<float>> act_, grad_, cols_, bn_xhat_, bn_invstd_;
  std::vector<std::vector<std::size_t>> pool_idx_;
};

void load_images(const Dataset& data, std::span<const std::size_t> idx, const Shape& in, std::vector<float>& dst) {
  // Dataset images are HWC; the network expects CHW.
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto img = data.image(idx[b]);
    for (int c = 0; c < in.c; ++c)
      for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x)
          dst[b * in.size() + (c * in.h + y) * in.w + x] = img[(y * in.w + x) * in.c + c] / 255.0f;
  }
}

void check_compatible(const Dataset& data, const ArchSpec& arch) {
  if (static_cast<int>(data.height) != arch.input.h || static_cast<int>(data.width) != arch.input.w ||
      static_cast<int>(data.channels) != arch.input.c)
    throw ParameterError("dataset image shape does not match the architecture input");
  if (static_cast<int>(data.classes) > arch.classes) throw ParameterError("dataset has more classes than the model");
}

}  // namespace

FloatModel init_float_model(const ArchSpec& arch, std::uint64_t seed) {
  const auto shapes = arch.infer_shapes();
  FloatModel m{arch, std::vector<FloatParams>(arch.layers.size())};
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  for (std::size_t i = 1; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    auto& p = m.params[i];
    const Shape& in = shapes[static_cast<std::size_t>(l.inputs[0])];
    const Shape& out = shapes[i];
    if (l.kind == NodeKind::Conv2D || l.kind == NodeKind::Dense) {
      const int fan_in = l.kind == NodeKind::Conv2D ? in.c * l.kernel * l.kernel : static_cast<int>(in.size());
      const float std = std::sqrt((l.kind == NodeKind::Conv2D ? 2.0f : 1.0f) / static_cast<float>(fan_in));
      p.weight.resize(static_cast<std::size_t>(out.c) * fan_in);
      for (auto& w : p.weight) w = std * gauss(rng);
      p.bias.assign(static_cast<std::size_t>(out.c), 0.0f);
    } else if (l.kind == NodeKind::BatchNorm) {
      p.gamma.assign(static_cast<std::size_t>(out.c), 1.0f);
      p.beta.assign(static_cast<std::size_t>(out.c), 0.0f);
      p.running_mean.assign(static_cast<std::size_t>(out.c), 0.0f);
      p.running_var.assign(static_cast<std::size_t>(out.c), 1.0f);
    }
  }
  return m;
}

FloatModel train_reference(const Dataset& data, const ArchSpec& arch, const TrainOptions& opts, TrainReport* report) {
  data.validate();
  check_compatible(data, arch);
  if (opts.epochs < 0 || opts.batch_size < 1 || !(opts.learning_rate > 0))
    throw ParameterError("invalid training options");
  FloatModel model = init_float_model(arch, opts.seed);
  if (opts.epochs == 0) return model;
  if (data.empty()) throw ParameterError("cannot train on an empty dataset");

  Network net(model, &model, opts.batch_size);
  const Shape in_shape = net.shape(0);
  const int classes = arch.classes;
  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.count);
  std::iota(order.begin(), order.end(), 0);

  // Adam state mirrors the parameter layout.
  auto zero_like = [&] {
    std::vector<FloatParams> z(model.params.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i].weight.assign(model.params[i].weight.size(), 0.0f);
      z[i].bias.assign(model.params[i].bias.size(), 0.0f);
      z[i].gamma.assign(model.params[i].gamma.size(), 0.0f);
      z[i].beta.assign(model.params[i].beta.size(), 0.0f);
    }
    return z;
  };
  std::vector<FloatParams> grads = zero_like(), m1 = zero_like(), m2 = zero_like();
  constexpr float kBeta1 = 0.9f, kBeta2 = 0.999f, kEps = 1e-8f;
  long step = 0;

  double final_acc = 0.0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch_size)) {
      const int bsz = static_cast<int>(std::min<std::size_t>(opts.batch_size, order.size() - start));
      std::span<const std::size_t> idx(order.data() + start, static_cast<std::size_t>(bsz));
      load_images(data, idx, in_shape, net.input());
      net.forward(bsz, true);

      const auto& logits = net.output();
      auto& dlogits = net.output_grad();
      for (int b = 0; b < bsz; ++b) {
        const float* z = logits.data() + static_cast<std::size_t>(b) * classes;
        const float zmax = *std::max_element(z, z + classes);
        double denom = 0;
        for (int c = 0; c < classes; ++c) denom += std::exp(z[c] - zmax);
        const int label = data.labels[idx[static_cast<std::size_t>(b)]];
        loss_sum += -(z[label] - zmax - std::log(denom));
        if (std::max_element(z, z + classes) - z == label) ++correct;
        for (int c = 0; c < classes; ++c)
          dlogits[static_cast<std::size_t>(b) * classes + c] =
              static_cast<float>((std::exp(z[c] - zmax) / denom - (c == label ? 1.0 : 0.0)) / bsz);
      }

      for (auto& g : grads) {
        std::fill(g.weight.begin(), g.weight.end(), 0.0f);
        std::fill(g.bias.begin(), g.bias.end(), 0.0f);
        std::fill(g.gamma.begin(), g.gamma.end(), 0.0f);
        std::fill(g.beta.begin(), g.beta.end(), 0.0f);
      }
      net.backward(bsz, grads);

      ++step;
      const float lr = static_cast<float>(opts.learning_rate);
      const float c1 = 1.0f - std::pow(kBeta1, static_cast<float>(step));
      const float c2 = 1.0f - std::pow(kBeta2, static_cast<float>(step));
      auto update = [&](std::vector<float>& w, const std::vector<float>& g, std::vector<float>& a,
                        std::vector<float>& v) {
        for (std::size_t j = 0; j < w.size(); ++j) {
          a[j] = kBeta1 * a[j] + (1 - kBeta1) * g[j];
          v[j] = kBeta2 * v[j] + (1 - kBeta2) * g[j] * g[j];
          w[j] -= lr * (a[j] / c1) / (std::sqrt(v[j] / c2) + kEps);
        }
      };
      for (std::size_t i = 0; i < model.params.size(); ++i) {
        auto& p = model.params[i];
        update(p.weight, grads[i].weight, m1[i].weight, m2[i].weight);
        update(p.bias, grads[i].bias, m1[i].bias, m2[i].bias);
        update(p.gamma, grads[i].gamma, m1[i].gamma, m2[i].gamma);
        update(p.beta, grads[i].beta, m1[i].beta, m2[i].beta);
      }
    }
    final_acc = static_cast<double>(correct) / static_cast<double>(data.count);
    if (report) {
      report->epoch_loss.push_back(loss_sum / data.count);
      report->epoch_accuracy.push_back(final_acc);
    }
  }
  if (opts.min_accuracy > 0.0) {
    const double acc = float_accuracy(model, data);
    if (acc < opts.min_accuracy)
      throw EstimationError("training did not converge: accuracy " + std::to_string(acc) + " after " +
                            std::to_string(opts.epochs) + " epochs is below " + std::to_string(opts.min_accuracy));
  }
  return model;
}

std::vector<std::vector<float>> float_forward(const FloatModel& model, std::span<const std::uint8_t> image) {
  Network net(model, nullptr, 1);
  if (image.size() != net.shape(0).size()) throw ParameterError("image size does not match the model input");
  Dataset one;
  one.count = 1;
  one.height = static_cast<std::uint32_t>(model.arch.input.h);
  one.width = static_cast<std::uint32_t>(model.arch.input.w);
  one.channels = static_cast<std::uint32_t>(model.arch.input.c);
  one.images.assign(image.begin(), image.end());
  const std::size_t zero = 0;
  load_images(one, {&zero, 1}, net.shape(0), net.input());
  net.forward(1, false);
  std::vector<std::vector<float>> outs;
  outs.reserve(model.arch.layers.size());
  for (std::size_t i = 0; i < model.arch.layers.size(); ++i) outs.push_back(net.activation(i));
  return outs;
}

std::vector<int> float_predict(const FloatModel& model, const Dataset& data) {
  data.validate();
  check_compatible(data, model.arch);
  constexpr int kBatch = 64;
  Network net(model, nullptr, kBatch);
  const int classes = model.arch.classes;
  std::vector<int> pred(data.count);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.count; start += kBatch) {
    const int bsz = static_cast<int>(std::min<std::size_t>(kBatch, data.count - start));
    idx.resize(static_cast<std::size_t>(bsz));
    std::iota(idx.begin(), idx.end(), start);
    load_images(data, idx, net.shape(0), net.input());
    net.forward(bsz, false);
    for (int b = 0; b < bsz; ++b) {
      const float* z = net.output().data() + static_cast<std::size_t>(b) * classes;
      pred[start + static_cast<std::size_t>(b)] = static_cast<int>(std::max_element(z, z + classes) - z);
    }
  }
  return pred;
}

std::vector<std::pair<float, float>> float_ranges(const FloatModel& model, const Dataset& data) {
  data.validate();
  check_compatible(data, model.arch);
  constexpr int kBatch = 64;
  Network net(model, nullptr, kBatch);
  const auto n = model.arch.layers.size();
  std::vector<std::pair<float, float>> ranges(n, {INFINITY, -INFINITY});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.count; start += kBatch) {
    const int bsz = static_cast<int>(std::min<std::size_t>(kBatch, data.count - start));
    idx.resize(static_cast<std::size_t>(bsz));
    std::iota(idx.begin(), idx.end(), start);
    load_images(data, idx, net.shape(0), net.input());
    net.forward(bsz, false);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = net.activation(i);
      const auto len = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(bsz) * net.shape(i).size());
      const auto [lo, hi] = std::minmax_element(a.begin(), a.begin() + len);
      ranges[i].first = std::min(ranges[i].first, *lo);
      ranges[i].second = std::max(ranges[i].second, *hi);
    }
  }
  return ranges;
}

double float_accuracy(const FloatModel& model, const Dataset& data) {
  if (data.empty()) throw ParameterError("accuracy of an empty dataset is undefined");
  const auto pred = float_predict(model, data);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.count);
}

}  // namespace amx::qsim
