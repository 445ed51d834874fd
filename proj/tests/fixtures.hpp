// Trained desk model and hand-built quantized graphs shared by the tests.
#pragma once

#include "amx/datakit.hpp"
#include "amx/qsim/float_model.hpp"
#include "amx/qsim/infer.hpp"
#include "amx/qsim/quant_model.hpp"

namespace fixture {

struct Desk {
  amx::Dataset train, test;
  amx::qsim::FloatModel float_model;
  amx::qsim::QuantModel model;
};

inline amx::Dataset synthetic(std::uint32_t count, std::uint64_t seed) {
  amx::SyntheticOptions o;
  o.count = count;
  o.seed = seed;
  return amx::generate_synthetic(o);
}

// Trained once per test binary; small enough to keep each suite quick.
inline const Desk& desk() {
  static const Desk d = [] {
    Desk r;
    r.train = synthetic(800, 1);
    r.test = synthetic(300, 2);
    amx::qsim::TrainOptions t;
    t.epochs = 6;
    r.float_model = amx::qsim::train_reference(r.train, amx::qsim::desk_architecture(), t);
    r.model = amx::qsim::quantize(r.float_model, r.train.slice(0, 300));
    return r;
  }();
  return d;
}

// Every edge calibrated with scale 1 and zero point 0; weights left empty.
inline amx::qsim::QuantModel hand_model(amx::qsim::ArchSpec arch) {
  amx::qsim::QuantModel m;
  m.shapes = arch.infer_shapes();
  m.nodes.resize(arch.layers.size());
  m.edges.assign(arch.layers.size(), amx::qsim::EdgeQuant{{1.0, 0}, false, true});
  m.arch = std::move(arch);
  return m;
}

// input (c, h, w) -> conv (out, k) -> flatten -> dense(2). Conv weights are
// filled with `w_code`; the conv output edge is wide.
inline amx::qsim::QuantModel conv_model(amx::qsim::Shape in, int out, int k, std::uint8_t w_code, int zx = 0, int zw = 0) {
  using namespace amx::qsim;
  ArchSpec a;
  a.input = in;
  a.classes = 2;
  a.layers = {{"input", NodeKind::Input, {}},
              {"conv", NodeKind::Conv2D, {0}, out, k, 1, 0, 0},
              {"flatten", NodeKind::Flatten, {1}},
              {"fc", NodeKind::Dense, {2}, 0, 1, 1, 0, 2}};
  auto m = hand_model(a);
  m.edges[0].q.zero_point = zx;
  auto& conv = m.nodes[1];
  conv.weight.assign(static_cast<std::size_t>(out) * in.c * k * k, w_code);
  conv.weight_q = {1.0, zw};
  conv.bias.assign(static_cast<std::size_t>(out), 0);
  conv.approximate = true;
  m.edges[1].wide = m.edges[2].wide = m.edges[3].wide = true;
  auto& fc = m.nodes[3];
  fc.weight.assign(2 * m.shapes[2].size(), 0);
  fc.bias.assign(2, 0);
  return m;
}

inline amx::qsim::Tensor constant_tensor(amx::qsim::Shape s, std::int32_t v) {
  return {s, std::vector<std::int32_t>(s.size(), v)};
}

}  // namespace fixture
