#include <nlohmann/json.hpp>

#include "amx/binary_io.hpp"
#include "amx/errors.hpp"
#include "amx/qsim/quant_model.hpp"

namespace amx::qsim {

using nlohmann::json;

namespace {

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

// Appends typed arrays to a blob and records {offset, length, dtype} refs.
class BlobWriter {
 public:
  json f32(const std::vector<float>& v) {
    const auto off = w_.size();
    for (float x : v) w_.f32(x);
    return ref(off, v.size(), "f32");
  }
  json f64(const std::vector<double>& v) {
    const auto off = w_.size();
    for (double x : v) w_.f64(x);
    return ref(off, v.size(), "f64");
  }
  json u8(const std::vector<std::uint8_t>& v) {
    const auto off = w_.size();
    w_.bytes(v);
    return ref(off, v.size(), "u8");
  }
  json i32(const std::vector<std::int32_t>& v) {
    const auto off = w_.size();
    for (auto x : v) w_.i32(x);
    return ref(off, v.size(), "i32");
  }
  std::vector<std::uint8_t> take() { return w_.take(); }

 private:
  static json ref(std::size_t off, std::size_t n, const char* dtype) { return {{"offset", off}, {"length", n}, {"dtype", dtype}}; }
  io::Writer w_;
};

// Resolves refs against the blob. Segments must tile the blob exactly, in
// order, so stray or overlapping bytes are rejected.
class BlobReader {
 public:
  explicit BlobReader(std::vector<std::uint8_t> blob) : blob_(std::move(blob)) {}

  std::vector<float> f32(const json& ref) {
    io::Reader r(segment(ref, "f32", 4));
    std::vector<float> v(ref.at("length").get<std::size_t>());
    for (auto& x : v) x = r.f32();
    return v;
  }
  std::vector<double> f64(const json& ref) {
    io::Reader r(segment(ref, "f64", 8));
    std::vector<double> v(ref.at("length").get<std::size_t>());
    for (auto& x : v) x = r.f64();
    return v;
  }
  std::vector<std::uint8_t> u8(const json& ref) {
    auto s = segment(ref, "u8", 1);
    return {s.begin(), s.end()};
  }
  std::vector<std::int32_t> i32(const json& ref) {
    io::Reader r(segment(ref, "i32", 4));
    std::vector<std::int32_t> v(ref.at("length").get<std::size_t>());
    for (auto& x : v) x = r.i32();
    return v;
  }
  void finish() const {
    if (pos_ != blob_.size()) throw FormatError("weight blob has unreferenced trailing bytes", pos_);
  }

 private:
  std::span<const std::uint8_t> segment(const json& ref, const char* dtype, std::size_t width) {
    if (ref.at("dtype").get<std::string>() != dtype) throw FormatError(std::string("expected dtype ") + dtype, pos_);
    const auto off = ref.at("offset").get<std::size_t>();
    const auto n = ref.at("length").get<std::size_t>() * width;
    if (off != pos_) throw FormatError("blob reference is not contiguous", off);
    if (n > blob_.size() - off) throw FormatError("blob reference runs past the end", off);
    pos_ = off + n;
    return std::span<const std::uint8_t>(blob_).subspan(off, n);
  }
  std::vector<std::uint8_t> blob_;
  std::size_t pos_ = 0;
};

json arch_to_json(const ArchSpec& a) {
  json layers = json::array();
  for (const auto& l : a.layers)
    layers.push_back({{"name", l.name},
                      {"kind", kind_name(l.kind)},
                      {"inputs", l.inputs},
                      {"out_channels", l.out_channels},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"padding", l.padding},
                      {"units", l.units}});
  return {{"input", {a.input.c, a.input.h, a.input.w}}, {"classes", a.classes}, {"layers", layers}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec a;
  const auto in = j.at("input").get<std::vector<int>>();
  if (in.size() != 3) throw ConfigError("input shape must have three entries (c, h, w)");
  a.input = {in[0], in[1], in[2]};
  a.classes = j.at("classes").get<int>();
  for (const auto& l : j.at("layers"))
    a.layers.push_back({l.at("name").get<std::string>(), kind_from_name(l.at("kind").get<std::string>()),
                        l.at("inputs").get<std::vector<int>>(), l.at("out_channels").get<int>(), l.at("kernel").get<int>(),
                        l.at("stride").get<int>(), l.at("padding").get<int>(), l.at("units").get<int>()});
  a.infer_shapes();
  return a;
}

json qparams_json(const QuantParams& q) { return {{"scale", q.scale}, {"zero_point", q.zero_point}}; }
QuantParams qparams_from(const json& j) {
  QuantParams q{j.at("scale").get<double>(), j.at("zero_point").get<int>()};
  if (!(q.scale > 0) || q.zero_point < 0 || q.zero_point > 255) throw ConfigError("invalid quantization parameters");
  return q;
}

void write_pair(const std::filesystem::path& manifest, const json& j, std::vector<std::uint8_t> blob) {
  io::write_file(blob_path(manifest), blob);
  io::write_text(manifest, j.dump(2) + "\n");
}

json read_manifest(const std::filesystem::path& manifest, const char* format) {
  json j;
  try {
    j = json::parse(io::read_text(manifest));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("model manifest is not valid JSON: ") + e.what(), e.byte);
  }
  if (j.value("format", "") != format) throw FormatError(std::string("model manifest format is not ") + format, 0);
  return j;
}

}  // namespace

void save_float_model(const FloatModel& model, const std::filesystem::path& manifest) {
  BlobWriter blob;
  json params = json::array();
  for (const auto& p : model.params)
    params.push_back({{"weight", blob.f32(p.weight)},
                      {"bias", blob.f32(p.bias)},
                      {"gamma", blob.f32(p.gamma)},
                      {"beta", blob.f32(p.beta)},
                      {"running_mean", blob.f32(p.running_mean)},
                      {"running_var", blob.f32(p.running_var)},
                      {"eps", p.eps}});
  json j = {{"format", "amx-float-model"}, {"arch", arch_to_json(model.arch)}, {"params", params},
            {"blob", blob_path(manifest).filename().string()}};
  write_pair(manifest, j, blob.take());
}

FloatModel load_float_model(const std::filesystem::path& manifest) {
  const json j = read_manifest(manifest, "amx-float-model");
  try {
    FloatModel m;
    m.arch = arch_from_json(j.at("arch"));
    BlobReader blob(io::read_file(blob_path(manifest)));
    for (const auto& p : j.at("params")) {
      FloatParams fp;
      fp.weight = blob.f32(p.at("weight"));
      fp.bias = blob.f32(p.at("bias"));
      fp.gamma = blob.f32(p.at("gamma"));
      fp.beta = blob.f32(p.at("beta"));
      fp.running_mean = blob.f32(p.at("running_mean"));
      fp.running_var = blob.f32(p.at("running_var"));
      fp.eps = p.at("eps").get<float>();
      m.params.push_back(std::move(fp));
    }
    blob.finish();
    if (m.params.size() != m.arch.layers.size()) throw ConfigError("parameter count does not match the layer count");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model manifest: ") + e.what(), 0);
  }
}

void save_quant_model(const QuantModel& model, const std::filesystem::path& manifest) {
  BlobWriter blob;
  json nodes = json::array();
  for (std::size_t i = 0; i < model.nodes.size(); ++i) {
    const auto& n = model.nodes[i];
    const auto& e = model.edges[i];
    nodes.push_back({{"name", model.arch.layers[i].name},
                     {"shape", {model.shapes[i].c, model.shapes[i].h, model.shapes[i].w}},
                     {"output", {{"scale", e.q.scale}, {"zero_point", e.q.zero_point}, {"wide", e.wide}, {"calibrated", e.calibrated}}},
                     {"weight", blob.u8(n.weight)},
                     {"weight_q", qparams_json(n.weight_q)},
                     {"bias", blob.i32(n.bias)},
                     {"approximate", n.approximate},
                     {"bn_factor", blob.f64(n.bn_factor)},
                     {"bn_offset", blob.f64(n.bn_offset)},
                     {"bn_gamma", blob.f64(n.bn_gamma)},
                     {"bn_beta", blob.f64(n.bn_beta)},
                     {"bn_mean", blob.f64(n.bn_mean)},
                     {"bn_var", blob.f64(n.bn_var)},
                     {"bn_eps", n.bn_eps}});
  }
  json j = {{"format", "amx-quant-model"}, {"arch", arch_to_json(model.arch)}, {"nodes", nodes},
            {"blob", blob_path(manifest).filename().string()}};
  write_pair(manifest, j, blob.take());
}

QuantModel load_quant_model(const std::filesystem::path& manifest) {
  const json j = read_manifest(manifest, "amx-quant-model");
  try {
    QuantModel m;
    m.arch = arch_from_json(j.at("arch"));
    m.shapes = m.arch.infer_shapes();
    BlobReader blob(io::read_file(blob_path(manifest)));
    for (const auto& n : j.at("nodes")) {
      QuantNode q;
      q.weight = blob.u8(n.at("weight"));
      q.weight_q = qparams_from(n.at("weight_q"));
      q.bias = blob.i32(n.at("bias"));
      q.approximate = n.at("approximate").get<bool>();
      q.bn_factor = blob.f64(n.at("bn_factor"));
      q.bn_offset = blob.f64(n.at("bn_offset"));
      q.bn_gamma = blob.f64(n.at("bn_gamma"));
      q.bn_beta = blob.f64(n.at("bn_beta"));
      q.bn_mean = blob.f64(n.at("bn_mean"));
      q.bn_var = blob.f64(n.at("bn_var"));
      q.bn_eps = n.at("bn_eps").get<double>();
      const auto& o = n.at("output");
      EdgeQuant e{{o.at("scale").get<double>(), o.at("zero_point").get<int>()}, o.at("wide").get<bool>(), o.at("calibrated").get<bool>()};
      m.nodes.push_back(std::move(q));
      m.edges.push_back(e);
    }
    blob.finish();
    if (m.nodes.size() != m.arch.layers.size()) throw ConfigError("node count does not match the layer count");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model manifest: ") + e.what(), 0);
  }
}

}  // namespace amx::qsim
