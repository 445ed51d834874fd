#include "amx/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "amx/binary_io.hpp"
#include "amx/errors.hpp"

namespace amx {
namespace {

constexpr std::string_view kDatasetMagic = "AMD1";

// Stroke orientation for a class index: 0 horizontal, 1 vertical, then the two
// diagonals, then intermediate angles for larger class counts.
double class_angle(std::uint32_t cls, std::uint32_t classes) {
  static constexpr double kBase[] = {0.0, 90.0, 45.0, 135.0};
  if (classes <= 4) return kBase[cls] * std::numbers::pi / 180.0;
  return static_cast<double>(cls) * 180.0 / classes * std::numbers::pi / 180.0;
}

}  // namespace

void Dataset::validate() const {
  if (images.size() != static_cast<std::size_t>(count) * image_size())
    throw ParameterError("dataset image buffer size does not match count x h x w x c");
  if (labels.size() != count) throw ParameterError("dataset label count does not match image count");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= classes)
      throw ParameterError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                           " is not below class count " + std::to_string(classes));
}

Dataset Dataset::slice(std::size_t first, std::size_t n) const {
  Dataset out = *this;
  first = std::min<std::size_t>(first, count);
  n = std::min<std::size_t>(n, count - first);
  out.count = static_cast<std::uint32_t>(n);
  out.images.assign(images.begin() + static_cast<std::ptrdiff_t>(first * image_size()),
                    images.begin() + static_cast<std::ptrdiff_t>((first + n) * image_size()));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(first),
                    labels.begin() + static_cast<std::ptrdiff_t>(first + n));
  return out;
}

Dataset generate_synthetic(const SyntheticOptions& o) {
  if (o.classes < 2 || o.classes > 255) throw ParameterError("synthetic dataset needs 2..255 classes");
  if (o.height < 8 || o.width < 8) throw ParameterError("synthetic images must be at least 8x8");
  if (o.jitter < 0 || o.noise < 0.0) throw ParameterError("jitter and noise must be non-negative");

  Dataset ds;
  ds.count = o.count;
  ds.height = o.height;
  ds.width = o.width;
  ds.channels = 1;
  ds.classes = o.classes;
  ds.images.assign(static_cast<std::size_t>(o.count) * o.height * o.width, 0);
  ds.labels.resize(o.count);

  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<int> shift(-o.jitter, o.jitter);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double cy0 = (o.height - 1) / 2.0;
  const double cx0 = (o.width - 1) / 2.0;
  const double span = std::min(o.height, o.width);
  std::vector<double> canvas(static_cast<std::size_t>(o.height) * o.width);

  for (std::uint32_t i = 0; i < o.count; ++i) {
    const auto cls = static_cast<std::uint32_t>(i % o.classes);
    ds.labels[i] = static_cast<std::uint8_t>(cls);
    const double cy = cy0 + shift(rng);
    const double cx = cx0 + shift(rng);
    const double half_len = span * (0.25 + 0.15 * unit(rng));
    const double half_thick = 0.6 + 0.6 * unit(rng);
    const double intensity = 130.0 + 110.0 * unit(rng);
    const double background = 10.0 + 30.0 * unit(rng);
    const double angle = class_angle(cls, o.classes);
    const double ux = std::cos(angle), uy = std::sin(angle);

    for (std::uint32_t y = 0; y < o.height; ++y)
      for (std::uint32_t x = 0; x < o.width; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double along = dx * ux + dy * uy;
        const double across = -dx * uy + dy * ux;
        // Anti-aliased capsule: full intensity inside, linear fall-off over one pixel.
        const double over_len = std::max(0.0, std::abs(along) - half_len);
        const double dist = std::hypot(over_len, std::abs(across));
        const double cover = std::clamp(half_thick + 0.5 - dist, 0.0, 1.0);
        canvas[y * o.width + x] = background + cover * intensity;
      }
    auto* img = ds.images.data() + static_cast<std::size_t>(i) * o.height * o.width;
    for (std::size_t p = 0; p < canvas.size(); ++p) {
      const double v = canvas[p] + (o.noise > 0.0 ? o.noise * gauss(rng) : 0.0);
      img[p] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return ds;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ds.validate();
  io::Writer w;
  w.tag(kDatasetMagic);
  w.u32(ds.count);
  w.u32(ds.height);
  w.u32(ds.width);
  w.u32(ds.channels);
  w.u32(ds.classes);
  w.bytes(ds.images);
  w.bytes(ds.labels);
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_tag(kDatasetMagic);
  Dataset ds;
  ds.count = r.u32();
  ds.height = r.u32();
  ds.width = r.u32();
  ds.channels = r.u32();
  ds.classes = r.u32();
  if (ds.classes < 2 || ds.height == 0 || ds.width == 0 || ds.channels == 0)
    throw FormatError("dataset header has degenerate dimensions", 4);
  const std::size_t img_bytes = static_cast<std::size_t>(ds.count) * ds.image_size();
  if (r.remaining() != img_bytes + ds.count)
    throw FormatError("dataset payload size mismatch: expected " + std::to_string(img_bytes + ds.count) +
                          " bytes, found " + std::to_string(r.remaining()),
                      r.offset());
  auto imgs = r.take(img_bytes);
  ds.images.assign(imgs.begin(), imgs.end());
  const std::size_t label_at = r.offset();
  auto labels = r.take(ds.count);
  ds.labels.assign(labels.begin(), labels.end());
  r.expect_end();
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    if (ds.labels[i] >= ds.classes)
      throw FormatError("label " + std::to_string(ds.labels[i]) + " not below class count", label_at + i);
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) { io::write_file(path, encode_dataset(ds)); }

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

}  // namespace amx
