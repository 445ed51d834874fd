#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace amx {

// count x h x w x c uint8 images (HWC per image) with integer labels.
struct Dataset {
  std::uint32_t count = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::uint32_t classes = 0;
  std::vector<std::uint8_t> images;
  std::vector<std::uint8_t> labels;

  std::size_t image_size() const { return static_cast<std::size_t>(height) * width * channels; }
  std::span<const std::uint8_t> image(std::size_t i) const { return {images.data() + i * image_size(), image_size()}; }
  bool empty() const { return count == 0; }

  // Throws ParameterError when sizes or labels are inconsistent.
  void validate() const;
  // Images [first, first + n) as a new dataset (clamped to count).
  Dataset slice(std::size_t first, std::size_t n) const;

  bool operator==(const Dataset&) const = default;
};

struct SyntheticOptions {
  std::uint32_t classes = 4;
  std::uint32_t count = 0;
  std::uint32_t height = 16;
  std::uint32_t width = 16;
  std::uint64_t seed = 1;
  double noise = 40.0;  // std-dev of additive Gaussian pixel noise, in code units
  int jitter = 3;       // max pattern displacement from the image centre, in pixels
};

// Renders class-conditioned strokes (orientation per class, jittered position,
// length, thickness and intensity) over a noisy background.
Dataset generate_synthetic(const SyntheticOptions& opts);

// "AMD1" container: u32 count/h/w/c/classes, image bytes, label bytes.
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace amx
