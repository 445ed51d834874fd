#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace amx {

inline constexpr int kOperandCodes = 256;
inline constexpr std::size_t kLutEntries = 65536;
inline constexpr std::uint32_t kMaxProduct = 65535;

enum class Family { Exact, Truncated, Perforated, Mitchell, DynamicRange, Imported };

// Constant compensation adds the uniform-input expectation of the discarded
// value back to every product with two non-zero operands.
enum class Compensation { None, Constant };

struct FamilyParams {
  Family family = Family::Exact;
  int k = 0;                  // truncated bits (Truncated) or kept bits (DynamicRange)
  std::uint8_t rows = 0;      // bitmask of removed partial-product rows (Perforated)
  Compensation compensation = Compensation::None;

  bool operator==(const FamilyParams&) const = default;
};

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// Behavioral model of an 8x8 unsigned approximate multiplier: the full
// product table indexed [x][w] (x outer), plus a relative area proxy.
class AmLut {
 public:
  AmLut(std::string name, std::vector<std::uint16_t> table, double cost, FamilyParams family);

  std::uint16_t operator()(std::uint8_t x, std::uint8_t w) const { return table_[x * kOperandCodes + w]; }
  std::span<const std::uint16_t> table() const { return table_; }
  const std::string& name() const { return name_; }
  double cost() const { return cost_; }
  const FamilyParams& family() const { return family_; }

  AmLut with_cost(double cost) const;
  AmLut with_name(std::string name) const;
  std::uint64_t table_hash() const;

  bool operator==(const AmLut&) const = default;

 private:
  std::string name_;
  std::vector<std::uint16_t> table_;
  double cost_;
  FamilyParams family_;
};

AmLut make_exact();
AmLut make_truncated(int k, Compensation comp = Compensation::None);
AmLut make_perforated(const std::set<int>& rows, Compensation comp = Compensation::None);
AmLut make_mitchell();
AmLut make_drum(int k);

// Reduces an operand to its k leading bits with the lowest kept bit forced to
// one; returns the reduced value already shifted back into place.
std::uint32_t drum_reduce(std::uint32_t v, int k);

// Every distinct AM produced by the built-in family sweeps, exact first.
std::vector<AmLut> generate_library();

// Binary "AMX1" container: 65,536 little-endian u16 products + JSON trailer.
void save_lut(const AmLut& am, const std::filesystem::path& path);
AmLut load_lut(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_lut(const AmLut& am);
AmLut decode_lut(std::span<const std::uint8_t> bytes);

// Text format: 65,536 lines "x w product". Imported as Family::Imported.
void save_lut_text(const AmLut& am, const std::filesystem::path& path);
AmLut parse_lut_text(const std::string& text, std::string name, double cost = 1.0);
AmLut load_lut_text(const std::filesystem::path& path, double cost = 1.0);

// Loads every *.amx (binary) and *.txt (text) LUT in a directory, sorted by name.
std::vector<AmLut> load_library(const std::filesystem::path& dir);
void save_library(const std::vector<AmLut>& library, const std::filesystem::path& dir);

}  // namespace amx
