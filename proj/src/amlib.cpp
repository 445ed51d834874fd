#include "amx/amlib.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "amx/binary_io.hpp"
#include "amx/errors.hpp"

namespace amx {
namespace {

constexpr std::string_view kLutMagic = "AMX1";

using Table = std::vector<std::uint16_t>;

template <typename F>
Table build_table(F&& product) {
  Table t(kLutEntries);
  for (std::uint32_t x = 0; x < kOperandCodes; ++x)
    for (std::uint32_t w = 0; w < kOperandCodes; ++w) {
      std::uint32_t v = (x == 0 || w == 0) ? 0u : product(x, w);
      t[x * kOperandCodes + w] = static_cast<std::uint16_t>(std::min(v, kMaxProduct));
    }
  return t;
}

std::string rows_tag(std::uint8_t rows) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02x", rows);
  return buf;
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::Exact: return "exact";
    case Family::Truncated: return "truncated";
    case Family::Perforated: return "perforated";
    case Family::Mitchell: return "mitchell";
    case Family::DynamicRange: return "drum";
    case Family::Imported: return "imported";
  }
  return "imported";
}

Family family_from_name(const std::string& name) {
  static const std::map<std::string, Family> names = {
      {"exact", Family::Exact},           {"truncated", Family::Truncated}, {"perforated", Family::Perforated},
      {"mitchell", Family::Mitchell},     {"drum", Family::DynamicRange},   {"imported", Family::Imported}};
  auto it = names.find(name);
  if (it == names.end()) throw ParameterError("unknown AM family '" + name + "'");
  return it->second;
}

AmLut::AmLut(std::string name, std::vector<std::uint16_t> table, double cost, FamilyParams family)
    : name_(std::move(name)), table_(std::move(table)), cost_(cost), family_(family) {
  if (table_.size() != kLutEntries)
    throw ParameterError("LUT must hold 65536 entries, got " + std::to_string(table_.size()));
  if (!(cost_ > 0.0) || !std::isfinite(cost_)) throw ParameterError("AM cost must be positive and finite");
  if (name_.empty()) throw ParameterError("AM name must not be empty");
}

AmLut AmLut::with_cost(double cost) const { return AmLut(name_, table_, cost, family_); }
AmLut AmLut::with_name(std::string name) const { return AmLut(std::move(name), table_, cost_, family_); }

std::uint64_t AmLut::table_hash() const {
  return io::fnv1a({reinterpret_cast<const std::uint8_t*>(table_.data()), table_.size() * sizeof(std::uint16_t)});
}

AmLut make_exact() {
  return AmLut("exact", build_table([](std::uint32_t x, std::uint32_t w) { return x * w; }), 1.0, {});
}

AmLut make_truncated(int k, Compensation comp) {
  if (k < 0 || k > 15) throw ParameterError("truncated: k must be in [0, 15], got " + std::to_string(k));
  const std::uint32_t mask = ~((1u << k) - 1u);
  const std::uint32_t bias = (comp == Compensation::Constant && k > 0) ? (1u << (k - 1)) : 0u;
  auto table = build_table([&](std::uint32_t x, std::uint32_t w) { return ((x * w) & mask) + bias; });
  double cost = 1.0 - k / 16.0;
  std::string name = "trunc_k" + std::to_string(k);
  if (bias != 0) {
    cost += 0.02;
    name += "_c";
  }
  return AmLut(std::move(name), std::move(table), cost,
               {Family::Truncated, k, 0, bias != 0 ? Compensation::Constant : Compensation::None});
}

AmLut make_perforated(const std::set<int>& rows, Compensation comp) {
  std::uint8_t mask = 0;
  for (int r : rows) {
    if (r < 0 || r > 7) throw ParameterError("perforated: row index must be in [0, 7], got " + std::to_string(r));
    mask = static_cast<std::uint8_t>(mask | (1u << r));
  }
  // Uniform-input expectation of a removed row i is 127.5 * 0.5 * 2^i.
  std::uint32_t bias = 0;
  if (comp == Compensation::Constant && mask != 0)
    bias = static_cast<std::uint32_t>(std::lround(63.75 * static_cast<double>(mask)));
  auto table = build_table([&](std::uint32_t x, std::uint32_t w) {
    std::uint32_t sum = 0;
    for (int i = 0; i < 8; ++i)
      if (((w >> i) & 1u) && !((mask >> i) & 1u)) sum += x << i;
    return sum + bias;
  });
  // Removing row i saves roughly one eighth of the partial-product array;
  // higher rows sit on longer carry chains and save marginally more.
  double cost = 1.0;
  for (int i = 0; i < 8; ++i)
    if ((mask >> i) & 1u) cost -= 0.1 + 0.004 * i;
  std::string name = "perf_r" + rows_tag(mask);
  if (bias != 0) {
    cost += 0.02;
    name += "_c";
  }
  return AmLut(std::move(name), std::move(table), cost,
               {Family::Perforated, 0, mask, bias != 0 ? Compensation::Constant : Compensation::None});
}

AmLut make_mitchell() {
  // With x = 2^k1 (1 + f1), the scaled fractions f1 * 2^(k1+k2) are the
  // integers (x - 2^k1) << k2, so the log-domain sum is exact in integers.
  auto table = build_table([](std::uint32_t x, std::uint32_t w) {
    const int k1 = std::bit_width(x) - 1;
    const int k2 = std::bit_width(w) - 1;
    const std::uint32_t fx = (x - (1u << k1)) << k2;
    const std::uint32_t fw = (w - (1u << k2)) << k1;
    const std::uint32_t one = 1u << (k1 + k2);
    const std::uint32_t fsum = fx + fw;
    return fsum < one ? one + fsum : 2u * fsum;
  });
  return AmLut("mitchell", std::move(table), 0.55, {Family::Mitchell, 0, 0, Compensation::None});
}

std::uint32_t drum_reduce(std::uint32_t v, int k) {
  if (v < (1u << k)) return v;
  const int lead = std::bit_width(v) - 1;
  const int shift = lead - k + 1;
  return ((v >> shift) | 1u) << shift;
}

AmLut make_drum(int k) {
  if (k < 3 || k > 8) throw ParameterError("drum: k must be in [3, 8], got " + std::to_string(k));
  auto table = build_table([k](std::uint32_t x, std::uint32_t w) { return drum_reduce(x, k) * drum_reduce(w, k); });
  const double cost = 0.25 + 0.75 * (k / 8.0) * (k / 8.0);
  return AmLut("drum_k" + std::to_string(k), std::move(table), cost,
               {Family::DynamicRange, k, 0, Compensation::None});
}

std::vector<AmLut> generate_library() {
  std::vector<AmLut> all;
  all.push_back(make_exact());
  for (int k = 1; k <= 15; ++k) all.push_back(make_truncated(k));
  for (int k = 2; k <= 15; ++k) all.push_back(make_truncated(k, Compensation::Constant));
  // Removing row 7 zeroes half the weight range and is never useful.
  for (int mask = 1; mask < 128; ++mask) {
    std::set<int> rows;
    for (int i = 0; i < 7; ++i)
      if ((mask >> i) & 1) rows.insert(i);
    all.push_back(make_perforated(rows));
    if (mask < 64) all.push_back(make_perforated(rows, Compensation::Constant));
  }
  all.push_back(make_mitchell());
  for (int k = 3; k <= 7; ++k) all.push_back(make_drum(k));

  std::vector<AmLut> distinct;
  std::unordered_set<std::uint64_t> seen;
  for (auto& am : all) {
    if (!seen.insert(am.table_hash()).second) continue;
    distinct.push_back(std::move(am));
  }
  return distinct;
}

std::vector<std::uint8_t> encode_lut(const AmLut& am) {
  io::Writer w;
  w.tag(kLutMagic);
  for (auto v : am.table()) w.u16(v);
  const auto& fam = am.family();
  nlohmann::ordered_json meta = {{"name", am.name()},
                                 {"family", family_name(fam.family)},
                                 {"k", fam.k},
                                 {"rows", fam.rows},
                                 {"compensation", fam.compensation == Compensation::Constant ? "constant" : "none"},
                                 {"cost", am.cost()}};
  const std::string text = meta.dump();
  w.bytes({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  return w.take();
}

AmLut decode_lut(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_tag(kLutMagic);
  std::vector<std::uint16_t> table(kLutEntries);
  for (auto& v : table) v = r.u16();
  const std::size_t trailer_at = r.offset();
  auto rest = r.rest();
  // The trailer is a single JSON object; anything after its closing brace is garbage.
  if (rest.empty() || rest.back() != '}') throw FormatError("LUT trailer must end with its JSON object", bytes.size());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(rest.begin(), rest.end());
    FamilyParams fam;
    fam.family = family_from_name(meta.at("family").get<std::string>());
    fam.k = meta.value("k", 0);
    fam.rows = meta.value("rows", std::uint8_t{0});
    fam.compensation = meta.value("compensation", std::string("none")) == "constant" ? Compensation::Constant
                                                                                     : Compensation::None;
    return AmLut(meta.at("name").get<std::string>(), std::move(table), meta.at("cost").get<double>(), fam);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad LUT metadata trailer: ") + e.what(), trailer_at);
  } catch (const ParameterError& e) {
    throw FormatError(std::string("bad LUT metadata: ") + e.what(), trailer_at);
  }
}

void save_lut(const AmLut& am, const std::filesystem::path& path) { io::write_file(path, encode_lut(am)); }

AmLut load_lut(const std::filesystem::path& path) {
  if (path.extension() == ".txt") return load_lut_text(path);
  return decode_lut(io::read_file(path));
}

void save_lut_text(const AmLut& am, const std::filesystem::path& path) {
  std::string out;
  out.reserve(kLutEntries * 12);
  for (int x = 0; x < kOperandCodes; ++x)
    for (int w = 0; w < kOperandCodes; ++w) {
      out += std::to_string(x);
      out += ' ';
      out += std::to_string(w);
      out += ' ';
      out += std::to_string(am(static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(w)));
      out += '\n';
    }
  io::write_text(path, out);
}

AmLut parse_lut_text(const std::string& text, std::string name, double cost) {
  std::vector<std::uint16_t> table(kLutEntries);
  std::vector<bool> filled(kLutEntries, false);
  std::size_t line_no = 0;
  std::size_t count = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    long long x = -1, w = -1, v = -1;
    char extra = 0;
    if (std::sscanf(line.c_str(), "%lld %lld %lld %c", &x, &w, &v, &extra) != 3)
      throw FormatError("expected \"x w product\"", line_no);
    if (x < 0 || x > 255 || w < 0 || w > 255) throw FormatError("operand outside [0, 255]", line_no);
    if (v < 0 || v > static_cast<long long>(kMaxProduct))
      throw FormatError("product " + std::to_string(v) + " overflows 16-bit range", line_no);
    const auto idx = static_cast<std::size_t>(x * kOperandCodes + w);
    if (filled[idx]) throw FormatError("duplicate entry for pair", line_no);
    filled[idx] = true;
    table[idx] = static_cast<std::uint16_t>(v);
    ++count;
  }
  if (count != kLutEntries)
    throw FormatError("expected 65536 entries, found " + std::to_string(count), line_no);
  return AmLut(std::move(name), std::move(table), cost, {Family::Imported, 0, 0, Compensation::None});
}

AmLut load_lut_text(const std::filesystem::path& path, double cost) {
  return parse_lut_text(io::read_text(path), path.stem().string(), cost);
}

std::vector<AmLut> load_library(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".amx" || ext == ".txt")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<AmLut> lib;
  lib.reserve(files.size());
  for (const auto& f : files) lib.push_back(load_lut(f));
  std::sort(lib.begin(), lib.end(), [](const AmLut& a, const AmLut& b) { return a.name() < b.name(); });
  return lib;
}

void save_library(const std::vector<AmLut>& library, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& am : library) save_lut(am, dir / (am.name() + ".amx"));
}

}  // namespace amx
