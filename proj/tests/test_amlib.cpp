#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "amx/amlib.hpp"
#include "amx/binary_io.hpp"
#include "amx/errors.hpp"
#include "amx/metrics.hpp"

using namespace amx;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto d = fs::temp_directory_path() / ("amx_amlib_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

std::string text_table(const AmLut& am, std::size_t entries) {
  std::ostringstream os;
  std::size_t n = 0;
  for (int x = 0; x < 256 && n < entries; ++x)
    for (int w = 0; w < 256 && n < entries; ++w, ++n) os << x << ' ' << w << ' ' << am(x, w) << '\n';
  return os.str();
}

}  // namespace

TEST_CASE("exact products") {
  const auto am = make_exact();
  CHECK(am(0, 200) == 0);
  CHECK(am(255, 255) == 65025);
  CHECK(am(3, 3) == 9);
  for (int x = 0; x < 256; ++x)
    for (int w = 0; w < 256; ++w) REQUIRE(am(x, w) == x * w);
}

TEST_CASE("truncation clears the low product bits") {
  const auto k0 = make_truncated(0);
  const auto exact = make_exact();
  CHECK(std::equal(k0.table().begin(), k0.table().end(), exact.table().begin()));
  CHECK(make_truncated(2)(3, 3) == 8);
  CHECK_THROWS_AS(make_truncated(-1), ParameterError);
  CHECK_THROWS_AS(make_truncated(16), ParameterError);

  // ME under uniform operands equals -mean((x*w) mod 4).
  double acc = 0;
  for (int x = 0; x < 256; ++x)
    for (int w = 0; w < 256; ++w) acc += (x * w) % 4;
  const auto m = compute_metrics(error_matrix(make_truncated(2)), JointDistribution::uniform());
  CHECK(m.me == doctest::Approx(-acc / 65536.0).epsilon(1e-12));
}

TEST_CASE("perforation removes partial-product rows") {
  const auto none = make_perforated({});
  const auto exact = make_exact();
  CHECK(std::equal(none.table().begin(), none.table().end(), exact.table().begin()));
  CHECK(make_perforated({0})(255, 255) == 64770);
  CHECK_THROWS_AS(make_perforated({8}), ParameterError);
  CHECK_THROWS_AS(make_perforated({-1}), ParameterError);

  // Rows {0,1} drop the w bits 0 and 1: error = -x * (w & 3).
  double me = 0;
  for (int x = 0; x < 256; ++x)
    for (int w = 0; w < 256; ++w) me -= x * (w & 3);
  const auto m = compute_metrics(error_matrix(make_perforated({0, 1})), JointDistribution::uniform());
  CHECK(m.me == doctest::Approx(me / 65536.0).epsilon(1e-12));
}

TEST_CASE("compensation adds a constant to non-zero products only") {
  const auto plain = make_truncated(6);
  const auto comp = make_truncated(6, Compensation::Constant);
  CHECK(comp(0, 77) == 0);
  CHECK(comp(77, 0) == 0);
  const int shift = comp(1, 1) - plain(1, 1);
  CHECK(shift > 0);
  for (int x = 1; x < 256; x += 17)
    for (int w = 1; w < 256; w += 13) CHECK(comp(x, w) == std::min<int>(plain(x, w) + shift, 65535));
}

TEST_CASE("mitchell") {
  const auto am = make_mitchell();
  CHECK(am(4, 8) == 32);
  CHECK(am(3, 3) == 8);
  CHECK(am(0, 17) == 0);
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b) CHECK(am(1 << a, 1 << b) == (1 << (a + b)));
  // Mitchell never overestimates.
  for (int x = 0; x < 256; ++x)
    for (int w = 0; w < 256; ++w) REQUIRE(am(x, w) <= x * w);
}

TEST_CASE("drum") {
  const auto k8 = make_drum(8);
  const auto exact = make_exact();
  CHECK(std::equal(k8.table().begin(), k8.table().end(), exact.table().begin()));
  for (int k = 3; k <= 8; ++k) CHECK(make_drum(k)(0, 99) == 0);
  CHECK_THROWS_AS(make_drum(2), ParameterError);
  CHECK_THROWS_AS(make_drum(9), ParameterError);

  // Independent reduction: keep the k leading bits, set the lowest kept bit.
  auto reduce = [](int v, int k) {
    int lead = 7;
    while (lead >= 0 && !((v >> lead) & 1)) --lead;
    if (lead < k) return v;
    const int low = lead - k + 1;
    return (v & ~((1 << low) - 1)) | (1 << low);
  };
  double mred = 0;
  int n = 0;
  for (int x = 0; x < 256; ++x)
    for (int w = 0; w < 256; ++w) {
      if (x * w == 0) continue;
      mred += std::abs(reduce(x, 4) * reduce(w, 4) - x * w) / double(x * w);
      ++n;
    }
  const auto m = compute_metrics(error_matrix(make_drum(4)), JointDistribution::uniform());
  CHECK(m.mred == doctest::Approx(mred / n).epsilon(1e-12));
}

TEST_CASE("generators are deterministic and the library is distinct") {
  CHECK(make_truncated(5) == make_truncated(5));
  CHECK(make_perforated({1, 3}, Compensation::Constant) == make_perforated({1, 3}, Compensation::Constant));
  const auto lib = generate_library();
  CHECK(lib.size() >= 200);
  CHECK(lib.front().name() == "exact");
  std::set<std::string> names;
  std::set<std::uint64_t> hashes;
  for (const auto& am : lib) {
    names.insert(am.name());
    hashes.insert(am.table_hash());
    CHECK(am.cost() > 0);
  }
  CHECK(names.size() == lib.size());
  CHECK(hashes.size() == lib.size());
}

TEST_CASE("binary LUT round trip and format errors") {
  const auto dir = temp_dir();
  for (const auto& am : {make_exact(), make_truncated(3, Compensation::Constant), make_mitchell(), make_drum(5)}) {
    save_lut(am, dir / "a.amx");
    CHECK(load_lut(dir / "a.amx") == am);
  }
  auto bytes = encode_lut(make_exact());
  CHECK(decode_lut(bytes) == make_exact());

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_lut(bad_magic), FormatError);

  auto garbage = bytes;
  garbage.push_back(0);
  CHECK_THROWS_AS(decode_lut(garbage), FormatError);

  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + 4 + 2 * 65535);
  CHECK_THROWS_AS(decode_lut(truncated), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("text LUT round trip and format errors") {
  const auto am = make_truncated(4);
  const auto text = text_table(am, kLutEntries);
  const auto back = parse_lut_text(text, "t");
  CHECK(std::equal(back.table().begin(), back.table().end(), am.table().begin()));
  CHECK(back.family().family == Family::Imported);

  try {
    parse_lut_text(text_table(am, 65535), "t");
    FAIL("short table accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("65536") != std::string::npos);
  }

  std::string overflow = text;
  overflow.replace(0, overflow.find('\n'), "0 0 70000");
  try {
    parse_lut_text(overflow, "t");
    FAIL("overflow accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 1);
  }

  CHECK_THROWS_AS(parse_lut_text(text + "1 2 3\n", "t"), FormatError);
  CHECK_THROWS_AS(parse_lut_text(text + "junk\n", "t"), FormatError);
}

TEST_CASE("library directory round trip") {
  const auto dir = temp_dir() / "lib";
  std::vector<AmLut> lib{make_exact(), make_truncated(7), make_drum(3)};
  save_library(lib, dir);
  const auto back = load_library(dir);
  REQUIRE(back.size() == 3);
  std::set<std::string> names;
  for (const auto& am : back) names.insert(am.name());
  CHECK(names == std::set<std::string>{"exact", "trunc_k7", "drum_k3"});
  fs::remove_all(dir.parent_path());
}
