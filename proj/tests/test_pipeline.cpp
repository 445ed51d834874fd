#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "amx/analysis.hpp"
#include "amx/binary_io.hpp"
#include "amx/errors.hpp"
#include "amx/pipeline.hpp"

using namespace amx;
namespace fs = std::filesystem;

namespace {

const fs::path& root() {
  static const fs::path r = [] {
    auto p = fs::temp_directory_path() / ("amx_pipeline_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return r;
}

PipelineConfig small_config(const fs::path& out) {
  PipelineConfig c;
  c.output = out;
  c.train_count = 300;
  c.test_count = 80;
  c.epochs = 4;
  c.calibration_count = 100;
  c.alpha_count = 40;
  return c;
}

std::map<std::string, int> ran(const PipelineResult& r) {
  std::map<std::string, int> m;
  for (const auto& s : r.stages) m[s.name] = s.ran;
  return m;
}

// Every data file except run-specific timing records.
std::map<std::string, std::string> stable_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto name = fs::relative(e.path(), dir).generic_string();
    if (name == "manifest.json" || name == "timing.json") continue;
    const auto bytes = io::read_file(e.path());
    files[name] = std::string(bytes.begin(), bytes.end());
  }
  return files;
}

}  // namespace

TEST_CASE("config files") {
  const auto dir = root() / "cfg";
  fs::create_directories(dir);
  {
    std::ofstream(dir / "a.ini") << "[paths]\noutput = out\n[dataset]\nnoise = 12.5\ntest_count = 77\n"
                                    "[profile]\ntypical_targets = 0.04, 0.06\n[select]\niterations = 3\n";
  }
  const auto c = load_config(dir / "a.ini");
  CHECK(c.output == dir / "out");
  CHECK(c.dataset.noise == 12.5);
  CHECK(c.test_count == 77);
  CHECK(c.typical_targets == std::vector<double>{0.04, 0.06});
  CHECK(c.iterations == 3);
  CHECK(c.epochs == PipelineConfig{}.epochs);

  std::ofstream(dir / "b.ini") << config_text(c);
  const auto back = load_config(dir / "b.ini");
  CHECK(config_text(back) == config_text(c));

  std::ofstream(dir / "c.ini") << "[train]\nepoch = 3\n";
  CHECK_THROWS_AS(load_config(dir / "c.ini"), ConfigError);
  std::ofstream(dir / "d.ini") << "[select]\niterations = many\n";
  CHECK_THROWS_AS(load_config(dir / "d.ini"), ConfigError);
  std::ofstream(dir / "f.ini") << "[dataset]\ntest_count = -5\n";
  CHECK_THROWS_AS(load_config(dir / "f.ini"), ConfigError);
  std::ofstream(dir / "e.ini") << "[select]\niterations = 0\n";
  CHECK_THROWS_AS(load_config(dir / "e.ini"), ConfigError);
}

TEST_CASE("end-to-end run, caching and byte stability") {
  const auto out = root() / "run";
  const auto first = run_pipeline(small_config(out));
  for (const auto& [name, r] : ran(first)) CHECK_MESSAGE(r == 1, name);

  const auto study = load_study(out / "study.csv");
  CHECK(study.size() >= 200);
  CHECK(fs::exists(out / "arch.bin"));
  CHECK(fs::exists(out / "coverage.json"));
  const auto manifest = nlohmann::json::parse(io::read_text(first.manifest));
  CHECK(manifest.at("seed") == 1);
  CHECK(manifest.at("timing").contains("ame_to_simulation_ratio"));
  CHECK(first.ame_seconds_per_am > 0);
  CHECK(first.simulation_seconds_per_am > first.ame_seconds_per_am);
  const auto reference = stable_files(out);

  // Unchanged rerun: every stage is a cache hit and nothing is rewritten.
  const auto again = run_pipeline(small_config(out));
  for (const auto& [name, r] : ran(again)) CHECK_MESSAGE(r == 0, name);
  CHECK(stable_files(out) == reference);
  for (const auto& s : nlohmann::json::parse(io::read_text(again.manifest)).at("stages")) CHECK(s.at("status") == "cached");

  // Deleting the architecture matrix reruns it and everything downstream.
  fs::remove(out / "arch.bin");
  const auto partial = ran(run_pipeline(small_config(out)));
  for (const char* s : {"data", "library", "costs", "train", "quantize", "simulate", "profile", "alpha"}) CHECK_MESSAGE(partial.at(s) == 0, s);
  for (const char* s : {"arch", "study", "fit", "select", "validate"}) CHECK_MESSAGE(partial.at(s) == 1, s);
  CHECK(stable_files(out) == reference);

  // A selection-only change leaves the expensive stages cached.
  auto more = small_config(out);
  more.iterations = 3;
  const auto sel = ran(run_pipeline(more));
  CHECK(sel.at("simulate") == 0);
  CHECK(sel.at("select") == 1);

  // A fresh run elsewhere with the same seed reproduces every data file.
  const auto other = root() / "run2";
  run_pipeline(more);
  run_pipeline(small_config(out));
  run_pipeline(small_config(other));
  CHECK(stable_files(other) == stable_files(out));
}

TEST_CASE("a failing stage is named") {
  auto c = small_config(root() / "broken");
  c.luts = root() / "no_such_dir";
  try {
    run_pipeline(c);
    FAIL("missing LUT directory accepted");
  } catch (const StageError& e) {
    CHECK(e.stage() == "costs");
  }
  fs::remove_all(root());
}
