#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amx/amlib.hpp"
#include "amx/analysis.hpp"
#include "amx/datakit.hpp"
#include "amx/metrics.hpp"
#include "amx/qsim/quant_model.hpp"

namespace amx {

// Simulated accuracy of every library AM, keyed by table hash so results can
// be reused after renames or library growth.
struct AccuracyRow {
  std::string am;
  std::uint64_t lut_hash = 0;
  double accuracy = 0.0;
};

struct AccuracyTable {
  double baseline = 0.0;  // exact integer model, no AM
  std::vector<AccuracyRow> rows;

  const AccuracyRow* find(const std::string& am) const;
  const AccuracyRow* find_hash(std::uint64_t hash) const;
};

struct SimulationTiming {
  std::size_t simulated = 0;      // AMs actually simulated (cache misses)
  double seconds_per_am = 0.0;
};

// Simulates every AM not already in `cache` (matched by table hash). The
// cache must come from the same model and dataset.
AccuracyTable simulate_library(const qsim::QuantModel& model, std::span<const AmLut> library, const Dataset& dataset,
                               int jobs = 1, const AccuracyTable* cache = nullptr, SimulationTiming* timing = nullptr);

// CSV: "am,lut_hash,accuracy"; the baseline is the row named "(baseline)".
void save_accuracies(const AccuracyTable& t, const std::filesystem::path& path);
AccuracyTable load_accuracies(const std::filesystem::path& path);

// AME plus uniform-operand metrics for every AM that has an accuracy, in
// library order. `ame_seconds_per_am` receives the mean time of error matrix
// plus AME for one AM.
std::vector<SamplePoint> build_study(std::span<const AmLut> library, const RealMatrix& arch_total,
                                     const AccuracyTable& accuracies, double* ame_seconds_per_am = nullptr);

// Applies `am,cost` overrides by AM name.
std::vector<AmLut> apply_costs(std::vector<AmLut> library, const std::filesystem::path& costs_csv);

struct PipelineConfig {
  std::filesystem::path output = "amx-out";
  std::filesystem::path luts;   // empty: generate the built-in library
  std::filesystem::path costs;  // empty: generator heuristics
  SyntheticOptions dataset;     // count unused; see train/test counts
  std::uint32_t train_count = 2000;
  std::uint32_t test_count = 500;
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double min_accuracy = 0.9;
  std::uint32_t calibration_count = 500;
  std::uint32_t alpha_count = 200;
  std::vector<double> typical_targets{0.03, 0.05, 0.08};
  double cap = 0.30;
  int iterations = 2;
  std::uint64_t seed = 1;
  int jobs = 1;
};

// INI file with [paths], [dataset], [train], [profile], [select] and [run]
// sections; unknown keys raise ConfigError. Missing keys keep defaults.
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_text(const PipelineConfig& cfg);

struct StageStatus {
  std::string name;
  bool ran = false;
  double seconds = 0.0;
  std::string input_hash;
};

struct PipelineResult {
  std::vector<StageStatus> stages;
  double simulation_seconds_per_am = 0.0;
  double ame_seconds_per_am = 0.0;
  std::filesystem::path manifest;
};

using LogSink = std::function<void(const std::string&)>;

// Runs data, library, train, quantize, simulate, profile, alpha, arch, study,
// fit, select and validate. A stage is skipped when its input hash matches
// the recorded one, its outputs still hash as recorded, and no upstream stage
// ran. A failing stage aborts with StageError naming it.
PipelineResult run_pipeline(const PipelineConfig& cfg, const LogSink& log = {});

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : std::runtime_error("stage '" + stage + "' failed: " + cause), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace amx
