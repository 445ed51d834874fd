#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amx/amlib.hpp"
#include "amx/datakit.hpp"
#include "amx/qsim/infer.hpp"

namespace amx {

// Operand statistics and propagation data of one convolution node.
struct LayerProfile {
  int node = -1;
  std::string name;
  bool approximate = false;
  std::vector<double> p;  // pmf of input-activation codes over every multiplier tap
  std::vector<double> f;  // pmf of weight codes
  int n_per_filter = 0;
  double scale = 1.0;      // s_x * s_w: one accumulator unit in real terms
  double bn_factor = 1.0;  // mean gamma / sqrt(var + eps) of a following batch norm
  std::optional<double> alpha;
  std::size_t samples = 0, maps = 0, height = 0, width = 0;  // S, M, H, W
};

// Profiles every Conv2D node of the exact model (1x1 and other exact
// convolutions included, so they can carry an alpha).
std::vector<LayerProfile> profile_distributions(const qsim::QuantModel& model, const Dataset& calibration, int jobs = 1);

enum class ErrorMode { Full, Intrinsic };
// Positive: average only where the exact network's feature is positive. For a
// convolution the mask is taken after the first ReLU reached through batch
// norm / add nodes; for other nodes it is the node's own exact output.
enum class FeatureMask { Positive, All };

// Mean output error (approximate minus exact, real units) of each listed
// node. Intrinsic mode evaluates the node on exact inputs. Throws
// EstimationError when a mask selects no features.
std::vector<double> measure_node_errors(const qsim::QuantModel& model, const AmLut& am, const Dataset& data,
                                        std::span<const int> nodes, ErrorMode mode, FeatureMask mask = FeatureMask::Positive,
                                        int jobs = 1);
double measure_layer_error(const qsim::QuantModel& model, const AmLut& am, const Dataset& data, int node, ErrorMode mode,
                           FeatureMask mask = FeatureMask::Positive, int jobs = 1);

struct TypicalAm {
  AmLut am;
  double degradation = 0.0;  // baseline accuracy minus accuracy with this AM
};

struct AlphaOptions {
  double min_degradation = 0.02;
  double max_degradation = 0.10;
  double max_abs_alpha = 10.0;
  double eps_div = 1e-9;
  int jobs = 1;
};

struct AlphaSample {
  std::string am;
  double full = 0, intrinsic = 0, upstream = 0;
  std::optional<double> alpha;
  std::string note;  // why the sample was rejected, empty when kept
};

struct LayerAlpha {
  int node = -1;
  std::string name;
  std::optional<double> alpha;
  std::vector<AlphaSample> samples;  // AM-name order
};

struct TypicalRecord {
  std::string am;
  double degradation = 0.0;
  bool admitted = false;  // inside the degradation band
};

struct AlphaReport {
  std::vector<TypicalRecord> typical;  // AM-name order
  std::vector<LayerAlpha> layers;
};

// Picks, for each target degradation, the library AM closest to it among
// those inside [opts.min_degradation, opts.max_degradation]. Duplicates are
// dropped. `accuracies` is parallel to `library`.
std::vector<TypicalAm> select_typical_ams(std::span<const AmLut> library, std::span<const double> accuracies,
                                          double baseline, std::span<const double> targets, const AlphaOptions& opts = {});

// alpha = (mu(e_t, full) - mu(e_t, intrinsic)) / mu(e_in, full), averaged
// over admitted AMs. Throws EstimationError if no AM yields a valid sample.
double estimate_alpha(const qsim::QuantModel& model, std::span<const TypicalAm> typical, const Dataset& data, int node,
                      const AlphaOptions& opts = {}, LayerAlpha* trail = nullptr);

// Alphas of every Conv2D node whose input can carry an approximation error.
AlphaReport estimate_alphas(const qsim::QuantModel& model, std::span<const TypicalAm> typical, const Dataset& data,
                            const AlphaOptions& opts = {}, const qsim::WarningSink& warn = {});

// Copies report alphas into matching profiles (by node id).
void apply_alphas(std::vector<LayerProfile>& profiles, const AlphaReport& report);

void save_profiles(const std::vector<LayerProfile>& profiles, const std::filesystem::path& path);
std::vector<LayerProfile> load_profiles(const std::filesystem::path& path);
void save_alpha_report(const AlphaReport& report, const std::filesystem::path& path);
AlphaReport load_alpha_report(const std::filesystem::path& path);

}  // namespace amx
