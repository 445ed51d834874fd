#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amx/metrics.hpp"

namespace amx {

enum class Metric { Ame, Er, Me, Mre, Med, Mred, Vare, Varre, Vared, Varred, Mse, Rmse, Wce, Wcre };

std::string metric_name(Metric m);
Metric metric_from_name(const std::string& name);
// Metrics whose sign carries meaning and is split at zero: AME, ME, MRE.
bool is_signed(Metric m);
const std::vector<Metric>& all_metrics();

// One library AM: its error metrics (uniform operands) plus simulated accuracy.
struct SamplePoint {
  std::string am;
  double cost = 1.0;
  double ame = 0.0;
  MetricsReport metrics;
  double accuracy = 0.0;
  double degradation = 0.0;  // baseline accuracy - accuracy

  double value(Metric m) const;
};

// Sample Pearson correlation. Throws ParameterError for mismatched or short
// (< 3) inputs and EstimationError when either side has zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct BranchStats {
  std::size_t count = 0;
  std::optional<double> pcc;  // absent with < 3 samples
};

struct CorrelationResult {
  Metric metric = Metric::Ame;
  bool split = false;
  BranchStats positive;  // or the whole set when not split
  BranchStats negative;
};

// Keeps samples with degradation <= cap, splits signed metrics at zero (zero
// joins the positive branch) and correlates each branch with accuracy.
CorrelationResult correlation_study(std::span<const SamplePoint> samples, Metric metric, double cap = 0.30);

struct Prediction {
  double accuracy = 0.0;
  bool clamped = false;  // query fell outside the training range
};

// accuracy ~ c2 m^2 + c1 m + c0 on [lo, hi].
struct QuadModel {
  double c2 = 0, c1 = 0, c0 = 0;
  double lo = 0, hi = 0;
  bool linear = false;  // rank-deficient data forced a lower-degree fit

  Prediction predict(double m) const;
};

struct QuadFit {
  Metric metric = Metric::Ame;
  bool split = false;
  std::optional<QuadModel> positive;  // whole-set model when not split
  std::optional<QuadModel> negative;

  // Uses the branch of m's sign, or the other branch when it is missing.
  Prediction predict(double m) const;
};

// Least-squares fit by normal equations over (metric, accuracy) points.
// Throws ParameterError when there are no points.
QuadModel fit_points(std::span<const double> ms, std::span<const double> acc, std::string* warning = nullptr);

// Fits each branch holding >= 3 capped samples. Throws EstimationError when
// no branch can be fitted.
QuadFit fit_quadratic(std::span<const SamplePoint> samples, Metric metric, double cap = 0.30,
                      std::vector<std::string>* warnings = nullptr);

// Mean absolute percentage error, in percent.
double mape(std::span<const double> predicted, std::span<const double> actual);

struct CrossValidation {
  double mape = 0.0;
  std::vector<double> fold_mape;
};

// k-fold MAPE over capped samples; sample i (AM-name order) goes to fold i mod k.
CrossValidation cross_validated_mape(std::span<const SamplePoint> samples, Metric metric, int folds = 5, double cap = 0.30);

// CSV columns: am, cost, ame, every Table-style metric, accuracy, degradation.
void save_study(std::span<const SamplePoint> samples, const std::filesystem::path& path);
std::vector<SamplePoint> load_study(const std::filesystem::path& path);
std::string study_csv(std::span<const SamplePoint> samples);

void save_fit(const QuadFit& fit, const std::filesystem::path& path);
QuadFit load_fit(const std::filesystem::path& path);

}  // namespace amx
