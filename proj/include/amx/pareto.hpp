#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amx/amlib.hpp"
#include "amx/datakit.hpp"
#include "amx/qsim/quant_model.hpp"

namespace amx {

// One design point: lower cost and lower objective are both better.
struct ParetoItem {
  std::string name;
  double cost = 1.0;
  double objective = 0.0;  // |AME| for the search
  std::optional<double> accuracy;

  bool operator==(const ParetoItem&) const = default;
};

bool dominates(const ParetoItem& a, const ParetoItem& b);

// Non-dominated items, ordered by (cost, objective, name). Items tied in both
// coordinates are all kept. Throws ParameterError on empty input.
std::vector<ParetoItem> pareto_front(std::span<const ParetoItem> items);

struct SearchResult {
  std::vector<std::vector<ParetoItem>> fronts;  // one per iteration actually run
  std::vector<ParetoItem> selected;             // union of the fronts
  bool exhausted = false;                       // the library ran out before n iterations
};

// Extracts n successive fronts, removing each before the next.
SearchResult iterative_search(std::span<const ParetoItem> library, int n);

struct CoverageReport {
  std::size_t library_size = 0;
  std::size_t pseudo_size = 0;
  std::vector<std::string> true_front;  // (cost, 1 - accuracy) front within the cap
  std::vector<std::string> contained;
  std::vector<std::string> missed;
  double coverage = 1.0;    // contained / true front size
  double proportion = 0.0;  // pseudo size / library size
  std::size_t simulations_saved = 0;
};

// `library` items must carry accuracies.
CoverageReport coverage_report(std::span<const std::string> pseudo, std::span<const ParetoItem> library,
                               double baseline_accuracy, double cap = 0.30);

// Simulates every library AM and checks the pseudo set against the true front.
CoverageReport validate_front(std::span<const std::string> pseudo, std::span<const AmLut> library,
                              const qsim::QuantModel& model, const Dataset& dataset, double cap = 0.30, int jobs = 1);

// "am,cost" per line (header optional on load).
std::map<std::string, double> load_costs(const std::filesystem::path& path);
void save_costs(std::span<const AmLut> library, const std::filesystem::path& path);

// Columns: iteration, am, cost, objective.
void save_front(const SearchResult& r, const std::filesystem::path& path);
std::vector<std::string> load_front_names(const std::filesystem::path& path);

void save_coverage(const CoverageReport& r, const std::filesystem::path& path);

}  // namespace amx
