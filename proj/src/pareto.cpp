#include "amx/pareto.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "amx/binary_io.hpp"
#include "amx/errors.hpp"
#include "amx/qsim/infer.hpp"

namespace amx {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  return f;
}

double parse_number(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError("non-numeric value '" + s + "'", line);
}

}  // namespace

bool dominates(const ParetoItem& a, const ParetoItem& b) {
  return a.cost <= b.cost && a.objective <= b.objective && (a.cost < b.cost || a.objective < b.objective);
}

std::vector<ParetoItem> pareto_front(std::span<const ParetoItem> items) {
  if (items.empty()) throw ParameterError("pareto front of an empty set");
  std::vector<ParetoItem> sorted(items.begin(), items.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const ParetoItem& a, const ParetoItem& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.objective != b.objective) return a.objective < b.objective;
    return a.name < b.name;
  });
  std::vector<ParetoItem> front;
  double best = INFINITY;
  for (std::size_t i = 0; i < sorted.size();) {
    // Within one cost group only the minimum objective can survive, and only
    // if it beats everything cheaper.
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].cost == sorted[i].cost) ++j;
    const double group_min = sorted[i].objective;
    if (group_min < best) {
      for (std::size_t k = i; k < j && sorted[k].objective == group_min; ++k) front.push_back(sorted[k]);
      best = group_min;
    }
    i = j;
  }
  return front;
}

SearchResult iterative_search(std::span<const ParetoItem> library, int n) {
  if (n < 1) throw ParameterError("iteration count must be at least 1");
  if (library.empty()) throw ParameterError("library must not be empty");
  SearchResult r;
  std::vector<ParetoItem> remaining(library.begin(), library.end());
  for (int it = 0; it < n; ++it) {
    if (remaining.empty()) {
      r.exhausted = true;
      break;
    }
    auto front = pareto_front(remaining);
    // Remove exactly one library entry per front item.
    std::vector<ParetoItem> pending = front, rest;
    for (auto& item : remaining) {
      const auto hit = std::find(pending.begin(), pending.end(), item);
      if (hit != pending.end()) {
        pending.erase(hit);
        continue;
      }
      rest.push_back(std::move(item));
    }
    remaining = std::move(rest);
    r.selected.insert(r.selected.end(), front.begin(), front.end());
    r.fronts.push_back(std::move(front));
  }
  return r;
}

CoverageReport coverage_report(std::span<const std::string> pseudo, std::span<const ParetoItem> library,
                               double baseline_accuracy, double cap) {
  CoverageReport r;
  r.library_size = library.size();
  const std::set<std::string> chosen(pseudo.begin(), pseudo.end());
  r.pseudo_size = chosen.size();
  std::vector<ParetoItem> eligible;
  for (const auto& item : library) {
    if (!item.accuracy) throw ParameterError("library item '" + item.name + "' has no simulated accuracy");
    if (baseline_accuracy - *item.accuracy <= cap) eligible.push_back({item.name, item.cost, 1.0 - *item.accuracy, item.accuracy});
  }
  if (!eligible.empty())
    for (const auto& t : pareto_front(eligible)) {
      r.true_front.push_back(t.name);
      (chosen.count(t.name) ? r.contained : r.missed).push_back(t.name);
    }
  r.coverage = r.true_front.empty() ? 1.0 : static_cast<double>(r.contained.size()) / static_cast<double>(r.true_front.size());
  r.proportion = r.library_size ? static_cast<double>(r.pseudo_size) / static_cast<double>(r.library_size) : 0.0;
  r.simulations_saved = r.library_size - std::min(r.library_size, r.pseudo_size);
  return r;
}

CoverageReport validate_front(std::span<const std::string> pseudo, std::span<const AmLut> library,
                              const qsim::QuantModel& model, const Dataset& dataset, double cap, int jobs) {
  if (pseudo.empty()) throw ParameterError("pseudo-Pareto set must not be empty");
  const double baseline = qsim::evaluate_accuracy(model, nullptr, dataset, jobs);
  std::vector<ParetoItem> items;
  for (const auto& am : library)
    items.push_back({am.name(), am.cost(), 0.0, qsim::evaluate_accuracy(model, &am, dataset, jobs)});
  return coverage_report(pseudo, items, baseline, cap);
}

std::map<std::string, double> load_costs(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::map<std::string, double> costs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line == "am,cost")) continue;
    const auto f = split_csv(line);
    if (f.size() != 2) throw FormatError("cost rows need two columns", lineno);
    const double c = parse_number(f[1], lineno);
    if (!(c > 0)) throw FormatError("cost must be positive", lineno);
    costs[f[0]] = c;
  }
  return costs;
}

void save_costs(std::span<const AmLut> library, const std::filesystem::path& path) {
  std::string out = "am,cost\n";
  for (const auto& am : library) out += am.name() + "," + fmt(am.cost()) + "\n";
  io::write_text(path, out);
}

void save_front(const SearchResult& r, const std::filesystem::path& path) {
  std::string out = "iteration,am,cost,objective\n";
  for (std::size_t i = 0; i < r.fronts.size(); ++i)
    for (const auto& item : r.fronts[i])
      out += std::to_string(i + 1) + "," + item.name + "," + fmt(item.cost) + "," + fmt(item.objective) + "\n";
  io::write_text(path, out);
}

std::vector<std::string> load_front_names(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "iteration,am,cost,objective") throw FormatError("front CSV header mismatch", 1);
  std::vector<std::string> names;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 4) throw FormatError("front rows need four columns", lineno);
    names.push_back(f[1]);
  }
  return names;
}

void save_coverage(const CoverageReport& r, const std::filesystem::path& path) {
  const nlohmann::json j = {{"library_size", r.library_size},
                            {"pseudo_size", r.pseudo_size},
                            {"true_front", r.true_front},
                            {"contained", r.contained},
                            {"missed", r.missed},
                            {"coverage", r.coverage},
                            {"proportion", r.proportion},
                            {"simulations_saved", r.simulations_saved}};
  io::write_text(path, j.dump(2) + "\n");
}

}  // namespace amx
