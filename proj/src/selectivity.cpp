#include "cuffbench/selectivity.hpp"

#include <algorithm>
#include <iterator>
#include <set>

#include "cuffbench/errors.hpp"

namespace cuffbench {

std::optional<double> selectivity_index(const RecruitmentMap& recruitments, const MuscleId& target,
                                        double epsilon) {
  auto it = recruitments.find(target);
  if (it == recruitments.end()) throw DomainError("target muscle " + target + " has no recruitment value");
  double total = 0.0;
  for (const auto& [m, r] : recruitments) total += r;
  if (!(total > epsilon)) return std::nullopt;
  return it->second / total;
}

PolarMap build_polar_map(std::span<const RecruitmentCurve> curves) {
  // str index -> amplitude -> muscle -> normalized
  std::map<int, std::map<double, RecruitmentMap>> table;
  std::optional<NormalizationScope> scope;
  for (const auto& c : curves) {
    if (c.config.kind != StimConfig::Kind::Str) continue;
    scope = scope.value_or(c.scope);
    auto& per_amp = table[c.config.str_index];
    for (const auto& p : c.points) per_amp[p.amplitude_ua][c.muscle] = p.normalized;
  }
  if (table.empty()) throw DomainError("polar map needs at least one STR configuration");

  std::set<double> common;
  bool first = true;
  for (const auto& [k, per_amp] : table) {
    std::set<double> amps;
    for (const auto& [a, m] : per_amp) amps.insert(a);
    if (first) {
      common = std::move(amps);
      first = false;
    } else {
      std::set<double> kept;
      std::set_intersection(common.begin(), common.end(), amps.begin(), amps.end(),
                            std::inserter(kept, kept.begin()));
      common = std::move(kept);
    }
  }
  if (common.empty()) throw DomainError("no intensity common to every STR configuration");

  PolarMap map;
  map.scope = scope.value_or(NormalizationScope::PerMuscle);
  for (double amp : common) {
    PolarSlice slice;
    slice.amplitude_ua = amp;
    for (const auto& [k, per_amp] : table) {
      slice.spokes.push_back({k, 60.0 * (k - 1), per_amp.at(amp)});
    }
    map.slices.push_back(std::move(slice));
  }
  return map;
}

std::vector<GridCell> recruitment_grid(std::span<const RecruitmentCurve> curves) {
  std::map<std::pair<int, double>, GridCell> cells;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      auto& cell = cells[{c.config.ordinal(), p.amplitude_ua}];
      cell.config = c.config;
      cell.amplitude_ua = p.amplitude_ua;
      cell.recruitment[c.muscle] = p.normalized;
    }
  }
  std::vector<GridCell> out;
  for (auto& [key, cell] : cells) out.push_back(std::move(cell));
  return out;
}

std::vector<GridCell> recruitment_grid(const NerveModel& nerve, std::span<const StimConfig> configs,
                                       std::span<const double> amplitudes_ua) {
  std::vector<GridCell> out;
  for (const auto& config : configs) {
    for (double amp : amplitudes_ua) out.push_back({config, amp, simulate_recruitment(nerve, config, amp)});
  }
  return out;
}

std::vector<SelectivityRecord> find_selective_points(std::span<const GridCell> grid, const MuscleId& target,
                                                     const SelectivityConstraints& constraints) {
  std::vector<SelectivityRecord> feasible;
  for (const auto& cell : grid) {
    auto it = cell.recruitment.find(target);
    if (it == cell.recruitment.end()) continue;
    const auto si = selectivity_index(cell.recruitment, target, constraints.epsilon);
    if (!si) continue;
    if (it->second < constraints.min_target_recruitment) continue;
    bool off_ok = true;
    for (const auto& [m, r] : cell.recruitment) {
      if (m != target && r > constraints.max_offtarget_recruitment) off_ok = false;
    }
    if (!off_ok) continue;
    feasible.push_back({cell.config, cell.amplitude_ua, target, *si, it->second});
  }
  std::stable_sort(feasible.begin(), feasible.end(), [](const auto& x, const auto& y) {
    if (x.selectivity_index != y.selectivity_index) return x.selectivity_index > y.selectivity_index;
    if (x.amplitude_ua != y.amplitude_ua) return x.amplitude_ua < y.amplitude_ua;
    return x.config.ordinal() < y.config.ordinal();
  });
  return feasible;
}

std::vector<SelectivityRecord> find_selective_points(std::span<const RecruitmentCurve> curves,
                                                     const MuscleId& target,
                                                     const SelectivityConstraints& constraints) {
  const auto grid = recruitment_grid(curves);
  return find_selective_points(grid, target, constraints);
}

std::vector<SelectivityRecord> find_selective_points(const NerveModel& nerve,
                                                     std::span<const StimConfig> configs,
                                                     std::span<const double> amplitudes_ua,
                                                     const MuscleId& target,
                                                     const SelectivityConstraints& constraints) {
  const auto grid = recruitment_grid(nerve, configs, amplitudes_ua);
  return find_selective_points(grid, target, constraints);
}

}  // namespace cuffbench
