#pragma once

// Selectivity index, polar recruitment maps and exhaustive search of the
// configuration x intensity grid.

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cuffbench/nerve_sim.hpp"
#include "cuffbench/recruitment.hpp"

namespace cuffbench {

inline constexpr double kDefaultActivationEpsilon = 1e-6;

/// r_target / sum(r). nullopt when the total recruitment is <= epsilon
/// (nothing activated). Throws DomainError when `target` is absent.
std::optional<double> selectivity_index(const RecruitmentMap& recruitments, const MuscleId& target,
                                        double epsilon = kDefaultActivationEpsilon);

/// Polar radius for a normalized recruitment: 0 on the circumference maps to
/// radius 1, full recruitment to the centre.
inline double polar_radius(double recruitment) { return 1.0 - recruitment; }
inline double recruitment_from_radius(double radius) { return 1.0 - radius; }

struct PolarSpoke {
  int str_index = 1;
  double angle_deg = 0.0;
  RecruitmentMap recruitment;  // normalized, not inverted
};

struct PolarSlice {
  double amplitude_ua = 0.0;
  std::vector<PolarSpoke> spokes;  // ascending STR index; only covered configs
};

struct PolarMap {
  NormalizationScope scope = NormalizationScope::PerMuscle;
  std::vector<PolarSlice> slices;  // ascending amplitude
};

/// Ring curves are ignored. Intensities are the exact-value intersection
/// across the STR configurations present. Throws DomainError when there are
/// no STR curves or no common intensity.
PolarMap build_polar_map(std::span<const RecruitmentCurve> curves);

struct GridCell {
  StimConfig config;
  double amplitude_ua = 0.0;
  RecruitmentMap recruitment;
};

/// Normalized recruitment of every (config, amplitude) covered by the curves.
std::vector<GridCell> recruitment_grid(std::span<const RecruitmentCurve> curves);
/// Simulated recruitment on the full configs x amplitudes grid.
std::vector<GridCell> recruitment_grid(const NerveModel& nerve, std::span<const StimConfig> configs,
                                       std::span<const double> amplitudes_ua);

struct SelectivityConstraints {
  double min_target_recruitment = 0.0;
  double max_offtarget_recruitment = 1.0;
  double epsilon = kDefaultActivationEpsilon;
};

struct SelectivityRecord {
  StimConfig config;
  double amplitude_ua = 0.0;
  MuscleId target;
  double selectivity_index = 0.0;
  double target_recruitment = 0.0;
};

/// Every feasible cell, ranked by selectivity index (descending), then lower
/// amplitude, then lower configuration ordinal. Empty when nothing is feasible.
std::vector<SelectivityRecord> find_selective_points(std::span<const GridCell> grid, const MuscleId& target,
                                                     const SelectivityConstraints& constraints = {});
std::vector<SelectivityRecord> find_selective_points(std::span<const RecruitmentCurve> curves,
                                                     const MuscleId& target,
                                                     const SelectivityConstraints& constraints = {});
std::vector<SelectivityRecord> find_selective_points(const NerveModel& nerve,
                                                     std::span<const StimConfig> configs,
                                                     std::span<const double> amplitudes_ua,
                                                     const MuscleId& target,
                                                     const SelectivityConstraints& constraints = {});

}  // namespace cuffbench
