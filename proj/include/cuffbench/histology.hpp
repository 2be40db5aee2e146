#pragma once

// Fascicle counting, section-to-section correspondence with split
// detection, motor-fiber statistics, and conversion to a simulator model.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cuffbench/anatomy.hpp"

namespace cuffbench {

/// Reads and validates a section file. Throws ParseError with a location.
FascicleSection load_section(const std::filesystem::path& path);

struct FascicleSplit {
  std::string parent;                   // id in section A
  std::array<std::string, 2> children;  // ids in section B
};

struct SectionCorrespondence {
  std::vector<std::pair<std::string, std::string>> matches;
  std::vector<FascicleSplit> splits;
  std::vector<std::string> unmatched_a;
  std::vector<std::string> unmatched_b;
};

struct MatchOptions {
  double radius_um = 150.0;
  double split_area_tolerance = 0.30;
};

/// Two passes over centroids within `radius_um`:
///  1. splits: an A fascicle whose nearest candidate alone is off by more
///     than the area tolerance, but which has two candidates whose combined
///     area is within tolerance (closest pair first), is recorded as a split;
///  2. greedy 1:1 matching of the remaining fascicles by ascending centroid
///     distance (ties by A then B order).
/// Whatever is left is unmatched. Throws DomainError if radius <= 0.
SectionCorrespondence match_fascicles(const FascicleSection& a, const FascicleSection& b,
                                      const MatchOptions& options = {});

struct FascicleDensity {
  std::string id;
  double motor_fiber_count = 0.0;
  double area_um2 = 0.0;
  double density_per_um2 = 0.0;
};

struct MotorFiberStats {
  bool available = false;  // false when any fascicle lacks a fiber count
  std::vector<FascicleDensity> ranking;  // descending density, ties by id
  double total_fibers = 0.0;
  double max_density_per_um2 = 0.0;
  /// Gini coefficient of per-fascicle densities scaled by n/(n-1): 0 for
  /// uniform density, 1 when a single fascicle holds every fiber.
  double concentration_index = 0.0;
};

MotorFiberStats motor_fiber_stats(const FascicleSection& section);

struct FiberParams {
  double fibers_per_count = 1.0;       // sampled fibers per counted motor fiber
  double threshold_median_v = 0.05;    // log-normal median
  double threshold_log_sigma = 0.25;   // log-normal shape
};

struct ModelAssembly {
  CuffLayout cuff;
  double conductivity_s_per_m = 0.3;
  std::vector<MuscleId> muscles;  // optional explicit channel order
};

/// Samples round(count * fibers_per_count) fibers uniformly inside each
/// assigned fascicle with log-normal thresholds. Deterministic in `seed`.
/// Throws DomainError when the assignment names a missing fascicle.
NerveModel section_to_nerve_model(const FascicleSection& section,
                                  const std::map<std::string, std::vector<MuscleWeight>>& muscle_assignment,
                                  const FiberParams& fiber_params, std::uint64_t seed,
                                  const ModelAssembly& assembly = {});

}  // namespace cuffbench
