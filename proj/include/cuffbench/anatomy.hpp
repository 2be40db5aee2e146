#pragma once

// Fascicle geometry shared by the histology analysis and the nerve simulator.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cuffbench/electrode.hpp"
#include "cuffbench/recruitment.hpp"

namespace cuffbench {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

/// A fascicle is modelled as the circle of equal area around its centroid,
/// unless an explicit contour polygon is given.
struct Fascicle {
  std::string id;
  Point2 centroid_um;
  double area_um2 = 0.0;
  std::optional<double> motor_fiber_count;
  std::vector<Point2> contour_um;  // optional; closed implicitly

  double equivalent_radius_um() const;
  /// Strict interior test against the contour, or the equivalent circle.
  bool contains(Point2 p) const;

  bool operator==(const Fascicle&) const = default;
};

struct FascicleSection {
  double z_um = 0.0;
  std::vector<Fascicle> fascicles;

  const Fascicle* find(const std::string& id) const;
  /// Throws DomainError on duplicate or empty ids, non-positive areas,
  /// negative fiber counts or coincident centroids.
  void validate() const;

  bool operator==(const FascicleSection&) const = default;
};

struct MuscleWeight {
  MuscleId muscle;
  double weight = 1.0;

  bool operator==(const MuscleWeight&) const = default;
};

struct Fiber {
  Point2 position_um;
  double threshold_v = 0.0;

  bool operator==(const Fiber&) const = default;
};

struct NerveModel {
  FascicleSection cross_section;
  CuffLayout cuff;
  double conductivity_s_per_m = 0.3;
  std::vector<MuscleId> muscles;  // channel order
  std::map<std::string, std::vector<MuscleWeight>> fascicle_muscle_map;
  std::map<std::string, std::vector<Fiber>> fibers;  // by fascicle id
  std::uint64_t rng_seed = 0;

  /// Throws DomainError when a mapped fascicle or muscle is unknown, a fiber
  /// lies outside its fascicle, a threshold is not positive, or sigma <= 0.
  void validate() const;
};

}  // namespace cuffbench
