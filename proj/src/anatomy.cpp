#include "cuffbench/anatomy.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "cuffbench/errors.hpp"

namespace cuffbench {

double Fascicle::equivalent_radius_um() const { return std::sqrt(area_um2 / std::numbers::pi); }

bool Fascicle::contains(Point2 p) const {
  if (contour_um.size() >= 3) {
    // Even-odd ray cast; points on an edge count as outside.
    bool inside = false;
    const std::size_t n = contour_um.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Point2 a = contour_um[i];
      const Point2 b = contour_um[j];
      const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
      const bool on_segment = cross == 0.0 && std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
                              std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
      if (on_segment) return false;
      if ((a.y > p.y) != (b.y > p.y)) {
        const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
        if (p.x < x_cross) inside = !inside;
      }
    }
    return inside;
  }
  return std::hypot(p.x - centroid_um.x, p.y - centroid_um.y) < equivalent_radius_um();
}

const Fascicle* FascicleSection::find(const std::string& id) const {
  for (const auto& f : fascicles) {
    if (f.id == id) return &f;
  }
  return nullptr;
}

void FascicleSection::validate() const {
  std::set<std::string> ids;
  std::set<std::pair<double, double>> centroids;
  for (const auto& f : fascicles) {
    if (f.id.empty()) throw DomainError("fascicle with empty id");
    if (!ids.insert(f.id).second) throw DomainError("duplicate fascicle id " + f.id);
    if (!(f.area_um2 > 0.0)) throw DomainError("fascicle " + f.id + " has non-positive area");
    if (f.motor_fiber_count && !(*f.motor_fiber_count >= 0.0)) {
      throw DomainError("fascicle " + f.id + " has a negative motor fiber count");
    }
    if (!centroids.insert({f.centroid_um.x, f.centroid_um.y}).second) {
      throw DomainError("fascicle " + f.id + " shares its centroid with another fascicle");
    }
  }
}

void NerveModel::validate() const {
  cross_section.validate();
  cuff.validate();
  if (!(conductivity_s_per_m > 0.0)) throw DomainError("conductivity must be positive");
  const std::set<MuscleId> known(muscles.begin(), muscles.end());
  if (known.size() != muscles.size()) throw DomainError("duplicate muscle in nerve model");
  for (const auto& [fid, weights] : fascicle_muscle_map) {
    if (cross_section.find(fid) == nullptr) throw DomainError("mapped fascicle " + fid + " does not exist");
    for (const auto& mw : weights) {
      if (!known.contains(mw.muscle)) throw DomainError("fascicle " + fid + " maps to unknown muscle " + mw.muscle);
      if (!(mw.weight >= 0.0)) throw DomainError("negative muscle weight on fascicle " + fid);
    }
  }
  for (const auto& [fid, list] : fibers) {
    const Fascicle* f = cross_section.find(fid);
    if (f == nullptr) throw DomainError("fibers reference missing fascicle " + fid);
    for (const auto& fiber : list) {
      if (!(fiber.threshold_v > 0.0)) throw DomainError("non-positive fiber threshold in " + fid);
      if (!f->contains(fiber.position_um)) throw DomainError("fiber outside fascicle " + fid);
    }
  }
}

}  // namespace cuffbench
