#include "cuffbench/histology.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <tuple>

#include "cuffbench/errors.hpp"
#include "cuffbench/io.hpp"

namespace cuffbench {

FascicleSection load_section(const std::filesystem::path& path) { return read_section_file(path); }

namespace {

double centroid_distance(const Fascicle& a, const Fascicle& b) {
  return std::hypot(a.centroid_um.x - b.centroid_um.x, a.centroid_um.y - b.centroid_um.y);
}

bool area_within(double area, double reference, double tolerance) {
  return std::abs(area - reference) <= tolerance * reference;
}

}  // namespace

SectionCorrespondence match_fascicles(const FascicleSection& a, const FascicleSection& b,
                                      const MatchOptions& options) {
  if (!(options.radius_um > 0.0)) throw DomainError("matching radius must be positive");
  const std::size_t na = a.fascicles.size();
  const std::size_t nb = b.fascicles.size();
  std::vector<bool> used_a(na, false);
  std::vector<bool> used_b(nb, false);
  SectionCorrespondence out;

  // Candidates of each A fascicle, nearest first.
  std::vector<std::vector<std::pair<double, std::size_t>>> candidates(na);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const double d = centroid_distance(a.fascicles[i], b.fascicles[j]);
      if (d <= options.radius_um) candidates[i].emplace_back(d, j);
    }
    std::sort(candidates[i].begin(), candidates[i].end());
  }

  for (std::size_t i = 0; i < na; ++i) {
    std::vector<std::pair<double, std::size_t>> free;
    for (const auto& c : candidates[i]) {
      if (!used_b[c.second]) free.push_back(c);
    }
    if (free.size() < 2) continue;
    const double parent_area = a.fascicles[i].area_um2;
    if (area_within(b.fascicles[free.front().second].area_um2, parent_area, options.split_area_tolerance)) {
      continue;
    }
    std::optional<std::tuple<double, std::size_t, std::size_t>> best;
    for (std::size_t p = 0; p < free.size(); ++p) {
      for (std::size_t q = p + 1; q < free.size(); ++q) {
        const auto& fp = b.fascicles[free[p].second];
        const auto& fq = b.fascicles[free[q].second];
        if (!area_within(fp.area_um2 + fq.area_um2, parent_area, options.split_area_tolerance)) continue;
        const double cost = free[p].first + free[q].first;
        if (!best || cost < std::get<0>(*best)) best = std::make_tuple(cost, free[p].second, free[q].second);
      }
    }
    if (!best) continue;
    auto [cost, j1, j2] = *best;
    used_a[i] = true;
    used_b[j1] = used_b[j2] = true;
    if (j2 < j1) std::swap(j1, j2);
    out.splits.push_back({a.fascicles[i].id, {b.fascicles[j1].id, b.fascicles[j2].id}});
  }

  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < na; ++i) {
    if (used_a[i]) continue;
    for (const auto& [d, j] : candidates[i]) {
      if (!used_b[j]) pairs.emplace_back(d, i, j);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [d, i, j] : pairs) {
    if (used_a[i] || used_b[j]) continue;
    used_a[i] = used_b[j] = true;
    out.matches.emplace_back(a.fascicles[i].id, b.fascicles[j].id);
  }
  std::sort(out.matches.begin(), out.matches.end());

  for (std::size_t i = 0; i < na; ++i) {
    if (!used_a[i]) out.unmatched_a.push_back(a.fascicles[i].id);
  }
  for (std::size_t j = 0; j < nb; ++j) {
    if (!used_b[j]) out.unmatched_b.push_back(b.fascicles[j].id);
  }
  return out;
}

MotorFiberStats motor_fiber_stats(const FascicleSection& section) {
  MotorFiberStats stats;
  for (const auto& f : section.fascicles) {
    if (!f.motor_fiber_count) return stats;
  }
  stats.available = true;
  for (const auto& f : section.fascicles) {
    const double count = *f.motor_fiber_count;
    stats.ranking.push_back({f.id, count, f.area_um2, count / f.area_um2});
    stats.total_fibers += count;
  }
  std::sort(stats.ranking.begin(), stats.ranking.end(), [](const auto& x, const auto& y) {
    if (x.density_per_um2 != y.density_per_um2) return x.density_per_um2 > y.density_per_um2;
    return x.id < y.id;
  });
  if (!stats.ranking.empty()) stats.max_density_per_um2 = stats.ranking.front().density_per_um2;

  const std::size_t n = stats.ranking.size();
  double mean = 0.0;
  for (const auto& r : stats.ranking) mean += r.density_per_um2;
  mean /= static_cast<double>(std::max<std::size_t>(n, 1));
  if (n >= 2 && mean > 0.0) {
    double abs_diff = 0.0;
    for (const auto& x : stats.ranking) {
      for (const auto& y : stats.ranking) abs_diff += std::abs(x.density_per_um2 - y.density_per_um2);
    }
    const double dn = static_cast<double>(n);
    const double gini = abs_diff / (2.0 * dn * dn * mean);
    stats.concentration_index = std::clamp(gini * dn / (dn - 1.0), 0.0, 1.0);
  }
  return stats;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Point2 sample_inside(const Fascicle& f, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (f.contour_um.size() >= 3) {
    double x0 = f.contour_um.front().x, x1 = x0, y0 = f.contour_um.front().y, y1 = y0;
    for (const auto& p : f.contour_um) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    for (;;) {
      const Point2 p{x0 + (x1 - x0) * unit(rng), y0 + (y1 - y0) * unit(rng)};
      if (f.contains(p)) return p;
    }
  }
  const double radius = f.equivalent_radius_um();
  for (;;) {
    const double r = radius * std::sqrt(unit(rng));
    const double theta = 2.0 * std::numbers::pi * unit(rng);
    const Point2 p{f.centroid_um.x + r * std::cos(theta), f.centroid_um.y + r * std::sin(theta)};
    if (f.contains(p)) return p;
  }
}

}  // namespace

NerveModel section_to_nerve_model(const FascicleSection& section,
                                  const std::map<std::string, std::vector<MuscleWeight>>& muscle_assignment,
                                  const FiberParams& fiber_params, std::uint64_t seed,
                                  const ModelAssembly& assembly) {
  section.validate();
  if (!(fiber_params.fibers_per_count >= 0.0)) throw DomainError("fibers_per_count must be >= 0");
  if (!(fiber_params.threshold_median_v > 0.0)) throw DomainError("threshold median must be positive");
  for (const auto& [fid, weights] : muscle_assignment) {
    if (section.find(fid) == nullptr) throw DomainError("assignment references missing fascicle " + fid);
  }

  NerveModel model;
  model.cross_section = section;
  model.cuff = assembly.cuff;
  model.conductivity_s_per_m = assembly.conductivity_s_per_m;
  model.fascicle_muscle_map = muscle_assignment;
  model.rng_seed = seed;

  model.muscles = assembly.muscles;
  std::set<MuscleId> seen(model.muscles.begin(), model.muscles.end());
  for (const auto& f : section.fascicles) {
    auto it = muscle_assignment.find(f.id);
    if (it == muscle_assignment.end()) continue;
    for (const auto& mw : it->second) {
      if (seen.insert(mw.muscle).second) model.muscles.push_back(mw.muscle);
    }
  }

  std::lognormal_distribution<double> threshold(std::log(fiber_params.threshold_median_v),
                                                fiber_params.threshold_log_sigma);
  for (const auto& f : section.fascicles) {
    const double count = f.motor_fiber_count.value_or(0.0);
    const auto n = static_cast<std::size_t>(std::llround(count * fiber_params.fibers_per_count));
    if (n == 0) continue;
    std::mt19937_64 rng(seed ^ fnv1a(f.id));
    threshold.reset();
    auto& list = model.fibers[f.id];
    list.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 p = sample_inside(f, rng);
      list.push_back({p, threshold(rng)});
    }
  }
  model.validate();
  return model;
}

}  // namespace cuffbench
