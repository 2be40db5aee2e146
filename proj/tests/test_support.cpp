#include "test_support.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>

#include <unistd.h>

#include "cuffbench/histology.hpp"

namespace cbtest {

using namespace cuffbench;

std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(CUFFBENCH_FIXTURES_DIR) / name; }

std::filesystem::path data_file(const std::string& name) { return std::filesystem::path(CUFFBENCH_DATA_DIR) / name; }

std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("cuffbench_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

namespace {

Fascicle circle(const std::string& id, double angle_deg, double radius_um, double fasc_radius_um, double count) {
  const double a = angle_deg * std::numbers::pi / 180.0;
  Fascicle f;
  f.id = id;
  f.centroid_um = {radius_um * std::cos(a), radius_um * std::sin(a)};
  f.area_um2 = std::numbers::pi * fasc_radius_um * fasc_radius_um;
  f.motor_fiber_count = count;
  return f;
}

}  // namespace

NerveModel random_nerve_model(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_fasc(2, 8);
  std::uniform_int_distribution<int> n_musc(1, 4);
  std::uniform_real_distribution<double> angle(0.0, 360.0);
  std::uniform_real_distribution<double> radial(0.0, 1150.0);
  std::uniform_real_distribution<double> size(40.0, 200.0);
  std::uniform_int_distribution<int> count(5, 40);
  const char* names[] = {"FCR", "FDS", "PT", "ECR"};

  FascicleSection section;
  const int nf = n_fasc(rng);
  const int nm = n_musc(rng);
  std::map<std::string, std::vector<MuscleWeight>> assignment;
  std::uniform_int_distribution<int> pick(0, nm - 1);
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  for (int i = 0; i < nf; ++i) {
    const std::string id = "R" + std::to_string(i);
    section.fascicles.push_back(circle(id, angle(rng), radial(rng), size(rng), count(rng)));
    assignment[id].push_back({names[pick(rng)], weight(rng)});
    if (nm > 1 && (rng() & 1u)) assignment[id].push_back({names[pick(rng)], weight(rng)});
  }
  std::lognormal_distribution<double> median(std::log(0.05), 0.5);
  FiberParams params;
  params.threshold_median_v = median(rng);
  params.threshold_log_sigma = std::uniform_real_distribution<double>(0.05, 0.6)(rng);
  ModelAssembly assembly;
  for (int m = 0; m < nm; ++m) assembly.muscles.push_back(names[m]);
  return section_to_nerve_model(section, assignment, params, rng(), assembly);
}

NerveModel targeted_model(int k, std::uint64_t seed) {
  const double cathode = 60.0 * (k - 1);
  FascicleSection section;
  section.fascicles.push_back(circle("T", cathode, 1000.0, 150.0, 60));
  section.fascicles.push_back(circle("O1", cathode + 150.0, 900.0, 150.0, 60));
  section.fascicles.push_back(circle("O2", cathode + 180.0, 900.0, 150.0, 60));
  section.fascicles.push_back(circle("O3", cathode + 210.0, 900.0, 150.0, 60));
  std::map<std::string, std::vector<MuscleWeight>> assignment{
      {"T", {{"FCR", 1.0}}}, {"O1", {{"FDS", 1.0}}}, {"O2", {{"PT", 1.0}}}, {"O3", {{"ECR", 1.0}}}};
  ModelAssembly assembly;
  assembly.muscles = {"FCR", "FDS", "PT", "ECR"};
  return section_to_nerve_model(section, assignment, FiberParams{}, seed, assembly);
}

NerveModel plateau_model() {
  FascicleSection section;
  section.fascicles.push_back(circle("A", 60.0, 1300.0, 60.0, 80));
  section.fascicles.push_back(circle("B", 240.0, 1000.0, 100.0, 40));
  std::map<std::string, std::vector<MuscleWeight>> assignment{{"A", {{"FCR", 1.0}}}, {"B", {{"ECR", 1.0}}}};
  ModelAssembly assembly;
  assembly.muscles = {"FCR", "ECR"};
  FiberParams params;
  params.threshold_median_v = 0.2;
  params.threshold_log_sigma = 0.1;
  return section_to_nerve_model(section, assignment, params, 42, assembly);
}

Clock counting_clock() {
  auto n = std::make_shared<int>(0);
  return [n] {
    char buf[16];
    std::snprintf(buf, sizeof buf, "T%06d", ++*n);
    return std::string(buf);
  };
}

RampSpec short_ramp() {
  RampSpec r;
  r.step_duration_s = 0.6;
  return r;
}

// Independent recruitment oracle: contact coordinates and potentials are
// recomputed here from the cuff dimensions.
std::map<MuscleId, double> oracle_recruitment(const NerveModel& nerve, const StimConfig& config, double current) {
  const double radius = nerve.cuff.inner_diameter_um / 2.0;
  std::map<MuscleId, double> active, total;
  for (const auto& [fid, weights] : nerve.fascicle_muscle_map) {
    const auto it = nerve.fibers.find(fid);
    if (it == nerve.fibers.end()) continue;
    double on = 0.0;
    for (const auto& f : it->second) {
      double v = 0.0;
      for (const auto& [id, w] : config.pattern.weights()) {
        double cx = 0, cy = 0, cz = 0;
        if (id.kind == ContactId::Kind::Central) {
          const double a = (id.index - 1) * std::numbers::pi / 3.0;
          cx = radius * std::cos(a);
          cy = radius * std::sin(a);
        } else {
          cz = id.kind == ContactId::Kind::RingDistal ? nerve.cuff.distal_offset_um : nerve.cuff.proximal_offset_um;
        }
        const double r = std::sqrt((f.position_um.x - cx) * (f.position_um.x - cx) +
                                   (f.position_um.y - cy) * (f.position_um.y - cy) + cz * cz);
        v += static_cast<double>(w.num()) / static_cast<double>(w.den()) * current /
             (4.0 * std::numbers::pi * nerve.conductivity_s_per_m * r);
      }
      if (-v >= f.threshold_v) on += 1.0;
    }
    for (const auto& mw : weights) {
      active[mw.muscle] += mw.weight * on;
      total[mw.muscle] += mw.weight * static_cast<double>(it->second.size());
    }
  }
  std::map<MuscleId, double> out;
  for (const auto& m : nerve.muscles) out[m] = total[m] > 0.0 ? active[m] / total[m] : 0.0;
  return out;
}


// Brute-force scan: every feasible cell, then repeated selection of the
// best remaining one (highest SI, lowest amplitude, lowest config ordinal).
std::vector<Candidate> brute_force_ranking(const std::vector<GridCell>& grid, const MuscleId& target,
                                           const SelectivityConstraints& c) {
  std::vector<Candidate> pool;
  for (const auto& cell : grid) {
    double sum = 0.0, off = 0.0;
    for (const auto& [m, r] : cell.recruitment) {
      sum += r;
      if (m != target) off = std::max(off, r);
    }
    if (!cell.recruitment.contains(target) || sum <= c.epsilon) continue;
    const double t = cell.recruitment.at(target);
    if (t < c.min_target_recruitment || off > c.max_offtarget_recruitment) continue;
    pool.push_back({cell.config.ordinal(), cell.amplitude_ua, t / sum, t});
  }
  std::vector<Candidate> ranked;
  while (!pool.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const auto& x = pool[i];
      const auto& b = pool[best];
      if (x.si > b.si || (x.si == b.si && (x.amplitude < b.amplitude ||
                                            (x.amplitude == b.amplitude && x.ordinal < b.ordinal)))) {
        best = i;
      }
    }
    ranked.push_back(pool[best]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return ranked;
}

}  // namespace cbtest
