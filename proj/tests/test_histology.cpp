#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fstream>
#include <random>

#include "cuffbench/errors.hpp"
#include "cuffbench/histology.hpp"
#include "test_support.hpp"

using namespace cuffbench;

namespace {

Fascicle circ(std::string id, double x, double y, double r, std::optional<double> count = std::nullopt) {
  Fascicle f;
  f.id = std::move(id);
  f.centroid_um = {x, y};
  f.area_um2 = std::numbers::pi * r * r;
  f.motor_fiber_count = count;
  return f;
}

// Gini from the sorted-rank form, rescaled by n/(n-1).
double gini_oracle(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double weighted = 0.0, total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    weighted += static_cast<double>(i + 1) * x[i];
    total += x[i];
  }
  const double g = 2.0 * weighted / (n * total) - (n + 1.0) / n;
  return g * n / (n - 1.0);
}

}  // namespace

TEST_CASE("constructed 18/19 fixture yields one split and 17 matches", "[histology]") {
  const auto a = load_section(cbtest::fixture("section_a.json"));
  const auto b = load_section(cbtest::fixture("section_b.json"));
  REQUIRE(a.fascicles.size() == 18);
  REQUIRE(b.fascicles.size() == 19);
  const auto c = match_fascicles(a, b);
  REQUIRE(c.splits.size() == 1);
  CHECK(c.splits[0].parent == "F09");
  CHECK(c.splits[0].children == std::array<std::string, 2>{"F09a", "F09b"});
  CHECK(c.matches.size() == 17);
  for (const auto& [x, y] : c.matches) CHECK(x == y);
  CHECK(c.unmatched_a.empty());
  CHECK(c.unmatched_b.empty());
}

TEST_CASE("matching a section against itself is the identity", "[histology]") {
  const auto a = load_section(cbtest::fixture("section_a.json"));
  const auto c = match_fascicles(a, a);
  CHECK(c.splits.empty());
  REQUIRE(c.matches.size() == a.fascicles.size());
  for (const auto& [x, y] : c.matches) CHECK(x == y);
}

TEST_CASE("matching radius and tolerance", "[histology]") {
  FascicleSection a, b;
  a.fascicles = {circ("a1", 0, 0, 100), circ("a2", 600, 0, 100)};
  b.fascicles = {circ("b1", 120, 0, 100), circ("b2", 1000, 0, 100)};
  auto c = match_fascicles(a, b);
  REQUIRE(c.matches.size() == 1);
  CHECK(c.matches[0] == std::pair<std::string, std::string>{"a1", "b1"});
  CHECK(c.unmatched_a == std::vector<std::string>{"a2"});
  CHECK(c.unmatched_b == std::vector<std::string>{"b2"});

  c = match_fascicles(a, b, MatchOptions{100.0, 0.3});
  CHECK(c.matches.empty());
  CHECK_THROWS_AS(match_fascicles(a, b, MatchOptions{0.0, 0.3}), DomainError);
}

TEST_CASE("a lone shrunken fascicle is not a split", "[histology]") {
  FascicleSection a, b;
  a.fascicles = {circ("p", 0, 0, 100)};
  b.fascicles = {circ("c", 10, 0, 60)};
  const auto c = match_fascicles(a, b);
  CHECK(c.splits.empty());
  CHECK(c.matches.size() == 1);
}

TEST_CASE("split children must add up to the parent area", "[histology]") {
  FascicleSection a, b;
  a.fascicles = {circ("p", 0, 0, 100)};
  const double half = 100.0 / std::sqrt(2.0);
  b.fascicles = {circ("c1", -50, 0, half), circ("c2", 50, 0, half)};
  auto c = match_fascicles(a, b);
  REQUIRE(c.splits.size() == 1);
  CHECK(c.matches.empty());

  b.fascicles = {circ("c1", -50, 0, 30), circ("c2", 50, 0, 30)};
  c = match_fascicles(a, b);
  CHECK(c.splits.empty());
  CHECK(c.matches.size() == 1);
  CHECK(c.unmatched_b.size() == 1);
}

TEST_CASE("greedy matching prefers the closest pair", "[histology]") {
  FascicleSection a, b;
  a.fascicles = {circ("a1", 0, 0, 50), circ("a2", 100, 0, 50)};
  b.fascicles = {circ("b1", 95, 0, 50), circ("b2", -40, 0, 50)};
  const auto c = match_fascicles(a, b);
  REQUIRE(c.matches.size() == 2);
  CHECK(std::find(c.matches.begin(), c.matches.end(), std::pair<std::string, std::string>{"a2", "b1"}) !=
        c.matches.end());
  CHECK(std::find(c.matches.begin(), c.matches.end(), std::pair<std::string, std::string>{"a1", "b2"}) !=
        c.matches.end());
}

TEST_CASE("motor fiber statistics", "[histology]") {
  const auto a = load_section(cbtest::fixture("section_a.json"));
  const auto stats = motor_fiber_stats(a);
  REQUIRE(stats.available);
  REQUIRE(stats.ranking.size() == 18);
  std::vector<double> dens;
  double total = 0.0;
  for (const auto& f : a.fascicles) {
    dens.push_back(*f.motor_fiber_count / f.area_um2);
    total += *f.motor_fiber_count;
  }
  CHECK(stats.total_fibers == total);
  for (std::size_t i = 1; i < stats.ranking.size(); ++i) {
    CHECK(stats.ranking[i - 1].density_per_um2 >= stats.ranking[i].density_per_um2);
  }
  CHECK(stats.max_density_per_um2 == *std::max_element(dens.begin(), dens.end()));
  CHECK(stats.concentration_index == Catch::Approx(gini_oracle(dens)).margin(1e-12));
}

TEST_CASE("concentration index bounds", "[histology]") {
  FascicleSection uniform;
  uniform.fascicles = {circ("a", 0, 0, 100, 50), circ("b", 500, 0, 100, 50), circ("c", 0, 500, 100, 50)};
  CHECK(motor_fiber_stats(uniform).concentration_index == Catch::Approx(0.0).margin(1e-12));

  FascicleSection single = uniform;
  single.fascicles[1].motor_fiber_count = 0.0;
  single.fascicles[2].motor_fiber_count = 0.0;
  CHECK(motor_fiber_stats(single).concentration_index == Catch::Approx(1.0));

  FascicleSection missing = uniform;
  missing.fascicles[1].motor_fiber_count.reset();
  CHECK_FALSE(motor_fiber_stats(missing).available);
}

TEST_CASE("section to nerve model", "[histology]") {
  const auto a = load_section(cbtest::fixture("section_a.json"));
  std::map<std::string, std::vector<MuscleWeight>> assign{{"F01", {{"FCR", 1.0}}}, {"F05", {{"FDS", 0.5}, {"PT", 0.5}}}};
  const auto m1 = section_to_nerve_model(a, assign, FiberParams{}, 7);
  const auto m2 = section_to_nerve_model(a, assign, FiberParams{}, 7);
  const auto m3 = section_to_nerve_model(a, assign, FiberParams{}, 8);
  CHECK(m1.fibers == m2.fibers);
  CHECK_FALSE(m1.fibers == m3.fibers);
  CHECK(m1.muscles == std::vector<MuscleId>{"FCR", "FDS", "PT"});
  CHECK_NOTHROW(m1.validate());
  const auto* f01 = a.find("F01");
  REQUIRE(f01 != nullptr);
  CHECK(m1.fibers.at("F01").size() == static_cast<std::size_t>(std::llround(*f01->motor_fiber_count)));

  std::vector<double> th;
  for (const auto& [fid, list] : m1.fibers) {
    for (const auto& f : list) th.push_back(f.threshold_v);
  }
  std::sort(th.begin(), th.end());
  CHECK(th[th.size() / 2] == Catch::Approx(0.05).epsilon(0.1));

  std::map<std::string, std::vector<MuscleWeight>> bad{{"nope", {{"FCR", 1.0}}}};
  CHECK_THROWS_AS(section_to_nerve_model(a, bad, FiberParams{}, 1), DomainError);
}

TEST_CASE("section file errors carry a location", "[histology]") {
  const auto dir = cbtest::scratch_dir("histo");
  const auto path = dir / "bad.json";
  std::ofstream(path) << R"({"z_um": 0, "fascicles": [{"id": "a", "centroid_um": [0, 0], "area_um2": -5}]})";
  try {
    load_section(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.location() == "/fascicles/0/area_um2");
  }
}
