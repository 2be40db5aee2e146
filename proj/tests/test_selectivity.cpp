#include <catch_amalgamated.hpp>

#include <random>

#include "cuffbench/errors.hpp"
#include "cuffbench/selectivity.hpp"
#include "test_support.hpp"

using namespace cuffbench;

TEST_CASE("selectivity index", "[selectivity]") {
  const RecruitmentMap r{{"FCR", 0.6}, {"FDS", 0.2}, {"PT", 0.2}};
  CHECK(*selectivity_index(r, "FCR") == Catch::Approx(0.6));
  CHECK(*selectivity_index(r, "PT") == Catch::Approx(0.2));
  const RecruitmentMap zero{{"FCR", 0.0}, {"FDS", 0.0}};
  CHECK_FALSE(selectivity_index(zero, "FCR"));
  const RecruitmentMap only{{"FCR", 1.0}, {"FDS", 0.0}};
  CHECK(*selectivity_index(only, "FCR") == 1.0);
  CHECK_THROWS_AS(selectivity_index(r, "ECR"), DomainError);
}

TEST_CASE("polar radius convention", "[selectivity]") {
  CHECK(polar_radius(1.0) == 0.0);
  CHECK(polar_radius(0.0) == 1.0);
  CHECK(recruitment_from_radius(polar_radius(0.37)) == Catch::Approx(0.37));
}

namespace {

RecruitmentCurve curve(const StimConfig& config, const MuscleId& m, std::vector<std::pair<double, double>> pts) {
  RecruitmentCurve c;
  c.config = config;
  c.muscle = m;
  for (auto [a, v] : pts) c.points.push_back({a, v, v});
  return c;
}

}  // namespace

TEST_CASE("polar map keeps intensities common to every STR configuration", "[selectivity]") {
  std::vector<RecruitmentCurve> curves{
      curve(StimConfig::ring(), "FCR", {{150, 0.9}}),
      curve(StimConfig::str(1), "FCR", {{150, 0.1}, {159, 0.2}, {168, 0.3}}),
      curve(StimConfig::str(4), "FCR", {{150, 0.5}, {159, 0.6}}),
  };
  const auto map = build_polar_map(curves);
  REQUIRE(map.slices.size() == 2);
  CHECK(map.slices[0].amplitude_ua == 150.0);
  REQUIRE(map.slices[0].spokes.size() == 2);
  CHECK(map.slices[0].spokes[0].str_index == 1);
  CHECK(map.slices[0].spokes[1].angle_deg == 180.0);
  CHECK(map.slices[1].spokes[1].recruitment.at("FCR") == 0.6);

  std::vector<RecruitmentCurve> ring_only{curve(StimConfig::ring(), "FCR", {{150, 0.9}})};
  CHECK_THROWS_AS(build_polar_map(ring_only), DomainError);
  std::vector<RecruitmentCurve> disjoint{curve(StimConfig::str(1), "FCR", {{150, 0.1}}),
                                         curve(StimConfig::str(2), "FCR", {{159, 0.1}})};
  CHECK_THROWS_AS(build_polar_map(disjoint), DomainError);
}

TEST_CASE("ranking agrees with a brute-force scan on random grids", "[selectivity]") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> level(0, 4);  // coarse levels force ties
  const std::vector<MuscleId> muscles{"FCR", "FDS", "PT"};
  for (int t = 0; t < 300; ++t) {
    std::vector<GridCell> grid;
    for (const auto& config : all_configs()) {
      for (double amp = 150.0; amp <= 200.0; amp += 9.0) {
        GridCell cell{config, amp, {}};
        for (const auto& m : muscles) cell.recruitment[m] = level(rng) / 4.0;
        grid.push_back(cell);
      }
    }
    std::shuffle(grid.begin(), grid.end(), rng);
    const SelectivityConstraints c{t % 3 == 0 ? 0.25 : 0.0, t % 5 == 0 ? 0.5 : 1.0, 1e-6};
    const auto got = find_selective_points(grid, "FCR", c);
    const auto want = cbtest::brute_force_ranking(grid, "FCR", c);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      REQUIRE(got[i].config.ordinal() == want[i].ordinal);
      REQUIRE(got[i].amplitude_ua == want[i].amplitude);
      REQUIRE(got[i].selectivity_index == Catch::Approx(want[i].si));
      REQUIRE(got[i].target_recruitment == want[i].target);
    }
  }
}

TEST_CASE("targeted nerve is most selective under its own STR", "[selectivity]") {
  const std::vector<double> amps{150, 159, 168, 177, 186, 195, 204, 213, 222, 231, 240, 249};
  const auto configs = all_configs();
  for (int k = 1; k <= 6; ++k) {
    const auto nerve = cbtest::targeted_model(k);
    const auto ranked = find_selective_points(nerve, configs, amps, "FCR", SelectivityConstraints{0.1, 1.0});
    REQUIRE_FALSE(ranked.empty());
    CHECK(ranked.front().config == StimConfig::str(k));
  }
}

TEST_CASE("grid from curves uses normalized values", "[selectivity]") {
  std::vector<RecruitmentCurve> curves{curve(StimConfig::str(2), "FCR", {{150, 0.8}}),
                                       curve(StimConfig::str(2), "FDS", {{150, 0.2}})};
  const auto grid = recruitment_grid(curves);
  REQUIRE(grid.size() == 1);
  CHECK(grid[0].recruitment.at("FCR") == 0.8);
  const auto ranked = find_selective_points(std::span<const RecruitmentCurve>(curves), "FCR");
  REQUIRE(ranked.size() == 1);
  CHECK(ranked[0].selectivity_index == Catch::Approx(0.8));
}
