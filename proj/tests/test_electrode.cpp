#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "cuffbench/electrode.hpp"
#include "cuffbench/errors.hpp"

using namespace cuffbench;

namespace {

// Expected STR weights written out from the definition, in thirds:
// cathode -3/3, opposite central +1/3, each ring +1/3.
std::map<std::string, Fraction> expected_str(int k) {
  const int opposite = (k + 2) % 6 + 1;
  return {{"Central" + std::to_string(k), Fraction(-3, 3)},
          {"Central" + std::to_string(opposite), Fraction(1, 3)},
          {"RingDistal", Fraction(1, 3)},
          {"RingProximal", Fraction(1, 3)}};
}

std::map<std::string, Fraction> named(const CurrentPattern& p) {
  std::map<std::string, Fraction> out;
  for (const auto& [id, w] : p.weights()) out[id.name()] = w;
  return out;
}

}  // namespace

TEST_CASE("fractions stay reduced and compare exactly", "[electrode]") {
  CHECK(Fraction(2, 6) == Fraction(1, 3));
  CHECK(Fraction(1, -3) == Fraction(-1, 3));
  CHECK(Fraction(1, 3) + Fraction(1, 6) == Fraction(1, 2));
  CHECK(Fraction(1, 3) + Fraction(-1, 3) == Fraction(0));
  CHECK(Fraction(-1) < Fraction(1, 3));
  CHECK(Fraction(1, 3).str() == "1/3");
  CHECK(Fraction(-1).str() == "-1");
  CHECK_THROWS_AS(Fraction(1, 0), DomainError);
}

TEST_CASE("contact ids", "[electrode]") {
  CHECK(ContactId::central(3).name() == "Central3");
  CHECK(ContactId::ring_distal().name() == "RingDistal");
  CHECK_THROWS_AS(ContactId::central(0), DomainError);
  CHECK_THROWS_AS(ContactId::central(7), DomainError);
  for (const auto& id : all_contacts()) CHECK(ContactId::parse(id.name()) == id);
  CHECK_FALSE(ContactId::parse("Central9"));
  CHECK_FALSE(ContactId::parse("Ring"));
  CHECK(all_contacts().size() == 8);
}

TEST_CASE("opposite central contact", "[electrode]") {
  const int expected[] = {0, 4, 5, 6, 1, 2, 3};
  for (int k = 1; k <= 6; ++k) {
    CHECK(opposite_central(k) == expected[k]);
    CHECK(opposite_central(opposite_central(k)) == k);
  }
  CHECK_THROWS_AS(opposite_central(0), DomainError);
}

TEST_CASE("STR patterns match the definition", "[electrode]") {
  for (int k = 1; k <= 6; ++k) {
    CAPTURE(k);
    const auto p = make_str_pattern(k);
    CHECK(named(p) == expected_str(k));
    CHECK(p.sum() == Fraction(0));
  }
  const auto str2 = make_str_pattern(2);
  CHECK(str2.weight(ContactId::central(5)) == Fraction(1, 3));
  CHECK(str2.weight(ContactId::central(2)) == Fraction(-1));
  CHECK(str2.weight(ContactId::central(1)) == Fraction(0));
  CHECK_THROWS_AS(make_str_pattern(0), DomainError);
  CHECK_THROWS_AS(make_str_pattern(7), DomainError);
}

TEST_CASE("ring pattern", "[electrode]") {
  const auto p = make_ring_pattern();
  for (int k = 1; k <= 6; ++k) CHECK(p.weight(ContactId::central(k)) == Fraction(-1, 6));
  CHECK(p.weight(ContactId::ring_distal()) == Fraction(1, 2));
  CHECK(p.weight(ContactId::ring_proximal()) == Fraction(1, 2));
  CHECK(p.sum() == Fraction(0));
  for (int s = 0; s < 6; ++s) CHECK(p.rotated(s) == p);
}

TEST_CASE("STR rotation equivariance", "[electrode]") {
  for (int k = 1; k <= 6; ++k) {
    for (int s = -7; s <= 7; ++s) {
      const int target = ((k - 1 + s) % 6 + 6) % 6 + 1;
      CHECK(make_str_pattern(k).rotated(s) == make_str_pattern(target));
    }
  }
}

TEST_CASE("configurations", "[electrode]") {
  const auto configs = all_configs();
  REQUIRE(configs.size() == 7);
  CHECK(configs[0].name() == "RING");
  for (int k = 1; k <= 6; ++k) {
    CHECK(configs[k].name() == "STR" + std::to_string(k));
    CHECK(configs[k].ordinal() == k);
    CHECK(*configs[k].angle_deg() == 60.0 * (k - 1));
    CHECK(StimConfig::from_name(configs[k].name()) == configs[k]);
  }
  CHECK_FALSE(configs[0].angle_deg());
  CHECK(StimConfig::from_name("RING") == configs[0]);
  CHECK_THROWS_AS(StimConfig::from_name("STR7"), DomainError);
  CHECK_THROWS_AS(StimConfig::from_name("str2"), DomainError);
}

TEST_CASE("pattern table lists non-zero weights", "[electrode]") {
  const auto rows = pattern_table(make_str_pattern(2));
  REQUIRE(rows.size() == 4);
  std::int64_t num = 0;
  for (const auto& r : rows) {
    CHECK(r.denominator > 0);
    num += r.numerator * (3 / r.denominator);
  }
  CHECK(num == 0);
}

TEST_CASE("contact geometry", "[electrode]") {
  const CuffLayout layout;
  for (int k = 1; k <= 6; ++k) {
    const auto p = contact_position(layout, ContactId::central(k));
    const double a = (k - 1) * std::numbers::pi / 3.0;
    CHECK(p.x == Catch::Approx(1500.0 * std::cos(a)).margin(1e-9));
    CHECK(p.y == Catch::Approx(1500.0 * std::sin(a)).margin(1e-9));
    CHECK(p.z == 0.0);
  }
  CHECK(contact_position(layout, ContactId::ring_distal()).z == 4000.0);
  CHECK(contact_position(layout, ContactId::ring_proximal()).z == -4000.0);

  CuffLayout bad = layout;
  bad.central_angles_deg[2] = 130.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = layout;
  bad.proximal_offset_um = -3000.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = layout;
  bad.inner_diameter_um = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  CHECK_NOTHROW(layout.validate());
}
