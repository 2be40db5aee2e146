#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "cuffbench/errors.hpp"
#include "cuffbench/nerve_sim.hpp"
#include "test_support.hpp"

using namespace cuffbench;

namespace {

NerveModel rotated_model(const NerveModel& nerve, int steps) {
  const double a = steps * std::numbers::pi / 3.0;
  const double c = std::cos(a), s = std::sin(a);
  auto rot = [&](Point2 p) { return Point2{c * p.x - s * p.y, s * p.x + c * p.y}; };
  NerveModel out = nerve;
  for (auto& f : out.cross_section.fascicles) f.centroid_um = rot(f.centroid_um);
  for (auto& [fid, list] : out.fibers) {
    for (auto& fib : list) fib.position_um = rot(fib.position_um);
  }
  return out;
}

}  // namespace

TEST_CASE("point-source potential", "[nerve_sim]") {
  const CuffLayout layout;
  const CurrentPattern cathode({{ContactId::central(1), Fraction(-1)}});
  // 500 um inward of Central1
  const double v = potential_at({1000.0, 0.0, 0.0}, cathode, 100.0, layout, 0.3);
  CHECK(v == Catch::Approx(-0.05305164769729845).epsilon(1e-12));

  const double k = 90.0 / (4.0 * std::numbers::pi * 0.3);
  const double centre = potential_at({0, 0, 0}, make_str_pattern(2), 90.0, layout, 0.3);
  CHECK(centre == Catch::Approx(k * (-1.0 / 1500 + (1.0 / 3) / 1500 + 2 * (1.0 / 3) / 4000)).epsilon(1e-12));
  // ring pattern is symmetric: the central plane at the axis sees -6/6/1500 + 1/4000
  const double ring = potential_at({0, 0, 0}, make_ring_pattern(), 90.0, layout, 0.3);
  CHECK(ring == Catch::Approx(k * (-1.0 / 1500 + 1.0 / 4000)).epsilon(1e-12));

  CHECK_THROWS_AS(potential_at({1500.0, 0.0, 0.0}, cathode, 1.0, layout, 0.3), DomainError);
  CHECK_THROWS_AS(potential_at({1499.5, 0.0, 0.0}, cathode, 1.0, layout, 0.3), DomainError);
  CHECK_NOTHROW(potential_at({1498.0, 0.0, 0.0}, cathode, 1.0, layout, 0.3));
  CHECK_THROWS_AS(potential_at({0, 0, 0}, cathode, 1.0, layout, 0.0), DomainError);
}

TEST_CASE("recruitment agrees with the independent oracle", "[nerve_sim]") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 20; ++t) {
    const NerveModel nerve = cbtest::random_nerve_model(rng);
    for (const auto& config : all_configs()) {
      for (double amp : {0.0, 50.0, 150.0, 249.0, 400.0}) {
        const auto got = simulate_recruitment(nerve, config, amp);
        const auto want = cbtest::oracle_recruitment(nerve, config, amp);
        for (const auto& m : nerve.muscles) REQUIRE(got.at(m) == Catch::Approx(want.at(m)).margin(1e-12));
      }
    }
  }
}

TEST_CASE("recruitment is monotone in current", "[nerve_sim]") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const NerveModel nerve = cbtest::random_nerve_model(rng);
    for (const auto& config : all_configs()) {
      std::map<MuscleId, double> prev;
      for (double amp = 0.0; amp <= 400.0; amp += 20.0) {
        const auto r = simulate_recruitment(nerve, config, amp);
        for (const auto& [m, v] : r) {
          REQUIRE(v >= 0.0);
          REQUIRE(v <= 1.0);
          REQUIRE(v >= prev[m]);
          prev[m] = v;
        }
      }
    }
  }
}

TEST_CASE("recruitment is equivariant under 60 degree rotation", "[nerve_sim]") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    const NerveModel nerve = cbtest::random_nerve_model(rng);
    const NerveModel turned = rotated_model(nerve, 1);
    for (int k = 1; k <= 6; ++k) {
      const int next = k % 6 + 1;
      for (double amp : {100.0, 200.0, 300.0}) {
        const auto a = simulate_recruitment(nerve, StimConfig::str(k), amp);
        const auto b = simulate_recruitment(turned, StimConfig::str(next), amp);
        for (const auto& [m, v] : a) REQUIRE(b.at(m) == Catch::Approx(v).margin(1e-12));
      }
    }
    for (double amp : {100.0, 200.0}) {
      const auto a = simulate_recruitment(nerve, StimConfig::ring(), amp);
      const auto b = simulate_recruitment(turned, StimConfig::ring(), amp);
      for (const auto& [m, v] : a) REQUIRE(b.at(m) == Catch::Approx(v).margin(1e-12));
    }
  }
}

TEST_CASE("zero and negative currents", "[nerve_sim]") {
  const auto nerve = cbtest::targeted_model(2);
  for (const auto& [m, v] : simulate_recruitment(nerve, StimConfig::str(2), 0.0)) CHECK(v == 0.0);
  CHECK_THROWS_AS(simulate_recruitment(nerve, StimConfig::str(2), -1.0), DomainError);
}

TEST_CASE("M-wave template", "[nerve_sim]") {
  const MWaveTemplate t;
  CHECK(t.value(0.0) == 0.0);
  CHECK(t.value(3.99) == 0.0);
  CHECK(t.value(14.0) == 0.0);
  CHECK(t.value(6.5) == Catch::Approx(1.0));
  CHECK(t.value(11.5) == Catch::Approx(-1.0));
  double sum = 0.0;
  for (int i = 0; i < 1000; ++i) sum += t.value(4.0 + i * 0.01);
  CHECK(std::abs(sum) < 1e-9);
  CHECK(t.peak_to_peak() == 2.0);
}

TEST_CASE("raw synthesis scales the template by recruitment", "[nerve_sim]") {
  const auto nerve = cbtest::targeted_model(2);
  RampSpec ramp;
  ramp.step_duration_s = 0.6;
  const PulseSpec pulse;
  SynthesisOptions opts;
  opts.emulate_acquisition = false;
  const std::vector<double> amps{150.0, 250.0};
  const auto rec = synthesize_steps(nerve, StimConfig::str(2), amps, ramp, pulse, {}, 0.0, opts);
  REQUIRE(rec.channels.size() == 4);
  CHECK(rec.sample_count() == 24000);
  CHECK(rec.stim_events.size() == 38);
  CHECK(rec.metadata.config_id == "STR2");
  CHECK(rec.metadata.acquisition_gain == 1.0);
  CHECK(rec.stim_events[19].sample == 12000);
  CHECK_NOTHROW(rec.validate());

  for (std::size_t s = 0; s < amps.size(); ++s) {
    const auto truth = simulate_recruitment(nerve, StimConfig::str(2), amps[s]);
    for (std::size_t c = 0; c < 4; ++c) {
      const auto& ch = rec.channels[c].samples_uv;
      const auto ev = rec.stim_events[s * 19 + 5].sample;
      float lo = 0, hi = 0;
      for (std::int64_t n = ev; n < ev + 400; ++n) {
        lo = std::min(lo, ch[static_cast<std::size_t>(n)]);
        hi = std::max(hi, ch[static_cast<std::size_t>(n)]);
      }
      CHECK(hi - lo == Catch::Approx(2000.0 * truth.at(rec.channels[c].muscle)).margin(1e-2));
    }
  }
}

TEST_CASE("synthesis is deterministic in its seed", "[nerve_sim]") {
  const auto nerve = cbtest::targeted_model(3, 8);
  RampSpec ramp;
  ramp.step_duration_s = 0.6;
  SynthesisOptions opts;
  opts.noise_seed = 99;
  const std::vector<double> amps{200.0};
  const auto a = synthesize_steps(nerve, StimConfig::str(3), amps, ramp, {}, {}, 5.0, opts);
  const auto b = synthesize_steps(nerve, StimConfig::str(3), amps, ramp, {}, {}, 5.0, opts);
  CHECK(a.channels == b.channels);
  CHECK(a.metadata.acquisition_gain == 5000.0);
  opts.noise_seed = 100;
  const auto c = synthesize_steps(nerve, StimConfig::str(3), amps, ramp, {}, {}, 5.0, opts);
  CHECK_FALSE(a.channels == c.channels);
}

TEST_CASE("full ramp synthesis covers every amplitude", "[nerve_sim]") {
  const auto nerve = cbtest::targeted_model(1);
  RampSpec ramp;
  ramp.step_duration_s = 0.6;
  SynthesisOptions opts;
  opts.emulate_acquisition = false;
  const auto rec = synthesize_recording(nerve, StimConfig::str(1), ramp, {}, {}, 0.0, opts);
  CHECK(rec.stim_events.size() == 12 * 19);
  CHECK(rec.stim_events.front().amplitude_ua == 150.0);
  CHECK(rec.stim_events.back().amplitude_ua == 249.0);
}
