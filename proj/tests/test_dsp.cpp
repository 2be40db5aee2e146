#include <catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "cuffbench/dsp.hpp"
#include "cuffbench/errors.hpp"

using namespace cuffbench;

namespace {

constexpr double kFs = 20000.0;

double warp(double f) { return 2.0 * kFs * std::tan(std::numbers::pi * f / kFs); }

// Butterworth magnitude evaluated on the pre-warped analog frequency axis,
// which the bilinear transform maps onto the digital response exactly.
double analytic_magnitude(FilterKind kind, std::vector<double> edges, int order, double f) {
  const double w = warp(f);
  double x = 0.0;
  int n = order;
  switch (kind) {
    case FilterKind::Lowpass: x = w / warp(edges[0]); break;
    case FilterKind::Highpass: x = warp(edges[0]) / w; break;
    case FilterKind::Bandpass: {
      const double wl = warp(edges[0]), wh = warp(edges[1]);
      x = (w * w - wl * wh) / ((wh - wl) * w);
      n = order / 2;
      break;
    }
    case FilterKind::Notch: {
      const double wl = warp(edges[0]), wh = warp(edges[1]);
      x = (wh - wl) * w / (wl * wh - w * w);
      n = order / 2;
      break;
    }
  }
  return 1.0 / std::sqrt(1.0 + std::pow(x * x, n));
}

double max_relative_error(const FilterDesign& d, FilterKind kind, std::vector<double> edges, int order) {
  double worst = 0.0;
  for (double f = 1.0; f <= 1000.0; f += 1.0) {
    const double a = analytic_magnitude(kind, edges, order, f);
    const double m = d.magnitude(f);
    const double err = a > 1e-6 ? std::abs(m - a) / a : std::abs(m - a) / 1e-6;
    worst = std::max(worst, err);
  }
  return worst;
}

std::vector<double> sine(double f, double amp, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * f * i / kFs);
  return x;
}

double rms(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

// Direct form I, section by section.
std::vector<double> reference_filter(std::vector<double> x, const FilterDesign& d) {
  for (const auto& s : d.sections) {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double y = s.b0 * v + s.b1 * x1 + s.b2 * x2 - s.a1 * y1 - s.a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
  return x;
}

}  // namespace

TEST_CASE("Butterworth designs match the analytic magnitude", "[dsp]") {
  const std::array<double, 1> lp{200.0}, hp{30.0};
  const std::array<double, 2> bp{10.0, 500.0}, wide{1.0, 5000.0};
  for (int order : {1, 2, 3, 4, 5}) {
    CAPTURE(order);
    CHECK(max_relative_error(design_butterworth(FilterKind::Lowpass, lp, order, kFs), FilterKind::Lowpass,
                             {200.0}, order) < 1e-6);
    CHECK(max_relative_error(design_butterworth(FilterKind::Highpass, hp, order, kFs), FilterKind::Highpass,
                             {30.0}, order) < 1e-6);
  }
  for (int order : {2, 4, 6}) {
    CAPTURE(order);
    CHECK(max_relative_error(design_butterworth(FilterKind::Bandpass, bp, order, kFs), FilterKind::Bandpass,
                             {10.0, 500.0}, order) < 1e-6);
    CHECK(max_relative_error(design_butterworth(FilterKind::Bandpass, wide, order, kFs), FilterKind::Bandpass,
                             {1.0, 5000.0}, order) < 1e-6);
  }
}

TEST_CASE("notch matches the analytic band-stop magnitude", "[dsp]") {
  const double q = 10.0, f0 = 50.0;
  const double lo = f0 * (std::sqrt(1.0 + 1.0 / (4.0 * q * q)) - 1.0 / (2.0 * q));
  const auto d = design_notch(f0, q, kFs);
  REQUIRE(d.edges_hz.size() == 2);
  CHECK(d.edges_hz[0] == Catch::Approx(lo));
  CHECK(d.edges_hz[1] - d.edges_hz[0] == Catch::Approx(f0 / q));
  CHECK(d.edges_hz[0] * d.edges_hz[1] == Catch::Approx(f0 * f0));
  CHECK(max_relative_error(d, FilterKind::Notch, d.edges_hz, 2) < 1e-5);
  CHECK(d.magnitude(50.0) < 1e-4);
  CHECK(d.magnitude(1.0) > 0.999);
  CHECK(d.magnitude(1000.0) > 0.999);
}

TEST_CASE("designs agree with frozen reference magnitudes", "[dsp]") {
  // scipy.signal.butter(2, [10, 500], 'bandpass', fs=20000, output='sos') and
  // butter(1, [47.562..., 52.562...], 'bandstop'), evaluated with sosfreqz.
  const std::array<double, 2> bp{10.0, 500.0};
  const auto d = design_butterworth(FilterKind::Bandpass, bp, 4, kFs);
  const std::array<std::pair<double, double>, 9> bp_ref{{{1, 0.009608182042899637},
                                                         {5, 0.23570092323812114},
                                                         {10, 0.7071067811864018},
                                                         {50, 0.9999453710411824},
                                                         {100, 0.9999466388895465},
                                                         {250, 0.9767289775963158},
                                                         {500, 0.7071067811865458},
                                                         {1000, 0.23292200049319886},
                                                         {2000, 0.056393732994562025}}};
  for (const auto& [f, m] : bp_ref) CHECK(d.magnitude(f) == Catch::Approx(m).epsilon(1e-8));

  const auto n = design_notch(50.0, 10.0, kFs);
  const std::array<std::pair<double, double>, 8> notch_ref{{{1, 0.9999979983231891},
                                                            {10, 0.999783048169808},
                                                            {45, 0.9037373370424284},
                                                            {48, 0.6325348763367499},
                                                            {52, 0.6172864622335676},
                                                            {55, 0.8858321328583911},
                                                            {100, 0.9977854289837315},
                                                            {1000, 0.9999876431149387}}};
  for (const auto& [f, m] : notch_ref) CHECK(n.magnitude(f) == Catch::Approx(m).epsilon(1e-8));
  CHECK(n.magnitude(50.0) < 1e-5);
}

TEST_CASE("design argument validation", "[dsp]") {
  const std::array<double, 2> bp{10.0, 500.0}, reversed{500.0, 10.0}, above{10.0, 10000.0};
  const std::array<double, 1> lp{200.0}, zero{0.0};
  CHECK_THROWS_AS(design_butterworth(FilterKind::Bandpass, bp, 3, kFs), DomainError);
  CHECK_THROWS_AS(design_butterworth(FilterKind::Bandpass, reversed, 4, kFs), DomainError);
  CHECK_THROWS_AS(design_butterworth(FilterKind::Bandpass, above, 4, kFs), DomainError);
  CHECK_THROWS_AS(design_butterworth(FilterKind::Bandpass, lp, 4, kFs), DomainError);
  CHECK_THROWS_AS(design_butterworth(FilterKind::Lowpass, zero, 2, kFs), DomainError);
  CHECK_THROWS_AS(design_butterworth(FilterKind::Lowpass, lp, 0, kFs), DomainError);
  CHECK_THROWS_AS(design_butterworth(FilterKind::Lowpass, lp, 2, 0.0), DomainError);
  CHECK_THROWS_AS(design_notch(50.0, 0.0, kFs), DomainError);
}

TEST_CASE("causal filtering matches a direct-form reference", "[dsp]") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(4000);
  for (double& v : x) v = g(rng);
  const std::array<double, 2> bp{10.0, 500.0};
  const auto d = design_butterworth(FilterKind::Bandpass, bp, 4, kFs);
  const auto y = apply_filter(x, d, FilterMode::Causal);
  const auto ref = reference_filter(x, d);
  REQUIRE(y.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y[i] == Catch::Approx(ref[i]).margin(1e-9));

  auto rev = ref;
  std::reverse(rev.begin(), rev.end());
  auto back = reference_filter(rev, d);
  std::reverse(back.begin(), back.end());
  const auto z = apply_filter(x, d, FilterMode::ZeroPhase);
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(z[i] == Catch::Approx(back[i]).margin(1e-9));
}

TEST_CASE("zero-phase filtering has no lag and squared gain", "[dsp]") {
  const std::array<double, 2> bp{10.0, 500.0};
  const auto d = design_butterworth(FilterKind::Bandpass, bp, 4, kFs);
  const auto x = sine(300.0, 1.0, 40000);
  const auto y = apply_filter(x, d, FilterMode::ZeroPhase);
  const double g2 = std::pow(d.magnitude(300.0), 2);
  for (std::size_t i = 15000; i < 25000; ++i) REQUIRE(y[i] == Catch::Approx(g2 * x[i]).margin(1e-6));
}

TEST_CASE("50 Hz is suppressed and neighbours pass", "[dsp]") {
  const auto d = design_notch(50.0, 10.0, kFs);
  const auto mains = apply_filter(sine(50.0, 1.0, 20000), d, FilterMode::Causal);
  const auto tone = apply_filter(sine(150.0, 1.0, 20000), d, FilterMode::Causal);
  // interior only: the start-up transient of the narrow notch lasts ~0.2 s
  const std::span<const double> mains_ss(mains.data() + 10000, 10000);
  const std::span<const double> tone_ss(tone.data() + 10000, 10000);
  CHECK(rms(mains_ss) < 0.01 * std::sqrt(0.5));
  CHECK(rms(tone_ss) == Catch::Approx(std::sqrt(0.5)).epsilon(0.01));
}

TEST_CASE("acquisition emulation applies gain, band and notch", "[dsp]") {
  const AcquisitionChain chain;
  const auto tone = emulate_acquisition(sine(200.0, 2.0, 20000), kFs, chain);
  const auto mains = emulate_acquisition(sine(50.0, 2.0, 20000), kFs, chain);
  const std::span<const double> tone_ss(tone.data() + 10000, 10000);
  const std::span<const double> mains_ss(mains.data() + 10000, 10000);
  CHECK(rms(tone_ss) == Catch::Approx(5000.0 * 2.0 * std::sqrt(0.5)).epsilon(0.01));
  CHECK(rms(mains_ss) < 0.01 * 5000.0 * 2.0 * std::sqrt(0.5));
}

TEST_CASE("averaging 19 epochs of white noise divides RMS by sqrt(19)", "[dsp]") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  double single = 0.0, averaged = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::vector<Epoch> epochs(19);
    for (auto& e : epochs) {
      e.samples.resize(460);
      for (double& v : e.samples) v = g(rng);
    }
    single += rms(epochs.front().samples);
    averaged += rms(average_epochs(epochs));
  }
  const double ratio = averaged / single;
  CHECK(ratio == Catch::Approx(1.0 / std::sqrt(19.0)).epsilon(0.2));
}

TEST_CASE("average and peak-to-peak edge cases", "[dsp]") {
  CHECK_THROWS_AS(average_epochs({}), DomainError);
  std::vector<Epoch> uneven(2);
  uneven[0].samples = {1, 2};
  uneven[1].samples = {1};
  CHECK_THROWS_AS(average_epochs(uneven), DomainError);
  CHECK_THROWS_AS(peak_to_peak({}), DomainError);
  const std::vector<double> w{-2.0, 5.0, 1.0};
  CHECK(peak_to_peak(w) == 7.0);
}

namespace {

Recording pulsed_recording(double gain, double mwave_p2p_uv, int pulses = 19) {
  Recording rec;
  rec.sample_rate_hz = kFs;
  rec.metadata.config_id = "STR2";
  rec.metadata.acquisition_gain = gain;
  const std::size_t n = 20000;
  std::vector<float> ch(n, 0.0f);
  for (int i = 0; i < pulses; ++i) {
    const auto s = static_cast<std::int64_t>(std::llround(i / 35.0 * kFs)) + 100;
    rec.stim_events.push_back({s, 180.0, i});
    // one-cycle sine M-wave, 4 ms latency, 10 ms duration
    for (int k = 0; k < 200; ++k) {
      ch[static_cast<std::size_t>(s + 80 + k)] +=
          static_cast<float>(gain * mwave_p2p_uv / 2.0 * std::sin(2.0 * std::numbers::pi * k / 200.0));
    }
  }
  rec.channels.push_back({"FCR", ch});
  return rec;
}

}  // namespace

TEST_CASE("epoch extraction", "[dsp]") {
  const auto rec = pulsed_recording(1.0, 100.0);
  const auto ex = extract_epochs(rec, EpochWindow{});
  REQUIRE(ex.channels.size() == 1);
  REQUIRE(ex.channels[0].groups.size() == 1);
  const auto& g = ex.channels[0].groups[0];
  CHECK(g.amplitude_ua == 180.0);
  CHECK(g.epochs.size() == 19);
  CHECK(g.epochs[0].samples.size() == 460);
  CHECK(ex.skipped_events == 0);

  CHECK_THROWS_AS(extract_epochs(rec, EpochWindow{2.0, 30.0}), DomainError);
  CHECK_THROWS_AS(extract_epochs(rec, EpochWindow{5.0, 5.0}), DomainError);
  CHECK_THROWS_AS(extract_epochs(rec, EpochWindow{-1.0, 5.0}), DomainError);

  Recording cut = rec;
  cut.channels[0].samples_uv.resize(static_cast<std::size_t>(rec.stim_events.back().sample + 100));
  CHECK(extract_epochs(cut, EpochWindow{}).skipped_events == 1);
}

TEST_CASE("measurement divides out the acquisition gain", "[dsp]") {
  AnalysisOptions opts;
  opts.band_low_hz = 0.0;  // unfiltered: exact template amplitude
  for (double gain : {1.0, 5000.0}) {
    const auto m = measure_recording(pulsed_recording(gain, 100.0), opts);
    REQUIRE(m.steps.size() == 1);
    CHECK(m.steps[0].epoch_count == 19);
    CHECK(m.steps[0].p2p_uv[0] == Catch::Approx(100.0).epsilon(1e-4));
  }
  const auto filtered = measure_recording(pulsed_recording(5000.0, 100.0), AnalysisOptions{});
  CHECK(filtered.steps[0].p2p_uv[0] == Catch::Approx(100.0).epsilon(0.05));
}

TEST_CASE("curve normalization scopes", "[dsp]") {
  auto make = [](MuscleId m, std::vector<double> p2p) {
    RecruitmentCurve c;
    c.muscle = std::move(m);
    c.config = StimConfig::str(1);
    double a = 150.0;
    for (double v : p2p) c.points.push_back({a += 9.0, v, 0.0});
    return c;
  };
  std::vector<RecruitmentCurve> curves{make("FCR", {1, 2, 4}), make("FDS", {10, 20, 30}), make("PT", {0, 0, 0})};
  normalize_curves(curves, NormalizationScope::PerMuscle);
  CHECK(curves[0].points.back().normalized == 1.0);
  CHECK(curves[1].points.back().normalized == 1.0);
  CHECK(curves[0].points[1].normalized == 0.5);
  CHECK_FALSE(curves[2].normalizable);
  CHECK(curves[2].points[0].normalized == 0.0);

  normalize_curves(curves, NormalizationScope::Global);
  CHECK(curves[1].points.back().normalized == 1.0);
  CHECK(curves[0].points.back().normalized == Catch::Approx(4.0 / 30.0));
  CHECK(curves[2].normalizable);
  CHECK(curves[0].scope == NormalizationScope::Global);
}
