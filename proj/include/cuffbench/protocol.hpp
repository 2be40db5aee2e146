#pragma once

// Pulse trains and the staircase intensity ramp.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cuffbench/recruitment.hpp"

namespace cuffbench {

inline constexpr double kDefaultSampleRateHz = 20000.0;

/// Asymmetric charge-balanced biphasic pulse: a cathodic phase of
/// `cathodic_phase_width_us` at `amplitude_ua`, then an anodic phase
/// `asymmetry_ratio` times wider at amplitude / asymmetry_ratio.
struct PulseSpec {
  double cathodic_phase_width_us = 150.0;
  double asymmetry_ratio = 4.0;
  double frequency_hz = 35.0;
  double amplitude_ua = 0.0;

  double period_s() const { return 1.0 / frequency_hz; }
  double anodic_phase_width_us() const { return cathodic_phase_width_us * asymmetry_ratio; }
  double anodic_amplitude_ua() const { return amplitude_ua / asymmetry_ratio; }

  /// Throws DomainError on non-positive widths/frequency, ratio < 1,
  /// negative amplitude, or a pulse longer than the period.
  void validate() const;
};

struct SaturationRule {
  int window = 3;
  double epsilon = 0.05;
};

struct RampSpec {
  double start_amplitude_ua = 150.0;
  double step_ua = 9.0;
  double step_duration_s = 4.5;
  int pulses_per_step = 19;
  SaturationRule saturation;
  double max_amplitude_ua = 250.0;

  /// Throws DomainError when step <= 0, pulses_per_step < 1, the train does
  /// not fit in one step at `frequency_hz`, or start exceeds the hard stop.
  void validate(double frequency_hz) const;
};

struct StimEvent {
  std::int64_t sample = 0;
  double amplitude_ua = 0.0;
  int pulse_index = 0;  // position within its train
};

struct PulseTrain {
  std::vector<StimEvent> events;
  std::vector<double> event_times_s;
  std::int64_t first_sample = 0;  // sample index of waveform[0]
  double sample_rate_hz = kDefaultSampleRateHz;
  std::vector<double> waveform_ua;  // cathodic current negative
};

/// `n_pulses` pulses at 1/frequency spacing starting at t0. Each waveform
/// sample holds the mean current over its sample interval, so the sampled
/// charge of every pulse sums to zero.
PulseTrain build_pulse_train(const PulseSpec& spec, int n_pulses, double t0_s,
                             double sample_rate_hz = kDefaultSampleRateHz);

/// start, start + step, ... while <= max_amplitude.
std::vector<double> ramp_amplitudes(const RampSpec& spec);

/// True when each of the last `window` increments satisfies
/// |v[i] - v[i-1]| < epsilon * max(v). Needs at least window + 1 values.
bool saturation_reached(std::span<const double> values, int window, double epsilon);
bool saturation_reached(const RecruitmentCurve& curve, int window, double epsilon);

}  // namespace cuffbench
