#include "cuffbench/protocol.hpp"

#include <algorithm>
#include <cmath>

#include "cuffbench/errors.hpp"

namespace cuffbench {

std::string_view to_string(NormalizationScope scope) {
  return scope == NormalizationScope::PerMuscle ? "per-muscle" : "global";
}

NormalizationScope parse_scope(std::string_view text) {
  if (text == "per-muscle" || text == "per_muscle") return NormalizationScope::PerMuscle;
  if (text == "global") return NormalizationScope::Global;
  throw DomainError("unknown normalization scope '" + std::string(text) + "'");
}

void PulseSpec::validate() const {
  if (!(cathodic_phase_width_us > 0.0)) throw DomainError("phase width must be positive");
  if (!(asymmetry_ratio >= 1.0)) throw DomainError("asymmetry ratio must be >= 1");
  if (!(frequency_hz > 0.0)) throw DomainError("pulse frequency must be positive");
  if (!(amplitude_ua >= 0.0)) throw DomainError("pulse amplitude must be >= 0");
  if ((cathodic_phase_width_us + anodic_phase_width_us()) * 1e-6 >= period_s()) {
    throw DomainError("biphasic pulse does not fit in one period");
  }
}

void RampSpec::validate(double frequency_hz) const {
  if (!(step_ua > 0.0)) throw DomainError("ramp step must be positive");
  if (pulses_per_step < 1) throw DomainError("pulses_per_step must be >= 1");
  if (!(start_amplitude_ua >= 0.0)) throw DomainError("ramp start must be >= 0");
  if (start_amplitude_ua > max_amplitude_ua) throw DomainError("ramp start exceeds max amplitude");
  if (!(frequency_hz > 0.0)) throw DomainError("pulse frequency must be positive");
  if (static_cast<double>(pulses_per_step) / frequency_hz > step_duration_s + 1e-12) {
    throw DomainError("pulse train longer than the step duration");
  }
  if (saturation.window < 1) throw DomainError("saturation window must be >= 1");
  if (!(saturation.epsilon > 0.0)) throw DomainError("saturation epsilon must be positive");
}

namespace {

// Adds `current` over [t_begin, t_end) into per-sample mean currents.
void deposit(std::vector<double>& wave, std::int64_t first_sample, double fs, double t_begin,
             double t_end, double current) {
  const auto n0 = static_cast<std::int64_t>(std::floor(t_begin * fs));
  const auto n1 = static_cast<std::int64_t>(std::ceil(t_end * fs));
  for (std::int64_t n = n0; n < n1; ++n) {
    const double lo = std::max(t_begin, static_cast<double>(n) / fs);
    const double hi = std::min(t_end, static_cast<double>(n + 1) / fs);
    if (hi <= lo) continue;
    const auto idx = n - first_sample;
    if (idx < 0 || idx >= static_cast<std::int64_t>(wave.size())) continue;
    wave[static_cast<std::size_t>(idx)] += current * (hi - lo) * fs;
  }
}

}  // namespace

PulseTrain build_pulse_train(const PulseSpec& spec, int n_pulses, double t0_s,
                             double sample_rate_hz) {
  spec.validate();
  if (!(sample_rate_hz > 0.0)) throw DomainError("sample rate must be positive");
  if (n_pulses < 0) throw DomainError("pulse count must be >= 0");

  PulseTrain train;
  train.sample_rate_hz = sample_rate_hz;
  train.first_sample = static_cast<std::int64_t>(std::floor(t0_s * sample_rate_hz));
  if (n_pulses == 0) return train;

  const double wc = spec.cathodic_phase_width_us * 1e-6;
  const double wa = spec.anodic_phase_width_us() * 1e-6;
  const double t_last_end = t0_s + (n_pulses - 1) * spec.period_s() + wc + wa;
  const auto last_sample = static_cast<std::int64_t>(std::ceil(t_last_end * sample_rate_hz));
  train.waveform_ua.assign(static_cast<std::size_t>(last_sample - train.first_sample), 0.0);

  for (int i = 0; i < n_pulses; ++i) {
    const double t = t0_s + i * spec.period_s();
    train.event_times_s.push_back(t);
    train.events.push_back(
        {static_cast<std::int64_t>(std::llround(t * sample_rate_hz)), spec.amplitude_ua, i});
    deposit(train.waveform_ua, train.first_sample, sample_rate_hz, t, t + wc, -spec.amplitude_ua);
    deposit(train.waveform_ua, train.first_sample, sample_rate_hz, t + wc, t + wc + wa,
            spec.anodic_amplitude_ua());
  }
  return train;
}

std::vector<double> ramp_amplitudes(const RampSpec& spec) {
  if (!(spec.step_ua > 0.0)) throw DomainError("ramp step must be positive");
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double a = spec.start_amplitude_ua + i * spec.step_ua;
    if (a > spec.max_amplitude_ua + 1e-9) break;
    out.push_back(a);
  }
  return out;
}

bool saturation_reached(std::span<const double> values, int window, double epsilon) {
  if (window < 1 || values.size() < static_cast<std::size_t>(window) + 1) return false;
  const double running_max = *std::max_element(values.begin(), values.end());
  if (!(running_max > 0.0)) return false;
  for (std::size_t i = values.size() - static_cast<std::size_t>(window); i < values.size(); ++i) {
    if (!(std::abs(values[i] - values[i - 1]) < epsilon * running_max)) return false;
  }
  return true;
}

bool saturation_reached(const RecruitmentCurve& curve, int window, double epsilon) {
  std::vector<double> v;
  v.reserve(curve.points.size());
  for (const auto& p : curve.points) v.push_back(p.mean_p2p_uv);
  return saturation_reached(v, window, epsilon);
}

}  // namespace cuffbench
