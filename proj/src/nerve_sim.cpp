#include "cuffbench/nerve_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cuffbench/errors.hpp"

namespace cuffbench {

double potential_at(const Point3& point, const CurrentPattern& pattern, double total_current_ua,
                    const CuffLayout& layout, double conductivity_s_per_m) {
  if (!(conductivity_s_per_m > 0.0)) throw DomainError("conductivity must be positive");
  const double k = total_current_ua / (4.0 * std::numbers::pi * conductivity_s_per_m);
  double v = 0.0;
  for (const auto& [id, w] : pattern.weights()) {
    const double r = distance(point, contact_position(layout, id));
    if (r < kMinContactClearanceUm) {
      throw DomainError("field point within " + std::to_string(kMinContactClearanceUm) + " um of " + id.name());
    }
    v += w.value() * k / r;
  }
  return v;
}

double cathodic_drive(const NerveModel& nerve, const CurrentPattern& pattern, double current_ua,
                      Point2 position_um) {
  const double v = potential_at({position_um.x, position_um.y, 0.0}, pattern, current_ua, nerve.cuff,
                                nerve.conductivity_s_per_m);
  return std::max(0.0, -v);
}

RecruitmentMap simulate_recruitment(const NerveModel& nerve, const StimConfig& config,
                                    double current_ua) {
  if (!(current_ua >= 0.0)) throw DomainError("stimulation current must be >= 0");
  std::map<MuscleId, double> active;
  std::map<MuscleId, double> total;
  for (const auto& m : nerve.muscles) {
    active[m] = 0.0;
    total[m] = 0.0;
  }
  for (const auto& [fid, weights] : nerve.fascicle_muscle_map) {
    auto it = nerve.fibers.find(fid);
    if (it == nerve.fibers.end() || it->second.empty()) continue;
    double n_active = 0.0;
    for (const auto& fiber : it->second) {
      if (cathodic_drive(nerve, config.pattern, current_ua, fiber.position_um) >= fiber.threshold_v) {
        n_active += 1.0;
      }
    }
    const auto n_total = static_cast<double>(it->second.size());
    for (const auto& mw : weights) {
      active[mw.muscle] += mw.weight * n_active;
      total[mw.muscle] += mw.weight * n_total;
    }
  }
  RecruitmentMap out;
  for (const auto& m : nerve.muscles) out[m] = total[m] > 0.0 ? active[m] / total[m] : 0.0;
  return out;
}

double MWaveTemplate::value(double t_ms) const {
  const double u = (t_ms - latency_ms) / duration_ms;
  if (u < 0.0 || u >= 1.0) return 0.0;
  return std::sin(2.0 * std::numbers::pi * u);
}

Recording synthesize_steps(const NerveModel& nerve, const StimConfig& config,
                           const std::vector<double>& amplitudes_ua, const RampSpec& ramp,
                           const PulseSpec& pulse, const MWaveTemplate& mwave, double noise_rms_uv,
                           const SynthesisOptions& options) {
  pulse.validate();
  ramp.validate(pulse.frequency_hz);
  if (!(noise_rms_uv >= 0.0)) throw DomainError("noise RMS must be >= 0");
  const double fs = options.sample_rate_hz;
  const auto per_step = static_cast<std::int64_t>(std::llround(ramp.step_duration_s * fs));
  const auto total = per_step * static_cast<std::int64_t>(amplitudes_ua.size());

  std::vector<std::vector<double>> raw(nerve.muscles.size(),
                                       std::vector<double>(static_cast<std::size_t>(total), 0.0));
  Recording rec;
  rec.sample_rate_hz = fs;

  const auto lead = static_cast<std::int64_t>(std::floor(mwave.latency_ms * fs / 1000.0));
  const auto tail = static_cast<std::int64_t>(std::ceil((mwave.latency_ms + mwave.duration_ms) * fs / 1000.0));

  for (std::size_t k = 0; k < amplitudes_ua.size(); ++k) {
    PulseSpec p = pulse;
    p.amplitude_ua = amplitudes_ua[k];
    const double t0 = static_cast<double>(k) * ramp.step_duration_s;
    const PulseTrain train = build_pulse_train(p, ramp.pulses_per_step, t0, fs);
    const RecruitmentMap rec_map = simulate_recruitment(nerve, config, p.amplitude_ua);
    for (const auto& ev : train.events) {
      rec.stim_events.push_back(ev);
      for (std::size_t c = 0; c < nerve.muscles.size(); ++c) {
        const double scale = rec_map.at(nerve.muscles[c]) * options.max_mwave_uv;
        if (scale == 0.0) continue;
        for (std::int64_t n = ev.sample + lead; n <= ev.sample + tail && n < total; ++n) {
          const double t_ms = 1000.0 * static_cast<double>(n - ev.sample) / fs;
          raw[c][static_cast<std::size_t>(n)] += scale * mwave.value(t_ms);
        }
      }
    }
  }

  if (noise_rms_uv > 0.0) {
    const std::uint64_t seed =
        options.noise_seed.value_or(nerve.rng_seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(config.ordinal() + 1)));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_rms_uv);
    for (auto& ch : raw) {
      for (double& v : ch) v += noise(rng);
    }
  }

  rec.metadata.subject_id = options.subject_id;
  rec.metadata.config_id = config.name();
  rec.metadata.acquisition_gain = options.emulate_acquisition ? options.acquisition.gain : 1.0;
  rec.metadata.extra["pulse_frequency_hz"] = std::to_string(pulse.frequency_hz);
  rec.metadata.extra["noise_rms_uv"] = std::to_string(noise_rms_uv);

  for (std::size_t c = 0; c < nerve.muscles.size(); ++c) {
    const std::vector<double> out =
        options.emulate_acquisition ? emulate_acquisition(raw[c], fs, options.acquisition) : raw[c];
    Channel ch;
    ch.muscle = nerve.muscles[c];
    ch.samples_uv.assign(out.begin(), out.end());
    rec.channels.push_back(std::move(ch));
  }
  return rec;
}

Recording synthesize_recording(const NerveModel& nerve, const StimConfig& config, const RampSpec& ramp,
                               const PulseSpec& pulse, const MWaveTemplate& mwave, double noise_rms_uv,
                               const SynthesisOptions& options) {
  return synthesize_steps(nerve, config, ramp_amplitudes(ramp), ramp, pulse, mwave, noise_rms_uv, options);
}

}  // namespace cuffbench
