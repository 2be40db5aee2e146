#pragma once

// Synthetic nerve: point-source potentials from the cuff contacts in a
// homogeneous medium, a potential-threshold activation rule, and M-wave
// synthesis. A deliberate simplification of cable-model axons; it keeps
// recruitment monotone in current and exactly 60-degree equivariant.

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "cuffbench/anatomy.hpp"
#include "cuffbench/dsp.hpp"
#include "cuffbench/electrode.hpp"
#include "cuffbench/protocol.hpp"
#include "cuffbench/recording.hpp"

namespace cuffbench {

inline constexpr double kMinContactClearanceUm = 1.0;

/// Extracellular potential in volts at `point` for `total_current_ua` shared
/// by the pattern's contacts: sum of w * I / (4 pi sigma r). Micro-units of
/// current and distance cancel, so no scaling is applied. Throws DomainError
/// when sigma <= 0 or the point is within 1 um of an active contact.
double potential_at(const Point3& point, const CurrentPattern& pattern, double total_current_ua,
                    const CuffLayout& layout, double conductivity_s_per_m);

/// Depolarizing drive max(0, -V) at a fiber in the central plane.
double cathodic_drive(const NerveModel& nerve, const CurrentPattern& pattern, double current_ua,
                      Point2 position_um);

using RecruitmentMap = std::map<MuscleId, double>;

/// Fraction of each muscle's mapped fibers whose cathodic drive reaches
/// threshold. Muscles with no fibers report 0. Throws DomainError if I < 0.
RecruitmentMap simulate_recruitment(const NerveModel& nerve, const StimConfig& config,
                                    double current_ua);

/// Unit-amplitude, zero-mean, one-cycle biphasic M-wave.
struct MWaveTemplate {
  double latency_ms = 4.0;
  double duration_ms = 10.0;

  /// Template value `t_ms` after the stimulus; zero outside the M-wave.
  double value(double t_ms) const;
  double peak_to_peak() const { return 2.0; }
};

struct SynthesisOptions {
  double sample_rate_hz = kDefaultSampleRateHz;
  double max_mwave_uv = 1000.0;  // M-wave p2p/2 at full recruitment
  std::optional<std::uint64_t> noise_seed;  // default: model seed mixed with config ordinal
  bool emulate_acquisition = true;
  AcquisitionChain acquisition;
  std::string subject_id = "sim";
};

/// Step k of the ramp starts at k * step_duration with a train of
/// pulses_per_step pulses; each pulse evokes template * recruitment *
/// max_mwave_uv per muscle. Seeded Gaussian noise is added before the
/// acquisition chain. Deterministic for a fixed seed.
Recording synthesize_recording(const NerveModel& nerve, const StimConfig& config, const RampSpec& ramp,
                               const PulseSpec& pulse, const MWaveTemplate& mwave, double noise_rms_uv,
                               const SynthesisOptions& options = {});

/// Same synthesis for an explicit list of amplitudes (one step each).
Recording synthesize_steps(const NerveModel& nerve, const StimConfig& config,
                           const std::vector<double>& amplitudes_ua, const RampSpec& ramp,
                           const PulseSpec& pulse, const MWaveTemplate& mwave, double noise_rms_uv,
                           const SynthesisOptions& options = {});

}  // namespace cuffbench
