#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "cuffbench/protocol.hpp"
#include "cuffbench/recruitment.hpp"

namespace cuffbench {

struct RecordingMetadata {
  std::string subject_id;
  std::string config_id;  // StimConfig::name()
  std::string timestamp;
  /// Amplifier gain already applied to the stored samples; analysis divides
  /// it out to report input-referred microvolts.
  double acquisition_gain = 1.0;
  std::map<std::string, std::string> extra;

  bool operator==(const RecordingMetadata&) const = default;
};

struct Channel {
  MuscleId muscle;
  std::vector<float> samples_uv;

  bool operator==(const Channel&) const = default;
};

/// Multichannel eEMG with stimulation markers. Samples are single precision,
/// matching the on-disk container.
struct Recording {
  double sample_rate_hz = kDefaultSampleRateHz;
  std::vector<Channel> channels;
  std::vector<StimEvent> stim_events;
  RecordingMetadata metadata;

  std::size_t sample_count() const { return channels.empty() ? 0 : channels.front().samples_uv.size(); }

  /// Throws DomainError on unequal channel lengths, duplicate or empty
  /// labels, non-positive sample rate, out-of-range or non-increasing events.
  void validate() const;
};

inline bool operator==(const StimEvent& a, const StimEvent& b) {
  return a.sample == b.sample && a.amplitude_ua == b.amplitude_ua && a.pulse_index == b.pulse_index;
}

}  // namespace cuffbench
