#include "cuffbench/recording.hpp"

#include <set>

#include "cuffbench/errors.hpp"

namespace cuffbench {

void Recording::validate() const {
  if (!(sample_rate_hz > 0.0)) throw DomainError("recording sample rate must be positive");
  std::set<MuscleId> labels;
  for (const auto& ch : channels) {
    if (ch.muscle.empty()) throw DomainError("empty channel label");
    if (!labels.insert(ch.muscle).second) throw DomainError("duplicate channel label " + ch.muscle);
    if (ch.samples_uv.size() != sample_count()) throw DomainError("channels differ in length");
  }
  const auto n = static_cast<std::int64_t>(sample_count());
  for (std::size_t i = 0; i < stim_events.size(); ++i) {
    const auto& ev = stim_events[i];
    if (ev.sample < 0 || ev.sample >= n) {
      throw DomainError("stim event " + std::to_string(i) + " outside the recording");
    }
    if (i > 0 && ev.sample <= stim_events[i - 1].sample) {
      throw DomainError("stim events must be strictly increasing in time");
    }
  }
}

}  // namespace cuffbench
