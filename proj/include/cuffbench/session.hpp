#pragma once

// Live ramp sessions: a state machine driven one step at a time against a
// stimulation backend, with an append-only event log, bounded-queue
// subscribers and on-disk persistence.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cuffbench/dsp.hpp"
#include "cuffbench/io.hpp"
#include "cuffbench/nerve_sim.hpp"
#include "cuffbench/protocol.hpp"

namespace cuffbench {

enum class StateKind { Idle, Configured, Ramping, Saturated, Stopped };

std::string_view to_string(StateKind kind);
std::optional<StateKind> parse_state_kind(std::string_view text);

/// The declared transition graph: Idle->Configured->Ramping->Ramping,
/// Ramping->(Saturated|Stopped), (Saturated|Stopped)->Configured, plus
/// abort from any state to Stopped.
bool transition_allowed(StateKind from, StateKind to);

struct SessionState {
  StateKind kind = StateKind::Idle;
  std::optional<StimConfig> config;
  RampSpec ramp;
  PulseSpec pulse;
  int steps_completed = 0;
  double amplitude_ua = 0.0;  // last delivered amplitude
  std::string stop_reason;
  std::vector<RecruitmentCurve> curves;  // current configuration, per muscle

  bool operator==(const SessionState& o) const;
};

Json to_json(const SessionState& state);

struct BackendCapabilities {
  double max_current_ua = 0.0;
  std::vector<MuscleId> channels;
};

struct DeliveryRequest {
  StimConfig config;
  PulseSpec pulse;  // amplitude set to the step amplitude
  RampSpec ramp;
  int step_index = 0;
};

class StimBackend {
 public:
  virtual ~StimBackend() = default;
  virtual BackendCapabilities capabilities() const = 0;
  /// Delivers one pulse train and returns the evoked segment (one step long,
  /// events relative to the segment start). Throws BackendError on failure.
  virtual Recording deliver(const DeliveryRequest& request) = 0;
};

/// Nerve simulator behind the backend interface; deterministic in the model
/// seed, configuration and step index.
class SimulatorBackend : public StimBackend {
 public:
  SimulatorBackend(NerveModel nerve, double max_current_ua, MWaveTemplate mwave = {}, double noise_rms_uv = 0.0,
                   SynthesisOptions synthesis = {});

  BackendCapabilities capabilities() const override;
  Recording deliver(const DeliveryRequest& request) override;

  const NerveModel& nerve() const { return nerve_; }

 private:
  NerveModel nerve_;
  double max_current_ua_;
  MWaveTemplate mwave_;
  double noise_rms_uv_;
  SynthesisOptions synthesis_;
};

/// Hardware stand-in: refuses currents above its limit and returns flat
/// channels with the stimulation markers.
class StubBackend : public StimBackend {
 public:
  StubBackend(double max_current_ua, std::vector<MuscleId> channels,
              double sample_rate_hz = kDefaultSampleRateHz);

  BackendCapabilities capabilities() const override;
  Recording deliver(const DeliveryRequest& request) override;

 private:
  double max_current_ua_;
  std::vector<MuscleId> channels_;
  double sample_rate_hz_;
};

/// Per-subscriber bounded queue. When full, the oldest message is dropped
/// and a {"kind":"gap","dropped":n} notice takes its place, so publishers
/// never block.
class Subscription {
 public:
  explicit Subscription(std::size_t capacity);

  /// Waits up to `timeout` for a message; nullopt on timeout or when closed
  /// and drained.
  std::optional<Json> next(std::chrono::milliseconds timeout);
  std::optional<Json> try_next();
  void close();
  bool closed() const;
  std::uint64_t dropped_total() const;

  void push(Json message);

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Json> queue_;
  std::size_t capacity_;
  std::uint64_t dropped_total_ = 0;
  bool closed_ = false;
};

struct StepResult {
  double amplitude_ua = 0.0;
  int step_index = 0;
  std::map<MuscleId, double> p2p_uv;
  std::vector<RecruitmentCurve> curves;
  bool saturated = false;
  StateKind state_after = StateKind::Ramping;
};

using Clock = std::function<std::string()>;

/// ISO-8601 UTC wall clock.
std::string wall_clock_timestamp();

struct SessionOptions {
  std::optional<std::filesystem::path> persist_dir;
  Clock clock = wall_clock_timestamp;
  EpochWindow window;
  std::size_t subscriber_capacity = 256;
};

class Session {
 public:
  explicit Session(std::shared_ptr<StimBackend> backend, SessionOptions options = {});
  ~Session();

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Legal in Idle, Saturated and Stopped. Invalid specs throw DomainError
  /// and leave the state unchanged; other states throw ProtocolError.
  SessionState configure(const StimConfig& config, const RampSpec& ramp, const PulseSpec& pulse);

  /// Delivers one train at the next ramp amplitude and runs the causal
  /// analysis path. Throws ProtocolError outside Configured/Ramping or when
  /// another step is in flight; BackendError after moving to Stopped.
  StepResult run_step();

  /// Steps until the state leaves Configured/Ramping. ProtocolError if it
  /// starts anywhere else.
  SessionState run_to_saturation();

  /// Any state -> Stopped(reason). A step in flight is discarded.
  SessionState abort(const std::string& reason);

  /// Operator confirmation of a plateau: Ramping -> Saturated.
  SessionState mark_saturated();

  /// Snapshot first, then every message published from now on.
  std::shared_ptr<Subscription> subscribe();
  std::shared_ptr<Subscription> subscribe(std::size_t capacity);

  SessionState state() const;
  std::vector<SessionLogEntry> log() const;
  bool stepping() const { return stepping_.load(); }

  /// Rewrites curve/polar exports for every configuration run so far.
  void flush_exports();

 private:
  struct ConfigRun {
    int index = 0;
    StimConfig config;
    Recording recording;
    std::vector<RecruitmentCurve> curves;
  };

  void transition_locked(StateKind to, Json payload);
  void append_log_locked(SessionLogEntry entry);
  void publish_locked(const Json& message);
  void persist_run_locked();
  void flush_exports_locked();
  double next_amplitude_locked() const;
  bool saturated_locked() const;

  std::shared_ptr<StimBackend> backend_;
  SessionOptions options_;
  mutable std::mutex mu_;
  SessionState state_;
  std::vector<SessionLogEntry> log_;
  std::vector<std::weak_ptr<Subscription>> subscribers_;
  std::vector<ConfigRun> runs_;
  std::uint64_t generation_ = 0;
  std::uint64_t seq_ = 0;
  std::atomic<bool> stepping_{false};
};

/// Folds a session log back into the state it describes. Throws ParseError
/// on entries that do not form a legal trace.
SessionState replay_log(std::span<const SessionLogEntry> log);

/// Recomputes normalized values of session curves from their p2p values
/// (per muscle, within the configuration).
void normalize_session_curves(std::vector<RecruitmentCurve>& curves);

}  // namespace cuffbench
