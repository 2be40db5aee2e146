#include "cuffbench/session.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>

#include "cuffbench/errors.hpp"

namespace cuffbench {

namespace {

constexpr double kAmplitudeSlack = 1e-9;

bool same_pulse(const PulseSpec& a, const PulseSpec& b) {
  return a.cathodic_phase_width_us == b.cathodic_phase_width_us && a.asymmetry_ratio == b.asymmetry_ratio &&
         a.frequency_hz == b.frequency_hz && a.amplitude_ua == b.amplitude_ua;
}

bool same_ramp(const RampSpec& a, const RampSpec& b) {
  return a.start_amplitude_ua == b.start_amplitude_ua && a.step_ua == b.step_ua &&
         a.step_duration_s == b.step_duration_s && a.pulses_per_step == b.pulses_per_step &&
         a.saturation.window == b.saturation.window && a.saturation.epsilon == b.saturation.epsilon &&
         a.max_amplitude_ua == b.max_amplitude_ua;
}

bool same_curves(const std::vector<RecruitmentCurve>& a, const std::vector<RecruitmentCurve>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].muscle != b[i].muscle || !(a[i].config == b[i].config) || a[i].points.size() != b[i].points.size()) {
      return false;
    }
    for (std::size_t j = 0; j < a[i].points.size(); ++j) {
      const auto& p = a[i].points[j];
      const auto& q = b[i].points[j];
      if (p.amplitude_ua != q.amplitude_ua || p.mean_p2p_uv != q.mean_p2p_uv || p.normalized != q.normalized) {
        return false;
      }
    }
  }
  return true;
}

Json curves_json(const std::vector<RecruitmentCurve>& curves) {
  Json out = Json::array();
  for (const auto& c : curves) {
    Json points = Json::array();
    for (const auto& p : c.points) points.push_back(Json::array({p.amplitude_ua, p.mean_p2p_uv, p.normalized}));
    out.push_back({{"muscle", c.muscle}, {"config", c.config.name()}, {"points", std::move(points)}});
  }
  return out;
}

// Appends one step's p2p values to the per-muscle curves, in channel order.
void add_step_points(std::vector<RecruitmentCurve>& curves, const StimConfig& config, double amplitude,
                     const std::vector<std::pair<MuscleId, double>>& p2p) {
  for (const auto& [muscle, value] : p2p) {
    auto it = std::find_if(curves.begin(), curves.end(), [&](const auto& c) { return c.muscle == muscle; });
    if (it == curves.end()) {
      RecruitmentCurve c;
      c.muscle = muscle;
      c.config = config;
      curves.push_back(std::move(c));
      it = std::prev(curves.end());
    }
    it->points.push_back({amplitude, value, 0.0});
  }
  normalize_session_curves(curves);
}

std::uint64_t mix_seed(std::uint64_t seed, int ordinal, int step) {
  std::uint64_t h = seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(ordinal + 1));
  h ^= 0xBF58476D1CE4E5B9ULL * static_cast<std::uint64_t>(step + 1);
  h ^= h >> 31;
  return h;
}

void append_segment(Recording& run, const Recording& segment) {
  const auto offset = static_cast<std::int64_t>(run.sample_count());
  if (run.channels.empty()) {
    run.sample_rate_hz = segment.sample_rate_hz;
    run.metadata = segment.metadata;
    for (const auto& ch : segment.channels) run.channels.push_back({ch.muscle, {}});
  }
  for (std::size_t c = 0; c < run.channels.size(); ++c) {
    const auto& src = segment.channels[c].samples_uv;
    run.channels[c].samples_uv.insert(run.channels[c].samples_uv.end(), src.begin(), src.end());
  }
  for (auto ev : segment.stim_events) {
    ev.sample += offset;
    run.stim_events.push_back(ev);
  }
}

}  // namespace

std::string_view to_string(StateKind kind) {
  switch (kind) {
    case StateKind::Idle: return "Idle";
    case StateKind::Configured: return "Configured";
    case StateKind::Ramping: return "Ramping";
    case StateKind::Saturated: return "Saturated";
    case StateKind::Stopped: return "Stopped";
  }
  return "?";
}

std::optional<StateKind> parse_state_kind(std::string_view text) {
  for (auto k : {StateKind::Idle, StateKind::Configured, StateKind::Ramping, StateKind::Saturated,
                 StateKind::Stopped}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

bool transition_allowed(StateKind from, StateKind to) {
  using S = StateKind;
  if (to == S::Stopped) return true;
  switch (from) {
    case S::Idle: return to == S::Configured;
    case S::Configured: return to == S::Ramping;
    case S::Ramping: return to == S::Ramping || to == S::Saturated;
    case S::Saturated:
    case S::Stopped: return to == S::Configured;
  }
  return false;
}

bool SessionState::operator==(const SessionState& o) const {
  return kind == o.kind && config == o.config && same_ramp(ramp, o.ramp) && same_pulse(pulse, o.pulse) &&
         steps_completed == o.steps_completed && amplitude_ua == o.amplitude_ua && stop_reason == o.stop_reason &&
         same_curves(curves, o.curves);
}

Json to_json(const SessionState& state) {
  Json j;
  j["state"] = std::string(to_string(state.kind));
  j["config"] = state.config ? Json(state.config->name()) : Json(nullptr);
  j["steps_completed"] = state.steps_completed;
  j["amplitude_uA"] = state.amplitude_ua;
  j["stop_reason"] = state.stop_reason;
  j["ramp"] = to_json(state.ramp);
  j["pulse"] = to_json(state.pulse);
  j["curves"] = curves_json(state.curves);
  return j;
}

void normalize_session_curves(std::vector<RecruitmentCurve>& curves) {
  normalize_curves(curves, NormalizationScope::PerMuscle);
}

std::string wall_clock_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

// ---------------------------------------------------------------------------
// Backends

SimulatorBackend::SimulatorBackend(NerveModel nerve, double max_current_ua, MWaveTemplate mwave,
                                   double noise_rms_uv, SynthesisOptions synthesis)
    : nerve_(std::move(nerve)),
      max_current_ua_(max_current_ua),
      mwave_(mwave),
      noise_rms_uv_(noise_rms_uv),
      synthesis_(std::move(synthesis)) {
  nerve_.validate();
  if (!(max_current_ua_ > 0.0)) throw DomainError("backend current limit must be positive");
}

BackendCapabilities SimulatorBackend::capabilities() const { return {max_current_ua_, nerve_.muscles}; }

Recording SimulatorBackend::deliver(const DeliveryRequest& request) {
  if (request.pulse.amplitude_ua > max_current_ua_ + kAmplitudeSlack) {
    throw BackendError("requested " + std::to_string(request.pulse.amplitude_ua) + " uA exceeds limit " +
                       std::to_string(max_current_ua_) + " uA");
  }
  SynthesisOptions opts = synthesis_;
  opts.noise_seed = mix_seed(synthesis_.noise_seed.value_or(nerve_.rng_seed), request.config.ordinal(),
                             request.step_index);
  return synthesize_steps(nerve_, request.config, {request.pulse.amplitude_ua}, request.ramp, request.pulse,
                          mwave_, noise_rms_uv_, opts);
}

StubBackend::StubBackend(double max_current_ua, std::vector<MuscleId> channels, double sample_rate_hz)
    : max_current_ua_(max_current_ua), channels_(std::move(channels)), sample_rate_hz_(sample_rate_hz) {
  if (channels_.empty()) throw DomainError("stub backend needs at least one channel");
}

BackendCapabilities StubBackend::capabilities() const { return {max_current_ua_, channels_}; }

Recording StubBackend::deliver(const DeliveryRequest& request) {
  if (request.pulse.amplitude_ua > max_current_ua_ + kAmplitudeSlack) {
    throw BackendError("requested " + std::to_string(request.pulse.amplitude_ua) + " uA exceeds limit " +
                       std::to_string(max_current_ua_) + " uA");
  }
  const PulseTrain train = build_pulse_train(request.pulse, request.ramp.pulses_per_step, 0.0, sample_rate_hz_);
  Recording rec;
  rec.sample_rate_hz = sample_rate_hz_;
  const auto n = static_cast<std::size_t>(std::llround(request.ramp.step_duration_s * sample_rate_hz_));
  for (const auto& m : channels_) rec.channels.push_back({m, std::vector<float>(n, 0.0f)});
  rec.stim_events = train.events;
  rec.metadata.subject_id = "stub";
  rec.metadata.config_id = request.config.name();
  return rec;
}

// ---------------------------------------------------------------------------
// Subscription

Subscription::Subscription(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

void Subscription::push(Json message) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    std::size_t real = queue_.size();
    if (!queue_.empty() && queue_.front().value("kind", "") == "gap") --real;
    if (real >= capacity_) {
      std::uint64_t dropped = 0;
      if (queue_.front().value("kind", "") == "gap") {
        dropped = queue_.front().value("dropped", std::uint64_t{0});
        queue_.pop_front();
      }
      queue_.pop_front();
      ++dropped;
      ++dropped_total_;
      queue_.push_front(Json{{"kind", "gap"}, {"dropped", dropped}});
    }
    queue_.push_back(std::move(message));
  }
  cv_.notify_one();
}

std::optional<Json> Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  Json m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

std::optional<Json> Subscription::try_next() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  Json m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

void Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscription::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::uint64_t Subscription::dropped_total() const {
  std::lock_guard lock(mu_);
  return dropped_total_;
}

// ---------------------------------------------------------------------------
// Session

Session::Session(std::shared_ptr<StimBackend> backend, SessionOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
  if (!backend_) throw DomainError("session needs a backend");
  if (options_.persist_dir) {
    std::filesystem::create_directories(*options_.persist_dir);
    std::ofstream(*options_.persist_dir / "session.log", std::ios::trunc);
  }
}

Session::~Session() {
  std::lock_guard lock(mu_);
  for (auto& w : subscribers_) {
    if (auto s = w.lock()) s->close();
  }
}

void Session::append_log_locked(SessionLogEntry entry) {
  entry.seq = ++seq_;
  entry.timestamp = options_.clock();
  if (options_.persist_dir) {
    std::ofstream out(*options_.persist_dir / "session.log", std::ios::app);
    out << format_log_line(entry) << '\n';
    out.flush();
  }
  log_.push_back(std::move(entry));
}

void Session::publish_locked(const Json& message) {
  auto it = subscribers_.begin();
  while (it != subscribers_.end()) {
    if (auto s = it->lock(); s && !s->closed()) {
      s->push(message);
      ++it;
    } else {
      it = subscribers_.erase(it);
    }
  }
}

void Session::transition_locked(StateKind to, Json payload) {
  const StateKind from = state_.kind;
  if (!transition_allowed(from, to)) {
    throw std::logic_error("illegal transition " + std::string(to_string(from)) + " -> " + std::string(to_string(to)));
  }
  switch (to) {
    case StateKind::Configured:
      state_.config = StimConfig::from_name(payload.at("config").get<std::string>());
      state_.ramp = ramp_spec_from_json(payload.at("ramp"));
      state_.pulse = pulse_spec_from_json(payload.at("pulse"));
      state_.steps_completed = 0;
      state_.amplitude_ua = 0.0;
      state_.stop_reason.clear();
      state_.curves.clear();
      break;
    case StateKind::Stopped:
      state_.stop_reason = payload.value("reason", "");
      break;
    default:
      break;
  }
  state_.kind = to;
  append_log_locked({0, "", "transition", std::string(to_string(from)), std::string(to_string(to)), payload});
  publish_locked(Json{{"kind", "transition"},
                      {"seq", seq_},
                      {"from", std::string(to_string(from))},
                      {"to", std::string(to_string(to))},
                      {"payload", payload},
                      {"state", to_json(state_)}});
}

double Session::next_amplitude_locked() const {
  return state_.ramp.start_amplitude_ua + state_.steps_completed * state_.ramp.step_ua;
}

bool Session::saturated_locked() const {
  bool any = false;
  for (const auto& c : state_.curves) {
    double peak = 0.0;
    for (const auto& p : c.points) peak = std::max(peak, p.mean_p2p_uv);
    if (!(peak > 0.0)) continue;
    any = true;
    if (!saturation_reached(c, state_.ramp.saturation.window, state_.ramp.saturation.epsilon)) return false;
  }
  return any;
}

SessionState Session::configure(const StimConfig& config, const RampSpec& ramp, const PulseSpec& pulse) {
  pulse.validate();
  ramp.validate(pulse.frequency_hz);
  std::lock_guard lock(mu_);
  const auto k = state_.kind;
  if (k != StateKind::Idle && k != StateKind::Saturated && k != StateKind::Stopped) {
    throw ProtocolError("configure is not allowed in state " + std::string(to_string(k)));
  }
  PulseSpec p = pulse;
  p.amplitude_ua = 0.0;
  transition_locked(StateKind::Configured, Json{{"config", config.name()}, {"ramp", to_json(ramp)}, {"pulse", to_json(p)}});
  ConfigRun run;
  run.index = static_cast<int>(runs_.size()) + 1;
  run.config = config;
  runs_.push_back(std::move(run));
  return state_;
}

StepResult Session::run_step() {
  DeliveryRequest request;
  std::uint64_t generation = 0;
  {
    std::lock_guard lock(mu_);
    const auto k = state_.kind;
    if (k != StateKind::Configured && k != StateKind::Ramping) {
      throw ProtocolError("run_step is not allowed in state " + std::string(to_string(k)));
    }
    bool expected = false;
    if (!stepping_.compare_exchange_strong(expected, true)) {
      throw ProtocolError("a step is already in progress");
    }
    if (k == StateKind::Configured) transition_locked(StateKind::Ramping, Json::object());
    request.config = *state_.config;
    request.pulse = state_.pulse;
    request.pulse.amplitude_ua = next_amplitude_locked();
    request.ramp = state_.ramp;
    request.step_index = state_.steps_completed;
    generation = generation_;
  }

  struct Release {
    std::atomic<bool>& flag;
    ~Release() { flag.store(false); }
  } release{stepping_};

  StepResult result;
  result.amplitude_ua = request.pulse.amplitude_ua;
  result.step_index = request.step_index;

  Recording segment;
  std::vector<std::pair<MuscleId, double>> p2p;
  std::string failure;
  try {
    segment = backend_->deliver(request);
    segment.validate();
    AnalysisOptions analysis;
    analysis.window = options_.window;
    analysis.mode = FilterMode::Causal;
    const RecordingMeasurement m = measure_recording(segment, analysis);
    if (m.steps.size() != 1) throw BackendError("segment does not hold exactly one stimulation step");
    for (std::size_t c = 0; c < m.muscles.size(); ++c) p2p.emplace_back(m.muscles[c], m.steps[0].p2p_uv[c]);
  } catch (const std::exception& e) {
    failure = e.what();
  }

  std::lock_guard lock(mu_);
  if (generation != generation_ || state_.kind != StateKind::Ramping) {
    result.state_after = state_.kind;
    result.curves = state_.curves;
    return result;
  }
  if (!failure.empty()) {
    ++generation_;
    transition_locked(StateKind::Stopped, Json{{"reason", "backend_error"}, {"detail", failure}});
    persist_run_locked();
    throw BackendError(failure);
  }

  for (const auto& [muscle, v] : p2p) result.p2p_uv[muscle] = v;
  add_step_points(state_.curves, *state_.config, request.pulse.amplitude_ua, p2p);
  state_.steps_completed += 1;
  state_.amplitude_ua = request.pulse.amplitude_ua;
  if (!runs_.empty()) {
    append_segment(runs_.back().recording, segment);
    runs_.back().curves = state_.curves;
  }

  Json p2p_json = Json::object();
  for (const auto& [muscle, v] : p2p) p2p_json[muscle] = v;
  append_log_locked({0, "", "step", "Ramping", "Ramping",
                     Json{{"step_index", request.step_index},
                          {"amplitude_uA", request.pulse.amplitude_ua},
                          {"p2p_uV", p2p_json}}});

  const bool saturated = saturated_locked();
  Json normalized = Json::object();
  for (const auto& c : state_.curves) normalized[c.muscle] = c.points.back().normalized;
  publish_locked(Json{{"kind", "step_result"},
                      {"seq", seq_},
                      {"config", state_.config->name()},
                      {"step_index", request.step_index},
                      {"amplitude_uA", request.pulse.amplitude_ua},
                      {"p2p_uV", p2p_json},
                      {"normalized", normalized},
                      {"saturated", saturated}});

  if (saturated) {
    transition_locked(StateKind::Saturated, Json::object());
  } else if (next_amplitude_locked() > state_.ramp.max_amplitude_ua + kAmplitudeSlack) {
    transition_locked(StateKind::Stopped, Json{{"reason", "max_reached"}});
  }
  persist_run_locked();
  result.p2p_uv.clear();
  for (const auto& [muscle, v] : p2p) result.p2p_uv[muscle] = v;
  result.saturated = saturated;
  result.curves = state_.curves;
  result.state_after = state_.kind;
  return result;
}

SessionState Session::run_to_saturation() {
  if (const auto k = state().kind; k != StateKind::Configured && k != StateKind::Ramping) {
    throw ProtocolError("run_to_saturation is not allowed in state " + std::string(to_string(k)));
  }
  while (true) {
    {
      const auto k = state().kind;
      if (k != StateKind::Configured && k != StateKind::Ramping) break;
    }
    const StepResult r = run_step();
    if (r.state_after != StateKind::Ramping) break;
  }
  return state();
}

SessionState Session::abort(const std::string& reason) {
  std::lock_guard lock(mu_);
  ++generation_;
  transition_locked(StateKind::Stopped, Json{{"reason", reason.empty() ? std::string("aborted") : reason}});
  persist_run_locked();
  return state_;
}

SessionState Session::mark_saturated() {
  std::lock_guard lock(mu_);
  if (state_.kind != StateKind::Ramping) {
    throw ProtocolError("mark_saturated is not allowed in state " + std::string(to_string(state_.kind)));
  }
  ++generation_;
  transition_locked(StateKind::Saturated, Json{{"by", "operator"}});
  persist_run_locked();
  return state_;
}

std::shared_ptr<Subscription> Session::subscribe() { return subscribe(options_.subscriber_capacity); }

std::shared_ptr<Subscription> Session::subscribe(std::size_t capacity) {
  auto sub = std::make_shared<Subscription>(capacity);
  std::lock_guard lock(mu_);
  sub->push(Json{{"kind", "snapshot"}, {"seq", seq_}, {"state", to_json(state_)}});
  subscribers_.push_back(sub);
  return sub;
}

SessionState Session::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::vector<SessionLogEntry> Session::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

void Session::persist_run_locked() {
  if (!options_.persist_dir) return;
  if (!runs_.empty() && !runs_.back().recording.channels.empty()) {
    const auto& run = runs_.back();
    char name[64];
    std::snprintf(name, sizeof name, "%02d_%s.cbr", run.index, run.config.name().c_str());
    Recording rec = run.recording;
    rec.metadata.timestamp = options_.clock();
    save_recording(rec, *options_.persist_dir / name);
  }
  flush_exports_locked();
}

void Session::flush_exports() {
  std::lock_guard lock(mu_);
  flush_exports_locked();
}

void Session::flush_exports_locked() {
  if (!options_.persist_dir) return;
  const auto& dir = *options_.persist_dir;
  std::vector<RecruitmentCurve> all;
  Json runs = Json::array();
  for (const auto& run : runs_) {
    all.insert(all.end(), run.curves.begin(), run.curves.end());
    char name[64];
    std::snprintf(name, sizeof name, "%02d_%s.cbr", run.index, run.config.name().c_str());
    const std::size_t steps = run.curves.empty() ? 0 : run.curves.front().points.size();
    runs.push_back({{"index", run.index},
                    {"config", run.config.name()},
                    {"steps", steps},
                    {"recording", run.recording.channels.empty() ? Json(nullptr) : Json(name)}});
  }
  normalize_curves(all, NormalizationScope::PerMuscle);
  write_table_file(curve_rows(all), schemas::curves(), dir / "curves.csv");
  std::vector<Row> polar;
  try {
    polar = polar_rows(build_polar_map(all));
  } catch (const DomainError&) {
    // no STR configuration with a common intensity yet
  }
  write_table_file(polar, schemas::polar(), dir / "polar.csv");
  Json manifest{{"format", "cuffbench-session"},
                {"version", 1},
                {"normalization", std::string(to_string(NormalizationScope::PerMuscle))},
                {"state", to_json(state_)},
                {"log", "session.log"},
                {"runs", runs}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Replay

SessionState replay_log(std::span<const SessionLogEntry> log) {
  SessionState s;
  std::uint64_t last_seq = 0;
  for (const auto& e : log) {
    const std::string where = "entry " + std::to_string(e.seq);
    if (e.seq <= last_seq) throw ParseError("sequence numbers must increase", where);
    last_seq = e.seq;
    const auto from = parse_state_kind(e.from_state);
    const auto to = parse_state_kind(e.to_state);
    if (!from || !to) throw ParseError("unknown state name", where);
    if (*from != s.kind) {
      throw ParseError("entry starts in " + e.from_state + " but the trace is in " + std::string(to_string(s.kind)),
                       where);
    }
    try {
      if (e.kind == "transition") {
        if (!transition_allowed(*from, *to)) throw ParseError("illegal transition", where);
        if (*to == StateKind::Configured) {
          s.config = StimConfig::from_name(e.payload.at("config").get<std::string>());
          s.ramp = ramp_spec_from_json(e.payload.at("ramp"));
          s.pulse = pulse_spec_from_json(e.payload.at("pulse"));
          s.steps_completed = 0;
          s.amplitude_ua = 0.0;
          s.stop_reason.clear();
          s.curves.clear();
        } else if (*to == StateKind::Stopped) {
          s.stop_reason = e.payload.value("reason", "");
        }
        s.kind = *to;
      } else if (e.kind == "step") {
        if (*from != StateKind::Ramping || *to != StateKind::Ramping) {
          throw ParseError("step outside Ramping", where);
        }
        std::vector<std::pair<MuscleId, double>> p2p;
        for (const auto& [m, v] : e.payload.at("p2p_uV").items()) p2p.emplace_back(m, v.get<double>());
        const double amp = e.payload.at("amplitude_uA").get<double>();
        add_step_points(s.curves, *s.config, amp, p2p);
        s.steps_completed += 1;
        s.amplitude_ua = amp;
      } else if (e.kind != "note") {
        throw ParseError("unknown entry kind '" + e.kind + "'", where);
      }
    } catch (const Json::exception& ex) {
      throw ParseError(std::string("bad payload: ") + ex.what(), where);
    } catch (const DomainError& ex) {
      throw ParseError(std::string("bad payload: ") + ex.what(), where);
    }
  }
  return s;
}

}  // namespace cuffbench
