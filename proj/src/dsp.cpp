#include "cuffbench/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "cuffbench/errors.hpp"

namespace cuffbench {

namespace {

using cplx = std::complex<double>;

struct Zpk {
  std::vector<cplx> zeros;
  std::vector<cplx> poles;
};

double prewarp(double f_hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * f_hz / fs); }

std::vector<cplx> butterworth_prototype(int n) {
  std::vector<cplx> poles;
  for (int k = 0; k < n; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n);
    poles.push_back(std::polar(1.0, theta));
  }
  return poles;
}

// Roots of s^2 + b s + c.
std::pair<cplx, cplx> quadratic_roots(cplx b, cplx c) {
  const cplx d = std::sqrt(b * b - 4.0 * c);
  return {(-b + d) / 2.0, (-b - d) / 2.0};
}

Zpk analog_design(FilterKind kind, std::span<const double> warped, int order) {
  Zpk zpk;
  switch (kind) {
    case FilterKind::Lowpass:
      for (cplx p : butterworth_prototype(order)) zpk.poles.push_back(p * warped[0]);
      break;
    case FilterKind::Highpass:
      for (cplx p : butterworth_prototype(order)) {
        zpk.poles.push_back(warped[0] / p);
        zpk.zeros.emplace_back(0.0, 0.0);
      }
      break;
    case FilterKind::Bandpass: {
      const double w0 = std::sqrt(warped[0] * warped[1]);
      const double bw = warped[1] - warped[0];
      for (cplx p : butterworth_prototype(order / 2)) {
        auto [r1, r2] = quadratic_roots(-p * bw, w0 * w0);
        zpk.poles.push_back(r1);
        zpk.poles.push_back(r2);
        zpk.zeros.emplace_back(0.0, 0.0);
      }
      break;
    }
    case FilterKind::Notch: {
      const double w0 = std::sqrt(warped[0] * warped[1]);
      const double bw = warped[1] - warped[0];
      for (cplx p : butterworth_prototype(order / 2)) {
        auto [r1, r2] = quadratic_roots(-bw / p, w0 * w0);
        zpk.poles.push_back(r1);
        zpk.poles.push_back(r2);
        zpk.zeros.emplace_back(0.0, w0);
        zpk.zeros.emplace_back(0.0, -w0);
      }
      break;
    }
  }
  return zpk;
}

Zpk bilinear(const Zpk& analog, double fs) {
  const double k = 2.0 * fs;
  Zpk digital;
  for (cplx z : analog.zeros) digital.zeros.push_back((k + z) / (k - z));
  for (cplx p : analog.poles) digital.poles.push_back((k + p) / (k - p));
  while (digital.zeros.size() < digital.poles.size()) digital.zeros.emplace_back(-1.0, 0.0);
  return digital;
}

// Splits roots into second-order polynomial factors [1, c1, c2]; a lone real
// root becomes [1, -r, 0] and is placed last.
std::vector<std::array<double, 3>> quadratic_factors(const std::vector<cplx>& roots) {
  std::vector<std::array<double, 3>> out;
  std::vector<double> reals;
  for (cplx r : roots) {
    const double tol = 1e-10 * std::max(1.0, std::abs(r));
    if (std::abs(r.imag()) <= tol) {
      reals.push_back(r.real());
    } else if (r.imag() > 0) {
      out.push_back({1.0, -2.0 * r.real(), std::norm(r)});
    }
  }
  std::sort(reals.begin(), reals.end());
  std::size_t lo = 0;
  std::size_t hi = reals.size();
  while (hi - lo >= 2) {
    const double a = reals[lo++];
    const double b = reals[--hi];
    out.push_back({1.0, -(a + b), a * b});
  }
  if (hi - lo == 1) out.push_back({1.0, -reals[lo], 0.0});
  return out;
}

void validate_design_inputs(FilterKind kind, std::span<const double> edges, int order, double fs) {
  if (!(fs > 0.0)) throw DomainError("sample rate must be positive");
  if (order < 1) throw DomainError("filter order must be >= 1");
  const bool band = kind == FilterKind::Bandpass || kind == FilterKind::Notch;
  const std::size_t want = band ? 2 : 1;
  if (edges.size() != want) {
    throw DomainError(band ? "band filters need two edge frequencies" : "filter needs one edge frequency");
  }
  if (band && order % 2 != 0) throw DomainError("band filter order must be even");
  for (double e : edges) {
    if (!(e > 0.0) || !(e < fs / 2.0)) {
      throw DomainError("edge frequency " + std::to_string(e) + " Hz outside (0, Nyquist)");
    }
  }
  if (band && !(edges[0] < edges[1])) throw DomainError("band edges must be increasing");
}

}  // namespace

std::complex<double> FilterDesign::response(double f_hz) const {
  const cplx zinv = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / sample_rate_hz);
  cplx h(1.0, 0.0);
  for (const auto& s : sections) {
    h *= (s.b0 + s.b1 * zinv + s.b2 * zinv * zinv) / (1.0 + s.a1 * zinv + s.a2 * zinv * zinv);
  }
  return h;
}

FilterDesign design_butterworth(FilterKind kind, std::span<const double> edges_hz, int order,
                                double sample_rate_hz) {
  validate_design_inputs(kind, edges_hz, order, sample_rate_hz);

  std::vector<double> warped;
  for (double e : edges_hz) warped.push_back(prewarp(e, sample_rate_hz));
  const Zpk digital = bilinear(analog_design(kind, warped, order), sample_rate_hz);

  const auto den = quadratic_factors(digital.poles);
  const auto num = quadratic_factors(digital.zeros);
  if (den.size() != num.size()) throw DomainError("internal: unbalanced section factorization");

  FilterDesign design;
  design.kind = kind;
  design.edges_hz.assign(edges_hz.begin(), edges_hz.end());
  design.order = order;
  design.sample_rate_hz = sample_rate_hz;
  for (std::size_t i = 0; i < den.size(); ++i) {
    design.sections.push_back({num[i][0], num[i][1], num[i][2], den[i][1], den[i][2]});
  }

  // Unit gain in the passband reference point.
  double f_ref = 0.0;
  if (kind == FilterKind::Highpass) {
    f_ref = sample_rate_hz / 2.0;
  } else if (kind == FilterKind::Bandpass) {
    const double w0 = std::sqrt(warped[0] * warped[1]);
    f_ref = sample_rate_hz / std::numbers::pi * std::atan(w0 / (2.0 * sample_rate_hz));
  }
  const double g = std::abs(design.response(f_ref));
  const double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(design.sections.size()));
  for (auto& s : design.sections) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return design;
}

FilterDesign design_notch(double center_hz, double q, double sample_rate_hz) {
  if (!(q > 0.0)) throw DomainError("notch quality factor must be positive");
  if (!(center_hz > 0.0)) throw DomainError("notch centre must be positive");
  const double half = 1.0 / (2.0 * q);
  const double lo = center_hz * (std::sqrt(1.0 + half * half) - half);
  const std::array<double, 2> edges{lo, lo + center_hz / q};
  return design_butterworth(FilterKind::Notch, edges, 2, sample_rate_hz);
}

namespace {

void run_cascade(std::vector<double>& x, const std::vector<Biquad>& sections) {
  for (const auto& s : sections) {
    double z1 = 0.0;
    double z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace

std::vector<double> apply_filter(std::span<const double> input, const FilterDesign& design,
                                 FilterMode mode) {
  std::vector<double> y(input.begin(), input.end());
  run_cascade(y, design.sections);
  if (mode == FilterMode::ZeroPhase) {
    std::reverse(y.begin(), y.end());
    run_cascade(y, design.sections);
    std::reverse(y.begin(), y.end());
  }
  return y;
}

std::vector<double> emulate_acquisition(std::span<const double> raw_uv, double sample_rate_hz,
                                        const AcquisitionChain& chain) {
  std::vector<double> x(raw_uv.begin(), raw_uv.end());
  for (double& v : x) v *= chain.gain;
  const std::array<double, 2> band{chain.band_low_hz, chain.band_high_hz};
  x = apply_filter(x, design_butterworth(FilterKind::Bandpass, band, chain.band_order, sample_rate_hz),
                   FilterMode::Causal);
  return apply_filter(x, design_notch(chain.notch_hz, chain.notch_q, sample_rate_hz), FilterMode::Causal);
}

SignalBlock to_signal_block(const Recording& recording) {
  SignalBlock block;
  block.sample_rate_hz = recording.sample_rate_hz;
  block.events = recording.stim_events;
  block.acquisition_gain = recording.metadata.acquisition_gain;
  for (const auto& ch : recording.channels) {
    block.muscles.push_back(ch.muscle);
    block.channels.emplace_back(ch.samples_uv.begin(), ch.samples_uv.end());
  }
  return block;
}

EpochExtraction extract_epochs(const SignalBlock& block, EpochWindow window) {
  if (!(window.start_ms >= 0.0)) throw DomainError("epoch window must start at or after the stimulus");
  if (!(window.end_ms > window.start_ms)) throw DomainError("epoch window is empty");

  const double fs = block.sample_rate_hz;
  const auto s0 = static_cast<std::int64_t>(std::llround(window.start_ms * fs / 1000.0));
  const auto s1 = static_cast<std::int64_t>(std::llround(window.end_ms * fs / 1000.0));

  // Shortest spacing between consecutive pulses of one train.
  std::int64_t interval = 0;
  for (std::size_t i = 1; i < block.events.size(); ++i) {
    const auto& a = block.events[i - 1];
    const auto& b = block.events[i];
    if (b.pulse_index != a.pulse_index + 1) continue;
    const std::int64_t d = b.sample - a.sample;
    if (d > 0 && (interval == 0 || d < interval)) interval = d;
  }
  if (interval > 0 && s1 > interval) {
    throw DomainError("epoch window of " + std::to_string(window.end_ms) +
                      " ms exceeds the inter-pulse interval of " +
                      std::to_string(1000.0 * static_cast<double>(interval) / fs) + " ms");
  }

  const auto n = block.channels.empty() ? std::int64_t{0}
                                        : static_cast<std::int64_t>(block.channels.front().size());
  EpochExtraction out;
  std::vector<std::map<double, EpochGroup>> grouped(block.channels.size());
  for (const auto& ev : block.events) {
    const std::int64_t begin = ev.sample + s0;
    const std::int64_t end = ev.sample + s1;
    if (begin < 0 || end > n) {
      ++out.skipped_events;
      continue;
    }
    for (std::size_t c = 0; c < block.channels.size(); ++c) {
      const auto& src = block.channels[c];
      Epoch e;
      e.samples.assign(src.begin() + begin, src.begin() + end);
      e.window = window;
      e.source_event = ev;
      auto& g = grouped[c][ev.amplitude_ua];
      g.amplitude_ua = ev.amplitude_ua;
      g.epochs.push_back(std::move(e));
    }
  }
  for (std::size_t c = 0; c < block.channels.size(); ++c) {
    ChannelEpochs ce;
    ce.muscle = block.muscles[c];
    for (auto& [amp, g] : grouped[c]) ce.groups.push_back(std::move(g));
    out.channels.push_back(std::move(ce));
  }
  return out;
}

EpochExtraction extract_epochs(const Recording& recording, EpochWindow window) {
  return extract_epochs(to_signal_block(recording), window);
}

std::vector<double> average_epochs(std::span<const Epoch> epochs) {
  if (epochs.empty()) throw DomainError("cannot average an empty epoch group");
  const std::size_t len = epochs.front().samples.size();
  std::vector<double> mean(len, 0.0);
  for (const auto& e : epochs) {
    if (e.samples.size() != len) throw DomainError("epoch length mismatch in average");
    for (std::size_t i = 0; i < len; ++i) mean[i] += e.samples[i];
  }
  const double n = static_cast<double>(epochs.size());
  for (double& v : mean) v /= n;
  return mean;
}

double peak_to_peak(std::span<const double> waveform) {
  if (waveform.empty()) throw DomainError("peak-to-peak of an empty waveform");
  const auto [lo, hi] = std::minmax_element(waveform.begin(), waveform.end());
  return *hi - *lo;
}

namespace {

SignalBlock filtered_block(const Recording& recording, const AnalysisOptions& options) {
  recording.validate();
  SignalBlock block = to_signal_block(recording);
  if (options.band_low_hz > 0.0) {
    const std::array<double, 2> band{options.band_low_hz, options.band_high_hz};
    const auto design =
        design_butterworth(FilterKind::Bandpass, band, options.band_order, block.sample_rate_hz);
    for (auto& ch : block.channels) ch = apply_filter(ch, design, options.mode);
  }
  return block;
}

// Input-referred epochs for one recording: muscle -> amplitude -> epochs.
using PooledEpochs = std::map<MuscleId, std::map<double, std::vector<Epoch>>>;

int pool_epochs(const Recording& recording, const AnalysisOptions& options, PooledEpochs& pool) {
  const SignalBlock block = filtered_block(recording, options);
  EpochExtraction ex = extract_epochs(block, options.window);
  const double gain = block.acquisition_gain > 0.0 ? block.acquisition_gain : 1.0;
  for (auto& ch : ex.channels) {
    for (auto& g : ch.groups) {
      auto& dst = pool[ch.muscle][g.amplitude_ua];
      for (auto& e : g.epochs) {
        for (double& v : e.samples) v /= gain;
        dst.push_back(std::move(e));
      }
    }
  }
  return ex.skipped_events;
}

}  // namespace

RecordingMeasurement measure_recording(const Recording& recording, const AnalysisOptions& options) {
  PooledEpochs pool;
  RecordingMeasurement m;
  m.skipped_events = pool_epochs(recording, options, pool);
  for (const auto& ch : recording.channels) m.muscles.push_back(ch.muscle);

  std::map<double, StepMeasurement> steps;
  for (std::size_t c = 0; c < m.muscles.size(); ++c) {
    for (const auto& [amp, epochs] : pool[m.muscles[c]]) {
      auto& s = steps[amp];
      s.amplitude_ua = amp;
      s.epoch_count = static_cast<int>(epochs.size());
      s.p2p_uv.resize(m.muscles.size(), 0.0);
      s.p2p_uv[c] = peak_to_peak(average_epochs(epochs));
    }
  }
  for (auto& [amp, s] : steps) m.steps.push_back(std::move(s));
  return m;
}

void normalize_curves(std::vector<RecruitmentCurve>& curves, NormalizationScope scope) {
  std::map<MuscleId, double> per_muscle;
  double global = 0.0;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      per_muscle[c.muscle] = std::max(per_muscle[c.muscle], p.mean_p2p_uv);
      global = std::max(global, p.mean_p2p_uv);
    }
  }
  for (auto& c : curves) {
    const double denom = scope == NormalizationScope::Global ? global : per_muscle[c.muscle];
    c.scope = scope;
    c.normalizable = denom > 0.0;
    for (auto& p : c.points) p.normalized = c.normalizable ? p.mean_p2p_uv / denom : 0.0;
  }
}

std::vector<RecruitmentCurve> build_recruitment_curves(std::span<const Recording> recordings,
                                                       const AnalysisOptions& options) {
  if (recordings.empty()) return {};

  std::vector<MuscleId> muscles;
  for (const auto& ch : recordings.front().channels) muscles.push_back(ch.muscle);
  const std::set<MuscleId> label_set(muscles.begin(), muscles.end());

  std::map<int, std::pair<StimConfig, PooledEpochs>> by_config;
  for (const auto& rec : recordings) {
    std::set<MuscleId> labels;
    for (const auto& ch : rec.channels) labels.insert(ch.muscle);
    if (labels != label_set) throw DomainError("recordings do not share muscle labels");
    const StimConfig config = StimConfig::from_name(rec.metadata.config_id);
    auto& slot = by_config[config.ordinal()];
    slot.first = config;
    pool_epochs(rec, options, slot.second);
  }

  std::vector<RecruitmentCurve> curves;
  for (auto& [ordinal, entry] : by_config) {
    auto& [config, pool] = entry;
    for (const auto& muscle : muscles) {
      RecruitmentCurve curve;
      curve.muscle = muscle;
      curve.config = config;
      for (const auto& [amp, epochs] : pool[muscle]) {
        curve.points.push_back({amp, peak_to_peak(average_epochs(epochs)), 0.0});
      }
      curves.push_back(std::move(curve));
    }
  }
  normalize_curves(curves, options.scope);
  return curves;
}

}  // namespace cuffbench
