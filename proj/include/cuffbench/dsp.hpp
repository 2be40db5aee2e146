#pragma once

// Digital filtering, acquisition-chain emulation and the offline eEMG
// pipeline: epoching, M-wave averaging, peak-to-peak, recruitment curves.

#include <complex>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "cuffbench/recording.hpp"
#include "cuffbench/recruitment.hpp"

namespace cuffbench {

enum class FilterKind { Lowpass, Highpass, Bandpass, Notch };
enum class FilterMode { Causal, ZeroPhase };

/// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct FilterDesign {
  FilterKind kind = FilterKind::Lowpass;
  std::vector<double> edges_hz;
  int order = 1;
  double sample_rate_hz = kDefaultSampleRateHz;
  std::vector<Biquad> sections;

  /// Frequency response of the section cascade at `f_hz`.
  std::complex<double> response(double f_hz) const;
  double magnitude(double f_hz) const { return std::abs(response(f_hz)); }
};

/// Butterworth design by bilinear transform with pre-warped edges.
///
/// `order` is the overall filter order. Lowpass/highpass take one edge;
/// bandpass and notch (band-stop) take {low, high} and need an even order,
/// i.e. order / 2 poles per band edge. Throws DomainError when an edge is not
/// in (0, Nyquist), edges are not increasing, or the order is invalid.
FilterDesign design_butterworth(FilterKind kind, std::span<const double> edges_hz, int order,
                                double sample_rate_hz);

/// Second-order band-stop centred on `center_hz` with quality factor `q`
/// (stop bandwidth center/q, edges placed geometrically about the centre).
FilterDesign design_notch(double center_hz, double q, double sample_rate_hz);

/// Same-length output. ZeroPhase runs the cascade forward then backward.
std::vector<double> apply_filter(std::span<const double> input, const FilterDesign& design,
                                 FilterMode mode);

struct AcquisitionChain {
  double gain = 5000.0;
  double band_low_hz = 1.0;
  double band_high_hz = 5000.0;
  int band_order = 4;
  double notch_hz = 50.0;
  double notch_q = 10.0;
};

/// Amplifier emulation: gain, then causal band-pass, then causal notch.
std::vector<double> emulate_acquisition(std::span<const double> raw_uv, double sample_rate_hz,
                                        const AcquisitionChain& chain = {});

struct EpochWindow {
  double start_ms = 2.0;
  double end_ms = 25.0;
};

struct Epoch {
  std::vector<double> samples;
  EpochWindow window;
  StimEvent source_event;
};

struct EpochGroup {
  double amplitude_ua = 0.0;
  std::vector<Epoch> epochs;
};

struct ChannelEpochs {
  MuscleId muscle;
  std::vector<EpochGroup> groups;  // ascending amplitude
};

struct EpochExtraction {
  std::vector<ChannelEpochs> channels;
  int skipped_events = 0;  // events whose window ran past the recording end
};

/// A recording converted to double precision, optionally filtered, with the
/// acquisition gain still applied.
struct SignalBlock {
  double sample_rate_hz = kDefaultSampleRateHz;
  std::vector<MuscleId> muscles;
  std::vector<std::vector<double>> channels;
  std::vector<StimEvent> events;
  double acquisition_gain = 1.0;
};

SignalBlock to_signal_block(const Recording& recording);

/// One epoch per event per channel, covering samples
/// [event + start*fs, event + end*fs). Throws DomainError when the window is
/// empty, starts before the stimulus, or outlasts the inter-pulse interval.
EpochExtraction extract_epochs(const SignalBlock& block, EpochWindow window);
EpochExtraction extract_epochs(const Recording& recording, EpochWindow window);

/// Pointwise mean. Throws DomainError on an empty group or unequal lengths.
std::vector<double> average_epochs(std::span<const Epoch> epochs);

/// max - min. Throws DomainError on empty input.
double peak_to_peak(std::span<const double> waveform);

struct AnalysisOptions {
  EpochWindow window;
  NormalizationScope scope = NormalizationScope::PerMuscle;
  FilterMode mode = FilterMode::ZeroPhase;
  double band_low_hz = 10.0;
  double band_high_hz = 500.0;
  int band_order = 4;
};

/// Per-amplitude, per-channel input-referred p2p of the averaged M-wave.
struct StepMeasurement {
  double amplitude_ua = 0.0;
  int epoch_count = 0;
  std::vector<double> p2p_uv;  // indexed like SignalBlock::muscles
};

struct RecordingMeasurement {
  std::vector<MuscleId> muscles;
  std::vector<StepMeasurement> steps;  // ascending amplitude
  int skipped_events = 0;
};

/// Band-pass, epoch, average, peak-to-peak for one recording.
RecordingMeasurement measure_recording(const Recording& recording, const AnalysisOptions& options);

/// Fills `normalized` for every curve: divides by the per-muscle maximum
/// (PerMuscle) or the maximum over all curves (Global). Groups whose maximum
/// is zero are flagged unnormalizable and keep normalized = 0.
void normalize_curves(std::vector<RecruitmentCurve>& curves, NormalizationScope scope);

/// One curve per muscle x configuration. Recordings of the same
/// configuration pool their epochs. Throws DomainError when recordings
/// disagree on muscle labels or a recording names no known configuration.
std::vector<RecruitmentCurve> build_recruitment_curves(std::span<const Recording> recordings,
                                                       const AnalysisOptions& options = {});

}  // namespace cuffbench
