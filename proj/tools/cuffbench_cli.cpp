// cuffbench: offline analysis, simulator sweeps, session serving and
// histology exports.
//
// Exit codes: 0 success, 2 usage error, 3 input error, 4 internal error.

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cuffbench/dsp.hpp"
#include "cuffbench/errors.hpp"
#include "cuffbench/histology.hpp"
#include "cuffbench/io.hpp"
#include "cuffbench/nerve_sim.hpp"
#include "cuffbench/selectivity.hpp"
#include "cuffbench/server.hpp"
#include "cuffbench/session.hpp"

namespace fs = std::filesystem;
using namespace cuffbench;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitInternal = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path default_out_dir() {
  if (const char* env = std::getenv("CUFFBENCH_OUT"); env != nullptr && *env != '\0') return env;
  return "cuffbench-out";
}

EpochWindow parse_window(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw UsageError("--window-ms expects A,B");
  try {
    std::size_t used_a = 0, used_b = 0;
    const std::string a = text.substr(0, comma), b = text.substr(comma + 1);
    EpochWindow w{std::stod(a, &used_a), std::stod(b, &used_b)};
    if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument(text);
    if (!(w.start_ms >= 0.0) || !(w.end_ms > w.start_ms)) throw UsageError("--window-ms needs 0 <= A < B");
    return w;
  } catch (const std::logic_error&) {
    throw UsageError("--window-ms expects two numbers, got '" + text + "'");
  }
}

std::vector<StimConfig> parse_configs(const std::string& text) {
  if (text == "all") return all_configs();
  std::vector<StimConfig> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(StimConfig::from_name(item));
    } catch (const DomainError&) {
      throw UsageError("unknown configuration '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("--configs is empty");
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Loads a nerve model, optionally overriding its seed before fibers are sampled.
NerveModel load_model(const fs::path& path, std::optional<std::uint64_t> seed) {
  Json j = parse_json_document(read_text_file(path));
  if (seed) j["rng_seed"] = *seed;
  return nerve_model_from_json(j);
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::vector<std::string> inputs;
  std::string window = "2,25";
  std::string norm = "per-muscle";
  double min_target = 0.0;
  double max_offtarget = 1.0;
};

int cmd_analyze(const AnalyzeArgs& args, const fs::path& out) {
  if (args.inputs.empty()) throw UsageError("analyze needs at least one recording");
  AnalysisOptions opts;
  opts.window = parse_window(args.window);
  try {
    opts.scope = parse_scope(args.norm);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  std::vector<Recording> recordings;
  for (const auto& path : args.inputs) {
    try {
      recordings.push_back(load_recording(path));
    } catch (const std::exception& e) {
      throw InputError(path + ": " + e.what());
    }
  }
  std::vector<RecruitmentCurve> curves;
  try {
    curves = build_recruitment_curves(recordings, opts);
  } catch (const DomainError& e) {
    throw InputError(e.what());
  }

  fs::create_directories(out);
  write_table_file(curve_rows(curves), schemas::curves(), out / "curves.csv");

  bool has_polar = false;
  try {
    write_table_file(polar_rows(build_polar_map(curves)), schemas::polar(), out / "polar.csv");
    has_polar = true;
  } catch (const DomainError&) {
  }

  std::vector<MuscleId> muscles;
  for (const auto& c : curves) {
    if (std::find(muscles.begin(), muscles.end(), c.muscle) == muscles.end()) muscles.push_back(c.muscle);
  }
  const SelectivityConstraints constraints{args.min_target, args.max_offtarget};
  std::vector<Row> sel;
  for (const auto& m : muscles) {
    const auto records = find_selective_points(std::span<const RecruitmentCurve>(curves), m, constraints);
    const auto rows = selectivity_rows(records);
    sel.insert(sel.end(), rows.begin(), rows.end());
  }
  write_table_file(sel, schemas::selectivity(), out / "selectivity.csv");

  Json unnormalizable = Json::array();
  for (const auto& c : curves) {
    if (!c.normalizable) unnormalizable.push_back(c.config.name() + "/" + c.muscle);
  }
  Json manifest{{"format", "cuffbench-analysis"},
                {"version", 1},
                {"normalization", std::string(to_string(opts.scope))},
                {"window_ms", {opts.window.start_ms, opts.window.end_ms}},
                {"inputs", args.inputs},
                {"tables", has_polar ? Json{"curves.csv", "polar.csv", "selectivity.csv"}
                                     : Json{"curves.csv", "selectivity.csv"}},
                {"unnormalizable", unnormalizable}};
  write_text_file(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "analyzed " << recordings.size() << " recording(s), " << curves.size() << " curve(s) -> "
            << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string model;
  std::optional<std::uint64_t> seed;
  std::string configs = "all";
  double noise_uv = 0.0;
  RampSpec ramp;
  PulseSpec pulse;
  bool raw = false;
};

int cmd_simulate(const SimulateArgs& args, const fs::path& out) {
  const auto configs = parse_configs(args.configs);
  NerveModel nerve;
  try {
    nerve = load_model(args.model, args.seed);
  } catch (const std::exception& e) {
    throw InputError(args.model + ": " + e.what());
  }
  try {
    args.pulse.validate();
    args.ramp.validate(args.pulse.frequency_hz);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  SynthesisOptions opts;
  opts.emulate_acquisition = !args.raw;
  if (args.seed) opts.noise_seed = *args.seed;
  const auto amplitudes = ramp_amplitudes(args.ramp);

  fs::create_directories(out);
  write_table_file(pattern_rows(configs), schemas::pattern(), out / "patterns.csv");
  for (const auto& config : configs) {
    SynthesisOptions per = opts;
    if (per.noise_seed) per.noise_seed = *per.noise_seed + static_cast<std::uint64_t>(config.ordinal());
    Recording rec = synthesize_steps(nerve, config, amplitudes, args.ramp, args.pulse, {}, args.noise_uv, per);
    save_recording(rec, out / (config.name() + ".cbr"));
    std::vector<Row> truth;
    for (double amp : amplitudes) {
      const auto fractions = simulate_recruitment(nerve, config, amp);
      for (const auto& m : nerve.muscles) truth.push_back({config.name(), amp, m, fractions.at(m)});
    }
    write_table_file(truth, schemas::truth(), out / ("truth_" + config.name() + ".csv"));
  }
  std::cout << "simulated " << configs.size() << " configuration(s) x " << amplitudes.size() << " step(s) -> "
            << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string model;
  bool stub = false;
  std::string bind = "127.0.0.1:7878";
  std::optional<std::uint64_t> seed;
  double noise_uv = 0.0;
  double max_current_ua = 250.0;
  std::string stub_channels = "FCR,FDS,PT,ECR";
  std::string window = "2,25";
};

int cmd_serve(const ServeArgs& args, const fs::path& out) {
  if (args.stub == !args.model.empty()) throw UsageError("serve needs exactly one of --model FILE or --stub");
  BindAddress address;
  try {
    address = parse_bind_address(args.bind);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  std::shared_ptr<StimBackend> backend;
  if (args.stub) {
    backend = std::make_shared<StubBackend>(args.max_current_ua, split_list(args.stub_channels));
  } else {
    NerveModel nerve;
    try {
      nerve = load_model(args.model, args.seed);
    } catch (const std::exception& e) {
      throw InputError(args.model + ": " + e.what());
    }
    SynthesisOptions synth;
    if (args.seed) synth.noise_seed = *args.seed;
    backend = std::make_shared<SimulatorBackend>(std::move(nerve), args.max_current_ua, MWaveTemplate{},
                                                 args.noise_uv, synth);
  }

  // Block termination signals before any thread starts so sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGINT);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionOptions sopts;
  sopts.persist_dir = out;
  sopts.window = parse_window(args.window);
  Session session(backend, sopts);
  SessionServer server(session, address);
  try {
    server.start();
  } catch (const DomainError& e) {
    std::cerr << "cuffbench: " << e.what() << "\n";
    return kExitInput;
  }
  std::cout << "listening on " << address.host << ":" << server.port() << "\n" << std::flush;

  int sig = 0;
  sigwait(&signals, &sig);
  const auto k = session.state().kind;
  if (k == StateKind::Configured || k == StateKind::Ramping) session.abort("shutdown");
  server.stop();
  session.flush_exports();
  std::cout << "stopped in state " << to_string(session.state().kind) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct HistoArgs {
  std::vector<std::string> inputs;
  double radius_um = 150.0;
  double split_tolerance = 0.30;
};

int cmd_histo(const HistoArgs& args, const fs::path& out) {
  if (args.inputs.empty()) throw UsageError("histo needs at least one section file");
  if (!(args.radius_um > 0.0)) throw UsageError("--radius-um must be positive");

  struct Loaded {
    std::string path;
    std::string stem;
    FascicleSection section;
  };
  std::vector<Loaded> sections;
  std::vector<std::string> failures;
  for (const auto& path : args.inputs) {
    try {
      sections.push_back({path, fs::path(path).stem().string(), load_section(path)});
    } catch (const std::exception& e) {
      failures.push_back(path + ": " + e.what());
    }
  }
  if (!failures.empty()) {
    std::string msg;
    for (const auto& f : failures) msg += (msg.empty() ? "" : "\n") + f;
    throw InputError(msg);
  }
  std::stable_sort(sections.begin(), sections.end(),
                   [](const Loaded& a, const Loaded& b) { return a.section.z_um < b.section.z_um; });

  fs::create_directories(out);
  Json summary{{"format", "cuffbench-histology"}, {"version", 1}, {"radius_um", args.radius_um}};
  Json per_section = Json::array();
  for (const auto& s : sections) {
    const auto stats = motor_fiber_stats(s.section);
    Json entry{{"file", s.path}, {"z_um", s.section.z_um}, {"fascicles", s.section.fascicles.size()},
               {"fiber_counts_available", stats.available}};
    if (stats.available) {
      write_table_file(fiber_stats_rows(stats), schemas::fiber_stats(), out / ("fiber_stats_" + s.stem + ".csv"));
      entry["total_motor_fibers"] = stats.total_fibers;
      entry["concentration_index"] = stats.concentration_index;
    }
    per_section.push_back(entry);
  }
  summary["sections"] = per_section;

  Json pairs = Json::array();
  const MatchOptions mopts{args.radius_um, args.split_tolerance};
  for (std::size_t i = 0; i + 1 < sections.size(); ++i) {
    const auto& a = sections[i];
    const auto& b = sections[i + 1];
    const auto corr = match_fascicles(a.section, b.section, mopts);
    const std::string name = "correspondence_" + a.stem + "_" + b.stem + ".csv";
    write_table_file(correspondence_rows(corr), schemas::correspondence(), out / name);
    pairs.push_back({{"a", a.path},
                     {"b", b.path},
                     {"table", name},
                     {"matches", corr.matches.size()},
                     {"splits", corr.splits.size()},
                     {"unmatched_a", corr.unmatched_a.size()},
                     {"unmatched_b", corr.unmatched_b.size()}});
    std::cout << a.stem << " -> " << b.stem << ": " << corr.matches.size() << " match(es), " << corr.splits.size()
              << " split(s)\n";
  }
  summary["correspondences"] = pairs;
  write_text_file(out / "histology.json", summary.dump(2) + "\n");
  return 0;
}

void add_ramp_options(CLI::App* cmd, RampSpec& ramp, PulseSpec& pulse) {
  cmd->add_option("--start-ua", ramp.start_amplitude_ua, "First ramp amplitude (uA)")->capture_default_str();
  cmd->add_option("--step-ua", ramp.step_ua, "Ramp increment (uA)")->capture_default_str();
  cmd->add_option("--max-ua", ramp.max_amplitude_ua, "Ramp hard stop (uA)")->capture_default_str();
  cmd->add_option("--step-s", ramp.step_duration_s, "Step duration (s)")->capture_default_str();
  cmd->add_option("--pulses", ramp.pulses_per_step, "Pulses per step")->capture_default_str();
  cmd->add_option("--freq-hz", pulse.frequency_hz, "Pulse frequency (Hz)")->capture_default_str();
  cmd->add_option("--phase-us", pulse.cathodic_phase_width_us, "Cathodic phase width (us)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cuffbench: nerve-cuff selectivity bench"};
  app.require_subcommand(1);
  std::string out_dir;
  app.add_option("--out", out_dir, "Output directory (default: $CUFFBENCH_OUT or ./cuffbench-out)");

  AnalyzeArgs analyze;
  auto* a = app.add_subcommand("analyze", "Recruitment curves, polar map and selectivity from recordings");
  a->add_option("recordings", analyze.inputs, "Recording containers");
  a->add_option("--window-ms", analyze.window, "Epoch window A,B in ms after the stimulus")->capture_default_str();
  a->add_option("--norm", analyze.norm, "per-muscle | global")->capture_default_str();
  a->add_option("--min-target", analyze.min_target, "Minimum target recruitment")->capture_default_str();
  a->add_option("--max-offtarget", analyze.max_offtarget, "Maximum off-target recruitment")->capture_default_str();
  a->add_option("--out", out_dir, "Output directory");

  SimulateArgs simulate;
  std::uint64_t sim_seed = 0;
  auto* s = app.add_subcommand("simulate", "Synthesize recordings and ground-truth recruitment tables");
  s->add_option("--model", simulate.model, "Nerve model file")->required();
  auto* sim_seed_opt = s->add_option("--seed", sim_seed, "Seed for fiber sampling and noise");
  s->add_option("--configs", simulate.configs, "all | comma-separated RING,STR1..STR6")->capture_default_str();
  s->add_option("--noise-uv", simulate.noise_uv, "Additive noise RMS (uV)")->capture_default_str();
  s->add_flag("--raw", simulate.raw, "Skip the acquisition-chain emulation");
  add_ramp_options(s, simulate.ramp, simulate.pulse);
  s->add_option("--out", out_dir, "Output directory");

  ServeArgs serve;
  std::uint64_t serve_seed = 0;
  auto* v = app.add_subcommand("serve", "Run the session service until SIGTERM");
  v->add_option("--model", serve.model, "Nerve model file for the simulator backend");
  v->add_flag("--stub", serve.stub, "Use the hardware stub backend");
  v->add_option("--bind", serve.bind, "HOST:PORT")->capture_default_str();
  auto* serve_seed_opt = v->add_option("--seed", serve_seed, "Simulator seed");
  v->add_option("--noise-uv", serve.noise_uv, "Simulator noise RMS (uV)")->capture_default_str();
  v->add_option("--max-current-ua", serve.max_current_ua, "Backend current limit (uA)")->capture_default_str();
  v->add_option("--stub-channels", serve.stub_channels, "Stub channel labels")->capture_default_str();
  v->add_option("--window-ms", serve.window, "Epoch window A,B in ms")->capture_default_str();
  v->add_option("--out", out_dir, "Session directory");

  HistoArgs histo;
  auto* h = app.add_subcommand("histo", "Fascicle correspondence and motor-fiber statistics");
  h->add_option("sections", histo.inputs, "Section files");
  h->add_option("--radius-um", histo.radius_um, "Centroid match radius (um)")->capture_default_str();
  h->add_option("--split-tol", histo.split_tolerance, "Relative area tolerance for splits")->capture_default_str();
  h->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const fs::path out = out_dir.empty() ? default_out_dir() : fs::path(out_dir);
  try {
    if (*a) return cmd_analyze(analyze, out);
    if (*s) {
      if (*sim_seed_opt) simulate.seed = sim_seed;
      return cmd_simulate(simulate, out);
    }
    if (*v) {
      if (*serve_seed_opt) serve.seed = serve_seed;
      return cmd_serve(serve, out);
    }
    if (*h) return cmd_histo(histo, out);
  } catch (const UsageError& e) {
    std::cerr << "cuffbench: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "cuffbench: " << e.what() << "\n";
    return kExitInput;
  } catch (const ParseError& e) {
    std::cerr << "cuffbench: " << e.what() << "\n";
    return kExitInput;
  } catch (const DomainError& e) {
    std::cerr << "cuffbench: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "cuffbench: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
