#ifndef AFCMEM_SCENARIO_HPP
#define AFCMEM_SCENARIO_HPP

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "afcmem/coherence.hpp"
#include "afcmem/common.hpp"
#include "afcmem/ensemble.hpp"
#include "afcmem/io.hpp"
#include "afcmem/photonics.hpp"
#include "afcmem/propagation.hpp"

namespace afcmem::harness {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kOutputRootEnv = "AFCMEM_OUTPUT_ROOT";
inline constexpr const char* kConfigDirEnv = "AFCMEM_CONFIG_DIR";

// ---------------------------------------------------------------------------
// Schema access helpers: every violation reports a JSON-pointer-style path.
// ---------------------------------------------------------------------------

inline const json* find_path(const json& doc, const std::string& ptr) {
  try {
    const json::json_pointer jp(ptr);
    if (!doc.contains(jp)) return nullptr;
    return &doc.at(jp);
  } catch (const json::exception&) {
    fail(ErrorCode::SchemaError, "malformed JSON pointer: " + ptr);
  }
}

inline const json& require_path(const json& doc, const std::string& ptr) {
  const json* v = find_path(doc, ptr);
  require(v != nullptr, ErrorCode::SchemaError, "missing required config key: " + ptr);
  return *v;
}

inline double require_number(const json& doc, const std::string& ptr) {
  const json& v = require_path(doc, ptr);
  require(v.is_number(), ErrorCode::SchemaError, "expected a number at " + ptr);
  return v.get<double>();
}

inline double number_or(const json& doc, const std::string& ptr, double fallback) {
  const json* v = find_path(doc, ptr);
  if (!v) return fallback;
  require(v->is_number(), ErrorCode::SchemaError, "expected a number at " + ptr);
  return v->get<double>();
}

inline bool is_nonneg_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

inline std::uint64_t uint_or(const json& doc, const std::string& ptr, std::uint64_t fallback) {
  const json* v = find_path(doc, ptr);
  if (!v) return fallback;
  require(is_nonneg_integer(*v), ErrorCode::SchemaError,
          "expected a non-negative integer at " + ptr);
  return v->get<std::uint64_t>();
}

inline std::string require_string(const json& doc, const std::string& ptr) {
  const json& v = require_path(doc, ptr);
  require(v.is_string(), ErrorCode::SchemaError, "expected a string at " + ptr);
  return v.get<std::string>();
}

inline std::string string_or(const json& doc, const std::string& ptr, const std::string& fallback) {
  const json* v = find_path(doc, ptr);
  if (!v) return fallback;
  require(v->is_string(), ErrorCode::SchemaError, "expected a string at " + ptr);
  return v->get<std::string>();
}

inline std::pair<double, double> require_window(const json& doc, const std::string& ptr) {
  const json& v = require_path(doc, ptr);
  require(v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number(),
          ErrorCode::SchemaError, "expected [lo, hi] at " + ptr);
  return {v[0].get<double>(), v[1].get<double>()};
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// ScenarioConfig: a schema-validated JSON document with unit-suffixed keys.
// ---------------------------------------------------------------------------

inline const std::set<std::string>& known_kinds() {
  static const std::set<std::string> kinds{"decay_fit", "afc_echo", "multimode", "qubit_fidelity",
                                           "delay_line"};
  return kinds;
}

struct ScenarioConfig {
  json doc;

  static ScenarioConfig parse(const std::string& text) {
    ScenarioConfig cfg;
    try {
      cfg.doc = json::parse(text);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::SchemaError, std::string("config is not valid JSON: ") + e.what());
    }
    cfg.validate();
    return cfg;
  }

  void validate() const {
    require(doc.is_object() && !doc.empty(), ErrorCode::SchemaError,
            "config must be a non-empty object at /");
    require_string(doc, "/scenario/name");
    const std::string kind = require_string(doc, "/scenario/kind");
    require(known_kinds().count(kind) == 1, ErrorCode::SchemaError,
            "unknown scenario kind at /scenario/kind: " + kind);
    const json& seed = require_path(doc, "/scenario/seed");
    require(is_nonneg_integer(seed), ErrorCode::SchemaError,
            "expected a non-negative integer at /scenario/seed");
  }

  std::string name() const { return require_string(doc, "/scenario/name"); }
  std::string kind() const { return require_string(doc, "/scenario/kind"); }
  std::uint64_t seed() const { return require_path(doc, "/scenario/seed").get<std::uint64_t>(); }

  std::string serialize() const { return doc.dump(2) + "\n"; }
  std::uint64_t hash() const { return fnv1a(doc.dump()); }
  std::string hash_hex_str() const { return hash_hex(hash()); }
};

// ---------------------------------------------------------------------------
// Typed section loaders.
// ---------------------------------------------------------------------------

inline CombSpec comb_from(const json& doc) {
  CombSpec c;
  c.tooth_spacing_mhz = require_number(doc, "/comb/tooth_spacing_mhz");
  c.tooth_fwhm_mhz = require_number(doc, "/comb/tooth_fwhm_mhz");
  c.comb_depth = require_number(doc, "/comb/comb_depth");
  c.background_depth = require_number(doc, "/comb/background_depth");
  c.bandwidth_mhz = require_number(doc, "/comb/bandwidth_mhz");
  const std::string shape = string_or(doc, "/comb/tooth_shape", "gaussian");
  if (shape == "gaussian") {
    c.tooth_shape = ToothShape::Gaussian;
  } else if (shape == "square") {
    c.tooth_shape = ToothShape::Square;
  } else {
    fail(ErrorCode::SchemaError, "expected gaussian|square at /comb/tooth_shape");
  }
  c.validate();
  return c;
}

inline IonEnsembleParams ensemble_from(const json& doc) {
  IonEnsembleParams p;
  p.peak_absorption_per_cm = number_or(doc, "/ensemble/peak_absorption_per_cm", p.peak_absorption_per_cm);
  p.inhomogeneous_fwhm_ghz = number_or(doc, "/ensemble/inhomogeneous_fwhm_ghz", p.inhomogeneous_fwhm_ghz);
  p.center_wavelength_nm = number_or(doc, "/ensemble/center_wavelength_nm", p.center_wavelength_nm);
  p.t1_excited_ms = number_or(doc, "/ensemble/t1_excited_ms", p.t1_excited_ms);
  p.waveguide_length_mm = number_or(doc, "/ensemble/waveguide_length_mm", p.waveguide_length_mm);
  p.branch_to_shelf = number_or(doc, "/ensemble/branch_to_shelf", p.branch_to_shelf);
  if (const json* holes = find_path(doc, "/ensemble/hole_lifetimes")) {
    require(holes->is_array() && !holes->empty(), ErrorCode::SchemaError,
            "expected an array at /ensemble/hole_lifetimes");
    p.hole_lifetimes.clear();
    for (const json& h : *holes) {
      require(h.is_object() && h.contains("fraction") && h.contains("lifetime_s"),
              ErrorCode::SchemaError,
              "each entry in /ensemble/hole_lifetimes needs fraction and lifetime_s");
      p.hole_lifetimes.push_back({h.at("fraction").get<double>(), h.at("lifetime_s").get<double>()});
    }
  }
  p.environment.temperature_k = number_or(doc, "/ensemble/environment/temperature_k",
                                          p.environment.temperature_k);
  p.environment.magnetic_field_t = number_or(doc, "/ensemble/environment/magnetic_field_t",
                                             p.environment.magnetic_field_t);
  p.validate();
  return p;
}

inline BurnSchedule burn_from(const json& doc, const CombSpec& target) {
  BurnSchedule s;
  s.pulse_duration_ms = number_or(doc, "/burn/pulse_duration_ms", 5.0);
  s.repetitions = static_cast<int>(uint_or(doc, "/burn/repetitions", 150));
  s.wait_after_ms = number_or(doc, "/burn/wait_after_ms", 5.0);
  s.pump_spectral_density = comb_complement_pump(target, require_number(doc, "/burn/pump_rate_per_s"));
  s.validate();
  return s;
}

struct PulseGeometry {
  double center_ns = 300.0;
  double fwhm_ns = 50.0;
  double mean_photon_number = 1.0;
  double t0_ns = 0.0;
  double dt_ns = 1.0;
  std::size_t n_samples = 4096;
  int n_modes = 1;
  double mode_spacing_ns = 100.0;
};

inline PulseGeometry pulse_from(const json& doc) {
  PulseGeometry g;
  g.center_ns = number_or(doc, "/pulse/center_ns", g.center_ns);
  g.fwhm_ns = require_number(doc, "/pulse/fwhm_ns");
  g.mean_photon_number = number_or(doc, "/pulse/mean_photon_number", g.mean_photon_number);
  g.t0_ns = number_or(doc, "/pulse/t0_ns", g.t0_ns);
  g.dt_ns = number_or(doc, "/pulse/dt_ns", g.dt_ns);
  g.n_samples = static_cast<std::size_t>(uint_or(doc, "/pulse/n_samples", g.n_samples));
  g.n_modes = static_cast<int>(uint_or(doc, "/pulse/n_modes", 1));
  g.mode_spacing_ns = number_or(doc, "/pulse/mode_spacing_ns", g.mode_spacing_ns);
  require(g.n_modes >= 1, ErrorCode::SchemaError, "expected >= 1 at /pulse/n_modes");
  return g;
}

inline DetectorModel detector_from(const json& doc, std::uint64_t run_seed,
                                   const std::string& stage_name) {
  DetectorModel d;
  d.quantum_efficiency = number_or(doc, "/detector/quantum_efficiency", d.quantum_efficiency);
  d.dark_rate_per_s = number_or(doc, "/detector/dark_rate_per_s", d.dark_rate_per_s);
  d.rng_seed = derive_seed(run_seed, stage_name);
  d.validate();
  return d;
}

inline InterferometerSpec interferometer_from(const json& doc, double default_delay_ns) {
  InterferometerSpec s;
  s.arm_delay_ns = number_or(doc, "/interferometer/arm_delay_ns", default_delay_ns);
  s.analysis_phase = number_or(doc, "/interferometer/analysis_phase_rad", 0.0);
  s.splitter_ratios.first = number_or(doc, "/interferometer/splitter_ratio_1", 0.5);
  s.splitter_ratios.second = number_or(doc, "/interferometer/splitter_ratio_2", 0.5);
  s.arm_transmissions.first = number_or(doc, "/interferometer/arm_transmission_short", 1.0);
  s.arm_transmissions.second = number_or(doc, "/interferometer/arm_transmission_long", 1.0);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// RunManifest.
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string scenario_name;
  std::string kind;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  std::vector<std::pair<std::string, double>> stage_timings_ms;
  std::vector<std::string> output_files;  // relative to output_dir
  std::filesystem::path output_dir;
  json summary = json::object();  // flat numeric digest, one row in sweeps

  json to_json() const {
    json timings = json::object();
    for (const auto& [name, ms] : stage_timings_ms) timings[name] = ms;
    return json{{"scenario", scenario_name}, {"kind", kind},
                {"config_hash", config_hash}, {"seed", seed},
                {"tool_version", tool_version}, {"stage_timings_ms", timings},
                {"output_files", output_files}, {"summary", summary}};
  }
};

namespace detail {

template <class F>
void run_stage(RunManifest& manifest, const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaError) throw;  // config problem, not a stage fault
    throw Error(ErrorCode::StageFailure, "stage '" + name + "': " + e.what());
  }
  const auto t1 = std::chrono::steady_clock::now();
  manifest.stage_timings_ms.emplace_back(
      name, std::chrono::duration<double, std::milli>(t1 - t0).count());
}

inline void write_artifact(RunManifest& manifest, const std::string& relname,
                           const std::string& content) {
  io::atomic_write(manifest.output_dir / relname, content);
  manifest.output_files.push_back(relname);
}

inline void write_json_artifact(RunManifest& manifest, const std::string& relname, json body) {
  body["config_hash"] = manifest.config_hash;
  write_artifact(manifest, relname, body.dump(2) + "\n");
}

inline std::string csv_header(const RunManifest& manifest) {
  return "config_hash=" + manifest.config_hash + " scenario=" + manifest.scenario_name;
}

inline std::filesystem::path resolve_output_dir(const ScenarioConfig& cfg,
                                                const std::filesystem::path& output_root) {
  std::filesystem::path root = output_root;
  if (root.empty()) {
    if (const char* env = std::getenv(kOutputRootEnv)) root = env;
  }
  if (root.empty()) root = ".";
  return root / string_or(cfg.doc, "/output/directory", cfg.name());
}

inline SpectralProfile scenario_comb_profile(const ScenarioConfig& cfg, const CombSpec& comb) {
  if (find_path(cfg.doc, "/burn")) {
    const IonEnsembleParams params = ensemble_from(cfg.doc);
    return burn_comb(params, comb, burn_from(cfg.doc, comb));
  }
  return ideal_comb_profile(comb, default_comb_grid(comb));
}

// --------------------------- decay_fit pipeline ---------------------------

inline DecayTrace synthesize_trace(const ScenarioConfig& cfg, DecayModel model) {
  const json& doc = cfg.doc;
  const auto n = static_cast<std::size_t>(uint_or(doc, "/decay/n_points", 80));
  require(n >= 4, ErrorCode::SchemaError, "expected >= 4 at /decay/n_points");
  const double t_min = number_or(doc, "/decay/t_min", 0.0);
  const double t_max = require_number(doc, "/decay/t_max");
  const double noise = number_or(doc, "/decay/noise_sigma", 0.0);
  const std::string spacing = string_or(doc, "/decay/spacing", "linear");

  std::vector<double> times(n);
  if (spacing == "log") {
    const double lo = t_min > 0 ? t_min : t_max * 1e-3;
    for (std::size_t i = 0; i < n; ++i)
      times[i] = lo * std::pow(t_max / lo, static_cast<double>(i) / static_cast<double>(n - 1));
  } else if (spacing == "linear") {
    for (std::size_t i = 0; i < n; ++i)
      times[i] = t_min + (t_max - t_min) * static_cast<double>(i) / static_cast<double>(n - 1);
  } else {
    fail(ErrorCode::SchemaError, "expected linear|log at /decay/spacing");
  }

  std::function<double(double)> truth;
  switch (model) {
    case DecayModel::SingleExp: {
      const double a = number_or(doc, "/decay/true/amplitude", 1.0);
      const double tau = require_number(doc, "/decay/true/t_decay");
      const double off = number_or(doc, "/decay/true/offset", 0.0);
      truth = [=](double t) { return model_fluorescence(t, a, tau, off); };
      break;
    }
    case DecayModel::TwoPulseEcho: {
      const double a = number_or(doc, "/decay/true/amplitude", 1.0);
      const double t2 = require_number(doc, "/decay/true/t2");
      truth = [=](double t) { return model_two_pulse_echo(t, a, t2); };
      break;
    }
    case DecayModel::TripleExp: {
      double a[3], tau[3];
      for (int i = 0; i < 3; ++i) {
        const std::string idx = std::to_string(i + 1);
        a[i] = require_number(doc, "/decay/true/a" + idx);
        tau[i] = require_number(doc, "/decay/true/tau" + idx);
      }
      const double off = number_or(doc, "/decay/true/offset", 0.0);
      truth = [=](double t) {
        return model_hole_decay(t, a[0], a[1], a[2], tau[0], tau[1], tau[2], off);
      };
      break;
    }
  }

  DecayTrace trace;
  trace.times = times;
  trace.time_unit = string_or(doc, "/decay/time_unit", "ms");
  std::mt19937_64 rng(derive_seed(cfg.seed(), "decay-noise"));
  std::normal_distribution<double> gauss(0.0, noise);
  for (double t : times) trace.values.push_back(truth(t) + (noise > 0 ? gauss(rng) : 0.0));
  if (noise > 0) trace.noise_sigma = std::vector<double>(n, noise);
  trace.validate();
  return trace;
}

inline std::string trace_csv(const DecayTrace& trace, const std::string& header_comment) {
  std::string out = "# " + header_comment + "\n# unit: " + trace.time_unit + "\n";
  out += trace.noise_sigma ? "time,value,sigma\n" : "time,value\n";
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    out += io::format_float(trace.times[i]) + "," + io::format_float(trace.values[i]);
    if (trace.noise_sigma) out += "," + io::format_float((*trace.noise_sigma)[i]);
    out += "\n";
  }
  return out;
}

inline void run_decay_fit(const ScenarioConfig& cfg, RunManifest& manifest) {
  const std::string model_name = require_string(cfg.doc, "/decay/model");
  DecayModel model;
  if (model_name == "single_exp") {
    model = DecayModel::SingleExp;
  } else if (model_name == "two_pulse_echo") {
    model = DecayModel::TwoPulseEcho;
  } else if (model_name == "triple_exp") {
    model = DecayModel::TripleExp;
  } else {
    fail(ErrorCode::SchemaError, "expected single_exp|two_pulse_echo|triple_exp at /decay/model");
  }

  DecayTrace trace;
  run_stage(manifest, "synthesize", [&] { trace = synthesize_trace(cfg, model); });
  write_artifact(manifest, "trace.csv", trace_csv(trace, csv_header(manifest)));

  FitReport report;
  run_stage(manifest, "fit", [&] { report = fit_decay(trace, model); });
  write_json_artifact(manifest, "fit.json", io::fit_report_json(report));

  for (const auto& p : report.parameters) manifest.summary[p.name] = p.value;
  manifest.summary["converged"] = report.converged;
}

// --------------------------- afc_echo pipeline ----------------------------

inline void run_afc_echo(const ScenarioConfig& cfg, RunManifest& manifest) {
  const CombSpec comb = comb_from(cfg.doc);
  const PulseGeometry geo = pulse_from(cfg.doc);

  SpectralProfile profile;
  run_stage(manifest, "comb", [&] { profile = scenario_comb_profile(cfg, comb); });
  write_artifact(manifest, "comb.csv", io::profile_csv(profile, csv_header(manifest)));

  TransferFunction filter;
  PulseTrain input, output;
  MemoryResult result;
  run_stage(manifest, "propagate", [&] {
    filter = transfer_function(profile);
    input = gaussian_pulse(geo.center_ns, geo.fwhm_ns, geo.mean_photon_number, geo.t0_ns, geo.dt_ns,
                           geo.n_samples);
    output = propagate(input, filter);
    const double window = number_or(cfg.doc, "/echo/window_ns", 6.0 * geo.fwhm_ns);
    result = echo_efficiency(output, input, comb.storage_time_ns(), window);
  });
  write_artifact(manifest, "input.csv", io::pulse_csv(input, csv_header(manifest)));
  write_artifact(manifest, "output.csv", io::pulse_csv(output, csv_header(manifest)));
  write_json_artifact(manifest, "memory.json", io::memory_result_json(result));
  manifest.summary["efficiency"] = result.efficiency;
  manifest.summary["echo_time_ns"] = result.echo_time_ns;

  if (find_path(cfg.doc, "/detector")) {
    CountHistogram hist;
    SnrResult snr_result;
    run_stage(manifest, "detect", [&] {
      const DetectorModel det = detector_from(cfg.doc, cfg.seed(), "detect");
      const auto n_trials = uint_or(cfg.doc, "/trials/n_trials", 100000);
      hist = detect(output, det, n_trials, number_or(cfg.doc, "/detector/bin_width_ns", 1.0));
      snr_result = snr(hist, require_window(cfg.doc, "/snr/signal_window_ns"),
                       require_window(cfg.doc, "/snr/noise_window_ns"));
    });
    write_artifact(manifest, "histogram.csv", io::histogram_csv(hist, csv_header(manifest)));
    write_json_artifact(manifest, "snr.json",
                        json{{"snr", snr_result.value}, {"snr_sigma", snr_result.sigma},
                             {"lower_bound", snr_result.lower_bound}});
    manifest.summary["snr"] = snr_result.value;
  }
}

// --------------------------- multimode pipeline ---------------------------

inline void run_multimode(const ScenarioConfig& cfg, RunManifest& manifest) {
  const CombSpec comb = comb_from(cfg.doc);
  const PulseGeometry geo = pulse_from(cfg.doc);
  require(geo.n_modes >= 2, ErrorCode::SchemaError, "expected >= 2 at /pulse/n_modes");

  SpectralProfile profile;
  run_stage(manifest, "comb", [&] { profile = scenario_comb_profile(cfg, comb); });
  write_artifact(manifest, "comb.csv", io::profile_csv(profile, csv_header(manifest)));

  PulseTrain input, output;
  std::vector<PulseTrain> modes;
  std::vector<MemoryResult> per_mode;
  run_stage(manifest, "propagate", [&] {
    const TransferFunction filter = transfer_function(profile);
    input = PulseTrain{geo.t0_ns, geo.dt_ns, std::vector<complexd>(geo.n_samples, complexd(0, 0))};
    for (int m = 0; m < geo.n_modes; ++m) {
      PulseTrain one = gaussian_pulse(geo.center_ns + geo.mode_spacing_ns * m, geo.fwhm_ns,
                                      geo.mean_photon_number, geo.t0_ns, geo.dt_ns, geo.n_samples);
      for (std::size_t i = 0; i < input.samples.size(); ++i) input.samples[i] += one.samples[i];
      modes.push_back(std::move(one));
    }
    output = propagate(input, filter);
    const double gate = number_or(cfg.doc, "/echo/gate_ns", 60.0);
    for (const PulseTrain& mode : modes)
      per_mode.push_back(echo_efficiency(output, mode, comb.storage_time_ns(), gate));
  });
  write_artifact(manifest, "input.csv", io::pulse_csv(input, csv_header(manifest)));
  write_artifact(manifest, "output.csv", io::pulse_csv(output, csv_header(manifest)));

  json modes_json = json::array();
  double mean_eff = 0;
  for (const MemoryResult& r : per_mode) {
    modes_json.push_back(io::memory_result_json(r));
    mean_eff += r.efficiency;
  }
  mean_eff /= static_cast<double>(per_mode.size());
  double worst_rel = 0;
  for (const MemoryResult& r : per_mode)
    worst_rel = std::max(worst_rel, std::abs(r.efficiency - mean_eff) / mean_eff);
  write_json_artifact(manifest, "memory.json",
                      json{{"modes", modes_json}, {"mean_efficiency", mean_eff},
                           {"max_relative_spread", worst_rel}});
  manifest.summary["mean_efficiency"] = mean_eff;
  manifest.summary["max_relative_spread"] = worst_rel;
}

// ------------------------- qubit_fidelity pipeline ------------------------

inline void run_qubit_fidelity(const ScenarioConfig& cfg, RunManifest& manifest) {
  const json& doc = cfg.doc;
  const CombSpec comb = comb_from(doc);
  const double tau = comb.storage_time_ns();

  const double fwhm = number_or(doc, "/qubit/pulse_fwhm_ns", 50.0);
  const double sep = number_or(doc, "/qubit/bin_separation_ns", 130.0);
  const double mu = require_number(doc, "/qubit/mu_in_mean_photons");
  const double early_center = number_or(doc, "/qubit/early_center_ns", 300.0);
  const double gate_half = number_or(doc, "/qubit/gate_half_ns", 40.0);
  const auto n_samples = static_cast<std::size_t>(uint_or(doc, "/qubit/n_samples", 2048));
  const std::string measure = string_or(doc, "/qubit/measure", "both");
  require(measure == "basis" || measure == "fringe" || measure == "both", ErrorCode::SchemaError,
          "expected basis|fringe|both at /qubit/measure");
  const auto n_trials = uint_or(doc, "/trials/n_trials", 100000);

  SpectralProfile profile;
  TransferFunction filter;
  run_stage(manifest, "comb", [&] {
    profile = scenario_comb_profile(cfg, comb);
    filter = transfer_function(profile);
  });
  write_artifact(manifest, "comb.csv", io::profile_csv(profile, csv_header(manifest)));

  auto stored = [&](StateLabel label, double phase) {
    const TimeBinQubit q = make_time_bin_qubit(label, fwhm, sep, mu, phase);
    return propagate(encode_qubit(q, early_center, 0.0, 1.0, n_samples), filter);
  };

  json analysis = json::object();
  FidelityResult f_el{1.0, 0.0}, f_pm{1.0, 0.0};

  const std::pair<double, double> early_gate{early_center + tau - gate_half,
                                             early_center + tau + gate_half};
  const std::pair<double, double> late_gate{early_center + sep + tau - gate_half,
                                            early_center + sep + tau + gate_half};

  if (measure == "basis" || measure == "both") {
    CountHistogram hist_e, hist_l;
    run_stage(manifest, "basis", [&] {
      DetectorModel det_e = detector_from(doc, cfg.seed(), "basis-early");
      DetectorModel det_l = detector_from(doc, cfg.seed(), "basis-late");
      hist_e = detect(stored(StateLabel::Early, 0.0), det_e, n_trials);
      hist_l = detect(stored(StateLabel::Late, 0.0), det_l, n_trials);
      f_el = fidelity_el(hist_e, hist_l, early_gate, late_gate);
    });
    write_artifact(manifest, "histogram_early.csv", io::histogram_csv(hist_e, csv_header(manifest)));
    write_artifact(manifest, "histogram_late.csv", io::histogram_csv(hist_l, csv_header(manifest)));
    analysis["f_el"] = f_el.value;
    analysis["f_el_sigma"] = f_el.sigma;
  }

  if (measure == "fringe" || measure == "both") {
    std::vector<std::pair<double, double>> fringe;
    FringeFit fit;
    run_stage(manifest, "fringe", [&] {
      const InterferometerSpec umzi = interferometer_from(doc, sep);
      const auto n_phases = static_cast<int>(uint_or(doc, "/qubit/n_phases", 12));
      require(n_phases >= 6, ErrorCode::SchemaError, "expected >= 6 at /qubit/n_phases");
      // Central interference peak: echo of the late bin via the short arm on
      // top of the echo of the early bin via the long arm.
      const double central = early_center + tau + sep;
      for (int i = 0; i < n_phases; ++i) {
        const double da = 2.0 * M_PI * i / n_phases;
        const PulseTrain analyzed = umzi_output(stored(StateLabel::Custom, da), umzi);
        DetectorModel det = detector_from(doc, cfg.seed(), "fringe-" + std::to_string(i));
        const CountHistogram hist = detect(analyzed, det, n_trials);
        fringe.emplace_back(da, static_cast<double>(
                                    hist.counts_in(central - gate_half, central + gate_half)));
      }
      fit = visibility_and_fidelity(fringe);
      f_pm = {fit.fidelity, fit.fidelity_sigma};
    });
    write_artifact(manifest, "fringe.csv", io::fringe_csv(fringe, csv_header(manifest)));
    analysis["visibility"] = fit.visibility;
    analysis["visibility_sigma"] = fit.visibility_sigma;
    analysis["f_pm"] = fit.fidelity;
    analysis["f_pm_sigma"] = fit.fidelity_sigma;
    analysis["visibility_exceeds_one"] = fit.visibility_exceeds_one;
  }

  if (measure == "both") {
    const FidelityResult total = total_fidelity(f_el, f_pm);
    const double eta = require_number(doc, "/qubit/device_efficiency");
    const double bound = classical_bound(mu, eta);
    analysis["f_total"] = total.value;
    analysis["f_total_sigma"] = total.sigma;
    analysis["classical_bound"] = bound;
    analysis["beats_classical"] = total.value > bound;
    manifest.summary["f_total"] = total.value;
    manifest.summary["classical_bound"] = bound;
  }
  write_json_artifact(manifest, "fidelity.json", std::move(analysis));
  if (measure != "fringe") manifest.summary["f_el"] = f_el.value;
  if (measure != "basis") manifest.summary["f_pm"] = f_pm.value;
}

// -------------------------- delay_line pipeline ---------------------------

inline void run_delay_line(const ScenarioConfig& cfg, RunManifest& manifest) {
  double length_m = 0, loss_db = 0, tau = 0;
  run_stage(manifest, "delay-line", [&] {
    tau = require_number(cfg.doc, "/delay_line/storage_time_ns");
    const double ng = require_number(cfg.doc, "/delay_line/group_index");
    const double loss_per_m = require_number(cfg.doc, "/delay_line/loss_db_per_m");
    std::tie(length_m, loss_db) = delay_line_comparison(tau, ng, loss_per_m);
  });
  write_json_artifact(manifest, "delayline.json",
                      json{{"storage_time_ns", tau}, {"length_m", length_m}, {"loss_db", loss_db}});
  manifest.summary["length_m"] = length_m;
  manifest.summary["loss_db"] = loss_db;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// run_scenario: the declared pipeline, atomic writes, manifest.
// ---------------------------------------------------------------------------

inline RunManifest run_scenario(const ScenarioConfig& cfg,
                                const std::filesystem::path& output_root = {}) {
  cfg.validate();
  RunManifest manifest;
  manifest.scenario_name = cfg.name();
  manifest.kind = cfg.kind();
  manifest.config_hash = cfg.hash_hex_str();
  manifest.seed = cfg.seed();
  manifest.output_dir = detail::resolve_output_dir(cfg, output_root);
  std::filesystem::create_directories(manifest.output_dir);

  const std::string kind = cfg.kind();
  if (kind == "decay_fit") {
    detail::run_decay_fit(cfg, manifest);
  } else if (kind == "afc_echo") {
    detail::run_afc_echo(cfg, manifest);
  } else if (kind == "multimode") {
    detail::run_multimode(cfg, manifest);
  } else if (kind == "qubit_fidelity") {
    detail::run_qubit_fidelity(cfg, manifest);
  } else {
    detail::run_delay_line(cfg, manifest);
  }

  io::atomic_write(manifest.output_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------------------
// calibrate_dark_rate: bisection on the dark rate until the simulated SNR of
// the config's echo scenario hits the target. SNR is monotone decreasing in
// the dark rate; deterministic given the config seed.
// ---------------------------------------------------------------------------

inline double calibrate_dark_rate(const ScenarioConfig& cfg, double target_snr, double tolerance,
                                  double rate_min_per_s, double rate_max_per_s) {
  cfg.validate();
  require(tolerance > 0, ErrorCode::InvalidArgument, "tolerance must be > 0");
  require(rate_min_per_s >= 0 && rate_max_per_s > rate_min_per_s, ErrorCode::InvalidArgument,
          "scan range must be positive and increasing");
  require(target_snr > 0, ErrorCode::Infeasible, "target SNR must be > 0");
  require(cfg.kind() == "afc_echo", ErrorCode::SchemaError,
          "calibration requires an afc_echo scenario with a /detector section");
  require_path(cfg.doc, "/detector");

  // The field and windows are fixed; only the detector noise is scanned.
  const CombSpec comb = comb_from(cfg.doc);
  const SpectralProfile profile = detail::scenario_comb_profile(cfg, comb);
  const TransferFunction filter = transfer_function(profile);
  const PulseGeometry geo = pulse_from(cfg.doc);
  const PulseTrain input = gaussian_pulse(geo.center_ns, geo.fwhm_ns, geo.mean_photon_number,
                                          geo.t0_ns, geo.dt_ns, geo.n_samples);
  const PulseTrain output = propagate(input, filter);
  const auto signal_window = require_window(cfg.doc, "/snr/signal_window_ns");
  const auto noise_window = require_window(cfg.doc, "/snr/noise_window_ns");
  const auto n_trials = uint_or(cfg.doc, "/trials/n_trials", 100000);
  const double bin_width = number_or(cfg.doc, "/detector/bin_width_ns", 1.0);

  auto snr_at = [&](double rate) {
    DetectorModel det = detector_from(cfg.doc, cfg.seed(), "calibrate");
    det.dark_rate_per_s = rate;
    return snr(detect(output, det, n_trials, bin_width), signal_window, noise_window).value;
  };

  double lo = std::max(rate_min_per_s, 1e-6);
  double hi = rate_max_per_s;
  const double snr_lo = snr_at(lo);
  const double snr_hi = snr_at(hi);
  require(target_snr <= snr_lo + tolerance && target_snr >= snr_hi - tolerance,
          ErrorCode::Infeasible, "target SNR not reachable within the scan range");
  if (std::abs(snr_lo - target_snr) <= tolerance) return lo;
  if (std::abs(snr_hi - target_snr) <= tolerance) return hi;

  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double s = snr_at(mid);
    if (std::abs(s - target_snr) <= tolerance) return mid;
    if (s > target_snr) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  fail(ErrorCode::Infeasible, "dark-rate bisection did not converge to the target SNR");
}

// ---------------------------------------------------------------------------
// sweep: one scenario run per value of a config parameter, aggregated CSV.
// ---------------------------------------------------------------------------

inline std::string sweep(const ScenarioConfig& cfg, const std::string& parameter_path,
                         const std::vector<double>& values,
                         const std::filesystem::path& output_root = {}) {
  cfg.validate();
  require(find_path(cfg.doc, parameter_path) != nullptr, ErrorCode::SchemaError,
          "parameter path not found: " + parameter_path);

  std::vector<std::pair<double, json>> rows;
  std::set<std::string> columns;
  for (double value : values) {
    ScenarioConfig point = cfg;
    point.doc[json::json_pointer(parameter_path)] = value;
    point.doc[json::json_pointer("/output/directory")] =
        string_or(cfg.doc, "/output/directory", cfg.name()) + "/point_" + io::format_float(value);
    const RunManifest manifest = run_scenario(point, output_root);
    rows.emplace_back(value, manifest.summary);
    for (const auto& [key, v] : manifest.summary.items()) {
      (void)v;
      columns.insert(key);
    }
  }

  std::string table = "value";
  for (const std::string& c : columns) table += "," + c;
  table += "\n";
  for (const auto& [value, summary] : rows) {
    table += io::format_float(value);
    for (const std::string& c : columns) {
      table += ",";
      if (summary.contains(c) && summary[c].is_number())
        table += io::format_float(summary[c].get<double>());
      else if (summary.contains(c))
        table += summary[c].dump();
    }
    table += "\n";
  }
  return table;
}

// ---------------------------------------------------------------------------
// emit_plotdata: gnuplot-ready .dat companions for every CSV in a manifest.
// ---------------------------------------------------------------------------

inline std::vector<std::filesystem::path> emit_plotdata(const std::filesystem::path& manifest_path) {
  json man;
  try {
    man = json::parse(io::read_file(manifest_path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MissingArtifact, "manifest is not valid JSON: " + std::string(e.what()));
  }
  require(man.contains("output_files") && man["output_files"].is_array(),
          ErrorCode::MissingArtifact, "manifest has no output_files list");
  const std::filesystem::path dir = manifest_path.parent_path();

  std::vector<std::filesystem::path> emitted;
  for (const json& entry : man["output_files"]) {
    const std::string relname = entry.get<std::string>();
    const std::filesystem::path src = dir / relname;
    require(std::filesystem::exists(src), ErrorCode::MissingArtifact,
            "artifact listed in manifest is missing: " + src.string());
    if (src.extension() != ".csv") continue;

    std::istringstream in(io::read_file(src));
    std::string line, out;
    bool saw_header = false;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') {
        out += line + "\n";
        continue;
      }
      std::string converted = line;
      for (char& c : converted)
        if (c == ',') c = ' ';
      if (!saw_header) {
        out += "# columns: " + converted + "\n";
        saw_header = true;
      } else {
        out += converted + "\n";
      }
    }
    std::filesystem::path dst = src;
    dst.replace_extension(".dat");
    io::atomic_write(dst, out);
    emitted.push_back(dst);
  }
  return emitted;
}

}  // namespace afcmem::harness

#endif  // AFCMEM_SCENARIO_HPP
