// Command-line front end: scenario runner, parameter sweeps, decay fitting,
// classical-bound evaluation, SNR calibration, and plot-data emission.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "afcmem/io.hpp"
#include "afcmem/scenario.hpp"

namespace {

using afcmem::Error;
using afcmem::ErrorCode;
namespace harness = afcmem::harness;
namespace io = afcmem::io;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::SchemaError: return 2;
    case ErrorCode::Infeasible: return 4;
    default: return 3;
  }
}

/// Resolves a config argument: an existing path wins; otherwise a bundled
/// name is looked up as <dir>/<name>.cfg under AFCMEM_CONFIG_DIR (or ./configs).
std::filesystem::path resolve_config(const std::string& arg) {
  if (std::filesystem::is_regular_file(arg)) return arg;
  std::filesystem::path dir = "configs";
  if (const char* env = std::getenv(harness::kConfigDirEnv)) dir = env;
  const std::filesystem::path bundled = dir / (arg + ".cfg");
  if (std::filesystem::is_regular_file(bundled)) return bundled;
  throw Error(ErrorCode::SchemaError, "config not found: " + arg);
}

harness::ScenarioConfig load_config(const std::string& arg) {
  return harness::ScenarioConfig::parse(io::read_file(resolve_config(arg)));
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> values;
  std::istringstream in(list);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    if (cell.empty()) continue;
    try {
      values.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw Error(ErrorCode::SchemaError, "non-numeric sweep value: " + cell);
    }
  }
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AFC quantum-memory simulator and analysis toolkit"};
  app.require_subcommand(1);

  std::string config_arg, param_path, values_arg, trace_path, model_name, manifest_path;
  std::string output_root;
  double mu = 1.0, eta = 1.0;
  double target_snr = 56.3, tolerance = 7.0, rate_min = 1.0, rate_max = 100000.0;

  auto* run = app.add_subcommand("run", "Run a scenario config end to end");
  run->add_option("config", config_arg, "Config file path or bundled name")->required();
  run->add_option("--output-root", output_root, "Output root (default: $AFCMEM_OUTPUT_ROOT or .)");

  auto* sweep = app.add_subcommand("sweep", "Run a scenario once per parameter value");
  sweep->add_option("config", config_arg)->required();
  sweep->add_option("--param", param_path, "JSON-pointer parameter path")->required();
  sweep->add_option("--values", values_arg, "Comma-separated values")->required();
  sweep->add_option("--output-root", output_root);

  auto* fit = app.add_subcommand("fit", "Fit a decay trace CSV");
  fit->add_option("trace", trace_path, "CSV with time,value[,sigma]")->required();
  fit->add_option("--model", model_name, "single_exp | two_pulse_echo | triple_exp")->required();

  auto* bound = app.add_subcommand("bound", "Classical measure-and-prepare fidelity bound");
  bound->add_option("--mu", mu, "Mean photon number")->required();
  bound->add_option("--eta", eta, "Declared device efficiency")->required();

  auto* calibrate = app.add_subcommand("calibrate-snr", "Bisect the dark rate to a target SNR");
  calibrate->add_option("config", config_arg)->required();
  calibrate->add_option("--target", target_snr, "Target SNR (default 56.3)");
  calibrate->add_option("--tolerance", tolerance, "Acceptance band (default 7.0)");
  calibrate->add_option("--rate-min", rate_min, "Scan lower bound, counts/s");
  calibrate->add_option("--rate-max", rate_max, "Scan upper bound, counts/s");

  auto* plots = app.add_subcommand("emit-plots", "Write gnuplot-ready .dat files for a manifest");
  plots->add_option("manifest", manifest_path, "Path to manifest.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const harness::RunManifest manifest = harness::run_scenario(load_config(config_arg), output_root);
      std::cout << manifest.to_json().dump(2) << "\n";
    } else if (*sweep) {
      const harness::ScenarioConfig cfg = load_config(config_arg);
      const std::string table = harness::sweep(cfg, param_path, parse_values(values_arg), output_root);
      std::filesystem::path root = output_root;
      if (root.empty()) {
        if (const char* env = std::getenv(harness::kOutputRootEnv)) root = env;
      }
      if (root.empty()) root = ".";
      const std::filesystem::path out =
          root / harness::string_or(cfg.doc, "/output/directory", cfg.name()) / "sweep.csv";
      io::atomic_write(out, table);
      std::cout << out.string() << "\n" << table;
    } else if (*fit) {
      afcmem::DecayModel model;
      if (model_name == "single_exp") {
        model = afcmem::DecayModel::SingleExp;
      } else if (model_name == "two_pulse_echo") {
        model = afcmem::DecayModel::TwoPulseEcho;
      } else if (model_name == "triple_exp") {
        model = afcmem::DecayModel::TripleExp;
      } else {
        throw Error(ErrorCode::SchemaError, "unknown model: " + model_name);
      }
      const afcmem::DecayTrace trace = io::parse_trace_csv(io::read_file(trace_path));
      std::cout << io::fit_report_json(afcmem::fit_decay(trace, model)).dump(2) << "\n";
    } else if (*bound) {
      const double value = afcmem::classical_bound(mu, eta);
      std::cout << nlohmann::json{{"mu_in", mu}, {"device_efficiency", eta},
                                  {"classical_bound", value}}
                       .dump(2)
                << "\n";
    } else if (*calibrate) {
      const double rate = harness::calibrate_dark_rate(load_config(config_arg), target_snr,
                                                       tolerance, rate_min, rate_max);
      std::cout << nlohmann::json{{"target_snr", target_snr}, {"tolerance", tolerance},
                                  {"dark_rate_per_s", rate}}
                       .dump(2)
                << "\n";
    } else if (*plots) {
      for (const auto& path : harness::emit_plotdata(manifest_path))
        std::cout << path.string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
