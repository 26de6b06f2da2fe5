#ifndef AFCMEM_IO_HPP
#define AFCMEM_IO_HPP

#include <json.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "afcmem/coherence.hpp"
#include "afcmem/common.hpp"
#include "afcmem/ensemble.hpp"
#include "afcmem/photonics.hpp"
#include "afcmem/propagation.hpp"

namespace afcmem::io {

using json = nlohmann::json;

inline std::string format_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Writes content to path via a temp file + rename so readers never see a
/// partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::StageFailure, "cannot open " + tmp.string());
    out << content;
    require(out.good(), ErrorCode::StageFailure, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::MissingArtifact, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string profile_csv(const SpectralProfile& profile, const std::string& header_comment = {}) {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "detuning_mhz,optical_depth\n";
  for (std::size_t i = 0; i < profile.detuning_mhz.size(); ++i)
    out << format_float(profile.detuning_mhz[i]) << ',' << format_float(profile.optical_depth[i]) << '\n';
  return out.str();
}

inline std::string pulse_csv(const PulseTrain& pulse, const std::string& header_comment = {}) {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "time_ns,re,im\n";
  for (std::size_t i = 0; i < pulse.samples.size(); ++i)
    out << format_float(pulse.time_at(i)) << ',' << format_float(pulse.samples[i].real()) << ','
        << format_float(pulse.samples[i].imag()) << '\n';
  return out.str();
}

inline std::string histogram_csv(const CountHistogram& hist, const std::string& header_comment = {}) {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "bin_start_ns,counts\n";
  for (std::size_t i = 0; i < hist.counts.size(); ++i)
    out << format_float(hist.bin_start(i)) << ',' << hist.counts[i] << '\n';
  return out.str();
}

inline std::string fringe_csv(const std::vector<std::pair<double, double>>& fringe,
                              const std::string& header_comment = {}) {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "delta_alpha_rad,counts\n";
  for (const auto& [da, c] : fringe) out << format_float(da) << ',' << format_float(c) << '\n';
  return out.str();
}

inline json memory_result_json(const MemoryResult& r) {
  return json{{"efficiency", r.efficiency},
              {"echo_time_ns", r.echo_time_ns},
              {"echo_window_ns", {r.echo_window_ns.first, r.echo_window_ns.second}},
              {"input_energy", r.input_energy},
              {"echo_energy", r.echo_energy}};
}

inline json fit_report_json(const FitReport& r) {
  json params = json::object();
  for (const auto& p : r.parameters) params[p.name] = {{"value", p.value}, {"sigma", p.sigma}};
  const char* model = r.model == DecayModel::SingleExp ? "single_exp"
                      : r.model == DecayModel::TwoPulseEcho ? "two_pulse_echo"
                                                            : "triple_exp";
  return json{{"model", model},
              {"parameters", params},
              {"residual_rms", r.residual_rms},
              {"converged", r.converged},
              {"iterations", r.iterations}};
}

/// Parses `time,value[,sigma]` with an optional `# unit: ...` comment line
/// and a header row.
inline DecayTrace parse_trace_csv(const std::string& text) {
  DecayTrace trace;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '\r') continue;
    if (line[0] == '#') {
      const auto pos = line.find("unit:");
      if (pos != std::string::npos) {
        std::string u = line.substr(pos + 5);
        const auto b = u.find_first_not_of(" \t");
        const auto e = u.find_last_not_of(" \t\r");
        if (b != std::string::npos) trace.time_unit = u.substr(b, e - b + 1);
      }
      continue;
    }
    if (!saw_header) {
      saw_header = true;  // column header row
      continue;
    }
    std::istringstream row(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
    require(cells.size() >= 2, ErrorCode::SchemaError, "trace row needs time,value");
    trace.times.push_back(cells[0]);
    trace.values.push_back(cells[1]);
    if (cells.size() >= 3) {
      if (!trace.noise_sigma) trace.noise_sigma.emplace();
      trace.noise_sigma->push_back(cells[2]);
    }
  }
  trace.validate();
  return trace;
}

}  // namespace afcmem::io

#endif  // AFCMEM_IO_HPP
