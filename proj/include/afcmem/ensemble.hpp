#ifndef AFCMEM_ENSEMBLE_HPP
#define AFCMEM_ENSEMBLE_HPP

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "afcmem/common.hpp"
#include "afcmem/levmar.hpp"

namespace afcmem {

inline constexpr double kFourLn2 = 2.7725887222397811;

/// One multi-exponential relaxation channel of the persistent spectral hole.
struct HoleChannel {
  double amplitude_fraction = 1.0;
  double lifetime_s = 1.95;
};

struct EnvironmentMeta {
  double temperature_k = 1.6;
  double magnetic_field_t = 0.0;
  std::string polarization_axis;
  std::string field_axis;
};

struct IonEnsembleParams {
  double peak_absorption_per_cm = 10.52;
  double inhomogeneous_fwhm_ghz = 250.0;
  double center_wavelength_nm = 1531.6;
  double t1_excited_ms = 2.78;
  std::vector<HoleChannel> hole_lifetimes{{1.0, 1.95}};
  double waveguide_length_mm = 5.0;
  /// Probability that an excited ion relaxes into the shelf (persistent hole)
  /// rather than straight back to the ground state. Not reported; config.
  double branch_to_shelf = 0.5;
  EnvironmentMeta environment;

  void validate() const {
    require(peak_absorption_per_cm > 0, ErrorCode::InvalidArgument, "peak_absorption must be > 0");
    require(inhomogeneous_fwhm_ghz > 0, ErrorCode::InvalidArgument, "inhomogeneous_fwhm must be > 0");
    require(t1_excited_ms > 0, ErrorCode::InvalidArgument, "t1_excited must be > 0");
    require(waveguide_length_mm > 0, ErrorCode::InvalidArgument, "waveguide_length must be > 0");
    require(branch_to_shelf >= 0 && branch_to_shelf <= 1, ErrorCode::InvalidArgument,
            "branch_to_shelf must lie in [0,1]");
    require(!hole_lifetimes.empty() && hole_lifetimes.size() <= 3, ErrorCode::InvalidArgument,
            "hole_lifetimes must have 1..3 channels");
    double sum = 0;
    for (const auto& ch : hole_lifetimes) {
      require(ch.lifetime_s > 0, ErrorCode::InvalidArgument, "hole lifetime must be > 0");
      sum += ch.amplitude_fraction;
    }
    require(std::abs(sum - 1.0) <= 1e-9, ErrorCode::InvalidArgument,
            "hole channel amplitude fractions must sum to 1");
  }

  double initial_optical_depth() const {
    return peak_absorption_per_cm * waveguide_length_mm * 0.1;
  }
};

/// Sampled optical depth d(omega) = alpha(omega) * L on a uniform detuning grid.
struct SpectralProfile {
  std::vector<double> detuning_mhz;
  std::vector<double> optical_depth;

  double spacing() const { return detuning_mhz.size() > 1 ? detuning_mhz[1] - detuning_mhz[0] : 0.0; }

  void validate() const {
    require(detuning_mhz.size() == optical_depth.size() && detuning_mhz.size() >= 2,
            ErrorCode::GridError, "profile grid and depth arrays must match, length >= 2");
    const double h = spacing();
    require(h > 0, ErrorCode::GridError, "profile grid must be strictly increasing");
    for (std::size_t i = 1; i < detuning_mhz.size(); ++i) {
      require(std::abs((detuning_mhz[i] - detuning_mhz[i - 1]) - h) <= 1e-9 * std::max(1.0, h),
              ErrorCode::GridError, "profile grid must be uniform");
    }
    for (double d : optical_depth)
      require(d >= 0 && std::isfinite(d), ErrorCode::GridError, "optical depth must be finite and >= 0");
  }
};

enum class ToothShape { Gaussian, Square };

struct CombSpec {
  double tooth_spacing_mhz = 2.5;   // Delta
  double tooth_fwhm_mhz = 1.03;     // gamma
  double comb_depth = 1.61;         // d1
  double background_depth = 1.36;   // d0
  double bandwidth_mhz = 40.0;
  ToothShape tooth_shape = ToothShape::Gaussian;

  double finesse() const { return tooth_spacing_mhz / tooth_fwhm_mhz; }
  double storage_time_ns() const { return 1e3 / tooth_spacing_mhz; }

  void validate() const {
    require(tooth_fwhm_mhz > 0 && tooth_spacing_mhz > tooth_fwhm_mhz, ErrorCode::InvalidArgument,
            "comb requires Delta > gamma > 0 (finesse > 1)");
    require(comb_depth >= 0 && background_depth >= 0, ErrorCode::InvalidArgument,
            "comb depths must be >= 0");
    require(bandwidth_mhz >= 2 * tooth_spacing_mhz, ErrorCode::InvalidArgument,
            "bandwidth must be >= 2*Delta");
  }
};

/// Pump spectral density as a table over detuning; linearly interpolated,
/// zero outside the table.
struct PumpTable {
  std::vector<double> detuning_mhz;
  std::vector<double> rate_per_s;

  double rate_at(double f_mhz) const {
    if (detuning_mhz.empty() || f_mhz < detuning_mhz.front() || f_mhz > detuning_mhz.back())
      return 0.0;
    auto it = std::upper_bound(detuning_mhz.begin(), detuning_mhz.end(), f_mhz);
    std::size_t i = static_cast<std::size_t>(it - detuning_mhz.begin());
    if (i == 0) return rate_per_s.front();
    if (i >= detuning_mhz.size()) return rate_per_s.back();
    const double t = (f_mhz - detuning_mhz[i - 1]) / (detuning_mhz[i] - detuning_mhz[i - 1]);
    return rate_per_s[i - 1] + t * (rate_per_s[i] - rate_per_s[i - 1]);
  }
};

struct BurnSchedule {
  double pulse_duration_ms = 5.0;
  int repetitions = 150;
  PumpTable pump_spectral_density;
  double wait_after_ms = 5.0;

  void validate() const {
    require(pulse_duration_ms > 0, ErrorCode::InvalidArgument, "pulse_duration must be > 0");
    require(repetitions >= 1, ErrorCode::InvalidArgument, "repetitions must be >= 1");
    require(wait_after_ms >= 0, ErrorCode::InvalidArgument, "wait_after must be >= 0");
  }
};

inline std::vector<double> uniform_grid(double start_mhz, double stop_mhz, double step_mhz) {
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::floor((stop_mhz - start_mhz) / step_mhz + 0.5)) + 1;
  g.reserve(n);
  for (std::size_t i = 0; i < n; ++i) g.push_back(start_mhz + static_cast<double>(i) * step_mhz);
  return g;
}

/// Symmetric detuning grid suited to a comb: covers bandwidth/2 + 2*Delta on
/// both sides, spacing gamma/20, with zero detuning exactly on a sample.
inline std::vector<double> default_comb_grid(const CombSpec& spec) {
  spec.validate();
  const double step = spec.tooth_fwhm_mhz / 20.0;
  const double span = spec.bandwidth_mhz / 2.0 + 2.0 * spec.tooth_spacing_mhz;
  const auto half = static_cast<std::size_t>(std::ceil(span / step));
  return uniform_grid(-static_cast<double>(half) * step, static_cast<double>(half) * step, step);
}

/// Parametric comb evaluated on a grid. Gaussian teeth use the FWHM
/// convention: each tooth adds exactly d1 at its center and has FWHM gamma.
/// Overlapping tails add linearly.
inline SpectralProfile ideal_comb_profile(const CombSpec& spec, const std::vector<double>& grid_mhz) {
  spec.validate();
  require(grid_mhz.size() >= 2, ErrorCode::GridError, "grid too short");
  const double h = grid_mhz[1] - grid_mhz[0];
  require(h <= spec.tooth_fwhm_mhz / 10.0 + 1e-12, ErrorCode::GridError,
          "grid too coarse: spacing must be <= gamma/10");
  const double need = spec.bandwidth_mhz / 2.0 + 2.0 * spec.tooth_spacing_mhz;
  require(grid_mhz.front() <= -need + 1e-9 && grid_mhz.back() >= need - 1e-9, ErrorCode::GridError,
          "grid too narrow: must cover bandwidth/2 + 2*Delta on both sides");

  SpectralProfile out;
  out.detuning_mhz = grid_mhz;
  out.optical_depth.assign(grid_mhz.size(), spec.background_depth);
  const int kmax = static_cast<int>(std::floor(spec.bandwidth_mhz / 2.0 / spec.tooth_spacing_mhz));
  for (int k = -kmax; k <= kmax; ++k) {
    const double center = k * spec.tooth_spacing_mhz;
    for (std::size_t i = 0; i < grid_mhz.size(); ++i) {
      const double u = (grid_mhz[i] - center) / spec.tooth_fwhm_mhz;
      if (spec.tooth_shape == ToothShape::Gaussian) {
        out.optical_depth[i] += spec.comb_depth * std::exp(-kFourLn2 * u * u);
      } else if (std::abs(u) <= 0.5) {
        out.optical_depth[i] += spec.comb_depth;
      }
    }
  }
  out.validate();
  return out;
}

/// Fraction of the burned hole remaining after time t (area normalization).
inline double hole_area_decay(const IonEnsembleParams& params, double t_s) {
  params.validate();
  require(t_s >= 0, ErrorCode::InvalidArgument, "t must be >= 0");
  double v = 0;
  for (const auto& ch : params.hole_lifetimes)
    v += ch.amplitude_fraction * std::exp(-t_s / ch.lifetime_s);
  return v;
}

/// Pump table covering the anti-tooth bands of a comb: flat rate wherever
/// the detuning is farther than gamma/2 from the nearest tooth center,
/// inside the comb bandwidth. This is the comb complement used by the
/// parallel preparation scheme.
inline PumpTable comb_complement_pump(const CombSpec& spec, double rate_per_s,
                                      double step_mhz = 0.0) {
  spec.validate();
  if (step_mhz <= 0) step_mhz = spec.tooth_fwhm_mhz / 20.0;
  PumpTable table;
  const double half = spec.bandwidth_mhz / 2.0;
  for (double f = -half; f <= half + 1e-12; f += step_mhz) {
    const double nearest = std::round(f / spec.tooth_spacing_mhz) * spec.tooth_spacing_mhz;
    const bool in_tooth = std::abs(f - nearest) <= spec.tooth_fwhm_mhz / 2.0;
    table.detuning_mhz.push_back(f);
    table.rate_per_s.push_back(in_tooth ? 0.0 : rate_per_s);
  }
  return table;
}

namespace detail {

/// Per-frequency-class population state: [ground, excited, shelf_1..shelf_K].
/// Linear constant-coefficient dynamics during a segment with fixed pump rate.
inline Eigen::MatrixXd population_generator(const IonEnsembleParams& p, double pump_rate_per_s) {
  const auto k = static_cast<Eigen::Index>(p.hole_lifetimes.size());
  const double inv_t1 = 1e3 / p.t1_excited_ms;  // 1/s
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 + k, 2 + k);
  a(0, 0) = -pump_rate_per_s;
  a(1, 0) = pump_rate_per_s;
  a(0, 1) = (1.0 - p.branch_to_shelf) * inv_t1;
  a(1, 1) = -inv_t1;
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& ch = p.hole_lifetimes[static_cast<std::size_t>(i)];
    a(2 + i, 1) = p.branch_to_shelf * ch.amplitude_fraction * inv_t1;
    a(0, 2 + i) = 1.0 / ch.lifetime_s;
    a(2 + i, 2 + i) = -1.0 / ch.lifetime_s;
  }
  return a;
}

}  // namespace detail

/// Integrates the hole-burning rate equations over the pump schedule and
/// returns the post-preparation optical-depth profile. Each frequency class
/// is independent; the pump is piecewise constant (on for
/// repetitions*pulse_duration, then off for wait_after), so the exact
/// segment propagator exp(A*dt) is applied in steps of at most T1/50.
/// An optional observer sees every intermediate population state.
inline SpectralProfile burn_comb(
    const IonEnsembleParams& params, const CombSpec& target, const BurnSchedule& schedule,
    const std::function<void(double /*detuning_mhz*/, const Eigen::VectorXd&)>& observer = nullptr) {
  params.validate();
  target.validate();
  schedule.validate();

  const double step = target.tooth_fwhm_mhz / 20.0;
  const double span = target.bandwidth_mhz / 2.0 + 2.0 * target.tooth_spacing_mhz;
  SpectralProfile out;
  out.detuning_mhz = uniform_grid(-span, span, step);

  const double d_init = params.initial_optical_depth();
  const double t1_s = params.t1_excited_ms * 1e-3;
  const double burn_s = schedule.pulse_duration_ms * 1e-3 * schedule.repetitions;
  const double wait_s = schedule.wait_after_ms * 1e-3;
  const auto dim = static_cast<Eigen::Index>(2 + params.hole_lifetimes.size());

  out.optical_depth.resize(out.detuning_mhz.size());
  for (std::size_t i = 0; i < out.detuning_mhz.size(); ++i) {
    const double f = out.detuning_mhz[i];
    const double rate = schedule.pump_spectral_density.rate_at(f);
    require(rate >= 0 && std::isfinite(rate), ErrorCode::InvalidArgument,
            "pump rate must be finite and >= 0");

    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
    x[0] = 1.0;
    for (int segment = 0; segment < 2; ++segment) {
      const double duration = segment == 0 ? burn_s : wait_s;
      if (duration <= 0) continue;
      const Eigen::MatrixXd gen = detail::population_generator(params, segment == 0 ? rate : 0.0);
      const auto nsteps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(duration / (t1_s / 50.0))));
      const Eigen::MatrixXd prop = (gen * (duration / static_cast<double>(nsteps))).exp();
      for (std::size_t s = 0; s < nsteps; ++s) {
        x = prop * x;
        require(x.minCoeff() > -1e-9, ErrorCode::NumericalFault, "integrator fault: negative population");
        if (observer) observer(f, x);
      }
    }
    out.optical_depth[i] = std::clamp(d_init * x[0], 0.0, d_init);
  }
  out.validate();
  return out;
}

/// Closed-form ground population for the two-level limit (no shelving):
/// exposed so callers can cross-check the integrator against the analytic
/// single-exponential burn solution.
inline double two_level_ground_population(double pump_rate_per_s, double t1_s, double t_s) {
  const double k = pump_rate_per_s + 1.0 / t1_s;
  const double steady = (1.0 / t1_s) / k;
  return steady + (1.0 - steady) * std::exp(-k * t_s);
}

/// Peak detection plus per-tooth Gaussian fits; recovers (Delta, gamma, d1, d0).
inline CombSpec extract_comb_params(const SpectralProfile& profile) {
  profile.validate();
  const auto& f = profile.detuning_mhz;
  const auto& d = profile.optical_depth;
  const std::size_t n = f.size();

  const double dmax = *std::max_element(d.begin(), d.end());
  const double dmin = *std::min_element(d.begin(), d.end());
  const double prominence = dmax - dmin;
  require(prominence > 1e-6 * std::max(1.0, dmax), ErrorCode::NoPeaksFound,
          "no peaks found: profile is flat");

  // Local maxima above the mid-line, non-maximum-suppressed over a small window.
  const double threshold = dmin + 0.5 * prominence;
  std::vector<std::size_t> peaks;
  for (std::size_t i = 2; i + 2 < n; ++i) {
    if (d[i] < threshold) continue;
    if (d[i] >= d[i - 1] && d[i] >= d[i - 2] && d[i] > d[i + 1] && d[i] > d[i + 2])
      peaks.push_back(i);
  }
  require(peaks.size() >= 5, ErrorCode::NoPeaksFound, "need at least 5 comb teeth");

  std::vector<double> spacings;
  for (std::size_t i = 1; i < peaks.size(); ++i)
    spacings.push_back(f[peaks[i]] - f[peaks[i - 1]]);
  std::nth_element(spacings.begin(), spacings.begin() + spacings.size() / 2, spacings.end());
  const double delta = spacings[spacings.size() / 2];

  // Per-tooth fit on a +-Delta/2 window. The model includes the two
  // neighboring teeth at +-Delta with the same amplitude and width, so tail
  // overlap at low finesse does not bias the recovered parameters:
  //   d = base + amp * sum_k exp(-4 ln2 ((x - c - k Delta)/w)^2), k in {-1,0,1}.
  std::vector<double> amps, widths, bases;
  std::size_t skipped = 0;
  // Interior teeth only: the outermost teeth lack one neighbor, which the
  // local model assumes.
  for (std::size_t pi = 1; pi + 1 < peaks.size(); ++pi) {
    const std::size_t pk = peaks[pi];
    const double c0 = f[pk];
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(f[i] - c0) <= delta / 2.0) {
        xs.push_back(f[i]);
        ys.push_back(d[i]);
      }
    }
    if (xs.size() < 5) {
      ++skipped;
      continue;
    }
    // Width seed from the half-maximum crossings around the peak.
    const double half = dmin + (d[pk] - dmin) / 2.0;
    std::size_t left = pk, right = pk;
    while (left > 0 && d[left] > half && f[pk] - f[left] < delta) --left;
    while (right + 1 < n && d[right] > half && f[right] - f[pk] < delta) ++right;
    const double w0 = std::clamp(f[right] - f[left], profile.spacing(), delta);

    Eigen::VectorXd p0(4);
    p0 << d[pk] - dmin, c0, w0, dmin;
    auto residual = [&](const Eigen::VectorXd& p) {
      Eigen::VectorXd r(static_cast<Eigen::Index>(xs.size()));
      for (std::size_t i = 0; i < xs.size(); ++i) {
        double model = p[3];
        for (int k = -1; k <= 1; ++k) {
          const double u = (xs[i] - p[1] - k * delta) / p[2];
          model += p[0] * std::exp(-kFourLn2 * u * u);
        }
        r[static_cast<Eigen::Index>(i)] = model - ys[i];
      }
      return r;
    };
    LmResult fit = lm_fit(residual, p0);
    const double amp = fit.parameters[0];
    const double width = std::abs(fit.parameters[2]);
    if (!fit.converged || !(amp > 0) || width <= 0 || width > delta) {
      ++skipped;
      continue;
    }
    amps.push_back(amp);
    widths.push_back(width);
    bases.push_back(fit.parameters[3]);
  }
  require(skipped * 2 <= peaks.size(), ErrorCode::NumericalFault,
          "comb fit failed on more than half the teeth");

  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  CombSpec spec;
  spec.tooth_spacing_mhz = delta;
  spec.tooth_fwhm_mhz = mean(widths);
  spec.comb_depth = mean(amps);
  spec.background_depth = mean(bases);
  spec.bandwidth_mhz = (f[peaks.back()] - f[peaks.front()]) + delta;
  spec.tooth_shape = ToothShape::Gaussian;
  return spec;
}

}  // namespace afcmem

#endif  // AFCMEM_ENSEMBLE_HPP
