#ifndef AFCMEM_PHOTONICS_HPP
#define AFCMEM_PHOTONICS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "afcmem/common.hpp"
#include "afcmem/propagation.hpp"

namespace afcmem {

enum class StateLabel { Early, Late, Plus, Minus, PlusI, Custom };

struct TimeBinQubit {
  complexd amp_early{1.0, 0.0};
  complexd amp_late{0.0, 0.0};
  double relative_phase = 0.0;  // preparation parameter Delta-alpha
  double pulse_fwhm_ns = 50.0;
  double bin_separation_ns = 130.0;
  double mean_photon_number = 1.0;

  void validate() const {
    require(std::abs(std::norm(amp_early) + std::norm(amp_late) - 1.0) <= 1e-12,
            ErrorCode::InvalidArgument, "qubit amplitudes must be normalized");
    require(bin_separation_ns > pulse_fwhm_ns, ErrorCode::InvalidArgument,
            "bin separation must exceed pulse width");
    require(mean_photon_number > 0, ErrorCode::InvalidArgument, "mean photon number must be > 0");
  }
};

inline TimeBinQubit make_time_bin_qubit(StateLabel label, double pulse_fwhm_ns,
                                        double bin_separation_ns, double mean_photon_number,
                                        double custom_phase = 0.0) {
  TimeBinQubit q;
  q.pulse_fwhm_ns = pulse_fwhm_ns;
  q.bin_separation_ns = bin_separation_ns;
  q.mean_photon_number = mean_photon_number;
  const double s = 1.0 / std::sqrt(2.0);
  switch (label) {
    case StateLabel::Early: q.amp_early = 1.0; q.amp_late = 0.0; q.relative_phase = 0.0; break;
    case StateLabel::Late: q.amp_early = 0.0; q.amp_late = 1.0; q.relative_phase = 0.0; break;
    case StateLabel::Plus: q.amp_early = s; q.amp_late = s; q.relative_phase = 0.0; break;
    case StateLabel::Minus:
      q.amp_early = s;
      q.amp_late = -s;
      q.relative_phase = M_PI;
      break;
    case StateLabel::PlusI:
      q.amp_early = s;
      q.amp_late = complexd(0.0, 1.0) * s;
      q.relative_phase = M_PI / 2.0;
      break;
    case StateLabel::Custom:
      q.amp_early = s;
      q.amp_late = std::polar(1.0, custom_phase) * s;
      q.relative_phase = custom_phase;
      break;
  }
  q.validate();
  return q;
}

/// Two Gaussian envelopes at early_center and early_center + bin_separation
/// with the qubit's complex weights; total energy equals mu_in.
inline PulseTrain encode_qubit(const TimeBinQubit& qubit, double early_center_ns, double t0_ns,
                               double dt_ns, std::size_t n_samples) {
  qubit.validate();
  const double sigma_amp = qubit.pulse_fwhm_ns * kFwhmToSigma * std::sqrt(2.0);
  // Cross-talk: amplitude of one bin's envelope at the other bin's center.
  const double cross_amp = std::exp(-0.5 * std::pow(qubit.bin_separation_ns / sigma_amp, 2));
  require(cross_amp <= 0.01, ErrorCode::InvalidArgument,
          "time bins overlap at more than 1% amplitude");

  PulseTrain out{t0_ns, dt_ns, std::vector<complexd>(n_samples, complexd(0, 0))};
  const double scale = std::sqrt(qubit.mean_photon_number);
  auto add_bin = [&](double center, complexd weight) {
    for (std::size_t i = 0; i < n_samples; ++i) {
      const double u = out.time_at(i) - center;
      if (std::abs(u) > 5.0 * qubit.pulse_fwhm_ns) continue;
      out.samples[i] += weight * scale * std::exp(-0.25 * (u / (qubit.pulse_fwhm_ns * kFwhmToSigma)) *
                                                  (u / (qubit.pulse_fwhm_ns * kFwhmToSigma)));
    }
  };
  add_bin(early_center_ns, qubit.amp_early);
  add_bin(early_center_ns + qubit.bin_separation_ns, qubit.amp_late);

  // Normalize exactly: |amp_e|^2 + |amp_l|^2 = 1, but the grid quadrature is
  // only approximate.
  const double e = out.energy();
  require(e > 0, ErrorCode::InvalidArgument, "qubit envelope does not fit on the grid");
  const double fix = std::sqrt(qubit.mean_photon_number / e);
  for (auto& s : out.samples) s *= fix;
  return out;
}

struct InterferometerSpec {
  double arm_delay_ns = 130.0;
  double analysis_phase = 0.0;
  std::pair<double, double> splitter_ratios{0.5, 0.5};   // transmission of BS1, BS2
  std::pair<double, double> arm_transmissions{1.0, 1.0};  // short, long

  void validate() const {
    auto frac = [](double v) { return v >= 0.0 && v <= 1.0; };
    require(frac(splitter_ratios.first) && frac(splitter_ratios.second), ErrorCode::InvalidArgument,
            "splitter ratios must be in [0,1]");
    require(frac(arm_transmissions.first) && frac(arm_transmissions.second),
            ErrorCode::InvalidArgument, "arm transmissions must be in [0,1]");
    require(arm_delay_ns > 0, ErrorCode::InvalidArgument, "arm delay must be > 0");
  }
};

enum class UmziPort { Interference, Complement };

/// One output port of the unbalanced Mach-Zehnder analyzer. The
/// `Interference` port is the one where |e>+|l> at analysis_phase = 0
/// interferes constructively in the central peak; the sign conventions for
/// both ports live here and nowhere else:
///   interference: sqrt(R1(1-R2)) a1 x(t) + sqrt((1-R1)R2) a2 e^{i theta} x(t - tau)
///   complement:   sqrt(R1 R2)    a1 x(t) - sqrt((1-R1)(1-R2)) a2 e^{i theta} x(t - tau)
inline PulseTrain umzi_output(const PulseTrain& input, const InterferometerSpec& spec,
                              UmziPort port = UmziPort::Interference) {
  input.validate();
  spec.validate();
  const double shift_real = spec.arm_delay_ns / input.dt_ns;
  const auto shift = static_cast<std::size_t>(std::llround(shift_real));
  require(std::abs(shift_real - static_cast<double>(shift)) <= 1e-6, ErrorCode::InvalidArgument,
          "delay mismatch: arm delay must be an integer number of samples");

  const double r1 = spec.splitter_ratios.first;
  const double r2 = spec.splitter_ratios.second;
  const double a1 = std::sqrt(spec.arm_transmissions.first);
  const double a2 = std::sqrt(spec.arm_transmissions.second);
  double c_short, c_late_sign;
  if (port == UmziPort::Interference) {
    c_short = std::sqrt(r1 * (1.0 - r2)) * a1;
    c_late_sign = 1.0;
  } else {
    c_short = std::sqrt(r1 * r2) * a1;
    c_late_sign = -1.0;
  }
  const double c_long = (port == UmziPort::Interference ? std::sqrt((1.0 - r1) * r2)
                                                        : std::sqrt((1.0 - r1) * (1.0 - r2))) * a2;
  const complexd phase = std::polar(1.0, spec.analysis_phase);

  PulseTrain out{input.t0_ns, input.dt_ns,
                 std::vector<complexd>(input.samples.size() + shift, complexd(0, 0))};
  for (std::size_t i = 0; i < input.samples.size(); ++i) {
    out.samples[i] += c_short * input.samples[i];
    out.samples[i + shift] += c_late_sign * c_long * phase * input.samples[i];
  }
  return out;
}

struct DetectorModel {
  double quantum_efficiency = 0.8;
  double dark_rate_per_s = 500.0;
  std::pair<double, double> gate_ns{0.0, 0.0};  // zero-length gate = full span
  std::uint64_t rng_seed = 1;

  void validate() const {
    require(quantum_efficiency >= 0.0 && quantum_efficiency <= 1.0, ErrorCode::InvalidArgument,
            "quantum efficiency must be in [0,1]");
    require(dark_rate_per_s >= 0.0, ErrorCode::InvalidArgument, "dark rate must be >= 0");
  }
};

struct CountHistogram {
  double bin_width_ns = 1.0;
  double origin_ns = 0.0;
  std::vector<std::uint64_t> counts;
  std::uint64_t n_trials = 0;

  double bin_start(std::size_t i) const { return origin_ns + static_cast<double>(i) * bin_width_ns; }

  std::uint64_t counts_in(double lo_ns, double hi_ns) const {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const double center = bin_start(i) + bin_width_ns / 2.0;
      if (center >= lo_ns && center < hi_ns) total += counts[i];
    }
    return total;
  }

  void validate() const {
    require(bin_width_ns > 0, ErrorCode::InvalidArgument, "bin width must be > 0");
  }
};

/// Poisson photon counting over n_trials identical shots. Per-bin mean is
/// n_trials * (eta_det * integral |E|^2 dt + dark_rate * bin_width);
/// deterministic for a fixed seed.
inline CountHistogram detect(const PulseTrain& field, const DetectorModel& det,
                             std::uint64_t n_trials, double bin_width_ns = 1.0) {
  field.validate();
  det.validate();
  require(n_trials >= 1, ErrorCode::InvalidArgument, "n_trials must be >= 1");
  require(bin_width_ns >= field.dt_ns - 1e-12, ErrorCode::InvalidArgument,
          "bin width must be >= sample interval");

  double lo = field.t0_ns;
  double hi = field.time_at(field.samples.size() - 1) + field.dt_ns;
  if (det.gate_ns.second > det.gate_ns.first) {
    lo = det.gate_ns.first;
    hi = det.gate_ns.second;
  }
  const auto nbins = static_cast<std::size_t>(std::ceil((hi - lo) / bin_width_ns));
  CountHistogram hist;
  hist.bin_width_ns = bin_width_ns;
  hist.origin_ns = lo;
  hist.n_trials = n_trials;
  hist.counts.assign(nbins, 0);

  std::vector<double> flux(nbins, 0.0);  // photons per trial per bin
  for (std::size_t i = 0; i < field.samples.size(); ++i) {
    const double t = field.time_at(i);
    if (t < lo || t >= hi) continue;
    const auto b = static_cast<std::size_t>((t - lo) / bin_width_ns);
    flux[b] += std::norm(field.samples[i]) * field.dt_ns;
  }

  std::mt19937_64 rng(det.rng_seed);
  const double dark_per_bin = det.dark_rate_per_s * bin_width_ns * 1e-9;
  for (std::size_t b = 0; b < nbins; ++b) {
    const double mean = static_cast<double>(n_trials) *
                        (det.quantum_efficiency * flux[b] + dark_per_bin);
    std::poisson_distribution<std::uint64_t> poisson(mean);
    hist.counts[b] = mean > 0 ? poisson(rng) : 0;
  }
  return hist;
}

struct SnrResult {
  double value = 0.0;
  double sigma = 0.0;
  bool lower_bound = false;  // set when the noise window had zero counts
};

/// Background-subtracted signal-to-noise ratio between two equal-duration,
/// disjoint windows, with Poisson error propagation.
inline SnrResult snr(const CountHistogram& hist, std::pair<double, double> signal_window_ns,
                     std::pair<double, double> noise_window_ns) {
  hist.validate();
  const double dur_s = signal_window_ns.second - signal_window_ns.first;
  const double dur_n = noise_window_ns.second - noise_window_ns.first;
  require(dur_s > 0 && dur_n > 0, ErrorCode::InvalidArgument, "windows must have positive duration");
  require(std::abs(dur_s - dur_n) <= hist.bin_width_ns, ErrorCode::InvalidArgument,
          "signal and noise windows must have equal duration");
  require(signal_window_ns.second <= noise_window_ns.first ||
              noise_window_ns.second <= signal_window_ns.first,
          ErrorCode::InvalidArgument, "windows must be disjoint");

  const double s = static_cast<double>(hist.counts_in(signal_window_ns.first, signal_window_ns.second));
  double b = static_cast<double>(hist.counts_in(noise_window_ns.first, noise_window_ns.second));
  SnrResult res;
  if (b == 0) {
    res.lower_bound = true;
    b = 1.0;  // one-count bound on the background
  }
  res.value = (s - b) / b;
  // f = (s - b)/b: df/ds = 1/b, df/db = -s/b^2; var(s) = s, var(b) = b.
  res.sigma = std::sqrt(s / (b * b) + (s * s) / (b * b * b));
  return res;
}

struct FidelityResult {
  double value = 0.0;
  double sigma = 0.0;
};

/// Basis-state storage fidelity: for |e> input the fraction of counts in the
/// early gate, for |l> in the late gate, averaged. Binomial uncertainties.
inline FidelityResult fidelity_el(const CountHistogram& hist_e, const CountHistogram& hist_l,
                                  std::pair<double, double> early_window_ns,
                                  std::pair<double, double> late_window_ns) {
  auto one = [&](const CountHistogram& h, bool early) {
    const double in_early = static_cast<double>(h.counts_in(early_window_ns.first, early_window_ns.second));
    const double in_late = static_cast<double>(h.counts_in(late_window_ns.first, late_window_ns.second));
    const double total = in_early + in_late;
    require(total > 0, ErrorCode::InvalidArgument, "zero total counts in fidelity gates");
    const double f = (early ? in_early : in_late) / total;
    const double sig = std::sqrt(std::max(f * (1.0 - f) / total, 0.0));
    return std::pair<double, double>{f, sig};
  };
  auto [fe, se] = one(hist_e, true);
  auto [fl, sl] = one(hist_l, false);
  return {(fe + fl) / 2.0, std::sqrt(se * se + sl * sl) / 2.0};
}

struct FringeFit {
  double visibility = 0.0;
  double visibility_sigma = 0.0;
  double fidelity = 0.0;
  double fidelity_sigma = 0.0;
  double phase_offset = 0.0;
  bool visibility_exceeds_one = false;  // reported, never silently clamped
};

/// Sinusoidal fit counts = C0 (1 + V sin(da + phi0)) via exact linear least
/// squares in (C0, C0 V cos phi0, C0 V sin phi0). F = (1 + V)/2.
inline FringeFit visibility_and_fidelity(const std::vector<std::pair<double, double>>& fringe) {
  require(fringe.size() >= 6, ErrorCode::InvalidArgument, "need at least 6 phase points");
  double lo = fringe.front().first, hi = fringe.front().first;
  for (const auto& [da, c] : fringe) {
    lo = std::min(lo, da);
    hi = std::max(hi, da);
    require(c >= 0 && std::isfinite(c), ErrorCode::InvalidArgument, "counts must be finite, >= 0");
  }
  require(hi - lo >= 0.8 * 2.0 * M_PI, ErrorCode::InvalidArgument,
          "phase points must span at least 80% of 2 pi");

  const auto n = static_cast<Eigen::Index>(fringe.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double da = fringe[static_cast<std::size_t>(i)].first;
    design(i, 0) = 1.0;
    design(i, 1) = std::sin(da);
    design(i, 2) = std::cos(da);
    y[i] = fringe[static_cast<std::size_t>(i)].second;
  }
  Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::VectorXd beta = gram.ldlt().solve(design.transpose() * y);
  const double c0 = beta[0], a = beta[1], b = beta[2];
  require(c0 > 0, ErrorCode::NumericalFault, "fringe fit diverged: non-positive mean counts");

  const double amp = std::hypot(a, b);
  FringeFit fit;
  fit.visibility = amp / c0;
  fit.phase_offset = std::atan2(b, a);
  fit.visibility_exceeds_one = fit.visibility > 1.0;
  fit.fidelity = (1.0 + fit.visibility) / 2.0;

  const double dof = static_cast<double>(n - 3);
  const double ssr = (design * beta - y).squaredNorm();
  Eigen::MatrixXd cov = gram.inverse() * (dof > 0 ? ssr / dof : 0.0);
  // Delta method for V = sqrt(a^2 + b^2)/c0.
  Eigen::Vector3d grad;
  if (amp > 0) {
    grad << -amp / (c0 * c0), a / (amp * c0), b / (amp * c0);
  } else {
    grad << 0, 1 / c0, 1 / c0;
  }
  fit.visibility_sigma = std::sqrt(std::max(0.0, double(grad.transpose() * cov * grad)));
  fit.fidelity_sigma = fit.visibility_sigma / 2.0;
  return fit;
}

/// F_T = (1/3) F_el + (2/3) F_pm with quadrature uncertainty.
inline FidelityResult total_fidelity(FidelityResult f_el, FidelityResult f_pm) {
  require(f_el.value >= 0 && f_el.value <= 1 && f_pm.value >= 0 && f_pm.value <= 1,
          ErrorCode::InvalidArgument, "fidelities must be in [0,1]");
  return {f_el.value / 3.0 + 2.0 * f_pm.value / 3.0,
          std::sqrt(std::pow(f_el.sigma / 3.0, 2) + std::pow(2.0 * f_pm.sigma / 3.0, 2))};
}

namespace detail {

inline std::vector<double> poisson_pmf(double mu, int nmax) {
  std::vector<double> p(static_cast<std::size_t>(nmax) + 1);
  p[0] = std::exp(-mu);
  for (int n = 1; n <= nmax; ++n)
    p[static_cast<std::size_t>(n)] = p[static_cast<std::size_t>(n - 1)] * mu / n;
  return p;
}

inline int bound_nmax(double mu) {
  return std::clamp(static_cast<int>(std::ceil(mu + 20.0 * std::sqrt(mu) + 30.0)), 40, 400);
}

}  // namespace detail

/// Best measure-and-prepare fidelity for a Poissonian source of mean mu_in
/// when the cheating device may preferentially pass high-photon-number
/// events, subject to reproducing the declared efficiency. F_N = (N+1)/(N+2)
/// is increasing in N, so the optimum passes the highest photon numbers
/// first (fractional knapsack).
inline double classical_bound(double mu_in, double device_efficiency) {
  require(mu_in > 0, ErrorCode::InvalidArgument, "mu_in must be > 0");
  require(device_efficiency > 0 && device_efficiency <= 1, ErrorCode::InvalidArgument,
          "efficiency must be in (0,1]");
  const int nmax = detail::bound_nmax(mu_in);
  const std::vector<double> p = detail::poisson_pmf(mu_in, nmax);
  const double available = 1.0 - p[0];
  const double threshold = device_efficiency * available;
  require(threshold <= available * (1.0 + 1e-9), ErrorCode::Infeasible,
          "demanded throughput exceeds available non-vacuum events");

  double need = std::min(threshold, available);
  double num = 0, den = 0;
  for (int n = nmax; n >= 1 && need > 0; --n) {
    const double take = std::min(p[static_cast<std::size_t>(n)], need);
    const double f = static_cast<double>(n + 1) / static_cast<double>(n + 2);
    num += take * f;
    den += take;
    need -= take;
  }
  require(den > 0, ErrorCode::Infeasible, "no events available for the classical bound");
  return num / den;
}

/// Independent check of classical_bound: exhaustive scan over pass-threshold
/// structures (all q = 1 above a cutoff, a fractional q at the cutoff,
/// scanned on a fine grid), keeping the best objective.
inline double classical_bound_bruteforce(double mu_in, double device_efficiency, int nmax = 20,
                                         int resolution = 1000) {
  require(mu_in > 0 && device_efficiency > 0 && device_efficiency <= 1, ErrorCode::InvalidArgument,
          "bad bound inputs");
  const std::vector<double> p = detail::poisson_pmf(mu_in, nmax);
  double available = 0;
  for (int n = 1; n <= nmax; ++n) available += p[static_cast<std::size_t>(n)];
  const double threshold = std::min(device_efficiency * (1.0 - p[0]), available);

  double best = 0;
  for (int cutoff = 1; cutoff <= nmax; ++cutoff) {
    double tail_p = 0, tail_pf = 0;
    for (int n = cutoff + 1; n <= nmax; ++n) {
      const double f = static_cast<double>(n + 1) / static_cast<double>(n + 2);
      tail_p += p[static_cast<std::size_t>(n)];
      tail_pf += p[static_cast<std::size_t>(n)] * f;
    }
    const double fc = static_cast<double>(cutoff + 1) / static_cast<double>(cutoff + 2);
    for (int i = 0; i <= resolution; ++i) {
      const double q = static_cast<double>(i) / resolution;
      const double den = tail_p + q * p[static_cast<std::size_t>(cutoff)];
      if (den + 1e-15 < threshold || den <= 0) continue;
      const double obj = (tail_pf + q * p[static_cast<std::size_t>(cutoff)] * fc) / den;
      best = std::max(best, obj);
    }
  }
  return best;
}

}  // namespace afcmem

#endif  // AFCMEM_PHOTONICS_HPP
