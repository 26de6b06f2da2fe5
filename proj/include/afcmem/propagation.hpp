#ifndef AFCMEM_PROPAGATION_HPP
#define AFCMEM_PROPAGATION_HPP

#include <unsupported/Eigen/FFT>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "afcmem/common.hpp"
#include "afcmem/ensemble.hpp"

namespace afcmem {

/// Complex temporal envelope on a uniform time grid. Amplitudes are in
/// sqrt(photon-flux) units: sum(|E|^2)*dt is the mean photon number.
struct PulseTrain {
  double t0_ns = 0.0;
  double dt_ns = 1.0;
  std::vector<complexd> samples;

  double energy() const {
    double e = 0;
    for (const auto& s : samples) e += std::norm(s);
    return e * dt_ns;
  }

  double time_at(std::size_t i) const { return t0_ns + static_cast<double>(i) * dt_ns; }

  double centroid_ns() const {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double w = std::norm(samples[i]);
      num += time_at(i) * w;
      den += w;
    }
    require(den > 0, ErrorCode::InvalidArgument, "centroid of an empty pulse");
    return num / den;
  }

  void validate() const {
    require(dt_ns > 0, ErrorCode::InvalidArgument, "dt must be > 0");
    require(samples.size() >= 2, ErrorCode::InvalidArgument, "pulse train needs >= 2 samples");
    for (const auto& s : samples)
      require(std::isfinite(s.real()) && std::isfinite(s.imag()), ErrorCode::InvalidArgument,
              "pulse train contains non-finite samples");
  }
};

/// Gaussian envelope of given intensity FWHM centered at `center_ns`,
/// normalized to carry `mean_photon_number`.
inline PulseTrain gaussian_pulse(double center_ns, double fwhm_ns, double mean_photon_number,
                                 double t0_ns, double dt_ns, std::size_t n_samples) {
  require(fwhm_ns > 0 && dt_ns > 0 && n_samples >= 2, ErrorCode::InvalidArgument,
          "bad gaussian pulse geometry");
  // Intensity FWHM: |E|^2 has the stated FWHM.
  const double sigma_amp = fwhm_ns * kFwhmToSigma * std::sqrt(2.0);
  PulseTrain p{t0_ns, dt_ns, std::vector<complexd>(n_samples)};
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double u = (p.time_at(i) - center_ns) / sigma_amp;
    p.samples[i] = std::exp(-0.5 * u * u);
  }
  const double e = p.energy();
  require(e > 0, ErrorCode::InvalidArgument, "pulse does not fit on the time grid");
  const double scale = std::sqrt(mean_photon_number / e);
  for (auto& s : p.samples) s *= scale;
  return p;
}

/// Causal linear filter of the comb: H = exp(-d/2 + i*phi) with phi the
/// minimum-phase (Kramers-Kronig) partner of the absorption.
struct TransferFunction {
  std::vector<double> detuning_mhz;     // increasing, uniform
  std::vector<complexd> complex_response;
  std::vector<double> optical_depth;    // source absorption, kept for resampling

  void validate() const {
    require(detuning_mhz.size() == complex_response.size() &&
                detuning_mhz.size() == optical_depth.size() && detuning_mhz.size() >= 2,
            ErrorCode::GridError, "transfer function arrays must match");
  }
};

struct MemoryResult {
  double efficiency = 0.0;
  double echo_time_ns = 0.0;
  std::pair<double, double> echo_window_ns{0.0, 0.0};
  double input_energy = 0.0;
  double echo_energy = 0.0;
};

namespace detail {

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Minimum-phase log-response from FFT-ordered half-depth samples via the
/// real-cepstrum construction: causal folding of ifft(-d/2). The real part
/// is replaced by the exact -d/2 afterwards so |H| never carries the
/// (small) circular-leakage error of the reconstruction; only the phase
/// comes from the cepstrum.
inline std::vector<complexd> min_phase_log_response(const std::vector<double>& half_depth) {
  const std::size_t n = half_depth.size();
  Eigen::FFT<double> fft;
  std::vector<complexd> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = complexd(-half_depth[i], 0.0);
  std::vector<complexd> cep(n);
  fft.inv(cep, c);
  std::vector<complexd> folded(n, complexd(0, 0));
  folded[0] = cep[0];
  for (std::size_t i = 1; i < n / 2; ++i) folded[i] = 2.0 * cep[i];
  folded[n / 2] = cep[n / 2];
  std::vector<complexd> log_h(n);
  fft.fwd(log_h, folded);
  for (std::size_t i = 0; i < n; ++i) log_h[i] = complexd(-half_depth[i], log_h[i].imag());
  return log_h;
}

/// Linear interpolation of the optical depth with flat extension beyond the
/// sampled window (the inhomogeneous line is effectively flat there).
inline double sample_depth(const std::vector<double>& grid, const std::vector<double>& depth,
                           double f_mhz) {
  if (f_mhz <= grid.front()) return depth.front();
  if (f_mhz >= grid.back()) return depth.back();
  const double h = grid[1] - grid[0];
  const auto i = static_cast<std::size_t>((f_mhz - grid.front()) / h);
  const std::size_t j = std::min(i + 1, grid.size() - 1);
  const double t = (f_mhz - grid[i]) / h;
  return depth[i] + t * (depth[j] - depth[i]);
}

}  // namespace detail

/// Builds H(omega) on the profile's own grid. The minimum-phase dispersion
/// is computed on a zero-padded circle at least 8x the profile span to
/// suppress wrap-around, then sampled back.
inline TransferFunction transfer_function(const SpectralProfile& profile, int pad_factor = 8) {
  profile.validate();
  require(pad_factor >= 2, ErrorCode::InvalidArgument, "pad_factor must be >= 2");
  const std::size_t n = profile.detuning_mhz.size();
  const std::size_t nfft = detail::next_pow2(n * static_cast<std::size_t>(pad_factor));
  const double h = profile.spacing();

  // FFT-ordered frequencies: i*h for i < nfft/2, (i-nfft)*h above.
  std::vector<double> half_depth(nfft);
  for (std::size_t i = 0; i < nfft; ++i) {
    const double f = (i < nfft / 2 ? static_cast<double>(i)
                                   : static_cast<double>(i) - static_cast<double>(nfft)) * h;
    half_depth[i] = detail::sample_depth(profile.detuning_mhz, profile.optical_depth, f) / 2.0;
  }
  const std::vector<complexd> log_h = detail::min_phase_log_response(half_depth);

  TransferFunction out;
  out.detuning_mhz = profile.detuning_mhz;
  out.optical_depth = profile.optical_depth;
  out.complex_response.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = profile.detuning_mhz[i];
    const std::size_t k = f >= 0 ? static_cast<std::size_t>(std::llround(f / h))
                                 : nfft - static_cast<std::size_t>(std::llround(-f / h));
    out.complex_response[i] = std::exp(log_h[k % nfft]);
  }
  out.validate();
  return out;
}

/// Applies the comb filter to a pulse train: FFT, multiply, inverse FFT.
/// The input is zero-padded by `pad_factor` so echoes up to several storage
/// times stay inside the window and circular wrap-around is negligible. The
/// absorption is resampled onto the padded FFT grid and the causal phase is
/// rebuilt there, which keeps |H| and the dispersion mutually consistent at
/// any grid resolution.
inline PulseTrain propagate(const PulseTrain& input, const TransferFunction& filter,
                            int pad_factor = 8) {
  input.validate();
  filter.validate();
  require(pad_factor >= 2, ErrorCode::InvalidArgument, "pad_factor must be >= 2");
  const double nyquist_mhz = 1e3 / (2.0 * input.dt_ns);
  require(filter.detuning_mhz.back() <= nyquist_mhz, ErrorCode::GridError,
          "nyquist violation: pulse sampling too coarse for the filter grid");

  const std::size_t nfft = detail::next_pow2(input.samples.size() * static_cast<std::size_t>(pad_factor));
  std::vector<complexd> x(nfft, complexd(0, 0));
  std::copy(input.samples.begin(), input.samples.end(), x.begin());

  std::vector<double> half_depth(nfft);
  const double df = 1e3 / (input.dt_ns * static_cast<double>(nfft));  // MHz per FFT bin
  for (std::size_t i = 0; i < nfft; ++i) {
    const double f = (i < nfft / 2 ? static_cast<double>(i)
                                   : static_cast<double>(i) - static_cast<double>(nfft)) * df;
    half_depth[i] = detail::sample_depth(filter.detuning_mhz, filter.optical_depth, f) / 2.0;
  }
  const std::vector<complexd> log_h = detail::min_phase_log_response(half_depth);

  Eigen::FFT<double> fft;
  std::vector<complexd> spectrum(nfft);
  fft.fwd(spectrum, x);
  for (std::size_t i = 0; i < nfft; ++i) spectrum[i] *= std::exp(log_h[i]);
  std::vector<complexd> y(nfft);
  fft.inv(y, spectrum);

  PulseTrain out{input.t0_ns, input.dt_ns, std::move(y)};
  return out;
}

/// Echo energy in a window of full width `window_ns` centered `tau_ns` after
/// the input centroid, as a fraction of the total input energy.
inline MemoryResult echo_efficiency(const PulseTrain& output, const PulseTrain& input,
                                    double tau_ns, double window_ns) {
  output.validate();
  input.validate();
  require(tau_ns > 0 && window_ns > 0, ErrorCode::InvalidArgument, "tau and window must be > 0");
  require(window_ns < tau_ns, ErrorCode::InvalidArgument,
          "window overlaps transmission: require window < tau");

  const double ref = input.centroid_ns();
  const double lo = ref + tau_ns - window_ns / 2.0;
  const double hi = ref + tau_ns + window_ns / 2.0;

  MemoryResult res;
  res.input_energy = input.energy();
  res.echo_window_ns = {lo, hi};
  double num = 0, den = 0;
  for (std::size_t i = 0; i < output.samples.size(); ++i) {
    const double t = output.time_at(i);
    if (t < lo || t > hi) continue;
    const double w = std::norm(output.samples[i]);
    den += w;
    num += t * w;
  }
  res.echo_energy = den * output.dt_ns;
  res.efficiency = res.input_energy > 0 ? res.echo_energy / res.input_energy : 0.0;
  res.echo_time_ns = den > 0 ? num / den : lo + window_ns / 2.0;
  return res;
}

/// Closed-form AFC efficiency for Gaussian teeth:
/// (d1/F)^2 * exp(-d1/F) * exp(-7/F^2) * exp(-d0).
inline double afc_efficiency_analytic(double d1, double finesse, double d0) {
  require(d1 >= 0 && finesse > 0 && d0 >= 0, ErrorCode::InvalidArgument,
          "require d1 >= 0, F > 0, d0 >= 0");
  const double deff = d1 / finesse;
  return deff * deff * std::exp(-deff) * std::exp(-7.0 / (finesse * finesse)) * std::exp(-d0);
}

inline int multimode_capacity(double tau_ns, double mode_duration_ns) {
  require(tau_ns > 0 && mode_duration_ns > 0, ErrorCode::InvalidArgument,
          "tau and mode duration must be > 0");
  return static_cast<int>(std::floor(tau_ns / mode_duration_ns));
}

/// Equivalent fiber/waveguide delay line: physical length and total loss
/// needed to match a storage time.
inline std::pair<double, double> delay_line_comparison(double tau_ns, double group_index,
                                                       double loss_db_per_m) {
  require(tau_ns >= 0 && group_index > 0 && loss_db_per_m >= 0, ErrorCode::InvalidArgument,
          "delay line parameters must be positive");
  const double length_m = kSpeedOfLightMPerS * tau_ns * 1e-9 / group_index;
  return {length_m, length_m * loss_db_per_m};
}

}  // namespace afcmem

#endif  // AFCMEM_PROPAGATION_HPP
