#ifndef AFCMEM_COHERENCE_HPP
#define AFCMEM_COHERENCE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "afcmem/common.hpp"
#include "afcmem/levmar.hpp"

namespace afcmem {

struct DecayTrace {
  std::vector<double> times;
  std::vector<double> values;
  std::optional<std::vector<double>> noise_sigma;
  std::string time_unit = "s";  // label only; fits are unit-agnostic

  void validate() const {
    require(times.size() == values.size() && times.size() >= 2, ErrorCode::InvalidArgument,
            "trace arrays must match, length >= 2");
    for (std::size_t i = 1; i < times.size(); ++i)
      require(times[i] > times[i - 1], ErrorCode::InvalidArgument, "times must be strictly increasing");
    for (double v : values)
      require(std::isfinite(v), ErrorCode::InvalidArgument, "trace values must be finite");
    if (noise_sigma) {
      require(noise_sigma->size() == times.size(), ErrorCode::InvalidArgument,
              "noise_sigma length mismatch");
      for (double s : *noise_sigma)
        require(s > 0, ErrorCode::InvalidArgument, "noise_sigma must be > 0");
    }
  }
};

enum class DecayModel { SingleExp, TwoPulseEcho, TripleExp };

/// Exponent convention for the two-pulse echo decay versus pulse separation
/// t12. The echo intensity convention exp(-4 t12/T2) is the default; the
/// amplitude convention halves the exponent.
enum class EchoConvention { Intensity, Amplitude };

struct FitParameter {
  std::string name;
  double value = 0.0;
  double sigma = 0.0;
};

struct FitReport {
  DecayModel model = DecayModel::SingleExp;
  std::vector<FitParameter> parameters;
  double residual_rms = 0.0;
  bool converged = false;
  int iterations = 0;

  double value(const std::string& name) const {
    for (const auto& p : parameters)
      if (p.name == name) return p.value;
    fail(ErrorCode::InvalidArgument, "no fit parameter named " + name);
  }
  double sigma(const std::string& name) const {
    for (const auto& p : parameters)
      if (p.name == name) return p.sigma;
    fail(ErrorCode::InvalidArgument, "no fit parameter named " + name);
  }
};

inline double model_fluorescence(double t, double amplitude, double t1, double offset) {
  require(t1 > 0, ErrorCode::InvalidArgument, "T1 must be > 0");
  return amplitude * std::exp(-t / t1) + offset;
}

inline double model_two_pulse_echo(double t12, double amplitude, double t2,
                                   EchoConvention conv = EchoConvention::Intensity) {
  require(t2 > 0 && t12 >= 0, ErrorCode::InvalidArgument, "require T2 > 0 and t12 >= 0");
  const double k = conv == EchoConvention::Intensity ? 4.0 : 2.0;
  return amplitude * std::exp(-k * t12 / t2);
}

inline double model_hole_decay(double t, double a1, double a2, double a3, double tau1, double tau2,
                               double tau3, double offset) {
  require(tau1 > 0 && tau2 > 0 && tau3 > 0, ErrorCode::InvalidArgument, "all tau must be > 0");
  require(tau1 <= tau2 && tau2 <= tau3, ErrorCode::InvalidArgument, "tau must be sorted ascending");
  return a1 * std::exp(-t / tau1) + a2 * std::exp(-t / tau2) + a3 * std::exp(-t / tau3) + offset;
}

namespace detail {

inline std::size_t n_free_params(DecayModel m) {
  switch (m) {
    case DecayModel::SingleExp: return 3;
    case DecayModel::TwoPulseEcho: return 2;
    case DecayModel::TripleExp: return 7;
  }
  return 0;
}

/// Log-linear regression of log(v) vs t over [first,last): returns (A, tau).
inline std::pair<double, double> log_linear(const std::vector<double>& t,
                                            const std::vector<double>& v, std::size_t first,
                                            std::size_t last) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = first; i < last; ++i) {
    if (v[i] <= 0) continue;
    const double y = std::log(v[i]);
    sx += t[i];
    sy += y;
    sxx += t[i] * t[i];
    sxy += t[i] * y;
    ++n;
  }
  if (n < 2) return {1.0, t.back() > 0 ? t.back() / 2 : 1.0};
  const double denom = static_cast<double>(n) * sxx - sx * sx;
  if (std::abs(denom) < 1e-300) return {1.0, t.back() / 2};
  const double slope = (static_cast<double>(n) * sxy - sx * sy) / denom;
  const double icept = (sy - slope * sx) / static_cast<double>(n);
  const double tau = slope < -1e-300 ? -1.0 / slope : t.back();
  return {std::exp(icept), tau};
}

/// Successive tail-peeling initial guess for a sum of `k` exponentials.
/// Fits the slowest component on the trailing segment, subtracts, repeats.
inline void peel_exponentials(const std::vector<double>& t, std::vector<double> v, int k,
                              std::vector<double>& amps, std::vector<double>& taus) {
  amps.assign(static_cast<std::size_t>(k), 0.0);
  taus.assign(static_cast<std::size_t>(k), 1.0);
  const std::size_t n = t.size();
  for (int c = k - 1; c >= 0; --c) {
    const std::size_t first = n * static_cast<std::size_t>(c) / static_cast<std::size_t>(k);
    auto [a, tau] = log_linear(t, v, first, n);
    a = std::max(a, 1e-12);
    tau = std::max(tau, 1e-12);
    amps[static_cast<std::size_t>(c)] = a;
    taus[static_cast<std::size_t>(c)] = tau;
    for (std::size_t i = 0; i < n; ++i) v[i] -= a * std::exp(-t[i] / tau);
  }
  // Peeled slow-to-fast; report fast-to-slow.
  std::reverse(amps.begin(), amps.end());
  std::reverse(taus.begin(), taus.end());
}

}  // namespace detail

struct FitOptions {
  EchoConvention echo_convention = EchoConvention::Intensity;
  int max_iterations = 500;
};

/// Weighted nonlinear least squares on a decay trace. Initial guesses, when
/// not supplied, come from log-linear regression (tail-peeling for the
/// triple exponential). Non-convergence is reported in the result, not thrown.
inline FitReport fit_decay(const DecayTrace& trace, DecayModel model,
                           std::optional<std::vector<double>> initial_guess = std::nullopt,
                           const FitOptions& options = {}) {
  trace.validate();
  const std::size_t nfree = detail::n_free_params(model);
  require(trace.times.size() >= 2 * nfree, ErrorCode::InvalidArgument,
          "insufficient data: need >= 2x free parameter count");
  const double vmin = *std::min_element(trace.values.begin(), trace.values.end());
  const double vmax = *std::max_element(trace.values.begin(), trace.values.end());
  require(vmax > vmin, ErrorCode::InvalidArgument, "degenerate model: all trace values equal");

  const auto& t = trace.times;
  const auto& v = trace.values;
  const std::size_t n = t.size();

  Eigen::VectorXd p0(static_cast<Eigen::Index>(nfree));
  if (initial_guess) {
    require(initial_guess->size() == nfree, ErrorCode::InvalidArgument, "initial guess size mismatch");
    for (std::size_t i = 0; i < nfree; ++i) p0[static_cast<Eigen::Index>(i)] = (*initial_guess)[i];
  } else if (model == DecayModel::SingleExp) {
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) shifted[i] = v[i] - vmin;
    auto [a, tau] = detail::log_linear(t, shifted, 0, n);
    p0 << std::max(a, 1e-12), std::max(tau, 1e-12), vmin;
  } else if (model == DecayModel::TwoPulseEcho) {
    auto [a, tau] = detail::log_linear(t, v, 0, n);
    const double k = options.echo_convention == EchoConvention::Intensity ? 4.0 : 2.0;
    p0 << std::max(a, 1e-12), std::max(k * tau, 1e-12);
  } else {
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) shifted[i] = std::max(v[i] - vmin, 0.0);
    std::vector<double> amps, taus;
    detail::peel_exponentials(t, shifted, 3, amps, taus);
    p0 << amps[0], taus[0], amps[1], taus[1], amps[2], taus[2], vmin;
  }

  // Fit log(tau) internally so time constants stay positive.
  auto eval = [&](const Eigen::VectorXd& q, double ti) {
    switch (model) {
      case DecayModel::SingleExp:
        return q[0] * std::exp(-ti / std::exp(q[1])) + q[2];
      case DecayModel::TwoPulseEcho: {
        const double k = options.echo_convention == EchoConvention::Intensity ? 4.0 : 2.0;
        return q[0] * std::exp(-k * ti / std::exp(q[1]));
      }
      case DecayModel::TripleExp:
        return q[0] * std::exp(-ti / std::exp(q[1])) + q[2] * std::exp(-ti / std::exp(q[3])) +
               q[4] * std::exp(-ti / std::exp(q[5])) + q[6];
    }
    return 0.0;
  };
  std::vector<std::size_t> tau_slots;
  switch (model) {
    case DecayModel::SingleExp: tau_slots = {1}; break;
    case DecayModel::TwoPulseEcho: tau_slots = {1}; break;
    case DecayModel::TripleExp: tau_slots = {1, 3, 5}; break;
  }
  Eigen::VectorXd q0 = p0;
  for (std::size_t s : tau_slots)
    q0[static_cast<Eigen::Index>(s)] = std::log(std::max(p0[static_cast<Eigen::Index>(s)], 1e-300));

  auto residual = [&](const Eigen::VectorXd& q) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      double ri = eval(q, t[i]) - v[i];
      if (trace.noise_sigma) ri /= (*trace.noise_sigma)[i];
      r[static_cast<Eigen::Index>(i)] = ri;
    }
    return r;
  };

  LmOptions lmopt;
  lmopt.max_iterations = options.max_iterations;
  lmopt.scale_covariance_by_residual = !trace.noise_sigma.has_value();
  LmResult lm = lm_fit(residual, q0, lmopt);

  // Back-transform log(tau) values and their variances (delta method).
  Eigen::VectorXd pf = lm.parameters;
  Eigen::VectorXd sig(pf.size());
  for (Eigen::Index i = 0; i < pf.size(); ++i)
    sig[i] = std::sqrt(std::max(lm.covariance(i, i), 0.0));
  for (std::size_t s : tau_slots) {
    const auto i = static_cast<Eigen::Index>(s);
    pf[i] = std::exp(pf[i]);
    sig[i] *= pf[i];
  }

  FitReport report;
  report.model = model;
  report.residual_rms = lm.residual_rms;
  report.converged = lm.converged;
  report.iterations = lm.iterations;
  auto add = [&](const std::string& name, std::size_t slot) {
    report.parameters.push_back({name, pf[static_cast<Eigen::Index>(slot)],
                                 sig[static_cast<Eigen::Index>(slot)]});
  };
  switch (model) {
    case DecayModel::SingleExp:
      add("amplitude", 0);
      add("t_decay", 1);
      add("offset", 2);
      break;
    case DecayModel::TwoPulseEcho:
      add("amplitude", 0);
      add("t2", 1);
      break;
    case DecayModel::TripleExp: {
      // Report components sorted by ascending tau.
      std::vector<std::size_t> order{0, 1, 2};
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return pf[static_cast<Eigen::Index>(2 * a + 1)] < pf[static_cast<Eigen::Index>(2 * b + 1)];
      });
      for (std::size_t r = 0; r < 3; ++r) {
        const std::string idx = std::to_string(r + 1);
        add("a" + idx, 2 * order[r]);
        add("tau" + idx, 2 * order[r] + 1);
      }
      add("offset", 6);
      break;
    }
  }
  return report;
}

}  // namespace afcmem

#endif  // AFCMEM_COHERENCE_HPP
