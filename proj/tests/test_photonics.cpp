#include <doctest.h>

#include <cmath>

#include "afcmem/photonics.hpp"

using namespace afcmem;

namespace {

constexpr double kFwhm = 50.0, kSep = 130.0;

PulseTrain encode(StateLabel label, double mu = 1.0, double phase = 0.0) {
  return encode_qubit(make_time_bin_qubit(label, kFwhm, kSep, mu, phase), 200.0, 0.0, 1.0, 1024);
}

double energy_in(const PulseTrain& p, double lo, double hi) {
  double e = 0;
  for (std::size_t i = 0; i < p.samples.size(); ++i) {
    const double t = p.time_at(i);
    if (t >= lo && t < hi) e += std::norm(p.samples[i]);
  }
  return e * p.dt_ns;
}

InterferometerSpec balanced_umzi(double theta = 0.0) {
  InterferometerSpec spec;
  spec.arm_delay_ns = kSep;
  spec.analysis_phase = theta;
  return spec;
}

/// Central-peak energy of the interference port for |e> + e^{i da}|l>,
/// using a wide bin separation so window clipping is negligible.
double central_peak_energy(double da, double theta) {
  PulseTrain in =
      encode_qubit(make_time_bin_qubit(StateLabel::Custom, kFwhm, 400.0, 1.0, da), 200.0, 0.0, 1.0,
                   2048);
  InterferometerSpec spec = balanced_umzi(theta);
  spec.arm_delay_ns = 400.0;
  PulseTrain out = umzi_output(in, spec);
  return energy_in(out, 600.0 - 150.0, 600.0 + 150.0);
}

}  // namespace

TEST_CASE("encode_qubit: basis states and photon budget") {
  PulseTrain early = encode(StateLabel::Early, 1.0);
  CHECK(early.energy() == doctest::Approx(1.0).epsilon(1e-9));
  // Paper geometry: the Gaussian tail crosses the midpoint at the 1e-3 level.
  CHECK(energy_in(early, 200.0 + kSep / 2.0, 1024.0) <= 2e-3 * early.energy());
  // Wide bin separation: the late half-line holds none of |e>.
  PulseTrain early_w =
      encode_qubit(make_time_bin_qubit(StateLabel::Early, kFwhm, 400.0, 1.0), 200.0, 0.0, 1.0, 2048);
  CHECK(energy_in(early_w, 400.0, 2048.0) <= 1e-6 * early_w.energy());

  PulseTrain plus = encode(StateLabel::Plus, 1.610);
  const double early_bin = energy_in(plus, 0.0, 200.0 + kSep / 2.0);
  const double late_bin = energy_in(plus, 200.0 + kSep / 2.0, 1024.0);
  // The coherent cross term straddles the midpoint; the split is symmetric
  // up to one time sample, the sum is the exact photon budget.
  CHECK(early_bin == doctest::Approx(late_bin).epsilon(1e-3));
  CHECK(early_bin == doctest::Approx(0.805).epsilon(1e-2));
  CHECK(early_bin + late_bin == doctest::Approx(1.610).epsilon(1e-9));
  CHECK(plus.energy() == doctest::Approx(1.610).epsilon(1e-9));
}

TEST_CASE("encode_qubit: custom phase pi equals the minus state") {
  PulseTrain minus = encode(StateLabel::Minus);
  PulseTrain custom = encode(StateLabel::Custom, 1.0, M_PI);
  for (std::size_t i = 0; i < minus.samples.size(); ++i)
    CHECK(std::abs(minus.samples[i] - custom.samples[i]) <= 1e-12);
}

TEST_CASE("encode_qubit: overlapping bins are rejected") {
  const TimeBinQubit q = make_time_bin_qubit(StateLabel::Plus, 50.0, 60.0, 1.0);
  CHECK_THROWS_AS(encode_qubit(q, 200.0, 0.0, 1.0, 1024), Error);
}

TEST_CASE("umzi: interference contrast for |+> and |->") {
  // Paper geometry: central window clips Gaussian tails at the 1e-3 level.
  PulseTrain bright = umzi_output(encode(StateLabel::Plus), balanced_umzi());
  PulseTrain dark = umzi_output(encode(StateLabel::Minus), balanced_umzi());
  const double bright_central = energy_in(bright, 200.0 + kSep - 65.0, 200.0 + kSep + 65.0);
  const double dark_central = energy_in(dark, 200.0 + kSep - 65.0, 200.0 + kSep + 65.0);
  CHECK(bright_central == doctest::Approx(0.5).epsilon(3e-3));  // half the input energy
  CHECK(dark_central <= 1e-3 * bright.energy());

  // Wide bin separation removes the tail leakage: perfect contrast.
  InterferometerSpec wide = balanced_umzi();
  wide.arm_delay_ns = 400.0;
  auto enc = [&](StateLabel label) {
    return encode_qubit(make_time_bin_qubit(label, kFwhm, 400.0, 1.0), 200.0, 0.0, 1.0, 2048);
  };
  PulseTrain bright_w = umzi_output(enc(StateLabel::Plus), wide);
  PulseTrain dark_w = umzi_output(enc(StateLabel::Minus), wide);
  CHECK(energy_in(bright_w, 600.0 - 150.0, 600.0 + 150.0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(energy_in(dark_w, 600.0 - 150.0, 600.0 + 150.0) <= 1e-9);
}

TEST_CASE("umzi: single early bin splits into two equal peaks") {
  PulseTrain in = encode_qubit(make_time_bin_qubit(StateLabel::Early, kFwhm, 400.0, 1.0), 200.0,
                               0.0, 1.0, 2048);
  InterferometerSpec wide = balanced_umzi();
  wide.arm_delay_ns = 400.0;
  PulseTrain out = umzi_output(in, wide);
  const double first = energy_in(out, 200.0 - 150.0, 200.0 + 150.0);
  const double second = energy_in(out, 600.0 - 150.0, 600.0 + 150.0);
  CHECK(first == doctest::Approx(second).epsilon(1e-9));
  CHECK(first + second == doctest::Approx(out.energy()).epsilon(1e-9));
}

TEST_CASE("umzi: lossless two-port energy conservation") {
  for (double r1 : {0.5, 0.3}) {
    for (double r2 : {0.5, 0.7}) {
      InterferometerSpec spec = balanced_umzi(0.4);
      spec.splitter_ratios = {r1, r2};
      PulseTrain in = encode(StateLabel::PlusI, 0.9);
      const double total = umzi_output(in, spec, UmziPort::Interference).energy() +
                           umzi_output(in, spec, UmziPort::Complement).energy();
      CHECK(total == doctest::Approx(in.energy()).epsilon(1e-10));
    }
  }
}

TEST_CASE("umzi: fringe is sinusoidal with unit visibility for the ideal device") {
  std::vector<std::pair<double, double>> fringe;
  for (int i = 0; i < 16; ++i) {
    const double da = 2.0 * M_PI * i / 16.0;
    fringe.emplace_back(da, central_peak_energy(da, 0.0));
  }
  const FringeFit fit = visibility_and_fidelity(fringe);
  CHECK(fit.visibility == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(fit.fidelity == doctest::Approx(1.0).epsilon(1e-6));
  // theta = 0 puts the fringe in pure-cosine position: phi0 = pi/2.
  CHECK(fit.phase_offset == doctest::Approx(M_PI / 2.0).epsilon(1e-6));
  // Residual of the sinusoidal model is tiny compared to the amplitude.
  double amp = 0, worst = 0;
  for (const auto& [da, c] : fringe) {
    const double model =
        (fringe[0].second / 2.0) * (1.0 + fit.visibility * std::sin(da + fit.phase_offset));
    amp = std::max(amp, c);
    worst = std::max(worst, std::abs(c - model));
  }
  CHECK(worst <= 1e-6 * amp);
}

TEST_CASE("detect: dark counts follow the Poisson mean") {
  PulseTrain zero{0.0, 1.0, std::vector<complexd>(200, complexd(0, 0))};
  DetectorModel det;
  det.quantum_efficiency = 0.8;
  det.dark_rate_per_s = 100.0;
  det.rng_seed = 99;
  const CountHistogram hist = detect(zero, det, 1'000'000);
  const double mean_per_bin = 0.1;  // 100/s * 1 ns * 1e6 trials
  double total = 0;
  for (auto c : hist.counts) total += static_cast<double>(c);
  const double expected = mean_per_bin * static_cast<double>(hist.counts.size());
  CHECK(std::abs(total - expected) <= 3.0 * std::sqrt(expected));
}

TEST_CASE("detect: signal counts match mu * eta over many trials") {
  PulseTrain pulse = gaussian_pulse(100.0, 30.0, 0.0125, 0.0, 1.0, 256);
  DetectorModel det;
  det.quantum_efficiency = 0.8;  // 0.0125 * 0.8 = 0.01 photons detected per trial
  det.dark_rate_per_s = 0.0;
  det.rng_seed = 7;
  const CountHistogram hist = detect(pulse, det, 10'000);
  const double total = static_cast<double>(hist.counts_in(0.0, 256.0));
  CHECK(std::abs(total - 100.0) <= 3.0 * 10.0);
}

TEST_CASE("detect: preconditions and determinism") {
  PulseTrain pulse = gaussian_pulse(100.0, 30.0, 1.0, 0.0, 1.0, 256);
  DetectorModel det;
  CHECK_THROWS_AS(detect(pulse, det, 0), Error);

  const CountHistogram a = detect(pulse, det, 1000);
  const CountHistogram b = detect(pulse, det, 1000);
  CHECK(a.counts == b.counts);

  DetectorModel det2 = det;
  det2.rng_seed = det.rng_seed + 1;
  const CountHistogram c = detect(pulse, det2, 1000);
  CHECK(a.counts != c.counts);
}

TEST_CASE("detect: disjoint seeds give statistically independent histograms") {
  PulseTrain flat{0.0, 1.0, std::vector<complexd>(400, complexd(0.1, 0.0))};
  DetectorModel det;
  det.quantum_efficiency = 1.0;
  det.dark_rate_per_s = 0.0;
  det.rng_seed = 1;
  DetectorModel det2 = det;
  det2.rng_seed = 2;
  const CountHistogram a = detect(flat, det, 2000);  // lambda = 20 per bin
  const CountHistogram b = detect(flat, det2, 2000);
  // For independent Poisson pairs, sum (a-b)^2/(a+b) ~ chi2 with nbins dof.
  double stat = 0;
  for (std::size_t i = 0; i < a.counts.size(); ++i) {
    const double s = static_cast<double>(a.counts[i]) + static_cast<double>(b.counts[i]);
    const double d = static_cast<double>(a.counts[i]) - static_cast<double>(b.counts[i]);
    if (s > 0) stat += d * d / s;
  }
  const double dof = static_cast<double>(a.counts.size());
  CHECK(stat > dof - 5.0 * std::sqrt(2.0 * dof));  // p > 0.001 both ways
  CHECK(stat < dof + 5.0 * std::sqrt(2.0 * dof));
}

TEST_CASE("snr: direct arithmetic") {
  CountHistogram hist;
  hist.bin_width_ns = 1.0;
  hist.origin_ns = 0.0;
  hist.counts.assign(200, 0);
  hist.counts[50] = 563;  // signal window [40, 60)
  hist.counts[150] = 10;  // noise window [140, 160)
  const SnrResult res = snr(hist, {40.0, 60.0}, {140.0, 160.0});
  CHECK(res.value == doctest::Approx(55.3).epsilon(1e-12));
  CHECK(res.sigma > 0);
  CHECK(!res.lower_bound);
}

TEST_CASE("snr: zero signal and empty noise window") {
  CountHistogram hist;
  hist.counts.assign(200, 0);
  hist.counts[150] = 10;
  const SnrResult res = snr(hist, {40.0, 60.0}, {140.0, 160.0});
  CHECK(res.value == doctest::Approx(-1.0));

  CountHistogram empty;
  empty.counts.assign(200, 0);
  empty.counts[50] = 100;
  const SnrResult lb = snr(empty, {40.0, 60.0}, {140.0, 160.0});
  CHECK(lb.lower_bound);
  CHECK(lb.value == doctest::Approx(99.0));
}

TEST_CASE("fidelity_el: count ratios") {
  CountHistogram he, hl;
  he.counts.assign(300, 0);
  hl.counts.assign(300, 0);
  he.counts[100] = 988;
  he.counts[230] = 12;
  hl.counts[100] = 12;
  hl.counts[230] = 988;
  const FidelityResult f = fidelity_el(he, hl, {90.0, 110.0}, {220.0, 240.0});
  CHECK(f.value == doctest::Approx(0.988).epsilon(1e-12));
  CHECK(f.sigma > 0);

  hl.counts[100] = 988;  // now equal counts in both gates
  hl.counts[230] = 988;
  const FidelityResult g = fidelity_el(he, hl, {90.0, 110.0}, {220.0, 240.0});
  CHECK(g.value == doctest::Approx((0.988 + 0.5) / 2.0).epsilon(1e-9));
}

TEST_CASE("fidelity_el: ideal noiseless memory scores 1") {
  CountHistogram he, hl;
  he.counts.assign(300, 0);
  hl.counts.assign(300, 0);
  he.counts[100] = 1000;
  hl.counts[230] = 1000;
  const FidelityResult f = fidelity_el(he, hl, {90.0, 110.0}, {220.0, 240.0});
  CHECK(f.value == doctest::Approx(1.0));
}

TEST_CASE("visibility_and_fidelity: synthetic fringe at V = 0.94") {
  std::vector<std::pair<double, double>> fringe;
  for (int i = 0; i < 12; ++i) {
    const double da = 2.0 * M_PI * i / 12.0;
    fringe.emplace_back(da, 500.0 * (1.0 + 0.94 * std::sin(da)));
  }
  const FringeFit fit = visibility_and_fidelity(fringe);
  CHECK(fit.visibility == doctest::Approx(0.94).epsilon(1e-9));
  CHECK(fit.fidelity == doctest::Approx(0.97).epsilon(1e-9));
}

TEST_CASE("visibility_and_fidelity: constant counts give V=0, F=0.5") {
  std::vector<std::pair<double, double>> fringe;
  for (int i = 0; i < 10; ++i) fringe.emplace_back(2.0 * M_PI * i / 10.0, 321.0);
  const FringeFit fit = visibility_and_fidelity(fringe);
  CHECK(fit.visibility == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(fit.fidelity == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("visibility_and_fidelity: V > 1 is reported, not clamped") {
  std::vector<std::pair<double, double>> fringe;
  for (int i = 0; i < 12; ++i) {
    const double da = 2.0 * M_PI * i / 12.0;
    fringe.emplace_back(da, std::max(0.0, 100.0 * (1.0 + 1.2 * std::sin(da))));
  }
  const FringeFit fit = visibility_and_fidelity(fringe);
  CHECK(fit.visibility_exceeds_one);
  CHECK(fit.visibility > 1.0);
}

TEST_CASE("visibility_and_fidelity: preconditions") {
  std::vector<std::pair<double, double>> few{{0, 1}, {1, 2}, {2, 1}, {3, 2}, {4, 1}};
  CHECK_THROWS_AS(visibility_and_fidelity(few), Error);
  std::vector<std::pair<double, double>> narrow;
  for (int i = 0; i < 8; ++i) narrow.emplace_back(0.3 * i, 1.0 + i);
  CHECK_THROWS_AS(visibility_and_fidelity(narrow), Error);
}

TEST_CASE("total_fidelity") {
  CHECK(total_fidelity({0.988, 0.0}, {0.966, 0.0}).value == doctest::Approx(0.97333333).epsilon(1e-6));
  CHECK(total_fidelity({1.0, 0.0}, {1.0, 0.0}).value == doctest::Approx(1.0));
  CHECK(total_fidelity({0.5, 0.0}, {0.5, 0.0}).value == doctest::Approx(0.5));
  const FidelityResult f = total_fidelity({0.988, 0.001}, {0.966, 0.002});
  CHECK(f.sigma == doctest::Approx(std::sqrt(std::pow(0.001 / 3, 2) + std::pow(0.004 / 3, 2))));
}

TEST_CASE("classical_bound: small mean photon number approaches 2/3") {
  CHECK(classical_bound(1e-6, 1.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-5));
}

TEST_CASE("classical_bound: paper operating point is beatable") {
  const double bound = classical_bound(1.610, 0.0195);
  CHECK(bound < 0.973);
  CHECK(bound > 0.5);
}

TEST_CASE("classical_bound: greedy matches the brute-force oracle on a 5x5 grid") {
  for (double mu : {0.2, 0.6, 1.0, 1.6, 2.5}) {
    for (double eta : {0.005, 0.02, 0.1, 0.5, 1.0}) {
      CAPTURE(mu);
      CAPTURE(eta);
      CHECK(std::abs(classical_bound(mu, eta) - classical_bound_bruteforce(mu, eta)) <= 1e-3);
    }
  }
}

TEST_CASE("classical_bound: monotone in mu and in efficiency") {
  double prev = 0;
  for (double mu : {0.1, 0.3, 0.9, 1.6, 3.0}) {
    const double b = classical_bound(mu, 0.02);
    CHECK(b >= prev - 1e-12);
    prev = b;
  }
  prev = 1.0;
  for (double eta : {0.005, 0.05, 0.3, 1.0}) {
    const double b = classical_bound(1.6, eta);
    CHECK(b <= prev + 1e-12);
    prev = b;
  }
}
