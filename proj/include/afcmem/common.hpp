#ifndef AFCMEM_COMMON_HPP
#define AFCMEM_COMMON_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace afcmem {

using complexd = std::complex<double>;

inline constexpr double kSpeedOfLightMPerS = 299792458.0;
inline constexpr double kFwhmToSigma = 0.42466090014400953;  // 1/(2 sqrt(2 ln 2))

/// Error category attached to every exception thrown by this library.
enum class ErrorCode {
  InvalidArgument,   // precondition violation
  GridError,         // grid too coarse / too narrow / non-uniform / mismatch
  NumericalFault,    // integrator or fit failure that cannot be reported in-band
  NoPeaksFound,
  Infeasible,        // demanded target cannot be met
  SchemaError,       // malformed config document
  StageFailure,      // scenario stage wrapped failure
  MissingArtifact,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

/// FNV-1a 64-bit. Stable across platforms; used for config hashes and
/// per-stage seed derivation.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Derives an independent RNG seed for a named stage from the run seed.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view stage) {
  std::uint64_t h = fnv1a(stage);
  h ^= run_seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return fnv1a(std::string_view(reinterpret_cast<const char*>(&h), sizeof h));
}

inline bool nearly_equal(double a, double b, double rel_tol, double abs_tol = 0.0) {
  return std::abs(a - b) <= std::max(abs_tol, rel_tol * std::max(std::abs(a), std::abs(b)));
}

}  // namespace afcmem

#endif  // AFCMEM_COMMON_HPP
