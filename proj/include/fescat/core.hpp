#pragma once

// Small shared utilities: fixed-size linear algebra aliases, deterministic
// random sampling, hashing and number formatting used by the dataset layer.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <cstdio>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace fescat {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;

/// Marks a parameter as a non-deduced context so that Eigen expression
/// arguments convert instead of breaking template deduction; the dimension
/// is always pinned by a FieldModel/ConvexDomain parameter.
template <typename T>
using NoDeduce = std::type_identity_t<T>;

template <int N>
using Mat = Eigen::Matrix<double, N, N>;

/// Third-order tensor holding the field-strength derivatives:
/// dB[l](i,k) = d/dx_l B_{i,k}.
template <int N>
using DTensor = std::array<Mat<N>, N>;

inline double sqr(double x) { return x * x; }

/// Deterministic pseudo-random source.  The raw engine is std::mt19937_64;
/// all mappings from raw draws to doubles are done by hand so that streams
/// are reproducible independent of the standard library's distribution
/// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t raw() {
    // xorshift* step; small, fast and reproducible everywhere.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  /// Uniform double in [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal via Box-Muller (fresh pair each call, cached second).
  double normal() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cache_ = r * std::sin(2.0 * M_PI * u2);
    have_cache_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  /// Uniform direction on the unit sphere S^{N-1}.
  template <int N>
  Vec<N> unit_vector() {
    while (true) {
      Vec<N> v;
      for (int i = 0; i < N; ++i) v[i] = normal();
      const double norm = v.norm();
      if (norm > 1e-12) return v / norm;
    }
  }

  /// Uniform point in the ball of radius `radius` about `center`.
  template <int N>
  Vec<N> in_ball(const Vec<N>& center, double radius) {
    while (true) {
      Vec<N> v;
      for (int i = 0; i < N; ++i) v[i] = uniform(-1.0, 1.0);
      if (v.squaredNorm() <= 1.0) return center + radius * v;
    }
  }

 private:
  std::uint64_t state_;
  double cache_ = 0.0;
  bool have_cache_ = false;
};

/// FNV-1a 64-bit hash; used to fingerprint configurations in dataset
/// sidecars so outputs can be traced back to the exact model that made them.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

/// Shortest-round-trip decimal formatting; every number written to CSV or
/// JSON reports goes through here so that repeated runs are byte-identical.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

inline std::vector<double> linspace(double a, double b, int n) {
  if (n < 2) throw std::invalid_argument("linspace: need at least two points");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = a + (b - a) * static_cast<double>(i) / (n - 1);
  return out;
}

}  // namespace fescat
