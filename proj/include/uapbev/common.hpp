#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace uapbev {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Base class for all library errors. The `what()` string is a single line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void require_dims(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

// splitmix64 finalizer; used to derive independent generator streams from
// (master seed, index) pairs so that parallel fan-out never shares state.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

// Standard normal draw via Box-Muller on the raw engine output. Unlike
// std::normal_distribution this caches nothing, so a draw depends only on
// the engine state.
inline double standard_normal(Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  double u1 = 0.0;
  do {
    u1 = static_cast<double>(rng() >> 11) * kScale;
  } while (u1 <= 0.0);
  const double u2 = static_cast<double>(rng() >> 11) * kScale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

// Both Box-Muller outputs from one pair of engine draws.
inline std::pair<double, double> standard_normal_pair(Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  constexpr double kScale = 1.0 / 9007199254740992.0;
  double u1 = 0.0;
  do {
    u1 = static_cast<double>(rng() >> 11) * kScale;
  } while (u1 <= 0.0);
  const double u2 = static_cast<double>(rng() >> 11) * kScale;
  const double r = std::sqrt(-2.0 * std::log(u1));
  return {r * std::cos(kTwoPi * u2), r * std::sin(kTwoPi * u2)};
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace uapbev
