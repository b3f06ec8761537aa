#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hgrl {

using Scalar = double;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MaskMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using IndexMat = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;

// Error taxonomy. Every throwing path uses one of these so callers (tests,
// the CLI) can distinguish misuse from bad input from numeric failure.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error("parse: " + msg) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& msg) : Error("validation: " + msg) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

// Violation of an API precondition (wrong mode, out-of-range index, ...).
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error("contract: " + msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};

inline void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

// FNV-1a, used for cache keys and checkpoint integrity.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), seed);
}

// String literals must hash as text. Without this overload, a const char*
// binds to the (data, n) form above and the seed is consumed as a byte count.
inline std::uint64_t fnv1a(const char* s, std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a(std::string(s), seed);
}

inline std::string hex64(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace hgrl
