#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <spdlog/logger.h>

namespace mtal {

using Index = Eigen::Index;

/// Row-major sparse matrix. The stored pattern doubles as the observation
/// mask: a cell takes part in a loss or metric iff it is stored, even when its
/// value is zero.
using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;
using MaskedMatrix = RowSparse;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The library-wide logger ("mtal"). Warnings for recoverable data problems
/// go here; tests may swap sinks to observe them.
std::shared_ptr<spdlog::logger> logger();

/// SplitMix64 finalizer; used to derive independent RNG streams from a master
/// seed and a list of tags (domain id, round, ...).
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Tags... tags) {
  std::uint64_t s = mix_seed(seed);
  ((s = mix_seed(s ^ static_cast<std::uint64_t>(tags))), ...);
  return s;
}

/// True iff both matrices have the same shape and identical stored pattern.
bool same_pattern(const RowSparse& a, const RowSparse& b);

/// Copy of `pattern` with every stored value replaced by `values[i]`.
RowSparse with_values(const RowSparse& pattern, const Eigen::VectorXd& values);

inline Eigen::Map<const Eigen::VectorXd> values_of(const RowSparse& m) {
  return {m.valuePtr(), m.nonZeros()};
}
inline Eigen::Map<Eigen::VectorXd> values_of(RowSparse& m) {
  return {m.valuePtr(), m.nonZeros()};
}

}  // namespace mtal
