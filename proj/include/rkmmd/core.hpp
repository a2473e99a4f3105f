#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>

namespace rkmmd {

// -----------------------------------------------------------------------------
// Errors
// -----------------------------------------------------------------------------

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied inconsistent or out-of-range input.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A text file (CSV, config, checkpoint) could not be parsed.
class ParseError : public InputError {
 public:
  using InputError::InputError;
};

/// Data admits no valid answer (e.g. every point identical for the median heuristic).
class DegenerateDataError : public InputError {
 public:
  using InputError::InputError;
};

/// A loss or parameter became non-finite during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Broken internal invariant; never the caller's fault.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// -----------------------------------------------------------------------------
// FeatureMatrix
// -----------------------------------------------------------------------------

/// n samples by d features, one sample per row. Entries are always finite.
class FeatureMatrix {
 public:
  FeatureMatrix() : FeatureMatrix(Matrix(0, 1)) {}

  explicit FeatureMatrix(Matrix data) : data_(std::move(data)) {
    if (data_.cols() < 1) throw InputError("feature matrix needs d >= 1");
    if (!data_.allFinite()) throw InputError("feature matrix contains NaN or infinite entries");
  }

  /// Empty matrix with a known dimension.
  static FeatureMatrix empty(Eigen::Index d) { return FeatureMatrix(Matrix(0, d)); }

  Eigen::Index n() const { return data_.rows(); }
  Eigen::Index d() const { return data_.cols(); }
  const Matrix& data() const { return data_; }
  auto row(Eigen::Index i) const { return data_.row(i); }

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  Matrix data_;
};

inline void require_same_dim(const FeatureMatrix& a, const FeatureMatrix& b, std::string_view what) {
  if (a.d() != b.d()) {
    throw InputError(std::string(what) + ": dimension mismatch (" + std::to_string(a.d()) +
                     " vs " + std::to_string(b.d()) + ")");
  }
}

/// Stacks rows of a on top of rows of b.
inline Matrix vstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

// -----------------------------------------------------------------------------
// Random streams
// -----------------------------------------------------------------------------

using Rng = std::mt19937_64;

/// Generator for substream `stream` of a run seeded with `seed`. Distinct
/// streams never share state, so consumers are independent of each other.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6d6d64u};
  return Rng(seq);
}

// -----------------------------------------------------------------------------
// Number formatting
// -----------------------------------------------------------------------------

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw InternalError("to_chars failed");
  return std::string(buf, end);
}

/// Parses a complete decimal floating-point literal; nullopt-like failure via bool.
inline bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

}  // namespace rkmmd
