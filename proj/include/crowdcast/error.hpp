#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crowdcast {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit an operation. Carries the operation and
/// the offending axis so callers can report which dimension was wrong.
class ShapeError : public Error {
 public:
  ShapeError(std::string op, std::string axis, std::size_t expected, std::size_t actual)
      : Error(op + ": axis '" + axis + "' expected " + std::to_string(expected) + ", got " +
              std::to_string(actual)),
        op_(std::move(op)),
        axis_(std::move(axis)),
        expected_(expected),
        actual_(actual) {}

  ShapeError(std::string op, std::string message)
      : Error(op + ": " + message), op_(std::move(op)) {}

  const std::string& op() const noexcept { return op_; }
  const std::string& axis() const noexcept { return axis_; }
  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::string op_;
  std::string axis_;
  std::size_t expected_ = 0;
  std::size_t actual_ = 0;
};

/// Malformed or truncated binary/CSV input.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied values (out-of-range coordinates, bad config).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or otherwise could not proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace crowdcast
