#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace devmf {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An index tuple addresses a row, column or slice outside the model.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A numeric argument lies outside the domain of a function (e.g. a non-positive variance).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Operands disagree on dimensions (mode count, sizes, ranks, lengths).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration: fractions, ranks, mode counts, empty splits.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller-side precondition that is not a plain range/shape problem.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A non-finite gradient was handed to a step function.
class NumericError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  /// 1-based line number, or 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateError : public Error {
 public:
  DuplicateError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Training produced a non-finite objective or a runaway parameter.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : Error("diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

/// A sensor slice is empty or constant, so its standard score is undefined.
class DegenerateSliceError : public Error {
 public:
  DegenerateSliceError(const std::string& what, std::size_t slice)
      : Error(what + " (slice " + std::to_string(slice) + ")"), slice_(slice) {}
  std::size_t slice() const noexcept { return slice_; }

 private:
  std::size_t slice_;
};

}  // namespace devmf
