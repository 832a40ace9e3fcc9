#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sbd {

/// Base of every error raised by the library. The CLI maps each subclass to
/// an exit code (usage 1, data/format 2, numerical 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or volume shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value outside the domain an operation accepts.
class InputError : public Error {
 public:
  using Error::Error;
};

/// An API called in a state it does not support.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed SVOL/SGCK bytes. Carries the offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Non-finite values showed up during training or a forward pass.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace sbd
