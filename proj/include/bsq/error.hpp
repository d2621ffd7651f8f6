#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsq {

// Base for every error raised by the library. The CLI maps the subclasses
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or channel counts that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (even kernel size, unknown config key, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Weights, losses or gradients that stopped being finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Misuse of the autodiff tape (double backward, non-scalar loss, ...).
class TapeError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. `offset` is the byte position where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// nlohmann::json reports the 1-based position of the offending byte.
inline std::size_t json_error_offset(std::size_t byte) noexcept { return byte > 0 ? byte - 1 : 0; }

// Filesystem failures (unreadable input, unwritable output directory).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bsq
