#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kcnn {

/// Base of every error raised by the library. `stage()` is the short
/// machine-readable tag the CLI prints before the message.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error("range", what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& what) : Error("empty", what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error("train", what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error("numerical", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

/// A metric that is not defined for its input (e.g. no relevant items).
class UndefinedError : public Error {
 public:
  explicit UndefinedError(const std::string& what) : Error("eval", what) {}
};

class BuildError : public Error {
 public:
  explicit BuildError(const std::string& what) : Error("build", what) {}
};

/// Malformed binary/text input. `offset()` is the byte position where
/// decoding stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error("parse", what + " at byte " + std::to_string(offset)),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class UnsupportedVersionError : public ParseError {
 public:
  UnsupportedVersionError(std::uint32_t version, std::uint64_t offset)
      : ParseError("unsupported version " + std::to_string(version), offset) {}
};

}  // namespace kcnn
