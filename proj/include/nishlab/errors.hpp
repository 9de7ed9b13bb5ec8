#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nishlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite input to a scalar kernel.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid parameters or an unsupported combination of settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed binary input; carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ExperimentError : public Error {
 public:
  using Error::Error;
};

}  // namespace nishlab
