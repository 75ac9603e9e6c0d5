#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace angiogan {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: channel mismatch, bad block counts, unknown kinds.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Valid configuration but unusable input (shape, size, empty batch).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Dataset ingestion failure (missing counterpart, dimension mismatch).
class IngestionError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or unreadable checkpoint / archive.
class LoadError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A non-finite loss was produced during training.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t cycle, const std::string& what)
      : Error("training diverged at cycle " + std::to_string(cycle) + ": " + what), cycle_(cycle) {}

  std::size_t cycle() const noexcept { return cycle_; }

 private:
  std::size_t cycle_;
};

}  // namespace angiogan
