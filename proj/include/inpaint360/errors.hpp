#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace inpaint360 {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes (see tools/inpaint360.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class BadSpec : public Error {
 public:
  using Error::Error;
};

class UnknownObject : public Error {
 public:
  using Error::Error;
};

class MissingDepth : public Error {
 public:
  using Error::Error;
};

class EmptyPrompts : public Error {
 public:
  using Error::Error;
};

class OutOfBounds : public Error {
 public:
  using Error::Error;
};

class PatchTooLarge : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class MissingInput : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A NaN/Inf showed up in a loss or parameter; carries where it happened.
class NumericalError : public Error {
 public:
  NumericalError(std::string stage, long iteration)
      : Error("non-finite value in stage '" + stage + "' at iteration " +
              std::to_string(iteration)),
        stage_(std::move(stage)),
        iteration_(iteration) {}

  const std::string& stage() const { return stage_; }
  long iteration() const { return iteration_; }

 private:
  std::string stage_;
  long iteration_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at position " + std::to_string(position) + ")"),
        position_(position) {}

  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

}  // namespace inpaint360
