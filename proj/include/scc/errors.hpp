#pragma once

#include <stdexcept>
#include <string>

namespace scc {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ZeroNormError : public Error {
 public:
  ZeroNormError() : Error("vector norm is below 1e-12") {}
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

class SingleClassError : public Error {
 public:
  SingleClassError() : Error("at least two classes are required") {}
};

class UnsatisfiableError : public Error {
 public:
  using Error::Error;
};

class DivergedError : public Error {
 public:
  using Error::Error;
};

class EmptyTraceError : public Error {
 public:
  EmptyTraceError() : Error("step trace is empty") {}
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Raised while parsing experiment configs; `path` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace scc
