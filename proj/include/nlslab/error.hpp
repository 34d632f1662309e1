#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nlslab {

enum class ErrorKind {
  shape_mismatch,
  invalid_argument,
  geometry,
  numerical,
  config,
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::shape_mismatch: return "shape_mismatch";
  case ErrorKind::invalid_argument: return "invalid_argument";
  case ErrorKind::geometry: return "geometry";
  case ErrorKind::numerical: return "numerical";
  case ErrorKind::config: return "config";
  case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library. `kind()` lets front-ends map errors
/// onto exit codes without parsing messages.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &what) {
  throw Error(kind, what);
}

inline void require(bool condition, ErrorKind kind, const std::string &what) {
  if (!condition)
    fail(kind, what);
}

} // namespace nlslab
