#pragma once

#include <stdexcept>
#include <string>

namespace koopmpc {

enum class ErrorKind {
  InvalidInput,
  Convergence,
  Infeasible,
  InsufficientData,
  Divergence,
  UnsupportedDictionary,
  MissingHistory,
  UnknownLevel,
  NoEigenfunction,
  Parse,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::Convergence: return "no convergence";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::UnsupportedDictionary: return "unsupported dictionary";
    case ErrorKind::MissingHistory: return "missing history";
    case ErrorKind::UnknownLevel: return "unknown level";
    case ErrorKind::NoEigenfunction: return "no eigenfunction found";
    case ErrorKind::Parse: return "parse error";
  }
  return "error";
}

}  // namespace koopmpc
