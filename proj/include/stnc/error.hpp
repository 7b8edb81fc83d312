#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stnc {

enum class ErrorKind {
  kParse,
  kSchema,
  kIo,
  kRange,
  kSpec,
  kCapacity,
  kInput,
  kParameter,
  kDomain,
  kBandwidth,
  kClass,
  kProtocol,
  kValidation,
  kStage,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kRange: return "range error";
    case ErrorKind::kSpec: return "spec error";
    case ErrorKind::kCapacity: return "capacity error";
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kParameter: return "parameter error";
    case ErrorKind::kDomain: return "domain error";
    case ErrorKind::kBandwidth: return "bandwidth error";
    case ErrorKind::kClass: return "class error";
    case ErrorKind::kProtocol: return "protocol error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kStage: return "stage failure";
  }
  return "error";
}

// Every failure in the library surfaces as an Error tagged with its kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace stnc
