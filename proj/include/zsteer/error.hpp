#pragma once

#include <stdexcept>
#include <string>

namespace zsteer {

/// Coarse error category; the CLI maps these onto its exit codes.
enum class ErrorKind {
  usage,     // bad arguments or configuration
  data,      // malformed or inconsistent input data
  external,  // remote service or logit source failure
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& message) {
  return Error(ErrorKind::usage, message);
}

inline Error data_error(const std::string& message) {
  return Error(ErrorKind::data, message);
}

inline Error external_error(const std::string& message) {
  return Error(ErrorKind::external, message);
}

}  // namespace zsteer
