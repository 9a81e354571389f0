#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace amrl {

// Raised when a caller breaks a documented precondition (shapes, lengths,
// ranges). Always a programming or configuration error.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a computation produces or consumes a non-finite value.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for malformed or out-of-range configuration. `line` is 1-based,
// 0 when the offending value has no source location.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

template <typename... Args>
inline void require(bool cond, Args&&... msg) {
  if (!cond) throw ContractError(detail::concat(std::forward<Args>(msg)...));
}

}  // namespace amrl
