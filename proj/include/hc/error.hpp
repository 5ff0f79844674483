#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hc {

enum class ErrorKind { validation, domain, numerical, internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error validation_error(const std::string& what) { return Error(ErrorKind::validation, what); }
inline Error domain_error(const std::string& what) { return Error(ErrorKind::domain, what); }
inline Error numerical_error(const std::string& what) { return Error(ErrorKind::numerical, what); }
inline Error internal_error(const std::string& what) { return Error(ErrorKind::internal, what); }

// Non-fatal diagnostic attached to a result. `at` carries the offending
// abscissa when one exists, NaN otherwise.
struct Warning {
  std::string code;
  std::string message;
  double at = std::numeric_limits<double>::quiet_NaN();
};

using Warnings = std::vector<Warning>;

inline bool has_warning(const Warnings& ws, const std::string& code) {
  for (const auto& w : ws)
    if (w.code == code) return true;
  return false;
}

}  // namespace hc
