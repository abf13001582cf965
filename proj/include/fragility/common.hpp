#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace fragility {

using Date = std::chrono::sys_days;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Parse an ISO-8601 calendar day ("YYYY-MM-DD"). Throws DataError on malformed input.
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Truncate a unix timestamp (seconds) to its UTC calendar day.
Date utc_day(long long unix_seconds);

// Error hierarchy. The CLI maps each kind to a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_gap) : Error(what), last_gap_(last_gap) {}
  int exit_code() const override { return 4; }
  double last_gap() const { return last_gap_; }

 private:
  double last_gap_;
};

/// Non-fatal messages collected while a stage runs.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
  bool empty() const { return warnings.empty(); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag) diag->warn(std::move(message));
}

/// Round-trip-exact decimal text for a double (shortest representation). NaN prints empty.
std::string format_double(double v);
/// Fixed 17 significant digits, for matrix dumps.
std::string format_double17(double v);
/// Parse a decimal; empty text yields NaN. Throws DataError naming `what` on garbage.
double parse_double(std::string_view text, std::string_view what);

}  // namespace fragility
