#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fspc {

// Row-major so that one point (or one embedding) is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Negative slope of the leaky rectifier used everywhere in the network.
inline constexpr double kLeakySlope = 0.2;

enum class ErrorKind {
  Usage,    // bad arguments or configuration
  Data,     // malformed or inconsistent input data
  Numeric,  // non-finite values or failed numerical checks
};

/// Library-wide exception. `kind` maps onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void throw_usage(const std::string& what);
[[noreturn]] void throw_data(const std::string& what);
[[noreturn]] void throw_numeric(const std::string& what);

/// Process exit code for an error kind: usage 2, data 3, numeric 4.
int exit_code(ErrorKind kind) noexcept;

enum class Mode { Train, Eval };

inline double leaky(double x) { return x > 0.0 ? x : kLeakySlope * x; }
inline double leaky_grad(double x) { return x > 0.0 ? 1.0 : kLeakySlope; }

}  // namespace fspc
