#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace remix {

using Complex = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

// Misconfiguration: bad presets, bad files, inconsistent dimensions.
// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure (e.g. singular mixture PSD). Carries the offending
// frequency bin when one is known. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, long bin = -1)
      : std::runtime_error(bin >= 0 ? what + " (bin " + std::to_string(bin) + ")" : what),
        bin_(bin) {}
  long bin() const { return bin_; }

 private:
  long bin_;
};

// ITF of a vector whose reference-microphone entry vanishes.
class UndefinedItfError : public std::runtime_error {
 public:
  explicit UndefinedItfError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace remix
