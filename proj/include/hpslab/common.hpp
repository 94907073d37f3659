#ifndef HPSLAB_COMMON_HPP
#define HPSLAB_COMMON_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace hpslab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Invalid configuration or input contract violation (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: singular system, failed bracket, non-SPD matrix (exit code 3).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr double kDefaultTau = 0.05;

}  // namespace hpslab

#endif  // HPSLAB_COMMON_HPP
