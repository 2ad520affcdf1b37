#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace cfsim {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

/// Sorted set of DFT column indices in [0, M).
using IndexSet = std::vector<int>;

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace cfsim
