#pragma once

#include <string>

#include <Eigen/Dense>

#include "dropf/network.hpp"

namespace dropf {

// Fixed-point linearization of the power-flow equations about the no-load
// voltage. Magnitude model: |v| ~= M p + N q + a. The rectangular model
// (c + H p + J q) is kept for validation only.
struct VoltageLinearization {
    Eigen::VectorXcd v_bar;  // nominal (no-load) voltage, c
    Eigen::MatrixXd M;       // d|v|/dp
    Eigen::MatrixXd N;       // d|v|/dq
    Eigen::MatrixXcd H;      // dv/dp, = M + jN
    Eigen::MatrixXcd J;      // dv/dq, = N - jM
    Eigen::VectorXd a;       // |v_bar|
};

// No-load voltage solving the partitioned current balance Y v + y0 V0 = 0.
Eigen::VectorXcd nominal_voltage(const AdmittanceMatrix& adm, Complex v0);

VoltageLinearization build_sensitivities(const AdmittanceMatrix& adm, Complex v0);

Eigen::VectorXd approx_voltage_magnitude(const VoltageLinearization& lin,
                                         const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// CSV dump of M, N and a for offline inspection (row-major, bus-id header).
void write_linearization_csv(const VoltageLinearization& lin, const std::string& path);

}  // namespace dropf
