#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dropf/network.hpp"

namespace dropf {

// Per-stage bound on one state or input component, repeated at every stage.
// Infinite ends are skipped when the constraint block is materialized.
struct StageBound {
    bool on_state = true;
    int index = 0;
    double lo = 0.0;
    double hi = 0.0;
};

// Linear device dynamics x_{t+1} = A x_t + B u_t. The first state component
// is the device's net power injection at its bus; stage-t quantities use the
// post-input state x_{t+1}.
struct DeviceModel {
    int id = 0;
    int bus = 0;
    DeviceKind kind = DeviceKind::fixed_load;

    Eigen::MatrixXd A;   // n_d x n_d
    Eigen::MatrixXd B;   // n_d x m_d
    Eigen::VectorXd x0;  // n_d

    std::vector<StageBound> bounds;

    // stage costs f_x'x + x'H_x x/2 + f_u'u + u'H_u u/2
    Eigen::VectorXd f_x, f_u;
    Eigen::MatrixXd H_x, H_u;

    // nominal injection profile and forecast-error wiring (RES / loads)
    std::vector<double> profile;
    std::vector<double> q_profile;
    int error_col = -1;
    int q_error_col = -1;
    bool q_capable = false;
    double q_min = 0.0, q_max = 0.0;
    double q_cost_lin = 0.0, q_cost_quad = 0.0;

    int n_state() const { return static_cast<int>(A.rows()); }
    int n_input() const { return static_cast<int>(B.cols()); }
    bool controllable() const {
        return kind == DeviceKind::generator || kind == DeviceKind::battery;
    }
    double profile_at(int t) const;
    double q_profile_at(int t) const;
};

// Builds the concrete model for one case-file device record.
DeviceModel make_device(const DeviceSpec& spec);
std::vector<DeviceModel> make_devices(const NetworkModel& model);

// Stacked form over a horizon: x_stacked = A_stack x0 + B_stack u_stacked,
// with x_stacked = [x_1; ...; x_H] and u_stacked = [u_0; ...; u_{H-1}].
struct StackedDynamics {
    Eigen::MatrixXd A;  // (n_d H) x n_d
    Eigen::MatrixXd B;  // (n_d H) x (m_d H), block lower triangular
};

StackedDynamics stack_dynamics(const DeviceModel& dev, int horizon);

// Affine disturbance-feedback policy u = D xi + e over the stacked horizon.
struct AffinePolicy {
    Eigen::MatrixXd D;  // (m_d H) x (n_xi H)
    Eigen::VectorXd e;  // m_d H
};

// True iff every block of D above the stage diagonal is exactly zero.
bool check_causality(const Eigen::MatrixXd& D, int m_input, int n_xi, int horizon);

// State trajectory A x0 + B (D xi + e); the policy must be causal.
Eigen::VectorXd apply_policy(const DeviceModel& dev, const AffinePolicy& pol,
                             const Eigen::VectorXd& xi);

// Stacked local constraint block T x + U u + Z xi <= w.
struct ConstraintBlock {
    Eigen::MatrixXd T, U, Z;
    Eigen::VectorXd w;
};

ConstraintBlock local_constraint_block(const DeviceModel& dev, int horizon, int n_xi_total);

// One constraint row rewritten over the policy parameters:
//   row(D, e, xi) = m'(D xi + e) + z'xi + b0   (<= 0 when satisfied)
// so the xi-coefficient is a(y) = D'm + z and the offset is b(y) = m'e + b0.
struct LocalRow {
    Eigen::VectorXd m;  // m_d H
    Eigen::VectorXd z;  // n_xi H
    double b0 = 0.0;
};

std::vector<LocalRow> local_constraint_rows(const DeviceModel& dev, const StackedDynamics& stacked,
                                            const ConstraintBlock& block);

double eval_local_row(const LocalRow& row, const AffinePolicy& pol, const Eigen::VectorXd& xi);

}  // namespace dropf
