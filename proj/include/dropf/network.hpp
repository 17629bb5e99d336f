#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dropf {

using Complex = std::complex<double>;

enum class BusKind { slack, pq };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::pq;
    double v_min = 0.9;
    double v_max = 1.1;
    Complex shunt{0.0, 0.0};  // shunt admittance, per-unit
};

struct Line {
    int from = 0;
    int to = 0;
    Complex admittance{0.0, 0.0};  // series y = g + jb, per-unit
    double flow_limit = 0.0;       // active-power limit, per-unit
};

enum class DeviceKind { generator, battery, curtailable_res, fixed_load };

// Raw device record from the case file. The devices module turns these into
// concrete dynamic models; the assemblers read profiles and costs directly.
struct DeviceSpec {
    int id = 0;
    int bus = 0;
    DeviceKind kind = DeviceKind::fixed_load;

    // generator / battery
    double p_min = 0.0, p_max = 0.0;
    double ramp = 0.0;
    double p0 = 0.0;
    double soc_min = 0.0, soc_max = 0.0, soc0 = 0.0;
    double leakage = 1.0;
    double cost_lin = 0.0, cost_quad = 0.0;

    // curtailable_res / fixed_load
    std::vector<double> profile;  // forecast (RES) or fixed injection; scalar broadcast
    int error_col = -1;           // ξ coordinate feeding this device's active power
    int q_error_col = -1;
    std::vector<double> q_profile;
    bool q_capable = false;
    double q_min = 0.0, q_max = 0.0;
    double q_cost_lin = 0.0, q_cost_quad = 0.0;
    double curtail_cost_lin = 0.0, curtail_cost_quad = 0.0;

    // profile value at stage t (scalar profiles broadcast, empty = 0)
    double profile_at(int t) const;
    double q_profile_at(int t) const;
};

struct NetworkModel {
    double base_mva = 1.0;
    double v_slack = 1.0;  // PCC voltage magnitude, per-unit
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<DeviceSpec> devices;

    // non-slack bus count N (bus 0 is always the slack)
    int n_pq() const { return static_cast<int>(buses.size()) - 1; }
    int n_lines() const { return static_cast<int>(lines.size()); }
};

// Admittance matrix with the slack/PQ partition
//   [I_0; i] = [[y00, y0ᵀ]; [y0, Y]] [V_0; v]
struct AdmittanceMatrix {
    Eigen::MatrixXcd full;     // (N+1) x (N+1), bus order 0..N
    Complex y00{0.0, 0.0};
    Eigen::VectorXcd y0;       // coupling column, length N
    Eigen::MatrixXcd reduced;  // N x N block over PQ buses
};

// Active/reactive injections at the PQ buses 1..N; positive = generation.
struct InjectionVector {
    Eigen::VectorXd p;
    Eigen::VectorXd q;
};

NetworkModel parse_case(const std::string& path);
NetworkModel parse_case_text(const std::string& json_text);

AdmittanceMatrix build_admittance(const NetworkModel& model);

// Newton-Raphson solve of diag(v)(Yv)* = s at the PQ buses with the slack
// voltage pinned. Flat start, rectangular coordinates. Returns all N+1 bus
// voltages (slack first). Test oracle, not a production solver.
Eigen::VectorXcd ac_power_flow(const NetworkModel& model, const InjectionVector& injections,
                               double tol = 1e-8, int max_iter = 50);

// PTDF-style map from PQ-bus injections to directed DC line flows. Rows
// 0..L-1 follow the case-file line orientation, rows L..2L-1 are the exact
// negations. Any injection residual is absorbed by the slack bus.
Eigen::MatrixXd dc_flow_map(const NetworkModel& model);

}  // namespace dropf
