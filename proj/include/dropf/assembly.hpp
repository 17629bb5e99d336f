#pragma once

#include <map>
#include <string>
#include <vector>

#include "dropf/dataset.hpp"
#include "dropf/devices.hpp"
#include "dropf/dro.hpp"
#include "dropf/linearization.hpp"
#include "dropf/network.hpp"
#include "dropf/qp.hpp"

namespace dropf {

// Bijective map from named variable families to flat decision coordinates.
struct DecisionLayout {
    struct Entry {
        std::string name;
        int offset = 0;
        int size = 0;
    };
    std::vector<Entry> entries;
    int total = 0;

    int add(const std::string& name, int size);
    int offset_of(const std::string& name) const;  // throws on unknown names
    bool has(const std::string& name) const;
};

// Which constraint families are routed through the worst-case CVaR machinery;
// everything else is enforced deterministically at the sample points.
struct DrOptions {
    bool risk_voltage_rows = true;
    bool risk_line_rows = true;
    bool risk_device_rows = false;  // transmission device rows only
    bool force_open_loop = false;   // transmission: drop the recourse matrices
};

// Per-device stage cost blocks; quadratic blocks must be symmetric PSD.
struct CostSpec {
    struct DeviceCost {
        int device_id = 0;
        Eigen::VectorXd f_x, f_u;
        Eigen::MatrixXd H_x, H_u;
    };
    std::vector<DeviceCost> blocks;

    static CostSpec from_devices(const std::vector<DeviceModel>& devices);
    const DeviceCost& of(int device_id) const;
    void validate() const;
};

// One constraint row treated with the distributionally robust machinery,
// kept around for decoding and out-of-sample evaluation.
struct DroRowInfo {
    std::string name;
    int stage = 0;
    BilinearRow row;  // over the structural-variable prefix
    int kappa_col = -1;
    DroBlockHandles handles;
    double eps = 0.0;
    int xi_offset = 0;  // slice of the stacked horizon error this row reads
    int xi_len = 0;
};

struct AssembledProblem {
    QuadraticProgram qp;
    DecisionLayout layout;
    std::vector<DroRowInfo> risk_rows;
    std::vector<std::pair<std::string, std::pair<int, int>>> var_manifest;
    int horizon = 0;
    int n_xi = 0;   // error coordinates per stage
    int n_y0 = 0;   // structural prefix (policy variables + CVaR shifters)
    double rho = 0.0, beta = 0.0;
    double cost_offset = 0.0;  // constant cost terms outside the QP objective
};

// Distribution-network stochastic OPF: voltage rows through the linearized
// magnitude model with curtailment and reactive set points, device rows
// deterministic, worst-case CVaR per stage ambiguity set.
AssembledProblem assemble_distribution(const NetworkModel& model, const VoltageLinearization& lin,
                                       const std::vector<DeviceModel>& devices,
                                       const std::vector<AmbiguitySet>& stage_sets,
                                       const RiskConfig& risk, const CostSpec& costs,
                                       const DrOptions& options, int horizon, int t0 = 0);

// Transmission DC OPF with affine reserve policies: per-stage power balance in
// the nominal schedules, blockwise zero of the error response, line-flow rows
// through worst-case CVaR over stacked stage ambiguity sets.
AssembledProblem assemble_transmission(const NetworkModel& model,
                                       const std::vector<DeviceModel>& devices,
                                       const std::vector<AmbiguitySet>& stage_sets,
                                       const RiskConfig& risk, const CostSpec& costs,
                                       const DrOptions& options, int horizon, int t0 = 0);

struct DecodedSolution {
    SolveStatus status = SolveStatus::max_iter;
    Eigen::VectorXd y;
    double objective = 0.0;  // QP objective plus the constant cost offset
    double cost_term = 0.0;
    double risk_total = 0.0;
    std::map<std::string, double> risk_share;  // per row: lambda eps + mean s
    std::map<int, Eigen::VectorXd> alpha;      // curtailment fractions per stage
    std::map<int, Eigen::VectorXd> q;          // reactive set points per stage
    std::map<int, Eigen::VectorXd> u;          // nominal inputs / schedules
    std::map<int, AffinePolicy> policies;      // transmission recourse

    double value(const AssembledProblem& prob, const std::string& name) const;
};

// Named read-out of an optimal point; infeasible or unbounded results throw
// InfeasibleError carrying the solver certificate.
DecodedSolution decode_solution(const SolverResult& result, const AssembledProblem& prob,
                                const std::vector<DeviceModel>& devices);

// Risk-row values C_o(y, xi) for one stacked horizon realization.
std::vector<double> evaluate_risk_rows(const AssembledProblem& prob, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& xi_stacked);

}  // namespace dropf
