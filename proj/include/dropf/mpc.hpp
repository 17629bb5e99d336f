#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dropf/assembly.hpp"
#include "dropf/dataset.hpp"
#include "dropf/random.hpp"

namespace dropf {

enum class Formulation { distribution, transmission };

struct MpcConfig {
    Formulation formulation = Formulation::distribution;
    int horizon = 1;
    int steps = 1;  // closed-loop length T
    std::vector<double> eps{0.0};  // per horizon stage, broadcast when one entry
    double beta = 0.1;
    double rho = 1.0;
    DrOptions options;
    SolverSettings solver;
    bool online_updates = false;  // append realized errors to the training window
    int window_cap = 500;
    std::uint64_t seed = 1;
    bool ac_accounting = true;  // realized voltages from the AC oracle
    int solver_retries = 1;     // extra attempts with a larger iteration cap

    void validate() const;
};

struct StepRecord {
    int t = 0;
    Eigen::VectorXd xi;          // realized forecast error
    Eigen::VectorXd applied;     // applied first-stage inputs (device order)
    Eigen::VectorXd states;      // device states after the step (device order)
    Eigen::VectorXd observable;  // |v| per PQ bus, or directed line flows
    Eigen::VectorXd margins;     // constraint margins (> 0 means violated)
    std::vector<std::string> margin_names;
    double stage_cost = 0.0;
    double objective = 0.0;  // optimal objective of the stage problem
    int iterations = 0;
};

struct SimulationTrace {
    std::vector<StepRecord> steps;
    bool truncated = false;
    std::string diagnostic;

    double total_cost() const;
};

// Receding-horizon loop: assemble, solve, apply the first-stage decision,
// reveal the realized error, advance device states, optionally grow the
// training window, repeat. The horizon shrinks near the end of the run.
SimulationTrace run_mpc(const NetworkModel& model, const MpcConfig& config,
                        const ForecastErrorDataset& train, const Eigen::MatrixXd& scenario);

struct RowStats {
    double cvar = 0.0;
    double violation_freq = 0.0;
    double worst = 0.0;
};

struct OosReport {
    double mean_cost = 0.0;
    std::map<std::string, RowStats> rows;
    double violation_freq = 0.0;  // any-constraint frequency
    int n_scenarios = 0;

    std::string to_json() const;
};

enum class OosMode { single_stage, closed_loop };
enum class ExecMode { serial, parallel };

// Monte Carlo evaluation over validation scenarios. Scenario evaluations are
// independent; `parallel` runs them under OpenMP with results keyed by index,
// reducing in index order, so both modes give identical reports.
OosReport monte_carlo_oos(const NetworkModel& model, const MpcConfig& config,
                          const ForecastErrorDataset& train,
                          const std::vector<Eigen::MatrixXd>& scenarios, OosMode mode,
                          ExecMode exec = ExecMode::serial);

// validation scenarios, one stages x n_xi matrix each
std::vector<Eigen::MatrixXd> gen_scenarios(ScenarioKind kind, int count, int stages, int n_xi,
                                           double scale, std::uint64_t seed);

// Radius selection by k-fold cross-validation over a candidate grid: fit on
// the in-fold window, score held-out samples by cost + rho * sum of row CVaRs.
double tune_radius(const NetworkModel& model, const MpcConfig& config,
                   const ForecastErrorDataset& train, const std::vector<double>& grid,
                   int folds = 3);

// Shared single-shot assembly used by the CLI and the evaluators.
AssembledProblem assemble_step(const NetworkModel& model, const std::vector<DeviceModel>& devices,
                               const MpcConfig& config, const ForecastErrorDataset& window,
                               int horizon, int t0);

}  // namespace dropf
