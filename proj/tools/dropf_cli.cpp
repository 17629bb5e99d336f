#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dropf/assembly.hpp"
#include "dropf/dataset.hpp"
#include "dropf/errors.hpp"
#include "dropf/linearization.hpp"
#include "dropf/mpc.hpp"
#include "dropf/network.hpp"
#include "dropf/qp.hpp"
#include "dropf/random.hpp"

namespace fs = std::filesystem;
using namespace dropf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 2;
constexpr int kExitInput = 3;

struct CommonArgs {
    std::string case_path;
    std::string dataset_path;
    std::string support_path;
    std::string formulation = "distribution";
    std::vector<double> eps{0.0};
    double rho = 1.0;
    double beta = 0.1;
    int horizon = 1;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_dataset = true) {
    cmd->add_option("--case", args.case_path, "network case file (JSON)")->required();
    auto* ds = cmd->add_option("--dataset", args.dataset_path, "forecast-error CSV");
    if (needs_dataset) ds->required();
    cmd->add_option("--support", args.support_path, "support polytope JSON (overrides the box heuristic)");
    cmd->add_option("--formulation", args.formulation, "distribution | transmission")
        ->check(CLI::IsMember({"distribution", "transmission"}));
    cmd->add_option("--eps", args.eps, "Wasserstein radius (one value or one per stage)");
    cmd->add_option("--rho", args.rho, "risk-aversion weight");
    cmd->add_option("--beta", args.beta, "CVaR level in (0,1]");
    cmd->add_option("--horizon", args.horizon, "planning horizon (stages)");
    cmd->add_option("--seed", args.seed, "random seed");
    cmd->add_option("--out", args.out_dir, "output directory");
}

MpcConfig to_config(const CommonArgs& args) {
    MpcConfig cfg;
    cfg.formulation = args.formulation == "transmission" ? Formulation::transmission
                                                         : Formulation::distribution;
    cfg.horizon = args.horizon;
    cfg.steps = std::max(args.horizon, 1);
    cfg.eps = args.eps;
    cfg.rho = args.rho;
    cfg.beta = args.beta;
    cfg.seed = args.seed;
    return cfg;
}

ForecastErrorDataset load_data(const CommonArgs& args) {
    ForecastErrorDataset data = ingest_dataset(args.dataset_path);
    if (!args.support_path.empty()) {
        data.declared_support = load_support_json(args.support_path);
        data.validate_against_support();
    }
    return data;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out << text;
}

void write_trace_csv(const fs::path& path, const SimulationTrace& trace) {
    std::ofstream out(path);
    out.precision(12);
    out << "step,stage_cost,objective,iterations,max_margin";
    if (!trace.steps.empty()) {
        for (int j = 0; j < trace.steps[0].xi.size(); ++j) out << ",xi" << j;
        for (int j = 0; j < trace.steps[0].applied.size(); ++j) out << ",u" << j;
        for (int j = 0; j < trace.steps[0].observable.size(); ++j) out << ",obs" << j;
    }
    out << "\n";
    for (const auto& s : trace.steps) {
        out << s.t << "," << s.stage_cost << "," << s.objective << "," << s.iterations << ","
            << (s.margins.size() ? s.margins.maxCoeff() : 0.0);
        for (int j = 0; j < s.xi.size(); ++j) out << "," << s.xi(j);
        for (int j = 0; j < s.applied.size(); ++j) out << "," << s.applied(j);
        for (int j = 0; j < s.observable.size(); ++j) out << "," << s.observable(j);
        out << "\n";
    }
}

int cmd_solve(const CommonArgs& args, const std::string& dump_path,
              const std::string& lin_csv_path) {
    const NetworkModel model = parse_case(args.case_path);
    const ForecastErrorDataset data = load_data(args);
    const MpcConfig cfg = to_config(args);
    const std::vector<DeviceModel> devices = make_devices(model);

    const AssembledProblem prob = assemble_step(model, devices, cfg, data, cfg.horizon, 0);
    if (!dump_path.empty()) dump_problem(prob.qp, prob.var_manifest, dump_path);
    if (!lin_csv_path.empty()) {
        const VoltageLinearization lin =
            build_sensitivities(build_admittance(model), Complex(model.v_slack, 0.0));
        write_linearization_csv(lin, lin_csv_path);
    }

    const SolverResult res = solve(prob.qp, cfg.solver);
    const DecodedSolution dec = decode_solution(res, prob, devices);

    std::ostringstream report;
    report.precision(12);
    report << "{\n  \"status\": \"" << to_string(res.status) << "\",\n"
           << "  \"objective\": " << dec.objective << ",\n"
           << "  \"cost_term\": " << dec.cost_term << ",\n"
           << "  \"risk_total\": " << dec.risk_total << ",\n  \"risk_share\": {";
    bool first = true;
    for (const auto& [name, share] : dec.risk_share) {
        report << (first ? "" : ",") << "\n    \"" << name << "\": " << share;
        first = false;
    }
    report << "\n  },\n  \"variables\": {";
    first = true;
    for (const auto& e : prob.layout.entries) {
        for (int k = 0; k < e.size; ++k) {
            report << (first ? "" : ",") << "\n    \"" << e.name << (e.size > 1 ? "#" + std::to_string(k) : "")
                   << "\": " << res.y(e.offset + k);
            first = false;
        }
    }
    report << "\n  }\n}\n";
    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / "solution.json", report.str());
    std::cout << "objective " << dec.objective << " (cost " << dec.cost_term << ", risk "
              << dec.risk_total << "), report in " << args.out_dir << "/solution.json\n";
    return kExitOk;
}

int cmd_mpc(const CommonArgs& args, const std::string& scenario_path, int steps, bool updates) {
    const NetworkModel model = parse_case(args.case_path);
    const ForecastErrorDataset data = load_data(args);
    const ForecastErrorDataset scen = ingest_dataset(scenario_path);
    if (scen.n_xi != data.n_xi) throw ValidationError("mpc: scenario width mismatch");

    MpcConfig cfg = to_config(args);
    cfg.steps = steps > 0 ? steps : scen.n_samples();
    cfg.horizon = std::min(args.horizon, cfg.steps);
    cfg.online_updates = updates;

    const SimulationTrace trace = run_mpc(model, cfg, data, scen.samples);
    fs::create_directories(args.out_dir);
    write_trace_csv(fs::path(args.out_dir) / "trace.csv", trace);
    if (trace.truncated) {
        std::cerr << "mpc truncated: " << trace.diagnostic << "\n";
        return kExitInfeasible;
    }
    std::cout << "mpc ran " << trace.steps.size() << " steps, total cost " << trace.total_cost()
              << ", trace in " << args.out_dir << "/trace.csv\n";
    return kExitOk;
}

int cmd_oos(const CommonArgs& args, const std::string& validation_path, const std::string& mode,
            bool parallel, int steps) {
    const NetworkModel model = parse_case(args.case_path);
    const ForecastErrorDataset data = load_data(args);
    const ForecastErrorDataset val = ingest_dataset(validation_path);

    MpcConfig cfg = to_config(args);
    const OosMode m = mode == "closed" ? OosMode::closed_loop : OosMode::single_stage;
    if (m == OosMode::closed_loop) {
        cfg.steps = steps > 0 ? steps : args.horizon;
        cfg.horizon = std::min(args.horizon, cfg.steps);
    }

    // validation rows become scenarios: single-stage uses horizon-stage blocks,
    // closed-loop replays each row as a stationary sequence
    std::vector<Eigen::MatrixXd> scenarios;
    for (int i = 0; i < val.n_samples(); ++i) {
        if (m == OosMode::single_stage) {
            Eigen::MatrixXd sc(cfg.horizon, val.n_xi);
            for (int t = 0; t < cfg.horizon; ++t)
                sc.row(t) = val.stage_slice(std::min(t, val.stages - 1)).row(i);
            scenarios.push_back(sc);
        } else {
            Eigen::MatrixXd sc(cfg.steps, val.n_xi);
            for (int t = 0; t < cfg.steps; ++t)
                sc.row(t) = val.stage_slice(std::min(t, val.stages - 1)).row(i);
            scenarios.push_back(sc);
        }
    }

    const OosReport report = monte_carlo_oos(model, cfg, data, scenarios, m,
                                             parallel ? ExecMode::parallel : ExecMode::serial);
    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / "report.json", report.to_json());
    std::cout << "oos over " << report.n_scenarios << " scenarios: mean cost " << report.mean_cost
              << ", violation frequency " << report.violation_freq << ", report in "
              << args.out_dir << "/report.json\n";
    return kExitOk;
}

int cmd_sweep(const CommonArgs& args, const std::vector<double>& eps_grid,
              const std::vector<double>& rho_grid, const std::string& validation_path,
              bool parallel) {
    const NetworkModel model = parse_case(args.case_path);
    const ForecastErrorDataset data = load_data(args);
    std::vector<Eigen::MatrixXd> scenarios;
    if (!validation_path.empty()) {
        const ForecastErrorDataset val = ingest_dataset(validation_path);
        for (int i = 0; i < val.n_samples(); ++i) {
            Eigen::MatrixXd sc(args.horizon, val.n_xi);
            for (int t = 0; t < args.horizon; ++t)
                sc.row(t) = val.stage_slice(std::min(t, val.stages - 1)).row(i);
            scenarios.push_back(sc);
        }
    }

    struct Point {
        double eps, rho, objective, cost, risk, violation_freq;
    };
    const std::vector<double> rhos = rho_grid.empty() ? std::vector<double>{args.rho} : rho_grid;
    std::vector<Point> grid;
    for (const double eps : eps_grid)
        for (const double rho : rhos) grid.push_back({eps, rho, 0, 0, 0, 0});

    const std::vector<DeviceModel> devices = make_devices(model);
    const int n_pts = static_cast<int>(grid.size());
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < n_pts; ++i) {
        Point& pt = grid[static_cast<size_t>(i)];
        MpcConfig cfg = to_config(args);
        cfg.eps = {pt.eps};
        cfg.rho = pt.rho;
        try {
            const AssembledProblem prob = assemble_step(model, devices, cfg, data, cfg.horizon, 0);
            const SolverResult res = solve(prob.qp, cfg.solver);
            const DecodedSolution dec = decode_solution(res, prob, devices);
            pt.objective = dec.objective;
            pt.cost = dec.cost_term;
            pt.risk = dec.risk_total;
            if (!scenarios.empty()) {
                const OosReport rep =
                    monte_carlo_oos(model, cfg, data, scenarios, OosMode::single_stage);
                pt.violation_freq = rep.violation_freq;
            }
        } catch (const std::exception&) {
            pt.objective = std::numeric_limits<double>::quiet_NaN();
        }
    }

    fs::create_directories(args.out_dir);
    std::ofstream obj(fs::path(args.out_dir) / "objective_vs_eps.csv");
    std::ofstream vio(fs::path(args.out_dir) / "violation_vs_eps.csv");
    std::ofstream fro(fs::path(args.out_dir) / "cost_cvar_frontier.csv");
    obj << "eps,rho,objective\n";
    vio << "eps,rho,violation_freq\n";
    fro << "eps,rho,cost,risk\n";
    obj.precision(12), vio.precision(12), fro.precision(12);
    for (const auto& pt : grid) {
        obj << pt.eps << "," << pt.rho << "," << pt.objective << "\n";
        vio << pt.eps << "," << pt.rho << "," << pt.violation_freq << "\n";
        fro << pt.eps << "," << pt.rho << "," << pt.cost << "," << pt.risk << "\n";
    }
    std::cout << "sweep over " << grid.size() << " grid points, CSVs in " << args.out_dir << "\n";
    return kExitOk;
}

int cmd_solve_qp(const std::string& problem_path, const std::string& out_path) {
    const auto [qp, layout] = load_problem(problem_path);
    const SolverResult res = solve(qp);
    std::cout << "status " << to_string(res.status) << ", objective " << res.objective
              << ", iterations " << res.iterations << "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out.precision(17);
        out << "{\n  \"status\": \"" << to_string(res.status) << "\",\n  \"objective\": "
            << res.objective << ",\n  \"y\": [";
        for (int i = 0; i < res.y.size(); ++i) out << (i ? "," : "") << res.y(i);
        out << "]\n}\n";
    }
    if (res.status == SolveStatus::infeasible || res.status == SolveStatus::unbounded)
        return kExitInfeasible;
    return kExitOk;
}

int cmd_gen_data(const std::string& kind, int rows, int stages, int n_xi, double scale,
                 std::uint64_t seed, const std::string& out_path) {
    const ForecastErrorDataset data = dataset_from_matrix(
        gen_samples(scenario_kind_from_string(kind), rows, stages * n_xi, scale, seed), stages,
        n_xi);
    write_dataset_csv(data, out_path);
    std::cout << "wrote " << rows << " samples (" << stages << " stages x " << n_xi
              << " coords) to " << out_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"data-driven distributionally robust stochastic OPF"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string dump_path, lin_csv, scenario_path, validation_path, mode = "single";
    std::string problem_path, qp_out, gen_kind = "gaussian", gen_out = "dataset.csv";
    std::vector<double> eps_grid{0.0}, rho_grid;
    int steps = 0, gen_rows = 30, gen_stages = 1, gen_nxi = 1;
    double gen_scale = 0.1;
    bool updates = false, parallel = false;

    auto* solve_cmd = app.add_subcommand("solve", "single-shot stochastic OPF");
    add_common(solve_cmd, args);
    solve_cmd->add_option("--dump", dump_path, "write the assembled QP (sparse triplet dump)");
    solve_cmd->add_option("--dump-linearization", lin_csv, "write M, N, a as CSV");

    auto* mpc_cmd = app.add_subcommand("mpc", "closed-loop receding-horizon run");
    add_common(mpc_cmd, args);
    mpc_cmd->add_option("--scenario", scenario_path, "realized error sequence CSV")->required();
    mpc_cmd->add_option("--steps", steps, "closed-loop steps (default: scenario length)");
    mpc_cmd->add_flag("--online-updates", updates, "append realized errors to the window");

    auto* oos_cmd = app.add_subcommand("oos", "Monte Carlo out-of-sample evaluation");
    add_common(oos_cmd, args);
    oos_cmd->add_option("--validation", validation_path, "validation dataset CSV")->required();
    oos_cmd->add_option("--mode", mode, "single | closed")
        ->check(CLI::IsMember({"single", "closed"}));
    oos_cmd->add_option("--steps", steps, "closed-loop steps");
    oos_cmd->add_flag("--parallel", parallel, "evaluate scenarios with OpenMP");

    auto* sweep_cmd = app.add_subcommand("sweep", "epsilon/rho grid sweep");
    add_common(sweep_cmd, args);
    sweep_cmd->add_option("--eps-grid", eps_grid, "radius grid")->required();
    sweep_cmd->add_option("--rho-grid", rho_grid, "risk-weight grid");
    sweep_cmd->add_option("--validation", validation_path, "validation CSV for violation rates");
    sweep_cmd->add_flag("--parallel", parallel, "sweep grid points with OpenMP");

    auto* qp_cmd = app.add_subcommand("solve-qp", "solve a dumped problem standalone");
    qp_cmd->add_option("--problem", problem_path, "problem dump path")->required();
    qp_cmd->add_option("--out", qp_out, "result JSON path");

    auto* gen_cmd = app.add_subcommand("gen-data", "synthetic forecast-error dataset");
    gen_cmd->add_option("--kind", gen_kind, "gaussian | uniform | mixture")
        ->check(CLI::IsMember({"gaussian", "uniform", "mixture"}));
    gen_cmd->add_option("--rows", gen_rows, "sample count");
    gen_cmd->add_option("--stages", gen_stages, "stage groups");
    gen_cmd->add_option("--nxi", gen_nxi, "error coordinates per stage");
    gen_cmd->add_option("--scale", gen_scale, "error scale");
    gen_cmd->add_option("--seed", args.seed, "random seed");
    gen_cmd->add_option("--out", gen_out, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitInput;
    }

    try {
        if (solve_cmd->parsed()) return cmd_solve(args, dump_path, lin_csv);
        if (mpc_cmd->parsed()) return cmd_mpc(args, scenario_path, steps, updates);
        if (oos_cmd->parsed()) return cmd_oos(args, validation_path, mode, parallel, steps);
        if (sweep_cmd->parsed())
            return cmd_sweep(args, eps_grid, rho_grid, validation_path, parallel);
        if (qp_cmd->parsed()) return cmd_solve_qp(problem_path, qp_out);
        if (gen_cmd->parsed())
            return cmd_gen_data(gen_kind, gen_rows, gen_stages, gen_nxi, gen_scale, args.seed,
                                gen_out);
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const ValidationError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
