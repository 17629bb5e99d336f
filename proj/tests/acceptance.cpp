// Acceptance suite: every criterion runs at its stated tolerance and prints
// one pass/fail line. The binary exits nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "baselines.hpp"
#include "dropf/assembly.hpp"
#include "dropf/dro.hpp"
#include "dropf/linearization.hpp"
#include "dropf/mpc.hpp"
#include "dropf/network.hpp"
#include "dropf/qp.hpp"
#include "dropf/random.hpp"

using namespace dropf;

namespace {

struct Harness {
    int failures = 0;
    std::string filter;

    void run(const std::string& name, const std::function<std::string()>& body) {
        if (!filter.empty() && name.find(filter) == std::string::npos) return;
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            detail = body();
        } catch (const std::exception& e) {
            ok = false;
            detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!ok || detail.rfind("FAIL", 0) == 0) {
            ++failures;
            std::cout << "[FAIL] " << name << " (" << secs << " s): " << detail << "\n";
        } else {
            std::cout << "[PASS] " << name << " (" << secs << " s): " << detail << "\n";
        }
        std::cout.flush();
    }
};

std::string fail(const std::string& msg) { return "FAIL " + msg; }

NetworkModel feeder4() { return parse_case(std::string(DROPF_DATA_DIR) + "/feeder4.json"); }
NetworkModel triangle3() { return parse_case(std::string(DROPF_DATA_DIR) + "/triangle3.json"); }

MpcConfig make_config(Formulation f, int horizon, double eps, double rho, double beta) {
    MpcConfig cfg;
    cfg.formulation = f;
    cfg.horizon = horizon;
    cfg.steps = horizon;
    cfg.eps = {eps};
    cfg.rho = rho;
    cfg.beta = beta;
    cfg.solver.eps_abs = 1e-9;
    cfg.solver.eps_rel = 1e-9;
    return cfg;
}

DecodedSolution solve_fixture(const NetworkModel& model, const MpcConfig& cfg,
                              const ForecastErrorDataset& data,
                              const std::vector<DeviceModel>& devices) {
    const AssembledProblem prob = assemble_step(model, devices, cfg, data, cfg.horizon, 0);
    const SolverResult res = solve(prob.qp, cfg.solver);
    return decode_solution(res, prob, devices);
}

// ---------------------------------------------------------------- criterion 1
std::string duality_validation() {
    Rng rng(20240801);
    double worst_gap = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
        const int n_xi = trial % 2 == 0 ? 1 : 2;
        const int n_s = 3 + trial;
        Eigen::MatrixXd samples(n_s, n_xi);
        for (int i = 0; i < samples.size(); ++i) samples.data()[i] = rng.uniform(-0.5, 0.5);
        Eigen::VectorXd a1(n_xi), a2(n_xi);
        for (int j = 0; j < n_xi; ++j) {
            a1(j) = rng.uniform(-1.5, 1.5);
            a2(j) = rng.uniform(-1.5, 1.5);
        }
        const double b1 = rng.uniform(-0.5, 0.5);
        const double b2 = rng.uniform(-0.5, 0.5);
        const double eps = rng.uniform(0.02, 0.4);

        PiecewiseAffineLoss loss;
        loss.A[0] = Eigen::MatrixXd::Zero(n_xi, 1);
        loss.A[1] = Eigen::MatrixXd::Zero(n_xi, 1);
        loss.g[0] = a1;
        loss.g[1] = a2;
        loss.f[0] = Eigen::VectorXd::Zero(1);
        loss.f[1] = Eigen::VectorXd::Zero(1);
        loss.h[0] = b1;
        loss.h[1] = b2;

        const AmbiguitySet amb(EmpiricalDistribution{samples}, eps,
                               PolytopicSupport::box(Eigen::VectorXd::Constant(n_xi, -1.0),
                                                     Eigen::VectorXd::Constant(n_xi, 1.0)));

        QpBuilder qb;
        const int y0 = qb.add_var("y", 1);
        qb.start_eq_row(0.0);
        qb.coeff(y0, 1.0);
        dro_epigraph(qb, loss, amb, 1.0, "row");
        SolverSettings st;
        st.eps_abs = 1e-9;
        st.eps_rel = 1e-9;
        const SolverResult res = solve(qb.build(), st);
        if (res.status != SolveStatus::optimal) return fail("epigraph LP did not solve");

        const OracleValue oracle = worst_case_expectation_refined(
            at_decision(loss, Eigen::VectorXd::Zero(1)), amb, n_xi == 1 ? 301 : 61, 8e-4);
        worst_gap = std::max(worst_gap, std::abs(res.objective - oracle.value));
    }
    std::ostringstream msg;
    msg << "max |dual - transport oracle| = " << worst_gap << " over 6 losses";
    if (worst_gap > 1e-3) return fail(msg.str());
    return msg.str();
}

// ---------------------------------------------------------------- criterion 2
std::string saa_reduction() {
    // distribution fixture
    const NetworkModel dist_model = feeder4();
    const std::vector<DeviceModel> dist_devices = make_devices(dist_model);
    const int horizon = 2;
    const Eigen::MatrixXd dist_samples =
        gen_samples(ScenarioKind::gaussian, 8, 2 * horizon, 0.05, 42);
    const ForecastErrorDataset dist_data = dataset_from_matrix(dist_samples, horizon, 2);
    const MpcConfig dist_cfg = make_config(Formulation::distribution, horizon, 0.0, 2.0, 0.1);
    const DecodedSolution dist_dec =
        solve_fixture(dist_model, dist_cfg, dist_data, dist_devices);
    const VoltageLinearization lin =
        build_sensitivities(build_admittance(dist_model), Complex(dist_model.v_slack, 0.0));
    const double dist_saa = testing::saa_distribution_objective(
        dist_model, lin, dist_samples, 2, dist_cfg.beta, dist_cfg.rho, horizon);
    const double dist_gap =
        std::abs(dist_dec.objective - dist_saa) / std::max(1.0, std::abs(dist_saa));

    // transmission fixture
    const NetworkModel trans_model = triangle3();
    const std::vector<DeviceModel> trans_devices = make_devices(trans_model);
    const Eigen::MatrixXd trans_samples = gen_samples(ScenarioKind::gaussian, 6, horizon, 0.05, 5);
    const ForecastErrorDataset trans_data = dataset_from_matrix(trans_samples, horizon, 1);
    const MpcConfig trans_cfg = make_config(Formulation::transmission, horizon, 0.0, 1.5, 0.2);
    const DecodedSolution trans_dec =
        solve_fixture(trans_model, trans_cfg, trans_data, trans_devices);
    const double trans_saa = testing::saa_transmission_objective(
        trans_model, trans_samples, 1, trans_cfg.beta, trans_cfg.rho, horizon);
    const double trans_gap =
        std::abs(trans_dec.objective - trans_saa) / std::max(1.0, std::abs(trans_saa));

    std::ostringstream msg;
    msg << "relative gaps: distribution " << dist_gap << ", transmission " << trans_gap;
    if (dist_gap > 1e-6 || trans_gap > 1e-6) return fail(msg.str());
    return msg.str();
}

// ---------------------------------------------------------------- criterion 3
std::string monotonicity_suites() {
    std::ostringstream msg;
    // objective vs radius on both fixtures
    for (const bool transmission : {false, true}) {
        const NetworkModel model = transmission ? triangle3() : feeder4();
        const std::vector<DeviceModel> devices = make_devices(model);
        const int n_xi = transmission ? 1 : 2;
        const ForecastErrorDataset data = dataset_from_matrix(
            gen_samples(ScenarioKind::gaussian, 6, n_xi, 0.06, 7), 1, n_xi);
        double prev = -1e30;
        for (const double eps : {0.0, 0.01, 0.03, 0.1, 0.3}) {
            MpcConfig cfg =
                make_config(transmission ? Formulation::transmission : Formulation::distribution,
                            1, eps, 1.0, 0.1);
            cfg.solver.eps_abs = 1e-7;
            cfg.solver.eps_rel = 1e-7;
            cfg.solver.max_iter = 200000;
            const DecodedSolution dec = solve_fixture(model, cfg, data, devices);
            if (dec.objective < prev - 1e-6) {
                std::ostringstream err;
                err << "objective decreased in eps on "
                    << (transmission ? "transmission" : "distribution") << ": " << dec.objective
                    << " after " << prev << " at eps " << eps;
                return fail(err.str());
            }
            prev = dec.objective;
        }
    }
    // cost/risk trade-off in rho on both fixtures
    for (const bool transmission : {false, true}) {
        const NetworkModel model = transmission ? triangle3() : feeder4();
        const std::vector<DeviceModel> devices = make_devices(model);
        const int n_xi = transmission ? 1 : 2;
        const ForecastErrorDataset data = dataset_from_matrix(
            gen_samples(ScenarioKind::gaussian, 6, n_xi, 0.08, 11), 1, n_xi);
        double prev_cost = -1e30, prev_risk = 1e30;
        for (const double rho : {0.2, 0.5, 1.0, 3.0, 8.0}) {
            MpcConfig cfg =
                make_config(transmission ? Formulation::transmission : Formulation::distribution,
                            1, 0.03, rho, 0.1);
            cfg.solver.eps_abs = 1e-7;
            cfg.solver.eps_rel = 1e-7;
            cfg.solver.max_iter = 200000;
            const DecodedSolution dec = solve_fixture(model, cfg, data, devices);
            const double risk = dec.risk_total / rho;
            std::ostringstream err;
            err.precision(12);
            err << (transmission ? "transmission" : "distribution") << " rho " << rho << ": cost "
                << dec.cost_term << " after " << prev_cost << ", risk " << risk << " after "
                << prev_risk;
            if (dec.cost_term < prev_cost - 1e-6) return fail("cost decreased in rho: " + err.str());
            if (risk > prev_risk + 1e-6) return fail("risk increased in rho: " + err.str());
            prev_cost = dec.cost_term;
            prev_risk = risk;
        }
    }
    msg << "objective monotone in eps and cost/risk monotone in rho on both fixtures";
    return msg.str();
}

// ---------------------------------------------------------------- criterion 4
std::string linearization_fidelity() {
    const NetworkModel model = feeder4();
    const VoltageLinearization lin =
        build_sensitivities(build_admittance(model), Complex(model.v_slack, 0.0));
    Rng rng(64);
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        Eigen::VectorXd p(3), q(3);
        for (int i = 0; i < 3; ++i) {
            p(i) = rng.uniform(-0.1, 0.1);
            q(i) = rng.uniform(-0.1, 0.1);
        }
        const Eigen::VectorXd approx = approx_voltage_magnitude(lin, p, q);
        const Eigen::VectorXd exact = ac_power_flow(model, {p, q}, 1e-12).tail(3).cwiseAbs();
        worst = std::max(worst, (approx - exact).lpNorm<Eigen::Infinity>());
    }

    Eigen::VectorXd p(3), q(3);
    p << -0.1, 0.1, 0.1;
    q << -0.1, 0.08, -0.09;
    auto err_at = [&](double scale) {
        const Eigen::VectorXd ps = scale * p, qs = scale * q;
        const Eigen::VectorXd approx = approx_voltage_magnitude(lin, ps, qs);
        const Eigen::VectorXd exact = ac_power_flow(model, {ps, qs}, 1e-12).tail(3).cwiseAbs();
        return (approx - exact).lpNorm<Eigen::Infinity>();
    };
    const double decay = err_at(1.0) / err_at(0.5);

    std::ostringstream msg;
    msg << "max |linearized - AC| = " << worst << " p.u., halving decay factor = " << decay;
    if (worst > 5e-3 || decay < 3.0) return fail(msg.str());
    return msg.str();
}

// ---------------------------------------------------------------- criterion 5
std::string policy_balance_identity() {
    const NetworkModel model = triangle3();
    const std::vector<DeviceModel> devices = make_devices(model);
    const int horizon = 2;
    const ForecastErrorDataset data = dataset_from_matrix(
        gen_samples(ScenarioKind::gaussian, 6, horizon, 0.06, 17), horizon, 1);
    const MpcConfig cfg = make_config(Formulation::transmission, horizon, 0.02, 1.0, 0.1);
    const AssembledProblem prob = assemble_step(model, devices, cfg, data, horizon, 0);
    const SolverResult res = solve(prob.qp, cfg.solver);
    const DecodedSolution dec = decode_solution(res, prob, devices);

    // symbolic zero of the stacked xi-coefficient
    double sym = 0.0;
    for (int t = 0; t < horizon; ++t) {
        for (int c = 0; c < horizon; ++c) {
            double coef = 0.0;
            for (const auto& dev : devices) {
                if (dev.controllable() && dev.n_input() > 0) {
                    const StackedDynamics st = stack_dynamics(dev, horizon);
                    coef += st.B.row(dev.n_state() * t).dot(dec.policies.at(dev.id).D.col(c));
                } else if (dev.error_col == 0 && c == t) {
                    coef += 1.0;
                }
            }
            sym = std::max(sym, std::abs(coef));
        }
    }

    Rng rng(2029);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::VectorXd xi(horizon);
        for (int t = 0; t < horizon; ++t) xi(t) = rng.uniform(-0.2, 0.2);
        for (int t = 0; t < horizon; ++t) {
            double total = 0.0;
            for (const auto& dev : devices) {
                if (dev.controllable() && dev.n_input() > 0) {
                    const StackedDynamics st = stack_dynamics(dev, horizon);
                    const Eigen::VectorXd x =
                        st.A * dev.x0 +
                        st.B * (dec.policies.at(dev.id).D * xi + dec.policies.at(dev.id).e);
                    total += x(dev.n_state() * t);
                } else {
                    total += dev.profile_at(t) + (dev.error_col >= 0 ? xi(t) : 0.0);
                }
            }
            worst = std::max(worst, std::abs(total));
        }
    }
    std::ostringstream msg;
    msg << "symbolic xi-coefficient max " << sym << ", Monte Carlo residual max " << worst
        << " over 200 draws";
    if (sym > 1e-8 || worst > 1e-8) return fail(msg.str());
    return msg.str();
}

// ---------------------------------------------------------------- criterion 6
std::string cvar_oracle_agreement() {
    Rng rng(606);
    double worst = 0.0;
    int count = 0;
    SolverSettings st;
    st.eps_abs = 1e-9;
    st.eps_rel = 1e-9;
    for (int trial = 0; trial < 100; ++trial) {
        const int n_s = 5 + static_cast<int>(rng.uniform(0.0, 35.0));
        Eigen::MatrixXd samples(n_s, 1);
        std::vector<double> values;
        for (int i = 0; i < n_s; ++i) {
            samples(i, 0) = rng.uniform(-2.0, 2.0);
            values.push_back(samples(i, 0));
        }
        const double beta_options[3] = {0.05, 0.5, 1.0};
        const double beta = beta_options[trial % 3];

        // QP path: a single constant-coefficient row C(y, xi) = xi with only
        // the shifter as a decision, radius zero
        BilinearRow row;
        row.Q = Eigen::MatrixXd::Zero(1, 1);
        row.g = Eigen::VectorXd::Ones(1);
        row.f = Eigen::VectorXd::Zero(1);
        row.h = 0.0;
        const PiecewiseAffineLoss loss = cvar_pieces(row, beta, 0);
        const AmbiguitySet amb(EmpiricalDistribution{samples}, 0.0,
                               PolytopicSupport::box(Eigen::VectorXd::Constant(1, -2.5),
                                                     Eigen::VectorXd::Constant(1, 2.5)));
        QpBuilder qb;
        qb.add_var("kappa", 1);
        dro_epigraph(qb, loss, amb, 1.0, "cvar");
        const SolverResult res = solve(qb.build(), st);
        if (res.status != SolveStatus::optimal) return fail("CVaR LP did not solve");
        const double scan = empirical_cvar(values, beta);
        worst = std::max(worst, std::abs(res.objective - scan));
        ++count;
    }
    std::ostringstream msg;
    msg << "max |LP - scan| = " << worst << " over " << count << " vectors";
    if (worst > 1e-8) return fail(msg.str());
    return msg.str();
}

// ---------------------------------------------------------------- criterion 7
std::string solver_certification() {
    Rng rng(707);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 5 + static_cast<int>(rng.uniform(0.0, 56.0));
        const int m_eq = static_cast<int>(rng.uniform(0.0, static_cast<double>(n) / 4.0));
        const int m_in = static_cast<int>(rng.uniform(0.0, 7.0));
        QpBuilder qb;
        qb.add_var("y", n);
        Eigen::MatrixXd root(n, n);
        for (int i = 0; i < n * n; ++i) root.data()[i] = rng.uniform(-1.0, 1.0);
        const Eigen::MatrixXd p = root.transpose() * root + 0.2 * Eigen::MatrixXd::Identity(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) qb.obj_quad(i, j, i == j ? p(i, i) / 2.0 : p(i, j));
        for (int i = 0; i < n; ++i) qb.obj_linear(i, rng.uniform(-1.0, 1.0));
        for (int r = 0; r < m_eq; ++r) {
            qb.start_eq_row(rng.uniform(-1.0, 1.0));
            for (int j = 0; j < n; ++j) qb.coeff(j, rng.uniform(-1.0, 1.0));
        }
        for (int r = 0; r < m_in; ++r) {
            qb.start_ineq_row(rng.uniform(0.2, 1.2));
            for (int j = 0; j < n; ++j) qb.coeff(j, rng.uniform(-1.0, 1.0));
        }
        const QuadraticProgram qp = qb.build();
        const SolverResult admm = solve(qp);
        const SolverResult oracle = kkt_oracle(qp);
        if (admm.status != SolveStatus::optimal) return fail("solver missed an optimal instance");
        const double gap = std::abs(admm.objective - oracle.objective) /
                           std::max(1.0, std::abs(oracle.objective));
        worst = std::max(worst, gap);
    }

    // classification fixtures
    QpBuilder inf_qb;
    const int y = inf_qb.add_var("y", 1);
    inf_qb.start_eq_row(0.0);
    inf_qb.coeff(y, 1.0);
    inf_qb.start_eq_row(1.0);
    inf_qb.coeff(y, 1.0);
    const bool inf_ok = solve(inf_qb.build()).status == SolveStatus::infeasible;

    QpBuilder unb_qb;
    const int z = unb_qb.add_var("z", 1);
    unb_qb.obj_linear(z, -1.0);
    unb_qb.start_ineq_row(-1.0);
    unb_qb.coeff(z, -1.0);
    const bool unb_ok = solve(unb_qb.build()).status == SolveStatus::unbounded;

    std::ostringstream msg;
    msg << "max relative objective gap " << worst << " over 50 QPs; infeasible "
        << (inf_ok ? "ok" : "missed") << ", unbounded " << (unb_ok ? "ok" : "missed");
    if (worst > 1e-6 || !inf_ok || !unb_ok) return fail(msg.str());
    return msg.str();
}

// ---------------------------------------------------------------- criterion 8
std::string out_of_sample_trend() {
    // over-voltage-prone variant of the feeder: tight upper bound and cheap
    // curtailment so the risk term has real decision leverage
    NetworkModel model = feeder4();
    for (auto& bus : model.buses) bus.v_max = 1.025;
    for (auto& dev : model.devices) {
        if (dev.kind == DeviceKind::curtailable_res) {
            dev.curtail_cost_lin = 0.12;
            dev.curtail_cost_quad = 0.02;
        }
    }

    int better_or_equal = 0;
    const int n_seeds = 20;
    std::vector<double> diffs;
    for (int seed = 1; seed <= n_seeds; ++seed) {
        const Eigen::MatrixXd train_m = gen_samples(
            ScenarioKind::mixture_outliers, 30, 2, 0.08, 1000 + static_cast<std::uint64_t>(seed));
        const ForecastErrorDataset train = dataset_from_matrix(train_m, 1, 2);
        const auto validation = gen_scenarios(ScenarioKind::mixture_outliers, 300, 1, 2, 0.08,
                                              900000 + static_cast<std::uint64_t>(seed));

        MpcConfig cfg = make_config(Formulation::distribution, 1, 0.0, 25.0, 0.1);
        cfg.solver.eps_abs = 1e-6;
        cfg.solver.eps_rel = 1e-6;
        cfg.ac_accounting = true;

        const double tuned =
            tune_radius(model, cfg, train, {0.01, 0.04, 0.12}, 3);

        MpcConfig cfg0 = cfg;
        cfg0.eps = {0.0};
        const OosReport base =
            monte_carlo_oos(model, cfg0, train, validation, OosMode::single_stage,
                            ExecMode::parallel);
        MpcConfig cfg_dr = cfg;
        cfg_dr.eps = {tuned};
        const OosReport robust =
            monte_carlo_oos(model, cfg_dr, train, validation, OosMode::single_stage,
                            ExecMode::parallel);
        diffs.push_back(robust.violation_freq - base.violation_freq);
        if (robust.violation_freq <= base.violation_freq + 1e-12) ++better_or_equal;
    }
    std::sort(diffs.begin(), diffs.end());
    const double median_diff = diffs[diffs.size() / 2];
    std::ostringstream msg;
    msg << "tuned eps improved or matched the violation frequency in " << better_or_equal << "/"
        << n_seeds << " seeds (median improvement " << -median_diff << ")";
    if (median_diff > 0.0) return fail(msg.str());
    return msg.str();
}

// ---------------------------------------------------------------- criterion 9
std::string closed_loop_consistency() {
    const NetworkModel model = feeder4();
    const Eigen::MatrixXd train_m = gen_samples(ScenarioKind::gaussian, 12, 2, 0.05, 4001);
    const ForecastErrorDataset train = dataset_from_matrix(train_m, 1, 2);
    MpcConfig cfg = make_config(Formulation::distribution, 4, 0.02, 1.0, 0.1);
    cfg.steps = 12;
    cfg.online_updates = true;
    cfg.solver.eps_abs = 1e-8;
    cfg.solver.eps_rel = 1e-8;
    const Eigen::MatrixXd scenario = gen_samples(ScenarioKind::gaussian, 12, 2, 0.05, 4100);

    const SimulationTrace a = run_mpc(model, cfg, train, scenario);
    const SimulationTrace b = run_mpc(model, cfg, train, scenario);
    if (a.truncated) return fail("trace truncated: " + a.diagnostic);
    if (a.steps.size() != 12) return fail("trace length wrong");

    for (size_t t = 0; t < a.steps.size(); ++t) {
        if (std::memcmp(a.steps[t].states.data(), b.steps[t].states.data(),
                        sizeof(double) * a.steps[t].states.size()) != 0 ||
            std::memcmp(a.steps[t].applied.data(), b.steps[t].applied.data(),
                        sizeof(double) * a.steps[t].applied.size()) != 0)
            return fail("repeat run differs at step " + std::to_string(t));
    }

    // recompute states from the applied inputs through the device dynamics
    std::vector<DeviceModel> devices = make_devices(model);
    std::map<int, Eigen::VectorXd> x;
    for (const auto& dev : devices)
        if (dev.kind != DeviceKind::fixed_load) x[dev.id] = dev.x0;
    double worst = 0.0;
    for (const auto& step : a.steps) {
        int at = 0;
        int applied_at = 0;
        std::map<int, double> u_of;
        for (const auto& dev : devices) {
            if (dev.kind == DeviceKind::curtailable_res) {
                u_of[dev.id] = step.applied(applied_at++);
                if (dev.q_capable) ++applied_at;
            } else if (dev.controllable() && dev.n_input() > 0) {
                u_of[dev.id] = step.applied(applied_at++);
            }
        }
        for (const auto& dev : devices) {
            if (dev.kind == DeviceKind::fixed_load) continue;
            Eigen::VectorXd u(1);
            u(0) = u_of.at(dev.id);
            const Eigen::VectorXd next = dev.A * x[dev.id] + dev.B * u;
            for (int k = 0; k < next.size(); ++k)
                worst = std::max(worst, std::abs(step.states(at + k) - next(k)));
            at += static_cast<int>(next.size());
            x[dev.id] = next;
        }
    }
    std::ostringstream msg;
    msg << "bitwise repeatable; state recomputation residual " << worst;
    if (worst > 1e-12) return fail(msg.str());
    return msg.str();
}

}  // namespace

int main(int argc, char** argv) {
    const std::string filter = argc > 1 ? argv[1] : "";
    Harness h;
    h.filter = filter;
    h.run("duality-validation", duality_validation);
    h.run("saa-reduction", saa_reduction);
    h.run("monotonicity-suites", monotonicity_suites);
    h.run("linearization-fidelity", linearization_fidelity);
    h.run("policy-balance-identity", policy_balance_identity);
    h.run("cvar-oracle-agreement", cvar_oracle_agreement);
    h.run("solver-certification", solver_certification);
    h.run("out-of-sample-trend", out_of_sample_trend);
    h.run("closed-loop-consistency", closed_loop_consistency);
    std::cout << (h.failures == 0 ? "all criteria passed\n"
                                  : std::to_string(h.failures) + " criteria failed\n");
    return h.failures == 0 ? 0 : 1;
}
