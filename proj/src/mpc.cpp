#include "dropf/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dropf/errors.hpp"
#include "dropf/linearization.hpp"

namespace dropf {

void MpcConfig::validate() const {
    if (horizon < 1 || steps < 1 || horizon > steps)
        throw ValidationError("mpc: need 1 <= horizon <= steps");
    if (eps.empty()) throw ValidationError("mpc: empty radius schedule");
    for (const double e : eps)
        if (e < 0.0) throw ValidationError("mpc: negative radius");
    if (!(beta > 0.0 && beta <= 1.0)) throw ValidationError("mpc: beta outside (0, 1]");
    if (rho < 0.0) throw ValidationError("mpc: rho must be nonnegative");
    if (window_cap < 1) throw ValidationError("mpc: window cap must be positive");
}

double SimulationTrace::total_cost() const {
    double acc = 0.0;
    for (const auto& s : steps) acc += s.stage_cost;
    return acc;
}

namespace {

std::vector<double> eps_slice(const std::vector<double>& eps, int horizon) {
    if (eps.size() == 1) return eps;
    if (static_cast<int>(eps.size()) < horizon)
        throw ValidationError("mpc: radius schedule shorter than the horizon");
    return {eps.begin(), eps.begin() + horizon};
}

struct RealizedStep {
    Eigen::VectorXd observable;
    Eigen::VectorXd margins;
    std::vector<std::string> names;
};

// realized network quantities and constraint margins for one stage
RealizedStep realize_distribution(const NetworkModel& model, const VoltageLinearization& lin,
                                  const std::vector<DeviceModel>& devices,
                                  const std::map<int, double>& alpha,
                                  const std::map<int, double>& qset,
                                  const std::map<int, double>& injection,
                                  const Eigen::VectorXd& xi, int abs_t, bool ac_accounting,
                                  int stage_tag) {
    const int n = model.n_pq();
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n), q = Eigen::VectorXd::Zero(n);
    for (const auto& dev : devices) {
        if (dev.bus == 0) continue;
        const int b = dev.bus - 1;
        switch (dev.kind) {
            case DeviceKind::fixed_load:
                p(b) += dev.profile_at(abs_t) + (dev.error_col >= 0 ? xi(dev.error_col) : 0.0);
                q(b) += dev.q_profile_at(abs_t) +
                        (dev.q_error_col >= 0 ? xi(dev.q_error_col) : 0.0);
                break;
            case DeviceKind::curtailable_res: {
                const double avail =
                    dev.profile_at(abs_t) + (dev.error_col >= 0 ? xi(dev.error_col) : 0.0);
                p(b) += (1.0 - alpha.at(dev.id)) * avail;
                if (dev.q_capable) q(b) += qset.at(dev.id);
                break;
            }
            default:
                p(b) += injection.at(dev.id);
                break;
        }
    }

    RealizedStep out;
    if (ac_accounting) {
        const Eigen::VectorXcd v = ac_power_flow(model, {p, q}, 1e-10, 60);
        out.observable = v.tail(n).cwiseAbs();
    } else {
        out.observable = approx_voltage_magnitude(lin, p, q);
    }
    out.margins.resize(2 * n);
    for (int b = 0; b < n; ++b) {
        const auto& bus = model.buses[static_cast<size_t>(b + 1)];
        out.margins(2 * b) = out.observable(b) - bus.v_max;
        out.margins(2 * b + 1) = bus.v_min - out.observable(b);
        out.names.push_back("vmax[n" + std::to_string(b + 1) + ",t" + std::to_string(stage_tag) +
                            "]");
        out.names.push_back("vmin[n" + std::to_string(b + 1) + ",t" + std::to_string(stage_tag) +
                            "]");
    }
    return out;
}

RealizedStep realize_transmission(const NetworkModel& model,
                                  const std::vector<DeviceModel>& devices,
                                  const std::map<int, double>& injection,
                                  const Eigen::VectorXd& xi, int abs_t, int stage_tag) {
    const int n = model.n_pq();
    const int n_lines = model.n_lines();
    const Eigen::MatrixXd map = dc_flow_map(model);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    for (const auto& dev : devices) {
        double inj = 0.0;
        if (dev.controllable() && dev.n_input() > 0) {
            inj = injection.at(dev.id);
        } else {
            inj = dev.profile_at(abs_t) + (dev.error_col >= 0 ? xi(dev.error_col) : 0.0);
        }
        if (dev.bus > 0) p(dev.bus - 1) += inj;
    }
    RealizedStep out;
    out.observable = map * p;
    out.margins.resize(2 * n_lines);
    for (int l = 0; l < 2 * n_lines; ++l) {
        out.margins(l) =
            out.observable(l) - model.lines[static_cast<size_t>(l % n_lines)].flow_limit;
        out.names.push_back("flow[l" + std::to_string(l) + ",t" + std::to_string(stage_tag) + "]");
    }
    return out;
}

double stage_cost_of(const std::vector<DeviceModel>& devices,
                     const std::map<int, Eigen::VectorXd>& new_state,
                     const std::map<int, double>& applied_u) {
    double cost = 0.0;
    for (const auto& dev : devices) {
        if (new_state.count(dev.id)) {
            const Eigen::VectorXd& x = new_state.at(dev.id);
            cost += dev.f_x.dot(x) + 0.5 * x.dot(dev.H_x * x);
        }
        if (applied_u.count(dev.id) && dev.n_input() == 1) {
            const double u = applied_u.at(dev.id);
            cost += dev.f_u(0) * u + 0.5 * dev.H_u(0, 0) * u * u;
        }
    }
    return cost;
}

SolverResult solve_with_retry(const QuadraticProgram& qp, const SolverSettings& base,
                              int retries) {
    SolverSettings s = base;
    SolverResult res = solve(qp, s);
    for (int k = 0; k < retries && res.status == SolveStatus::max_iter; ++k) {
        s.max_iter *= 4;
        res = solve(qp, s);
    }
    return res;
}

}  // namespace

AssembledProblem assemble_step(const NetworkModel& model, const std::vector<DeviceModel>& devices,
                               const MpcConfig& config, const ForecastErrorDataset& window,
                               int horizon, int t0) {
    const auto sets = stage_ambiguity(window, eps_slice(config.eps, horizon), horizon);
    const RiskConfig risk{config.beta, config.rho};
    const CostSpec costs = CostSpec::from_devices(devices);
    if (config.formulation == Formulation::distribution) {
        const VoltageLinearization lin =
            build_sensitivities(build_admittance(model), Complex(model.v_slack, 0.0));
        return assemble_distribution(model, lin, devices, sets, risk, costs, config.options,
                                     horizon, t0);
    }
    return assemble_transmission(model, devices, sets, risk, costs, config.options, horizon, t0);
}

SimulationTrace run_mpc(const NetworkModel& model, const MpcConfig& config,
                        const ForecastErrorDataset& train, const Eigen::MatrixXd& scenario) {
    config.validate();
    if (scenario.rows() < config.steps)
        throw ValidationError("mpc: scenario shorter than the configured step count");
    if (scenario.cols() != train.n_xi)
        throw ValidationError("mpc: scenario width does not match the dataset");
    if (config.online_updates && train.stages != 1)
        throw ValidationError("mpc: online updates need a stationary (single-stage) window");

    std::vector<DeviceModel> devices = make_devices(model);
    ForecastErrorDataset window = train;
    // the linearization is computed once per case and reused across stages
    VoltageLinearization lin;
    if (config.formulation == Formulation::distribution)
        lin = build_sensitivities(build_admittance(model), Complex(model.v_slack, 0.0));

    SimulationTrace trace;
    for (int t = 0; t < config.steps; ++t) {
        const int horizon = std::min(config.horizon, config.steps - t);
        AssembledProblem prob;
        SolverResult res;
        try {
            prob = assemble_step(model, devices, config, window, horizon, t);
            res = solve_with_retry(prob.qp, config.solver, config.solver_retries);
        } catch (const std::exception& e) {
            trace.truncated = true;
            trace.diagnostic = "stage " + std::to_string(t) + ": " + e.what();
            return trace;
        }
        if (res.status != SolveStatus::optimal) {
            trace.truncated = true;
            trace.diagnostic =
                "stage " + std::to_string(t) + ": solver status " + to_string(res.status);
            return trace;
        }
        const DecodedSolution dec = decode_solution(res, prob, devices);
        const Eigen::VectorXd xi = scenario.row(t).transpose();

        // apply the first-stage decision; transmission recourse reacts to xi
        std::map<int, double> alpha, qset, applied_u, injection;
        std::map<int, Eigen::VectorXd> new_state;
        std::vector<double> applied_flat;
        for (const auto& dev : devices) {
            if (dev.kind == DeviceKind::curtailable_res) {
                if (config.formulation == Formulation::distribution) {
                    alpha[dev.id] = dec.alpha.at(dev.id)(0);
                    applied_flat.push_back(alpha[dev.id]);
                    if (dev.q_capable) {
                        qset[dev.id] = dec.q.at(dev.id)(0);
                        applied_flat.push_back(qset[dev.id]);
                    }
                }
            } else if (dev.controllable() && dev.n_input() > 0) {
                double u0 = dec.u.at(dev.id)(0);
                if (config.formulation == Formulation::transmission &&
                    dec.policies.count(dev.id)) {
                    const auto& pol = dec.policies.at(dev.id);
                    u0 += pol.D.row(0).head(train.n_xi).dot(xi);
                }
                applied_u[dev.id] = u0;
                applied_flat.push_back(u0);
            }
        }
        // advance device states
        std::vector<double> state_flat;
        for (auto& dev : devices) {
            if (dev.kind == DeviceKind::fixed_load) continue;
            Eigen::VectorXd u(dev.n_input());
            if (dev.kind == DeviceKind::curtailable_res)
                u(0) = config.formulation == Formulation::distribution ? alpha[dev.id] : 0.0;
            else
                u(0) = applied_u[dev.id];
            const Eigen::VectorXd x1 = dev.A * dev.x0 + dev.B * u;
            new_state[dev.id] = x1;
            dev.x0 = x1;
            for (int k = 0; k < x1.size(); ++k) state_flat.push_back(x1(k));
            if (dev.controllable()) injection[dev.id] = x1(0);
        }

        StepRecord rec;
        rec.t = t;
        rec.xi = xi;
        rec.applied = Eigen::Map<Eigen::VectorXd>(applied_flat.data(),
                                                  static_cast<long>(applied_flat.size()));
        rec.states = Eigen::Map<Eigen::VectorXd>(state_flat.data(),
                                                 static_cast<long>(state_flat.size()));
        RealizedStep rstep =
            config.formulation == Formulation::distribution
                ? realize_distribution(model, lin, devices, alpha, qset, injection, xi, t,
                                       config.ac_accounting, 0)
                : realize_transmission(model, devices, injection, xi, t, 0);
        rec.observable = rstep.observable;
        rec.margins = rstep.margins;
        rec.margin_names = rstep.names;
        rec.stage_cost = stage_cost_of(devices, new_state, applied_u);
        if (config.formulation == Formulation::distribution)
            for (const auto& dev : devices)
                if (dev.kind == DeviceKind::curtailable_res) {
                    const double a = alpha[dev.id];
                    rec.stage_cost += dev.f_u(0) * a + 0.5 * dev.H_u(0, 0) * a * a;
                    if (dev.q_capable) {
                        const double qv = qset[dev.id];
                        rec.stage_cost += dev.q_cost_lin * qv + 0.5 * dev.q_cost_quad * qv * qv;
                    }
                }
        rec.objective = dec.objective;
        rec.iterations = res.iterations;
        trace.steps.push_back(std::move(rec));

        if (config.online_updates) window.append_sample(xi, config.window_cap);
    }
    return trace;
}

namespace {

struct ScenarioEval {
    double cost = 0.0;
    std::vector<std::string> names;
    std::vector<double> margins;  // per named row (pooled later)
    bool violated = false;
};

ScenarioEval eval_single_stage(const NetworkModel& model, const MpcConfig& config,
                               const std::vector<DeviceModel>& devices,
                               const AssembledProblem& prob, const DecodedSolution& dec,
                               const VoltageLinearization& lin, const Eigen::MatrixXd& scenario) {
    const int horizon = prob.horizon;
    Eigen::VectorXd xi_stacked(prob.n_xi * horizon);
    for (int t = 0; t < horizon; ++t)
        xi_stacked.segment(prob.n_xi * t, prob.n_xi) = scenario.row(t).transpose();

    ScenarioEval ev;
    if (config.formulation == Formulation::distribution && config.ac_accounting) {
        // realized voltages per stage through the AC oracle
        for (int t = 0; t < horizon; ++t) {
            std::map<int, double> alpha, qset, injection;
            for (const auto& dev : devices) {
                if (dev.kind == DeviceKind::curtailable_res) {
                    alpha[dev.id] = dec.alpha.at(dev.id)(t);
                    if (dev.q_capable) qset[dev.id] = dec.q.at(dev.id)(t);
                } else if (dev.controllable() && dev.n_input() > 0) {
                    // open-loop state at stage t from the planned inputs
                    Eigen::VectorXd x = dev.x0;
                    for (int s = 0; s <= t; ++s) {
                        Eigen::VectorXd u(dev.n_input());
                        for (int k = 0; k < dev.n_input(); ++k)
                            u(k) = dec.u.at(dev.id)(dev.n_input() * s + k);
                        x = dev.A * x + dev.B * u;
                    }
                    injection[dev.id] = x(0);
                }
            }
            const RealizedStep rs =
                realize_distribution(model, lin, devices, alpha, qset, injection,
                                     scenario.row(t).transpose(), t, true, t);
            for (int i = 0; i < rs.margins.size(); ++i) {
                ev.names.push_back(rs.names[static_cast<size_t>(i)]);
                ev.margins.push_back(rs.margins(i));
            }
        }
    } else {
        const std::vector<double> vals = evaluate_risk_rows(prob, dec.y, xi_stacked);
        for (size_t i = 0; i < vals.size(); ++i) {
            ev.names.push_back(prob.risk_rows[i].name);
            ev.margins.push_back(vals[i]);
        }
    }
    for (const double m : ev.margins)
        if (m > 0.0) ev.violated = true;

    // realized cost: distribution decisions are here-and-now; transmission
    // policies respond to the realization
    if (config.formulation == Formulation::distribution) {
        ev.cost = dec.cost_term;
    } else {
        double cost = prob.cost_offset;
        for (const auto& dev : devices) {
            if (!(dev.controllable() && dev.n_input() > 0)) continue;
            const StackedDynamics st = stack_dynamics(dev, horizon);
            Eigen::VectorXd u = dec.u.at(dev.id);
            if (dec.policies.count(dev.id)) u += dec.policies.at(dev.id).D * xi_stacked;
            const Eigen::VectorXd x = st.A * dev.x0 + st.B * u;
            const int n = dev.n_state();
            const int m = dev.n_input();
            for (int t = 0; t < horizon; ++t) {
                const Eigen::VectorXd xt = x.segment(n * t, n);
                const Eigen::VectorXd ut = u.segment(m * t, m);
                cost += dev.f_x.dot(xt) + 0.5 * xt.dot(dev.H_x * xt);
                cost += dev.f_u.dot(ut) + 0.5 * ut.dot(dev.H_u * ut);
            }
        }
        ev.cost = cost;
    }
    return ev;
}

ScenarioEval eval_closed_loop(const NetworkModel& model, const MpcConfig& config,
                              const ForecastErrorDataset& train,
                              const Eigen::MatrixXd& scenario) {
    const SimulationTrace trace = run_mpc(model, config, train, scenario);
    ScenarioEval ev;
    ev.cost = trace.total_cost();
    for (const auto& step : trace.steps) {
        for (int i = 0; i < step.margins.size(); ++i) {
            ev.names.push_back(step.margin_names[static_cast<size_t>(i)]);
            ev.margins.push_back(step.margins(i));
            if (step.margins(i) > 0.0) ev.violated = true;
        }
    }
    return ev;
}

}  // namespace

OosReport monte_carlo_oos(const NetworkModel& model, const MpcConfig& config,
                          const ForecastErrorDataset& train,
                          const std::vector<Eigen::MatrixXd>& scenarios, OosMode mode,
                          ExecMode exec) {
    config.validate();
    if (scenarios.empty()) throw ValidationError("oos: empty validation set");

    // training/validation overlap check (row hashes)
    {
        std::set<std::string> train_rows;
        for (int i = 0; i < train.n_samples(); ++i) {
            std::ostringstream key;
            key.precision(17);
            for (int j = 0; j < train.samples.cols(); ++j) key << train.samples(i, j) << ",";
            train_rows.insert(key.str());
        }
        int overlap = 0;
        for (const auto& sc : scenarios)
            for (int r = 0; r < sc.rows() && train.samples.cols() == sc.cols(); ++r) {
                std::ostringstream key;
                key.precision(17);
                for (int j = 0; j < sc.cols(); ++j) key << sc(r, j) << ",";
                if (train_rows.count(key.str())) ++overlap;
            }
        if (overlap > 0)
            std::cerr << "warning: " << overlap
                      << " validation rows also appear in the training window\n";
    }

    const int n = static_cast<int>(scenarios.size());
    std::vector<ScenarioEval> evals(static_cast<size_t>(n));

    if (mode == OosMode::single_stage) {
        std::vector<DeviceModel> devices = make_devices(model);
        const AssembledProblem prob =
            assemble_step(model, devices, config, train, config.horizon, 0);
        const SolverResult res = solve_with_retry(prob.qp, config.solver, config.solver_retries);
        const DecodedSolution dec = decode_solution(res, prob, devices);
        VoltageLinearization lin;
        if (config.formulation == Formulation::distribution)
            lin = build_sensitivities(build_admittance(model), Complex(model.v_slack, 0.0));

        if (exec == ExecMode::parallel) {
#pragma omp parallel for schedule(static)
            for (int i = 0; i < n; ++i)
                evals[static_cast<size_t>(i)] = eval_single_stage(
                    model, config, devices, prob, dec, lin, scenarios[static_cast<size_t>(i)]);
        } else {
            for (int i = 0; i < n; ++i)
                evals[static_cast<size_t>(i)] = eval_single_stage(
                    model, config, devices, prob, dec, lin, scenarios[static_cast<size_t>(i)]);
        }
    } else {
        if (exec == ExecMode::parallel) {
#pragma omp parallel for schedule(static)
            for (int i = 0; i < n; ++i)
                evals[static_cast<size_t>(i)] =
                    eval_closed_loop(model, config, train, scenarios[static_cast<size_t>(i)]);
        } else {
            for (int i = 0; i < n; ++i)
                evals[static_cast<size_t>(i)] =
                    eval_closed_loop(model, config, train, scenarios[static_cast<size_t>(i)]);
        }
    }

    // deterministic reduction in scenario-index order
    OosReport report;
    report.n_scenarios = n;
    std::map<std::string, std::vector<double>> pooled;
    int violated = 0;
    for (const auto& ev : evals) {
        report.mean_cost += ev.cost;
        if (ev.violated) ++violated;
        for (size_t i = 0; i < ev.names.size(); ++i)
            pooled[ev.names[i]].push_back(ev.margins[i]);
    }
    report.mean_cost /= static_cast<double>(n);
    report.violation_freq = static_cast<double>(violated) / static_cast<double>(n);
    for (const auto& [name, vals] : pooled) {
        RowStats st;
        st.cvar = empirical_cvar(vals, config.beta);
        int over = 0;
        double worst = 0.0;
        for (const double v : vals) {
            if (v > 0.0) ++over;
            worst = std::max(worst, v);
        }
        st.violation_freq = static_cast<double>(over) / static_cast<double>(vals.size());
        st.worst = worst;
        report.rows[name] = st;
    }
    return report;
}

std::string OosReport::to_json() const {
    std::ostringstream out;
    out.precision(12);
    out << "{\n  \"mean_cost\": " << mean_cost << ",\n  \"violation_freq\": " << violation_freq
        << ",\n  \"n_scenarios\": " << n_scenarios << ",\n  \"rows\": {";
    bool first = true;
    for (const auto& [name, st] : rows) {
        out << (first ? "" : ",") << "\n    \"" << name << "\": {\"cvar\": " << st.cvar
            << ", \"violation_freq\": " << st.violation_freq << ", \"worst\": " << st.worst << "}";
        first = false;
    }
    out << "\n  }\n}\n";
    return out.str();
}

std::vector<Eigen::MatrixXd> gen_scenarios(ScenarioKind kind, int count, int stages, int n_xi,
                                           double scale, std::uint64_t seed) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i)
        out.push_back(gen_samples(kind, stages, n_xi, scale,
                                  seed + 0x51ab5u * static_cast<std::uint64_t>(i + 1)));
    return out;
}

double tune_radius(const NetworkModel& model, const MpcConfig& config,
                   const ForecastErrorDataset& train, const std::vector<double>& grid,
                   int folds) {
    if (grid.empty()) throw ValidationError("tune_radius: empty grid");
    const int n = train.n_samples();
    if (folds < 2 || n < 2 * folds)
        throw ValidationError("tune_radius: too few samples for the fold count");

    std::vector<DeviceModel> devices = make_devices(model);
    VoltageLinearization lin;
    if (config.formulation == Formulation::distribution)
        lin = build_sensitivities(build_admittance(model), Complex(model.v_slack, 0.0));

    double best_eps = grid.front();
    double best_score = std::numeric_limits<double>::infinity();
    for (const double eps : grid) {
        double score = 0.0;
        bool usable = true;
        for (int f = 0; f < folds && usable; ++f) {
            const int lo = f * n / folds, hi = (f + 1) * n / folds;
            std::vector<int> in_rows;
            for (int i = 0; i < n; ++i)
                if (i < lo || i >= hi) in_rows.push_back(i);
            Eigen::MatrixXd in_mat(static_cast<int>(in_rows.size()), train.samples.cols());
            for (size_t i = 0; i < in_rows.size(); ++i)
                in_mat.row(static_cast<int>(i)) = train.samples.row(in_rows[i]);
            ForecastErrorDataset fold =
                dataset_from_matrix(in_mat, train.stages, train.n_xi);
            fold.declared_support = train.stage_support(0);  // cover held-out points too

            MpcConfig cfg = config;
            cfg.eps = {eps};
            cfg.ac_accounting = false;
            try {
                const AssembledProblem prob =
                    assemble_step(model, devices, cfg, fold, cfg.horizon, 0);
                const SolverResult res = solve_with_retry(prob.qp, cfg.solver, 1);
                const DecodedSolution dec = decode_solution(res, prob, devices);
                // held-out score: cost + rho * sum of row CVaRs on the out-fold
                std::map<std::string, std::vector<double>> margins;
                for (int i = lo; i < hi; ++i) {
                    Eigen::VectorXd xi_stacked(train.n_xi * cfg.horizon);
                    for (int t = 0; t < cfg.horizon; ++t)
                        xi_stacked.segment(train.n_xi * t, train.n_xi) =
                            train.stage_slice(t).row(i).transpose();
                    const auto vals = evaluate_risk_rows(prob, dec.y, xi_stacked);
                    for (size_t r = 0; r < vals.size(); ++r)
                        margins[prob.risk_rows[r].name].push_back(vals[r]);
                }
                score += dec.cost_term;
                for (const auto& [name, vals] : margins)
                    score += cfg.rho * empirical_cvar(vals, cfg.beta);
            } catch (const std::exception&) {
                usable = false;
            }
        }
        if (usable && score < best_score) {
            best_score = score;
            best_eps = eps;
        }
    }
    return best_eps;
}

}  // namespace dropf
