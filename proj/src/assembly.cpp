#include "dropf/assembly.hpp"

#include <algorithm>
#include <cmath>

#include "dropf/errors.hpp"

namespace dropf {

int DecisionLayout::add(const std::string& name, int size) {
    entries.push_back({name, total, size});
    total += size;
    return entries.back().offset;
}

int DecisionLayout::offset_of(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e.offset;
    throw ValidationError("layout: unknown variable '" + name + "'");
}

bool DecisionLayout::has(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return true;
    return false;
}

CostSpec CostSpec::from_devices(const std::vector<DeviceModel>& devices) {
    CostSpec spec;
    for (const auto& dev : devices) {
        DeviceCost c;
        c.device_id = dev.id;
        c.f_x = dev.f_x;
        c.f_u = dev.f_u;
        c.H_x = dev.H_x;
        c.H_u = dev.H_u;
        spec.blocks.push_back(std::move(c));
    }
    spec.validate();
    return spec;
}

const CostSpec::DeviceCost& CostSpec::of(int device_id) const {
    for (const auto& b : blocks)
        if (b.device_id == device_id) return b;
    throw ValidationError("cost spec: no block for device " + std::to_string(device_id));
}

void CostSpec::validate() const {
    auto check = [](const Eigen::MatrixXd& h, const std::string& what) {
        if (h.rows() == 0) return;
        if (!h.isApprox(h.transpose(), 1e-12))
            throw ValidationError("cost spec: " + what + " is not symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw ValidationError("cost spec: " + what + " is not positive semidefinite");
    };
    for (const auto& b : blocks) {
        check(b.H_x, "H_x of device " + std::to_string(b.device_id));
        check(b.H_u, "H_u of device " + std::to_string(b.device_id));
    }
}

namespace {

std::string dt(int id, int t) { return "d" + std::to_string(id) + ",t" + std::to_string(t); }

// per-stage injection response of a controllable device: S picks the first
// state component of each stage block
struct DeviceCtx {
    const DeviceModel* dev = nullptr;
    StackedDynamics st;
    Eigen::MatrixXd sb;      // H x (m_d H)
    Eigen::VectorXd sa_x0;   // H
    std::vector<int> u_col;  // global column of the stage-0 input per stage
};

DeviceCtx make_ctx(const DeviceModel& dev, int horizon) {
    DeviceCtx ctx;
    ctx.dev = &dev;
    ctx.st = stack_dynamics(dev, horizon);
    const int n = dev.n_state();
    ctx.sb.resize(horizon, dev.n_input() * horizon);
    ctx.sa_x0.resize(horizon);
    const Eigen::VectorXd ax0 = ctx.st.A * dev.x0;
    for (int t = 0; t < horizon; ++t) {
        ctx.sb.row(t) = ctx.st.B.row(n * t);
        ctx.sa_x0(t) = ax0(n * t);
    }
    return ctx;
}

// stage cost of one device over its input columns:
//   H_tot = B' Hx B + Hu,  f_tot = B'(fx + Hx A x0) + fu, plus a constant
struct InputCost {
    Eigen::MatrixXd H;
    Eigen::VectorXd f;
    double offset = 0.0;
};

InputCost input_space_cost(const DeviceModel& dev, const CostSpec::DeviceCost& cost,
                           const StackedDynamics& st, int horizon) {
    const int n = dev.n_state();
    const int m = dev.n_input();
    Eigen::MatrixXd hx = Eigen::MatrixXd::Zero(n * horizon, n * horizon);
    Eigen::MatrixXd hu = Eigen::MatrixXd::Zero(m * horizon, m * horizon);
    Eigen::VectorXd fx(n * horizon), fu(m * horizon);
    for (int t = 0; t < horizon; ++t) {
        hx.block(n * t, n * t, n, n) = cost.H_x;
        hu.block(m * t, m * t, m, m) = cost.H_u;
        fx.segment(n * t, n) = cost.f_x;
        fu.segment(m * t, m) = cost.f_u;
    }
    const Eigen::VectorXd ax0 = st.A * dev.x0;
    InputCost out;
    out.H = st.B.transpose() * hx * st.B + hu;
    out.f = st.B.transpose() * (fx + hx * ax0) + fu;
    out.offset = fx.dot(ax0) + 0.5 * ax0.dot(hx * ax0);
    return out;
}

void emit_quadratic(QpBuilder& qb, const std::vector<int>& cols, const InputCost& cost) {
    const int m = static_cast<int>(cols.size());
    for (int i = 0; i < m; ++i) {
        qb.obj_linear(cols[static_cast<size_t>(i)], cost.f(i));
        for (int j = i; j < m; ++j) {
            const double v = cost.H(i, j);
            if (v == 0.0) continue;
            if (i == j)
                qb.obj_quad(cols[static_cast<size_t>(i)], cols[static_cast<size_t>(j)], v / 2.0);
            else
                qb.obj_quad(cols[static_cast<size_t>(i)], cols[static_cast<size_t>(j)], v);
        }
    }
}

void check_sets(const std::vector<AmbiguitySet>& sets, int horizon, int n_xi) {
    if (static_cast<int>(sets.size()) != horizon)
        throw ValidationError("assemble: need one ambiguity set per horizon stage");
    for (const auto& s : sets) {
        if (s.center.dim() != n_xi)
            throw ValidationError("assemble: ambiguity set dimension mismatch");
        if (s.center.n_samples() != sets[0].center.n_samples())
            throw ValidationError("assemble: stage sample counts differ");
    }
}

AmbiguitySet stacked_ambiguity(const std::vector<AmbiguitySet>& sets, int upto) {
    const int n_xi = sets[0].center.dim();
    const int n_s = sets[0].center.n_samples();
    const int dim = n_xi * (upto + 1);
    Eigen::MatrixXd samples(n_s, dim);
    int rows_h = 0;
    for (int t = 0; t <= upto; ++t) rows_h += static_cast<int>(sets[static_cast<size_t>(t)].support.H.rows());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(rows_h, dim);
    Eigen::VectorXd d(rows_h);
    int at = 0;
    for (int t = 0; t <= upto; ++t) {
        const auto& s = sets[static_cast<size_t>(t)];
        samples.middleCols(n_xi * t, n_xi) = s.center.samples;
        const int r = static_cast<int>(s.support.H.rows());
        h.block(at, n_xi * t, r, n_xi) = s.support.H;
        d.segment(at, r) = s.support.d;
        at += r;
    }
    return AmbiguitySet(EmpiricalDistribution{samples}, sets[static_cast<size_t>(upto)].radius,
                        PolytopicSupport(h, d));
}

}  // namespace

AssembledProblem assemble_distribution(const NetworkModel& model, const VoltageLinearization& lin,
                                       const std::vector<DeviceModel>& devices,
                                       const std::vector<AmbiguitySet>& stage_sets,
                                       const RiskConfig& risk, const CostSpec& costs,
                                       const DrOptions& options, int horizon, int t0) {
    risk.validate();
    costs.validate();
    if (horizon < 1) throw ValidationError("assemble: horizon must be >= 1");
    const int n_bus = model.n_pq();
    if (lin.M.rows() != n_bus) throw ValidationError("assemble: linearization/network mismatch");
    const int n_xi = stage_sets.empty() ? 0 : stage_sets[0].center.dim();
    check_sets(stage_sets, horizon, n_xi);
    for (const auto& dev : devices) {
        if (dev.error_col >= n_xi || dev.q_error_col >= n_xi)
            throw ValidationError("assemble: device " + std::to_string(dev.id) +
                                  " error column exceeds the dataset width");
    }

    AssembledProblem prob;
    prob.horizon = horizon;
    prob.n_xi = n_xi;
    prob.rho = risk.rho;
    prob.beta = risk.beta;

    QpBuilder qb;
    auto alloc = [&](const std::string& name, int size) {
        prob.layout.add(name, size);
        return qb.add_var(name, size);
    };

    // structural variables, stage-major then device order
    std::map<int, std::vector<int>> alpha_col, q_col;  // device id -> per-stage column
    std::map<int, std::vector<int>> u_col;             // device id -> flat input columns
    for (int t = 0; t < horizon; ++t) {
        for (const auto& dev : devices) {
            if (dev.kind == DeviceKind::curtailable_res) {
                alpha_col[dev.id].push_back(alloc("alpha[" + dt(dev.id, t) + "]", 1));
                if (dev.q_capable) q_col[dev.id].push_back(alloc("q[" + dt(dev.id, t) + "]", 1));
            } else if (dev.controllable() && dev.n_input() > 0) {
                const int off = alloc("u[" + dt(dev.id, t) + "]", dev.n_input());
                for (int k = 0; k < dev.n_input(); ++k) u_col[dev.id].push_back(off + k);
            }
        }
    }

    std::map<int, DeviceCtx> ctx;
    for (const auto& dev : devices)
        if (dev.controllable()) ctx.emplace(dev.id, make_ctx(dev, horizon));

    // voltage rows
    struct PendingRow {
        std::string name;
        int stage;
        BilinearRow row;
    };
    std::vector<PendingRow> vrows;
    const int n_struct = qb.n_vars();
    const int n_kappa = options.risk_voltage_rows ? 2 * n_bus * horizon : 0;
    const int n_y0 = n_struct + n_kappa;
    prob.n_y0 = n_y0;

    for (int t = 0; t < horizon; ++t) {
        Eigen::VectorXd hp = Eigen::VectorXd::Zero(n_bus), hq = Eigen::VectorXd::Zero(n_bus);
        Eigen::MatrixXd gp = Eigen::MatrixXd::Zero(n_bus, n_xi), gq = Eigen::MatrixXd::Zero(n_bus, n_xi);
        Eigen::MatrixXd fp = Eigen::MatrixXd::Zero(n_bus, n_y0), fq = Eigen::MatrixXd::Zero(n_bus, n_y0);
        std::vector<Eigen::MatrixXd> qp_bus(static_cast<size_t>(n_bus));

        for (const auto& dev : devices) {
            if (dev.bus == 0) continue;  // slack injections do not move PQ voltages
            const int b = dev.bus - 1;
            if (dev.kind == DeviceKind::fixed_load) {
                hp(b) += dev.profile_at(t0 + t);
                if (dev.error_col >= 0) gp(b, dev.error_col) += 1.0;
                hq(b) += dev.q_profile_at(t0 + t);
                if (dev.q_error_col >= 0) gq(b, dev.q_error_col) += 1.0;
            } else if (dev.kind == DeviceKind::curtailable_res) {
                const double p_av = dev.profile_at(t0 + t);
                const int ca = alpha_col.at(dev.id)[static_cast<size_t>(t)];
                hp(b) += p_av;
                fp(b, ca) -= p_av;
                if (dev.error_col >= 0) {
                    gp(b, dev.error_col) += 1.0;
                    if (qp_bus[static_cast<size_t>(b)].size() == 0)
                        qp_bus[static_cast<size_t>(b)] = Eigen::MatrixXd::Zero(n_y0, n_xi);
                    qp_bus[static_cast<size_t>(b)](ca, dev.error_col) -= 1.0;
                }
                if (dev.q_capable) fq(b, q_col.at(dev.id)[static_cast<size_t>(t)]) += 1.0;
            } else {
                const auto& c = ctx.at(dev.id);
                hp(b) += c.sa_x0(t);
                const auto& cols = u_col.at(dev.id);
                for (int j = 0; j < c.sb.cols(); ++j)
                    fp(b, cols[static_cast<size_t>(j)]) += c.sb(t, j);
            }
        }

        for (int b = 0; b < n_bus; ++b) {
            const double base = lin.M.row(b).dot(hp) + lin.N.row(b).dot(hq) + lin.a(b);
            BilinearRow up;
            up.f = (lin.M.row(b) * fp + lin.N.row(b) * fq).transpose();
            up.g = (lin.M.row(b) * gp + lin.N.row(b) * gq).transpose();
            up.Q = Eigen::MatrixXd::Zero(n_y0, n_xi);
            for (int m = 0; m < n_bus; ++m)
                if (qp_bus[static_cast<size_t>(m)].size() != 0)
                    up.Q += lin.M(b, m) * qp_bus[static_cast<size_t>(m)];
            up.h = base - model.buses[static_cast<size_t>(b + 1)].v_max;
            up.name = "vmax[n" + std::to_string(b + 1) + ",t" + std::to_string(t) + "]";

            BilinearRow lo;
            lo.f = -up.f;
            lo.g = -up.g;
            lo.Q = -up.Q;
            lo.h = model.buses[static_cast<size_t>(b + 1)].v_min - base;
            lo.name = "vmin[n" + std::to_string(b + 1) + ",t" + std::to_string(t) + "]";

            vrows.push_back({up.name, t, std::move(up)});
            vrows.push_back({lo.name, t, std::move(lo)});
        }
    }

    if (options.risk_voltage_rows) {
        for (auto& pr : vrows) {
            const int kcol = alloc("kappa[" + pr.name + "]", 1);
            DroRowInfo info;
            info.name = pr.name;
            info.stage = pr.stage;
            info.row = pr.row;
            info.kappa_col = kcol;
            info.eps = stage_sets[static_cast<size_t>(pr.stage)].radius;
            info.xi_offset = n_xi * pr.stage;
            info.xi_len = n_xi;
            prob.risk_rows.push_back(std::move(info));
        }
        for (auto& info : prob.risk_rows) {
            const PiecewiseAffineLoss loss = cvar_pieces(info.row, risk.beta, info.kappa_col);
            info.handles = dro_epigraph(qb, loss, stage_sets[static_cast<size_t>(info.stage)],
                                        risk.rho, info.name);
        }
    } else {
        // sample-point enforcement
        for (const auto& pr : vrows) {
            const auto& samples = stage_sets[static_cast<size_t>(pr.stage)].center.samples;
            for (int i = 0; i < samples.rows(); ++i) {
                const Eigen::VectorXd xi = samples.row(i).transpose();
                const Eigen::VectorXd coefs = pr.row.f + pr.row.Q * xi;
                qb.start_ineq_row(-pr.row.h - pr.row.g.dot(xi));
                for (int j = 0; j < coefs.size(); ++j) qb.coeff(j, coefs(j));
            }
        }
    }

    // device rows: deterministic (no uncertainty enters device dynamics here)
    for (const auto& dev : devices) {
        if (dev.n_input() == 0) continue;
        if (!ctx.count(dev.id)) ctx.emplace(dev.id, make_ctx(dev, horizon));
        const auto& c = ctx.at(dev.id);
        const ConstraintBlock block = local_constraint_block(dev, horizon, n_xi);
        const auto& flat = dev.kind == DeviceKind::curtailable_res ? alpha_col.at(dev.id)
                                                                   : u_col.at(dev.id);
        for (const auto& row : local_constraint_rows(dev, c.st, block)) {
            qb.start_ineq_row(-row.b0);
            for (int j = 0; j < row.m.size(); ++j) qb.coeff(flat[static_cast<size_t>(j)], row.m(j));
        }
        if (dev.q_capable) {
            for (int t = 0; t < horizon; ++t) {
                const int cq = q_col.at(dev.id)[static_cast<size_t>(t)];
                qb.start_ineq_row(dev.q_max);
                qb.coeff(cq, 1.0);
                qb.start_ineq_row(-dev.q_min);
                qb.coeff(cq, -1.0);
            }
        }
    }

    // operating cost (deterministic here: no uncertainty in device states)
    for (const auto& dev : devices) {
        if (dev.n_input() == 0) continue;
        const auto& c = ctx.at(dev.id);
        const InputCost ic = input_space_cost(dev, costs.of(dev.id), c.st, horizon);
        const auto& flat = dev.kind == DeviceKind::curtailable_res ? alpha_col.at(dev.id)
                                                                   : u_col.at(dev.id);
        emit_quadratic(qb, flat, ic);
        prob.cost_offset += ic.offset;
        if (dev.q_capable) {
            for (int t = 0; t < horizon; ++t) {
                const int cq = q_col.at(dev.id)[static_cast<size_t>(t)];
                qb.obj_linear(cq, dev.q_cost_lin);
                qb.obj_quad(cq, cq, dev.q_cost_quad / 2.0);
            }
        }
    }

    prob.qp = qb.build();
    prob.var_manifest = qb.vars();
    return prob;
}

AssembledProblem assemble_transmission(const NetworkModel& model,
                                       const std::vector<DeviceModel>& devices,
                                       const std::vector<AmbiguitySet>& stage_sets,
                                       const RiskConfig& risk, const CostSpec& costs,
                                       const DrOptions& options, int horizon, int t0) {
    risk.validate();
    costs.validate();
    if (horizon < 1) throw ValidationError("assemble: horizon must be >= 1");
    const int n_xi = stage_sets.empty() ? 0 : stage_sets[0].center.dim();
    check_sets(stage_sets, horizon, n_xi);
    const int n_lines = model.n_lines();
    const Eigen::MatrixXd flow_map = dc_flow_map(model);  // 2L x N

    std::vector<const DeviceModel*> ctl, unc;
    for (const auto& dev : devices) {
        if (dev.controllable() && dev.n_input() > 0)
            ctl.push_back(&dev);
        else
            unc.push_back(&dev);
        if (dev.error_col >= n_xi || dev.q_error_col >= n_xi)
            throw ValidationError("assemble: device " + std::to_string(dev.id) +
                                  " error column exceeds the dataset width");
    }
    if (ctl.empty())
        throw ValidationError(
            "assemble: transmission formulation needs at least one controllable device "
            "(power balance is unsatisfiable otherwise)");

    AssembledProblem prob;
    prob.horizon = horizon;
    prob.n_xi = n_xi;
    prob.rho = risk.rho;
    prob.beta = risk.beta;

    QpBuilder qb;
    auto alloc = [&](const std::string& name, int size) {
        prob.layout.add(name, size);
        return qb.add_var(name, size);
    };

    const bool recourse = !options.force_open_loop;
    // e and causal D blocks, stage-major then device order
    std::map<int, std::vector<int>> e_col;                       // id -> column per (t, k) flat
    std::map<int, std::map<std::pair<int, int>, int>> d_block;   // id -> (t, tc) -> offset
    for (int t = 0; t < horizon; ++t) {
        for (const auto* dev : ctl) {
            const int m = dev->n_input();
            const int off = alloc("e[" + dt(dev->id, t) + "]", m);
            for (int k = 0; k < m; ++k) e_col[dev->id].push_back(off + k);
            if (recourse) {
                for (int tc = 0; tc <= t; ++tc)
                    d_block[dev->id][{t, tc}] =
                        alloc("D[" + dt(dev->id, t) + ",c" + std::to_string(tc) + "]", m * n_xi);
            }
        }
    }
    // column of D_d entry (input row r, xi column c); -1 when structurally zero
    auto d_col = [&](int id, int m, int r, int c) -> int {
        if (!recourse) return -1;
        const int tr = r / m, tc = c / n_xi;
        if (tc > tr) return -1;
        const auto& blocks = d_block.at(id);
        const auto it = blocks.find({tr, tc});
        if (it == blocks.end()) return -1;
        return it->second + (r % m) * n_xi + (c % n_xi);
    };

    std::map<int, DeviceCtx> ctx;
    for (const auto* dev : ctl) ctx.emplace(dev->id, make_ctx(*dev, horizon));

    // line-flow rows at each stage, both orientations
    struct PendingRow {
        std::string name;
        int stage;
        BilinearRow row;
    };
    std::vector<PendingRow> lrows;
    const int n_struct = qb.n_vars();
    const int n_sigma = (options.risk_line_rows ? 2 * n_lines * horizon : 0) +
                        (options.risk_device_rows ? [&] {
                            int cnt = 0;
                            for (const auto* dev : ctl) {
                                const ConstraintBlock blk =
                                    local_constraint_block(*dev, horizon, n_xi);
                                cnt += static_cast<int>(blk.w.size());
                            }
                            return cnt;
                        }() : 0);
    const int n_y0 = n_struct + n_sigma;
    prob.n_y0 = n_y0;

    auto gamma = [&](int l2, int bus) -> double {
        if (bus == 0) return 0.0;  // slack column of the PTDF map is zero
        return flow_map(l2, bus - 1);
    };

    for (int t = 0; t < horizon; ++t) {
        for (int l2 = 0; l2 < 2 * n_lines; ++l2) {
            BilinearRow row;
            row.f = Eigen::VectorXd::Zero(n_y0);
            row.g = Eigen::VectorXd::Zero(n_xi * (t + 1));
            row.Q = Eigen::MatrixXd::Zero(n_y0, n_xi * (t + 1));
            row.h = -model.lines[static_cast<size_t>(l2 % n_lines)].flow_limit;
            for (const auto* dev : unc) {
                const double g = gamma(l2, dev->bus);
                if (g == 0.0) continue;
                row.h += g * dev->profile_at(t0 + t);
                if (dev->error_col >= 0) row.g(n_xi * t + dev->error_col) += g;
            }
            for (const auto* dev : ctl) {
                const double g = gamma(l2, dev->bus);
                if (g == 0.0) continue;
                const auto& c = ctx.at(dev->id);
                row.h += g * c.sa_x0(t);
                const int m = dev->n_input();
                const auto& ecols = e_col.at(dev->id);
                for (int r = 0; r < m * horizon; ++r) {
                    const double w = c.sb(t, r);
                    if (w == 0.0) continue;
                    row.f(ecols[static_cast<size_t>(r)]) += g * w;
                    if (recourse) {
                        for (int cxi = 0; cxi < n_xi * (t + 1); ++cxi) {
                            const int col = d_col(dev->id, m, r, cxi);
                            if (col >= 0) row.Q(col, cxi) += g * w;
                        }
                    }
                }
            }
            row.name = "flow[l" + std::to_string(l2) + ",t" + std::to_string(t) + "]";
            lrows.push_back({row.name, t, std::move(row)});
        }
    }

    // per-stage power balance in the nominal schedules
    for (int t = 0; t < horizon; ++t) {
        double rhs = 0.0;
        for (const auto* dev : unc) rhs -= dev->profile_at(t0 + t);
        for (const auto* dev : ctl) rhs -= ctx.at(dev->id).sa_x0(t);
        qb.start_eq_row(rhs);
        for (const auto* dev : ctl) {
            const auto& c = ctx.at(dev->id);
            const auto& ecols = e_col.at(dev->id);
            for (int r = 0; r < c.sb.cols(); ++r)
                qb.coeff(ecols[static_cast<size_t>(r)], c.sb(t, r));
        }
    }
    // blockwise zero of the error response (causal blocks only)
    if (recourse) {
        for (int t = 0; t < horizon; ++t) {
            for (int cxi = 0; cxi < n_xi * (t + 1); ++cxi) {
                double rhs = 0.0;
                const int tc = cxi / n_xi;
                const int j = cxi % n_xi;
                if (tc == t)
                    for (const auto* dev : unc)
                        if (dev->error_col == j) rhs -= 1.0;
                qb.start_eq_row(rhs);
                for (const auto* dev : ctl) {
                    const auto& c = ctx.at(dev->id);
                    const int m = dev->n_input();
                    for (int r = 0; r < m * horizon; ++r) {
                        const double w = c.sb(t, r);
                        if (w == 0.0) continue;
                        const int col = d_col(dev->id, m, r, cxi);
                        if (col >= 0) qb.coeff(col, w);
                    }
                }
            }
        }
    }

    // line rows through the worst-case CVaR machinery (or sample points)
    if (options.risk_line_rows) {
        for (auto& pr : lrows) {
            const int kcol = alloc("sigma[" + pr.name + "]", 1);
            DroRowInfo info;
            info.name = pr.name;
            info.stage = pr.stage;
            info.row = pr.row;
            info.kappa_col = kcol;
            info.eps = stage_sets[static_cast<size_t>(pr.stage)].radius;
            info.xi_offset = 0;
            info.xi_len = n_xi * (pr.stage + 1);
            prob.risk_rows.push_back(std::move(info));
        }
        for (auto& info : prob.risk_rows) {
            const AmbiguitySet amb = stacked_ambiguity(stage_sets, info.stage);
            const PiecewiseAffineLoss loss = cvar_pieces(info.row, risk.beta, info.kappa_col);
            info.handles = dro_epigraph(qb, loss, amb, risk.rho, info.name);
        }
    } else {
        const AmbiguitySet amb = stacked_ambiguity(stage_sets, horizon - 1);
        for (const auto& pr : lrows) {
            for (int i = 0; i < amb.center.n_samples(); ++i) {
                const Eigen::VectorXd xi =
                    amb.center.samples.row(i).head(pr.row.g.size()).transpose();
                const Eigen::VectorXd coefs = pr.row.f + pr.row.Q * xi;
                qb.start_ineq_row(-pr.row.h - pr.row.g.dot(xi));
                for (int j = 0; j < coefs.size(); ++j) qb.coeff(j, coefs(j));
            }
        }
    }

    // device rows: sample-point enforcement by default, CVaR when requested
    const AmbiguitySet full_amb = stacked_ambiguity(stage_sets, horizon - 1);
    for (const auto* dev : ctl) {
        const auto& c = ctx.at(dev->id);
        const ConstraintBlock block = local_constraint_block(*dev, horizon, n_xi);
        const auto rows = local_constraint_rows(*dev, c.st, block);
        const auto& ecols = e_col.at(dev->id);
        const int m = dev->n_input();
        int rix = 0;
        for (const auto& lr : rows) {
            if (options.risk_device_rows) {
                BilinearRow br;
                br.f = Eigen::VectorXd::Zero(n_y0);
                br.g = lr.z;
                br.Q = Eigen::MatrixXd::Zero(n_y0, n_xi * horizon);
                br.h = lr.b0;
                for (int r = 0; r < m * horizon; ++r) {
                    if (lr.m(r) == 0.0) continue;
                    br.f(ecols[static_cast<size_t>(r)]) += lr.m(r);
                    for (int cxi = 0; cxi < n_xi * horizon; ++cxi) {
                        const int col = d_col(dev->id, m, r, cxi);
                        if (col >= 0) br.Q(col, cxi) += lr.m(r);
                    }
                }
                br.name = "dev[d" + std::to_string(dev->id) + ",r" + std::to_string(rix) + "]";
                const int kcol = alloc("sigma[" + br.name + "]", 1);
                DroRowInfo info;
                info.name = br.name;
                info.stage = horizon - 1;
                info.row = br;
                info.kappa_col = kcol;
                info.eps = full_amb.radius;
                info.xi_offset = 0;
                info.xi_len = n_xi * horizon;
                const PiecewiseAffineLoss loss = cvar_pieces(br, risk.beta, kcol);
                info.handles = dro_epigraph(qb, loss, full_amb, risk.rho, br.name);
                prob.risk_rows.push_back(std::move(info));
            } else if (recourse) {
                for (int i = 0; i < full_amb.center.n_samples(); ++i) {
                    const Eigen::VectorXd xi = full_amb.center.samples.row(i).transpose();
                    qb.start_ineq_row(-lr.b0 - lr.z.dot(xi));
                    for (int r = 0; r < m * horizon; ++r) {
                        if (lr.m(r) == 0.0) continue;
                        qb.coeff(ecols[static_cast<size_t>(r)], lr.m(r));
                        for (int cxi = 0; cxi < n_xi * horizon; ++cxi) {
                            const int col = d_col(dev->id, m, r, cxi);
                            if (col >= 0) qb.coeff(col, lr.m(r) * xi(cxi));
                        }
                    }
                }
            } else {
                qb.start_ineq_row(-lr.b0);
                for (int r = 0; r < m * horizon; ++r)
                    qb.coeff(ecols[static_cast<size_t>(r)], lr.m(r));
            }
            ++rix;
        }
    }

    // expected cost through the empirical first and second moments
    const Eigen::MatrixXd& stacked = full_amb.center.samples;
    const int dim_xi = n_xi * horizon;
    const Eigen::VectorXd mu = stacked.colwise().mean().transpose();
    const Eigen::MatrixXd second =
        (stacked.transpose() * stacked) / static_cast<double>(stacked.rows());
    for (const auto* dev : ctl) {
        const auto& c = ctx.at(dev->id);
        const InputCost ic = input_space_cost(*dev, costs.of(dev->id), c.st, horizon);
        const auto& ecols = e_col.at(dev->id);
        const int m = dev->n_input();
        const int mh = m * horizon;
        prob.cost_offset += ic.offset;
        // linear: f'(D mu + e)
        for (int r = 0; r < mh; ++r) {
            qb.obj_linear(ecols[static_cast<size_t>(r)], ic.f(r));
            if (recourse)
                for (int cxi = 0; cxi < dim_xi; ++cxi) {
                    const int col = d_col(dev->id, m, r, cxi);
                    if (col >= 0) qb.obj_linear(col, ic.f(r) * mu(cxi));
                }
        }
        // quadratic: E[(D xi + e)' H (D xi + e)] / 2
        for (int r = 0; r < mh; ++r) {
            for (int r2 = r; r2 < mh; ++r2) {
                const double hvv = ic.H(r, r2);
                if (hvv == 0.0) continue;
                qb.obj_quad(ecols[static_cast<size_t>(r)], ecols[static_cast<size_t>(r2)],
                            r == r2 ? hvv / 2.0 : hvv);
            }
        }
        if (recourse) {
            for (int r = 0; r < mh; ++r) {
                for (int r2 = 0; r2 < mh; ++r2) {
                    const double hvv = ic.H(r, r2);
                    if (hvv == 0.0) continue;
                    // e_r x D(r2, c) cross terms
                    for (int cxi = 0; cxi < dim_xi; ++cxi) {
                        const int col = d_col(dev->id, m, r2, cxi);
                        if (col >= 0)
                            qb.obj_quad(ecols[static_cast<size_t>(r)], col, hvv * mu(cxi));
                    }
                }
            }
            // D' H D second-moment terms
            std::vector<std::pair<int, std::pair<int, int>>> dcols;  // col, (r, c)
            for (int r = 0; r < mh; ++r)
                for (int cxi = 0; cxi < dim_xi; ++cxi) {
                    const int col = d_col(dev->id, m, r, cxi);
                    if (col >= 0) dcols.push_back({col, {r, cxi}});
                }
            for (size_t i = 0; i < dcols.size(); ++i) {
                for (size_t j = i; j < dcols.size(); ++j) {
                    const auto& [ci, rc1] = dcols[i];
                    const auto& [cj, rc2] = dcols[j];
                    const double v = ic.H(rc1.first, rc2.first) * second(rc1.second, rc2.second);
                    if (v == 0.0) continue;
                    qb.obj_quad(ci, cj, i == j ? v / 2.0 : v);
                }
            }
        }
    }

    prob.qp = qb.build();
    prob.var_manifest = qb.vars();
    return prob;
}

DecodedSolution decode_solution(const SolverResult& result, const AssembledProblem& prob,
                                const std::vector<DeviceModel>& devices) {
    if (result.status == SolveStatus::infeasible || result.status == SolveStatus::unbounded) {
        std::vector<double> cert(result.certificate.data(),
                                 result.certificate.data() + result.certificate.size());
        throw InfeasibleError(std::string("decode: solver reported ") + to_string(result.status),
                              cert, result.status == SolveStatus::unbounded);
    }

    DecodedSolution dec;
    dec.status = result.status;
    dec.y = result.y;
    dec.objective = result.objective + prob.cost_offset;

    for (const auto& info : prob.risk_rows) {
        double share = result.y.segment(info.handles.s_col, info.handles.n_s).mean();
        if (info.handles.lambda_col >= 0) share += info.eps * result.y(info.handles.lambda_col);
        dec.risk_share[info.name] = share;
        dec.risk_total += share;
    }
    dec.cost_term = dec.objective - dec.risk_total;

    const int horizon = prob.horizon;
    for (const auto& dev : devices) {
        if (dev.kind == DeviceKind::curtailable_res &&
            prob.layout.has("alpha[" + dt(dev.id, 0) + "]")) {
            Eigen::VectorXd a(horizon);
            for (int t = 0; t < horizon; ++t)
                a(t) = result.y(prob.layout.offset_of("alpha[" + dt(dev.id, t) + "]"));
            dec.alpha[dev.id] = a;
            if (dev.q_capable) {
                Eigen::VectorXd qv(horizon);
                for (int t = 0; t < horizon; ++t)
                    qv(t) = result.y(prob.layout.offset_of("q[" + dt(dev.id, t) + "]"));
                dec.q[dev.id] = qv;
            }
        } else if (dev.controllable() && dev.n_input() > 0) {
            const int m = dev.n_input();
            const bool trans = prob.layout.has("e[" + dt(dev.id, 0) + "]");
            const std::string fam = trans ? "e[" : "u[";
            if (!prob.layout.has(fam + dt(dev.id, 0) + "]")) continue;
            Eigen::VectorXd u(m * horizon);
            for (int t = 0; t < horizon; ++t) {
                const int off = prob.layout.offset_of(fam + dt(dev.id, t) + "]");
                u.segment(m * t, m) = result.y.segment(off, m);
            }
            dec.u[dev.id] = u;
            if (trans) {
                AffinePolicy pol;
                pol.e = u;
                pol.D = Eigen::MatrixXd::Zero(m * horizon, prob.n_xi * horizon);
                for (int t = 0; t < horizon; ++t) {
                    for (int tc = 0; tc <= t; ++tc) {
                        const std::string name =
                            "D[" + dt(dev.id, t) + ",c" + std::to_string(tc) + "]";
                        if (!prob.layout.has(name)) continue;
                        const int off = prob.layout.offset_of(name);
                        for (int k = 0; k < m; ++k)
                            for (int j = 0; j < prob.n_xi; ++j)
                                pol.D(m * t + k, prob.n_xi * tc + j) =
                                    result.y(off + k * prob.n_xi + j);
                    }
                }
                dec.policies[dev.id] = pol;
            }
        }
    }
    return dec;
}

double DecodedSolution::value(const AssembledProblem& prob, const std::string& name) const {
    return y(prob.layout.offset_of(name));
}

std::vector<double> evaluate_risk_rows(const AssembledProblem& prob, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& xi_stacked) {
    if (xi_stacked.size() != prob.n_xi * prob.horizon)
        throw ValidationError("evaluate_risk_rows: expected a full stacked horizon error");
    const Eigen::VectorXd y0 = y.head(prob.n_y0);
    std::vector<double> out;
    out.reserve(prob.risk_rows.size());
    for (const auto& info : prob.risk_rows) {
        const Eigen::VectorXd slice = xi_stacked.segment(info.xi_offset, info.xi_len);
        out.push_back(info.row.eval(y0, slice));
    }
    return out;
}

}  // namespace dropf
