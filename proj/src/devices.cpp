#include "dropf/devices.hpp"

#include <cmath>
#include <limits>

#include "dropf/errors.hpp"

namespace dropf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double at_or_broadcast(const std::vector<double>& v, int t, int id) {
    if (v.empty()) return 0.0;
    if (v.size() == 1) return v[0];
    if (t < 0 || t >= static_cast<int>(v.size()))
        throw ValidationError("device " + std::to_string(id) + ": profile has no stage " +
                              std::to_string(t));
    return v[static_cast<size_t>(t)];
}

}  // namespace

double DeviceModel::profile_at(int t) const { return at_or_broadcast(profile, t, id); }
double DeviceModel::q_profile_at(int t) const { return at_or_broadcast(q_profile, t, id); }

DeviceModel make_device(const DeviceSpec& spec) {
    DeviceModel dev;
    dev.id = spec.id;
    dev.bus = spec.bus;
    dev.kind = spec.kind;
    dev.error_col = spec.error_col;
    dev.q_error_col = spec.q_error_col;
    dev.profile = spec.profile;
    dev.q_profile = spec.q_profile;
    dev.q_capable = spec.q_capable;
    dev.q_min = spec.q_min;
    dev.q_max = spec.q_max;
    dev.q_cost_lin = spec.q_cost_lin;
    dev.q_cost_quad = spec.q_cost_quad;

    switch (spec.kind) {
        case DeviceKind::generator:
            // integrator: state = injection, input = ramp move
            dev.A = Eigen::MatrixXd::Ones(1, 1);
            dev.B = Eigen::MatrixXd::Ones(1, 1);
            dev.x0 = Eigen::VectorXd::Constant(1, spec.p0);
            dev.bounds.push_back({true, 0, spec.p_min, spec.p_max});
            dev.bounds.push_back({false, 0, -spec.ramp, spec.ramp});
            dev.f_x = Eigen::VectorXd::Constant(1, spec.cost_lin);
            dev.H_x = Eigen::MatrixXd::Constant(1, 1, spec.cost_quad);
            dev.f_u = Eigen::VectorXd::Zero(1);
            dev.H_u = Eigen::MatrixXd::Zero(1, 1);
            break;
        case DeviceKind::battery: {
            // state = [injection; soc], input = power setpoint
            dev.A = Eigen::MatrixXd::Zero(2, 2);
            dev.A(1, 1) = spec.leakage;
            dev.B = Eigen::MatrixXd::Zero(2, 1);
            dev.B(0, 0) = 1.0;
            dev.B(1, 0) = -1.0;
            dev.x0 = Eigen::VectorXd::Zero(2);
            dev.x0(0) = spec.p0;
            dev.x0(1) = spec.soc0;
            dev.bounds.push_back({true, 1, spec.soc_min, spec.soc_max});
            dev.bounds.push_back({false, 0, spec.p_min, spec.p_max});
            dev.f_x = Eigen::VectorXd::Zero(2);
            dev.H_x = Eigen::MatrixXd::Zero(2, 2);
            dev.f_u = Eigen::VectorXd::Constant(1, spec.cost_lin);
            dev.H_u = Eigen::MatrixXd::Constant(1, 1, spec.cost_quad);
            break;
        }
        case DeviceKind::curtailable_res:
            // state tracks the applied curtailment fraction; injection is
            // (1 - alpha)(forecast + error), assembled at the network level
            dev.A = Eigen::MatrixXd::Zero(1, 1);
            dev.B = Eigen::MatrixXd::Ones(1, 1);
            dev.x0 = Eigen::VectorXd::Zero(1);
            dev.bounds.push_back({false, 0, 0.0, 1.0});
            dev.f_x = Eigen::VectorXd::Zero(1);
            dev.H_x = Eigen::MatrixXd::Zero(1, 1);
            dev.f_u = Eigen::VectorXd::Constant(1, spec.curtail_cost_lin);
            dev.H_u = Eigen::MatrixXd::Constant(1, 1, spec.curtail_cost_quad);
            break;
        case DeviceKind::fixed_load:
            dev.A = Eigen::MatrixXd::Ones(1, 1);
            dev.B = Eigen::MatrixXd::Zero(1, 0);
            dev.x0 = Eigen::VectorXd::Constant(1, spec.profile.empty() ? 0.0 : spec.profile[0]);
            dev.f_x = Eigen::VectorXd::Zero(1);
            dev.H_x = Eigen::MatrixXd::Zero(1, 1);
            dev.f_u = Eigen::VectorXd::Zero(0);
            dev.H_u = Eigen::MatrixXd::Zero(0, 0);
            break;
    }
    return dev;
}

std::vector<DeviceModel> make_devices(const NetworkModel& model) {
    std::vector<DeviceModel> out;
    out.reserve(model.devices.size());
    for (const auto& spec : model.devices) out.push_back(make_device(spec));
    return out;
}

StackedDynamics stack_dynamics(const DeviceModel& dev, int horizon) {
    if (horizon < 1) throw ValidationError("stack_dynamics: horizon must be >= 1");
    const int n = dev.n_state();
    const int m = dev.n_input();
    StackedDynamics st;
    st.A = Eigen::MatrixXd::Zero(n * horizon, n);
    st.B = Eigen::MatrixXd::Zero(n * horizon, m * horizon);

    Eigen::MatrixXd a_pow = dev.A;  // A^(t+1) for block row t
    for (int t = 0; t < horizon; ++t) {
        st.A.block(n * t, 0, n, n) = a_pow;
        a_pow = dev.A * a_pow;
    }
    // block (i, j) = A^(i-j) B for i >= j
    for (int j = 0; j < horizon; ++j) {
        Eigen::MatrixXd piece = dev.B;
        for (int i = j; i < horizon; ++i) {
            st.B.block(n * i, m * j, n, m) = piece;
            piece = dev.A * piece;
        }
    }
    return st;
}

bool check_causality(const Eigen::MatrixXd& D, int m_input, int n_xi, int horizon) {
    if (D.rows() != m_input * horizon || D.cols() != n_xi * horizon)
        throw ValidationError("check_causality: dimension mismatch");
    for (int tr = 0; tr < horizon; ++tr) {
        for (int tc = tr + 1; tc < horizon; ++tc) {
            if (!D.block(m_input * tr, n_xi * tc, m_input, n_xi).isZero(0.0)) return false;
        }
    }
    return true;
}

Eigen::VectorXd apply_policy(const DeviceModel& dev, const AffinePolicy& pol,
                             const Eigen::VectorXd& xi) {
    const int m = dev.n_input();
    if (m == 0) throw ValidationError("apply_policy: device has no inputs");
    if (pol.D.rows() != pol.e.size() || pol.e.size() % m != 0)
        throw ValidationError("apply_policy: policy dimension mismatch");
    const int horizon = static_cast<int>(pol.e.size()) / m;
    if (pol.D.cols() != xi.size() || xi.size() % horizon != 0)
        throw ValidationError("apply_policy: disturbance dimension mismatch");
    const int n_xi = static_cast<int>(xi.size()) / horizon;
    if (!check_causality(pol.D, m, n_xi, horizon))
        throw ValidationError("apply_policy: acausal policy");
    const StackedDynamics st = stack_dynamics(dev, horizon);
    return st.A * dev.x0 + st.B * (pol.D * xi + pol.e);
}

ConstraintBlock local_constraint_block(const DeviceModel& dev, int horizon, int n_xi_total) {
    const int n = dev.n_state();
    const int m = dev.n_input();
    std::vector<Eigen::RowVectorXd> t_rows, u_rows;
    std::vector<double> rhs;

    auto push = [&](bool on_state, int comp, int stage, double coef, double bound) {
        if (!std::isfinite(bound)) return;  // vacuous row
        Eigen::RowVectorXd tr = Eigen::RowVectorXd::Zero(n * horizon);
        Eigen::RowVectorXd ur = Eigen::RowVectorXd::Zero(m * horizon);
        if (on_state)
            tr(n * stage + comp) = coef;
        else
            ur(m * stage + comp) = coef;
        t_rows.push_back(tr);
        u_rows.push_back(ur);
        rhs.push_back(bound);
    };

    for (int t = 0; t < horizon; ++t) {
        for (const auto& b : dev.bounds) {
            push(b.on_state, b.index, t, 1.0, b.hi);
            push(b.on_state, b.index, t, -1.0, -b.lo);
        }
    }

    ConstraintBlock block;
    const int rows = static_cast<int>(rhs.size());
    block.T = Eigen::MatrixXd::Zero(rows, n * horizon);
    block.U = Eigen::MatrixXd::Zero(rows, m * horizon);
    block.Z = Eigen::MatrixXd::Zero(rows, n_xi_total * horizon);
    block.w = Eigen::VectorXd::Zero(rows);
    for (int r = 0; r < rows; ++r) {
        block.T.row(r) = t_rows[static_cast<size_t>(r)];
        block.U.row(r) = u_rows[static_cast<size_t>(r)];
        block.w(r) = rhs[static_cast<size_t>(r)];
    }
    return block;
}

std::vector<LocalRow> local_constraint_rows(const DeviceModel& dev, const StackedDynamics& stacked,
                                            const ConstraintBlock& block) {
    const Eigen::MatrixXd tb_u = block.T * stacked.B + block.U;
    const Eigen::VectorXd base = block.T * (stacked.A * dev.x0) - block.w;
    std::vector<LocalRow> rows;
    rows.reserve(static_cast<size_t>(block.w.size()));
    for (int r = 0; r < block.w.size(); ++r) {
        if (block.w(r) == kInf) continue;
        LocalRow row;
        row.m = tb_u.row(r).transpose();
        row.z = block.Z.row(r).transpose();
        row.b0 = base(r);
        rows.push_back(std::move(row));
    }
    return rows;
}

double eval_local_row(const LocalRow& row, const AffinePolicy& pol, const Eigen::VectorXd& xi) {
    return row.m.dot(pol.D * xi + pol.e) + row.z.dot(xi) + row.b0;
}

}  // namespace dropf
