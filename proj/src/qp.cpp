#include "dropf/qp.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "dropf/errors.hpp"

namespace dropf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::unbounded: return "unbounded";
        case SolveStatus::max_iter: return "max_iter";
    }
    return "?";
}

void QuadraticProgram::validate() const {
    if (P.rows() != n || P.cols() != n || c.size() != n)
        throw ValidationError("qp: objective dimension mismatch");
    if (A_eq.cols() != n && A_eq.rows() > 0) throw ValidationError("qp: A_eq dimension mismatch");
    if (A_in.cols() != n && A_in.rows() > 0) throw ValidationError("qp: A_in dimension mismatch");
    if (A_eq.rows() != b_eq.size() || A_in.rows() != b_in.size())
        throw ValidationError("qp: rhs dimension mismatch");
    if (lb.size() != 0 && lb.size() != n) throw ValidationError("qp: lb dimension mismatch");
    if (ub.size() != 0 && ub.size() != n) throw ValidationError("qp: ub dimension mismatch");

    for (int k = 0; k < P.outerSize(); ++k) {
        for (SparseMat::InnerIterator it(P, k); it; ++it) {
            if (!std::isfinite(it.value())) throw ValidationError("qp: non-finite entry in P");
            if (std::abs(it.value() - P.coeff(it.col(), it.row())) >
                1e-12 * std::max(1.0, std::abs(it.value())))
                throw ValidationError("qp: P is not symmetric");
        }
    }
    if (!c.allFinite()) throw ValidationError("qp: non-finite entry in c");

    // PSD check on the principal submatrix of columns that actually appear in P
    std::vector<int> active;
    std::vector<char> seen(static_cast<size_t>(n), 0);
    for (int k = 0; k < P.outerSize(); ++k)
        for (SparseMat::InnerIterator it(P, k); it; ++it) {
            if (!seen[static_cast<size_t>(it.row())]) {
                seen[static_cast<size_t>(it.row())] = 1;
                active.push_back(static_cast<int>(it.row()));
            }
        }
    std::sort(active.begin(), active.end());
    const int na = static_cast<int>(active.size());
    if (na > 0 && na <= 600) {
        Eigen::MatrixXd sub(na, na);
        for (int i = 0; i < na; ++i)
            for (int j = 0; j < na; ++j) sub(i, j) = P.coeff(active[static_cast<size_t>(i)],
                                                             active[static_cast<size_t>(j)]);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub, Eigen::EigenvaluesOnly);
        const double scale = std::max(1.0, sub.cwiseAbs().maxCoeff());
        if (es.eigenvalues().minCoeff() < -1e-8 * scale)
            throw ValidationError("qp: P is not positive semidefinite (min eigenvalue " +
                                  std::to_string(es.eigenvalues().minCoeff()) + ")");
    } else if (na > 600) {
        // large case: a Cholesky attempt on the shifted submatrix
        Eigen::MatrixXd sub(na, na);
        for (int i = 0; i < na; ++i)
            for (int j = 0; j < na; ++j) sub(i, j) = P.coeff(active[static_cast<size_t>(i)],
                                                             active[static_cast<size_t>(j)]);
        const double scale = std::max(1.0, sub.cwiseAbs().maxCoeff());
        sub.diagonal().array() += 1e-8 * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(sub);
        if (llt.info() != Eigen::Success)
            throw ValidationError("qp: P failed the positive semidefiniteness check");
    }
}

namespace {

struct Stacked {
    SparseMat A;  // m x n
    Eigen::VectorXd l, u;
    int m_eq = 0, m_in = 0, m_b = 0;
    std::vector<int> bound_vars;  // variable index per box row
};

Stacked stack_constraints(const QuadraticProgram& qp) {
    Stacked s;
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<double> lo, hi;
    int row = 0;
    for (int k = 0; k < qp.A_eq.outerSize(); ++k)
        for (SparseMat::InnerIterator it(qp.A_eq, k); it; ++it)
            trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < qp.A_eq.rows(); ++i) {
        lo.push_back(qp.b_eq(i));
        hi.push_back(qp.b_eq(i));
    }
    row = static_cast<int>(qp.A_eq.rows());
    s.m_eq = row;
    for (int k = 0; k < qp.A_in.outerSize(); ++k)
        for (SparseMat::InnerIterator it(qp.A_in, k); it; ++it)
            trip.emplace_back(row + static_cast<int>(it.row()), static_cast<int>(it.col()),
                              it.value());
    for (int i = 0; i < qp.A_in.rows(); ++i) {
        lo.push_back(-kInf);
        hi.push_back(qp.b_in(i));
    }
    row += static_cast<int>(qp.A_in.rows());
    s.m_in = static_cast<int>(qp.A_in.rows());
    const bool has_lb = qp.lb.size() == qp.n;
    const bool has_ub = qp.ub.size() == qp.n;
    if (has_lb || has_ub) {
        for (int j = 0; j < qp.n; ++j) {
            const double lj = has_lb ? qp.lb(j) : -kInf;
            const double uj = has_ub ? qp.ub(j) : kInf;
            if (std::isfinite(lj) || std::isfinite(uj)) {
                trip.emplace_back(row, j, 1.0);
                lo.push_back(lj);
                hi.push_back(uj);
                s.bound_vars.push_back(j);
                ++row;
            }
        }
    }
    s.m_b = static_cast<int>(s.bound_vars.size());
    s.A.resize(row, qp.n);
    s.A.setFromTriplets(trip.begin(), trip.end());
    s.l = Eigen::Map<Eigen::VectorXd>(lo.data(), row);
    s.u = Eigen::Map<Eigen::VectorXd>(hi.data(), row);
    return s;
}

// modified Ruiz equilibration of [[P, A'],[A, 0]] plus cost normalization
struct Scaling {
    Eigen::VectorXd d;  // variable scaling
    Eigen::VectorXd e;  // row scaling
    double gamma = 1.0;
};

Scaling ruiz_equilibrate(SparseMat& P, Eigen::VectorXd& q, SparseMat& A) {
    const int n = static_cast<int>(P.rows());
    const int m = static_cast<int>(A.rows());
    Scaling sc;
    sc.d = Eigen::VectorXd::Ones(n);
    sc.e = Eigen::VectorXd::Ones(m);
    for (int sweep = 0; sweep < 10; ++sweep) {
        Eigen::VectorXd col_norm = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd row_norm = Eigen::VectorXd::Zero(m);
        for (int k = 0; k < P.outerSize(); ++k)
            for (SparseMat::InnerIterator it(P, k); it; ++it)
                col_norm(it.col()) = std::max(col_norm(it.col()), std::abs(it.value()));
        for (int k = 0; k < A.outerSize(); ++k)
            for (SparseMat::InnerIterator it(A, k); it; ++it) {
                col_norm(it.col()) = std::max(col_norm(it.col()), std::abs(it.value()));
                row_norm(it.row()) = std::max(row_norm(it.row()), std::abs(it.value()));
            }
        Eigen::VectorXd dx(n), dy(m);
        for (int j = 0; j < n; ++j) dx(j) = col_norm(j) > 1e-12 ? 1.0 / std::sqrt(col_norm(j)) : 1.0;
        for (int i = 0; i < m; ++i) dy(i) = row_norm(i) > 1e-12 ? 1.0 / std::sqrt(row_norm(i)) : 1.0;
        P = dx.asDiagonal() * P * dx.asDiagonal();
        A = dy.asDiagonal() * A * dx.asDiagonal();
        q = dx.asDiagonal() * q;
        sc.d = sc.d.cwiseProduct(dx);
        sc.e = sc.e.cwiseProduct(dy);

        // cost normalization
        Eigen::VectorXd p_col = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < P.outerSize(); ++k)
            for (SparseMat::InnerIterator it(P, k); it; ++it)
                p_col(it.col()) = std::max(p_col(it.col()), std::abs(it.value()));
        const double mean_p = n > 0 ? p_col.mean() : 0.0;
        const double denom = std::max(mean_p, q.lpNorm<Eigen::Infinity>());
        const double g = denom < 1e-12 ? 1.0 : std::min(std::max(1.0 / denom, 1e-4), 1e4);
        P *= g;
        q *= g;
        sc.gamma *= g;
    }
    return sc;
}

double inf_norm(const Eigen::VectorXd& v) {
    return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

struct PolishOutcome {
    bool accepted = false;
    Eigen::VectorXd x, y;
    double r_prim = 0.0, r_dual = 0.0;
};

PolishOutcome polish_solution(const SparseMat& P, const Eigen::VectorXd& q, const Stacked& st,
                              const Eigen::VectorXd& y_admm, const Eigen::VectorXd& z_admm,
                              double dual_thr, double slack_thr) {
    const int n = static_cast<int>(P.rows());
    const int m = static_cast<int>(st.A.rows());
    const double thr = dual_thr * std::max(1.0, inf_norm(y_admm));

    // initial guess from the splitting iterate
    std::vector<int> side(static_cast<size_t>(m), 0);  // -1 lower, +1 upper, 2 equality, 0 off
    for (int i = 0; i < m; ++i) {
        if (st.l(i) == st.u(i))
            side[static_cast<size_t>(i)] = 2;
        else if (y_admm(i) > thr || (std::isfinite(st.u(i)) && st.u(i) - z_admm(i) < slack_thr))
            side[static_cast<size_t>(i)] = 1;
        else if (y_admm(i) < -thr ||
                 (std::isfinite(st.l(i)) && z_admm(i) - st.l(i) < slack_thr))
            side[static_cast<size_t>(i)] = -1;
    }

    const double delta = 1e-9;
    PolishOutcome out;
    // primal-dual active-set refinement: drop wrong-sign multipliers, add
    // violated rows, re-solve the reduced KKT system
    for (int pass = 0; pass < 50; ++pass) {
        std::vector<int> act_rows;
        for (int i = 0; i < m; ++i)
            if (side[static_cast<size_t>(i)] != 0) act_rows.push_back(i);
        const int ma = static_cast<int>(act_rows.size());

        std::vector<Eigen::Triplet<double>> trip;
        for (int k = 0; k < P.outerSize(); ++k)
            for (SparseMat::InnerIterator it(P, k); it; ++it)
                trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
        for (int j = 0; j < n; ++j) trip.emplace_back(j, j, delta);
        std::vector<int> row_of(static_cast<size_t>(m), -1);
        for (int r = 0; r < ma; ++r)
            row_of[static_cast<size_t>(act_rows[static_cast<size_t>(r)])] = r;
        for (int k = 0; k < st.A.outerSize(); ++k)
            for (SparseMat::InnerIterator it(st.A, k); it; ++it) {
                const int r = row_of[static_cast<size_t>(it.row())];
                if (r >= 0) {
                    trip.emplace_back(n + r, static_cast<int>(it.col()), it.value());
                    trip.emplace_back(static_cast<int>(it.col()), n + r, it.value());
                }
            }
        for (int r = 0; r < ma; ++r) trip.emplace_back(n + r, n + r, -delta);

        SparseMat kkt(n + ma, n + ma);
        kkt.setFromTriplets(trip.begin(), trip.end());
        kkt.makeCompressed();
        Eigen::SparseLU<SparseMat> lu;
        lu.analyzePattern(kkt);
        lu.factorize(kkt);
        if (lu.info() != Eigen::Success) return {};

        Eigen::VectorXd rhs(n + ma);
        rhs.head(n) = -q;
        for (int r = 0; r < ma; ++r) {
            const int i = act_rows[static_cast<size_t>(r)];
            rhs(n + r) = side[static_cast<size_t>(i)] == -1 ? st.l(i) : st.u(i);
        }
        Eigen::VectorXd sol = lu.solve(rhs);
        // iterative refinement against the unregularized KKT system
        for (int ref = 0; ref < 3; ++ref) {
            Eigen::VectorXd resid = rhs;
            const Eigen::VectorXd xs = sol.head(n);
            const Eigen::VectorXd nus = sol.tail(ma);
            resid.head(n) -= P * xs;  // P stored as a full symmetric matrix
            for (int k = 0; k < st.A.outerSize(); ++k)
                for (SparseMat::InnerIterator it(st.A, k); it; ++it) {
                    const int r = row_of[static_cast<size_t>(it.row())];
                    if (r >= 0) {
                        resid(it.col()) -= it.value() * nus(r);
                        resid(n + r) -= it.value() * xs(it.col());
                    }
                }
            sol += lu.solve(resid);
        }

        const Eigen::VectorXd x = sol.head(n);
        const Eigen::VectorXd ax = st.A * x;
        const double scale = std::max(1.0, inf_norm(ax));
        const double tol = 1e-9 * scale;

        bool changed = false;
        int n_dropped = 0, n_added = 0;
        // feasibility first: grow the active set while violations remain,
        // prune wrong-sign multipliers only from a primal-feasible set
        for (int i = 0; i < m; ++i) {
            if (side[static_cast<size_t>(i)] != 0) continue;
            if (std::isfinite(st.u(i)) && ax(i) > st.u(i) + tol) {
                side[static_cast<size_t>(i)] = 1;
                changed = true;
                ++n_added;
            } else if (std::isfinite(st.l(i)) && ax(i) < st.l(i) - tol) {
                side[static_cast<size_t>(i)] = -1;
                changed = true;
                ++n_added;
            }
        }
        if (n_added == 0) {
            for (int r = 0; r < ma; ++r) {
                const int i = act_rows[static_cast<size_t>(r)];
                if (side[static_cast<size_t>(i)] == 2) continue;
                const double nu = sol(n + r);
                if (side[static_cast<size_t>(i)] == 1 && nu < -tol) {
                    side[static_cast<size_t>(i)] = 0;
                    changed = true;
                    ++n_dropped;
                } else if (side[static_cast<size_t>(i)] == -1 && nu > tol) {
                    side[static_cast<size_t>(i)] = 0;
                    changed = true;
                    ++n_dropped;
                }
            }
        }
        if (std::getenv("DROPF_TRACE"))
            std::cerr << "  polish pass " << pass << ": active " << ma << " dropped " << n_dropped
                      << " added " << n_added << "\n";
        if (!changed) {
            out.x = x;
            out.y = Eigen::VectorXd::Zero(m);
            for (int r = 0; r < ma; ++r) out.y(act_rows[static_cast<size_t>(r)]) = sol(n + r);
            double r_prim = 0.0;
            for (int i = 0; i < m; ++i) {
                double v = 0.0;
                if (std::isfinite(st.u(i))) v = std::max(v, ax(i) - st.u(i));
                if (std::isfinite(st.l(i))) v = std::max(v, st.l(i) - ax(i));
                r_prim = std::max(r_prim, v);
            }
            const Eigen::VectorXd dres = q + st.A.transpose() * out.y + P * x;
            out.r_prim = r_prim;
            out.r_dual = inf_norm(dres);
            out.accepted = true;
            return out;
        }
    }
    return {};  // no stable active set within the pass budget
}

// ladder of active-set detection thresholds; accept the first polished point
// whose KKT residuals meet the termination tolerances
PolishOutcome polish_ladder(const SparseMat& P, const Eigen::VectorXd& q, const Stacked& st,
                            const Eigen::VectorXd& y_u, const Eigen::VectorXd& z_u,
                            const SolverSettings& settings) {
    // strict inclusion first: a small trusted set grown by violated rows is
    // far more stable than pruning a large noisy one
    const double pairs[3][2] = {{1e-3, 1e-6}, {1e-5, 1e-8}, {1e-7, 1e-10}};
    for (const auto& pr : pairs) {
        PolishOutcome po = polish_solution(P, q, st, y_u, z_u, pr[0], pr[1]);
        if (!po.accepted) continue;
        const Eigen::VectorXd ax = st.A * po.x;  // the polished point has z = Ax
        const Eigen::VectorXd px = P * po.x;
        const Eigen::VectorXd aty = st.A.transpose() * po.y;
        const double tol_p = settings.eps_abs + settings.eps_rel * inf_norm(ax);
        const double tol_d =
            settings.eps_abs +
            settings.eps_rel * std::max({inf_norm(px), inf_norm(q), inf_norm(aty)});
        if (po.r_prim <= tol_p && po.r_dual <= tol_d) return po;
    }
    PolishOutcome none;
    none.accepted = false;
    return none;
}

// P as a full (not just upper) operator
Eigen::VectorXd apply_sym(const SparseMat& P, const Eigen::VectorXd& x) { return P * x; }

}  // namespace

SolverResult solve(const QuadraticProgram& qp, const SolverSettings& settings) {
    const auto t_start = std::chrono::steady_clock::now();
    qp.validate();
    const int n = qp.n;
    Stacked st = stack_constraints(qp);
    const int m = static_cast<int>(st.A.rows());

    // scaled copies
    SparseMat p_sc = qp.P;
    Eigen::VectorXd q_sc = qp.c;
    SparseMat a_sc = st.A;
    Scaling sc = ruiz_equilibrate(p_sc, q_sc, a_sc);
    Eigen::VectorXd l_sc = sc.e.cwiseProduct(st.l);
    Eigen::VectorXd u_sc = sc.e.cwiseProduct(st.u);
    for (int i = 0; i < m; ++i) {  // keep infinities intact
        if (!std::isfinite(st.l(i))) l_sc(i) = -kInf;
        if (!std::isfinite(st.u(i))) u_sc(i) = kInf;
    }

    const double sigma = 1e-6;
    const double alpha = 1.6;
    double rho_base = 0.1;
    auto rho_of = [&](int i) {
        return st.l(i) == st.u(i) ? 1e3 * rho_base : rho_base;
    };
    Eigen::VectorXd rho(m), rho_inv(m);
    for (int i = 0; i < m; ++i) {
        rho(i) = rho_of(i);
        rho_inv(i) = 1.0 / rho(i);
    }

    Eigen::SimplicialLDLT<SparseMat> ldlt;
    auto factorize = [&]() {
        std::vector<Eigen::Triplet<double>> trip;
        for (int k = 0; k < p_sc.outerSize(); ++k)
            for (SparseMat::InnerIterator it(p_sc, k); it; ++it)
                trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
        for (int j = 0; j < n; ++j) trip.emplace_back(j, j, sigma);
        for (int k = 0; k < a_sc.outerSize(); ++k)
            for (SparseMat::InnerIterator it(a_sc, k); it; ++it) {
                trip.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
                trip.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()),
                                  it.value());
            }
        for (int i = 0; i < m; ++i) trip.emplace_back(n + i, n + i, -rho_inv(i));
        SparseMat kkt(n + m, n + m);
        kkt.setFromTriplets(trip.begin(), trip.end());
        ldlt.compute(kkt);
        if (ldlt.info() != Eigen::Success)
            throw NumericalError("solve: KKT factorization failed");
    };
    factorize();

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (settings.warm_start && settings.warm_y.size() == n)
        x = sc.d.cwiseInverse().cwiseProduct(settings.warm_y);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < m; ++i) {
        double zi = 0.0;
        if (std::isfinite(l_sc(i))) zi = std::max(zi, l_sc(i));
        if (std::isfinite(u_sc(i))) zi = std::min(zi, u_sc(i));
        z(i) = zi;
    }

    SolverResult res;
    res.y = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd x_prev_unscaled = sc.d.cwiseProduct(x);
    Eigen::VectorXd y_prev_unscaled = Eigen::VectorXd::Zero(m);

    const int check_every = 25;
    int iter = 0;
    SolveStatus status = SolveStatus::max_iter;
    double r_prim = kInf, r_dual = kInf;
    Eigen::VectorXd x_u(n), z_u(m), y_u(m);
    PolishOutcome polished;

    for (iter = 1; iter <= settings.max_iter; ++iter) {
        Eigen::VectorXd rhs(n + m);
        rhs.head(n) = sigma * x - q_sc;
        rhs.tail(m) = z - rho_inv.cwiseProduct(y);
        const Eigen::VectorXd sol = ldlt.solve(rhs);
        const Eigen::VectorXd x_tilde = sol.head(n);
        const Eigen::VectorXd nu = sol.tail(m);
        const Eigen::VectorXd z_tilde = z + rho_inv.cwiseProduct(nu - y);

        x = alpha * x_tilde + (1.0 - alpha) * x;
        const Eigen::VectorXd zc = alpha * z_tilde + (1.0 - alpha) * z;
        Eigen::VectorXd z_new = zc + rho_inv.cwiseProduct(y);
        for (int i = 0; i < m; ++i) z_new(i) = std::min(std::max(z_new(i), l_sc(i)), u_sc(i));
        y = y + rho.cwiseProduct(zc - z_new);
        z = z_new;

        if (iter % check_every != 0 && iter != settings.max_iter) continue;

        // unscaled iterates and residuals
        x_u = sc.d.cwiseProduct(x);
        z_u = sc.e.cwiseInverse().cwiseProduct(z);
        y_u = sc.e.cwiseProduct(y) / sc.gamma;
        const Eigen::VectorXd ax = st.A * x_u;
        const Eigen::VectorXd px = apply_sym(qp.P, x_u);
        const Eigen::VectorXd aty = st.A.transpose() * y_u;
        r_prim = inf_norm(ax - z_u);
        r_dual = inf_norm(px + qp.c + aty);
        const double tol_p =
            settings.eps_abs + settings.eps_rel * std::max(inf_norm(ax), inf_norm(z_u));
        const double tol_d =
            settings.eps_abs +
            settings.eps_rel * std::max({inf_norm(px), inf_norm(qp.c), inf_norm(aty)});
        if (r_prim <= tol_p && r_dual <= tol_d) {
            status = SolveStatus::optimal;
            break;
        }
        // crossover attempt while the splitting stalls on degenerate problems
        if (settings.polish && iter % 5000 == 0) {
            polished = polish_ladder(qp.P, qp.c, st, y_u, z_u, settings);
            if (polished.accepted) {
                status = SolveStatus::optimal;
                break;
            }
        }

        // certificates
        const Eigen::VectorXd dy = y_u - y_prev_unscaled;
        const double dy_norm = inf_norm(dy);
        if (dy_norm > 1e-12) {
            const double eps_c = settings.eps_infeas * dy_norm;
            if (inf_norm(st.A.transpose() * dy) <= eps_c) {
                double support = 0.0;
                bool valid = true;
                for (int i = 0; i < m && valid; ++i) {
                    if (dy(i) > eps_c) {
                        if (!std::isfinite(st.u(i)))
                            valid = false;
                        else
                            support += st.u(i) * dy(i);
                    } else if (dy(i) < -eps_c) {
                        if (!std::isfinite(st.l(i)))
                            valid = false;
                        else
                            support += st.l(i) * dy(i);
                    }
                }
                if (valid && support <= -eps_c) {
                    status = SolveStatus::infeasible;
                    res.certificate = dy / dy_norm;
                    break;
                }
            }
        }
        const Eigen::VectorXd dx = x_u - x_prev_unscaled;
        const double dx_norm = inf_norm(dx);
        if (dx_norm > 1e-12) {
            const double eps_c = settings.eps_infeas * dx_norm;
            if (inf_norm(apply_sym(qp.P, dx)) <= eps_c && qp.c.dot(dx) <= -eps_c) {
                const Eigen::VectorXd adx = st.A * dx;
                bool valid = true;
                for (int i = 0; i < m && valid; ++i) {
                    if (std::isfinite(st.u(i)) && adx(i) > eps_c) valid = false;
                    if (std::isfinite(st.l(i)) && adx(i) < -eps_c) valid = false;
                }
                if (valid) {
                    status = SolveStatus::unbounded;
                    res.certificate = dx / dx_norm;
                    break;
                }
            }
        }
        x_prev_unscaled = x_u;
        y_prev_unscaled = y_u;

        // adaptive step-size parameter
        if (iter % 200 == 0) {
            const double np = r_prim / std::max({inf_norm(ax), inf_norm(z_u), 1e-12});
            const double nd =
                r_dual / std::max({inf_norm(px), inf_norm(qp.c), inf_norm(aty), 1e-12});
            if (np > 1e-14 && nd > 1e-14) {
                const double ratio = std::sqrt(np / nd);
                if (ratio > 5.0 || ratio < 0.2) {
                    rho_base = std::min(std::max(rho_base * ratio, 1e-6), 1e6);
                    for (int i = 0; i < m; ++i) {
                        rho(i) = rho_of(i);
                        rho_inv(i) = 1.0 / rho(i);
                    }
                    factorize();
                }
            }
        }
    }

    res.status = status;
    res.iterations = std::min(iter, settings.max_iter);
    if (status == SolveStatus::optimal || status == SolveStatus::max_iter) {
        x_u = sc.d.cwiseProduct(x);
        z_u = sc.e.cwiseInverse().cwiseProduct(z);
        y_u = sc.e.cwiseProduct(y) / sc.gamma;
        if (settings.polish && !polished.accepted)
            polished = polish_ladder(qp.P, qp.c, st, y_u, z_u, settings);
        if (polished.accepted) {
            x_u = polished.x;
            y_u = polished.y;
            z_u = st.A * x_u;
            r_prim = polished.r_prim;
            r_dual = polished.r_dual;
            res.status = SolveStatus::optimal;
        }
        res.y = x_u;
        res.primal_residual = r_prim;
        res.dual_residual = r_dual;
        res.objective = 0.5 * x_u.dot(apply_sym(qp.P, x_u)) + qp.c.dot(x_u);
        const double dual_obj = -0.5 * x_u.dot(apply_sym(qp.P, x_u)) -
                                [&] {
                                    double t = 0.0;
                                    for (int i = 0; i < m; ++i) {
                                        if (y_u(i) > 0 && std::isfinite(st.u(i)))
                                            t += st.u(i) * y_u(i);
                                        else if (y_u(i) < 0 && std::isfinite(st.l(i)))
                                            t += st.l(i) * y_u(i);
                                    }
                                    return t;
                                }();
        res.gap = std::abs(res.objective - dual_obj);
        res.dual_eq = y_u.head(st.m_eq);
        res.dual_in = y_u.segment(st.m_eq, st.m_in);
        res.dual_bounds = y_u.tail(st.m_b);
    }
    res.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

SolverResult kkt_oracle(const QuadraticProgram& qp) {
    qp.validate();
    const int n = qp.n;
    if (n > 200) throw NumericalError("kkt_oracle: n cap (200) exceeded");

    Eigen::MatrixXd p_dense = Eigen::MatrixXd(qp.P) + 1e-10 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd a_eq = Eigen::MatrixXd(qp.A_eq);
    const int m_eq = static_cast<int>(a_eq.rows());

    // gather inequality rows (A_in plus finite box rows)
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    const Eigen::MatrixXd a_in = Eigen::MatrixXd(qp.A_in);
    for (int i = 0; i < a_in.rows(); ++i) {
        rows.push_back(a_in.row(i));
        rhs.push_back(qp.b_in(i));
    }
    auto push_bound = [&](int j, double v, double sgn) {
        if (!std::isfinite(v)) return;
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
        r(j) = sgn;
        rows.push_back(r);
        rhs.push_back(sgn * v);
    };
    if (qp.ub.size() == n)
        for (int j = 0; j < n; ++j) push_bound(j, qp.ub(j), 1.0);
    if (qp.lb.size() == n)
        for (int j = 0; j < n; ++j) push_bound(j, qp.lb(j), -1.0);
    const int m_in = static_cast<int>(rows.size());
    if (m_in > 20) throw NumericalError("kkt_oracle: inequality cap (20) exceeded");

    auto try_active_set = [&](const std::vector<int>& act) -> std::pair<bool, SolverResult> {
        const int ma = static_cast<int>(act.size());
        const int dim = n + m_eq + ma;
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
        kkt.topLeftCorner(n, n) = p_dense;
        if (m_eq > 0) {
            kkt.block(n, 0, m_eq, n) = a_eq;
            kkt.block(0, n, n, m_eq) = a_eq.transpose();
        }
        for (int r = 0; r < ma; ++r) {
            kkt.row(n + m_eq + r).head(n) = rows[static_cast<size_t>(act[static_cast<size_t>(r)])];
            kkt.col(n + m_eq + r).head(n) =
                rows[static_cast<size_t>(act[static_cast<size_t>(r)])].transpose();
        }
        Eigen::VectorXd b(dim);
        b.head(n) = -qp.c;
        if (m_eq > 0) b.segment(n, m_eq) = qp.b_eq;
        for (int r = 0; r < ma; ++r)
            b(n + m_eq + r) = rhs[static_cast<size_t>(act[static_cast<size_t>(r)])];
        Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
        const Eigen::VectorXd sol = lu.solve(b);
        if ((kkt * sol - b).lpNorm<Eigen::Infinity>() > 1e-7 * std::max(1.0, b.lpNorm<Eigen::Infinity>()))
            return {false, {}};
        const Eigen::VectorXd y = sol.head(n);
        // feasibility of every inequality and nonnegativity of active duals
        for (int i = 0; i < m_in; ++i) {
            if (rows[static_cast<size_t>(i)].dot(y) > rhs[static_cast<size_t>(i)] + 1e-8)
                return {false, {}};
        }
        for (int r = 0; r < ma; ++r)
            if (sol(n + m_eq + r) < -1e-8) return {false, {}};

        SolverResult out;
        out.status = SolveStatus::optimal;
        out.y = y;
        out.dual_eq = m_eq > 0 ? Eigen::VectorXd(sol.segment(n, m_eq)) : Eigen::VectorXd();
        out.dual_in = Eigen::VectorXd::Zero(m_in);
        for (int r = 0; r < ma; ++r)
            out.dual_in(act[static_cast<size_t>(r)]) = sol(n + m_eq + r);
        const Eigen::VectorXd px = Eigen::MatrixXd(qp.P) * y;
        out.objective = 0.5 * y.dot(px) + qp.c.dot(y);
        out.dual_residual = 0.0;
        out.primal_residual = 0.0;
        out.iterations = 1;
        return {true, out};
    };

    // enumerate candidate active sets by increasing cardinality
    std::vector<int> idx(static_cast<size_t>(m_in));
    for (int i = 0; i < m_in; ++i) idx[static_cast<size_t>(i)] = i;
    for (int k = 0; k <= m_in; ++k) {
        std::vector<int> comb(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) comb[static_cast<size_t>(i)] = i;
        while (true) {
            auto [ok, out] = try_active_set(comb);
            if (ok) return out;
            // next combination
            int i = k - 1;
            while (i >= 0 && comb[static_cast<size_t>(i)] == m_in - k + i) --i;
            if (i < 0) break;
            ++comb[static_cast<size_t>(i)];
            for (int j = i + 1; j < k; ++j)
                comb[static_cast<size_t>(j)] = comb[static_cast<size_t>(j - 1)] + 1;
        }
    }
    throw NumericalError("kkt_oracle: no consistent active set (problem may be infeasible)");
}

int QpBuilder::add_var(const std::string& name, int size) {
    const int off = n_;
    vars_.emplace_back(name, std::make_pair(off, size));
    n_ += size;
    return off;
}

void QpBuilder::obj_linear(int col, double v) {
    if (v != 0.0) c_entries_.emplace_back(col, v);
}

void QpBuilder::obj_quad(int row, int col, double v) {
    // adds v * y_row * y_col to the objective (P kept symmetric)
    if (v == 0.0) return;
    if (row == col) {
        p_trip_.emplace_back(row, col, 2.0 * v);
    } else {
        p_trip_.emplace_back(row, col, v);
        p_trip_.emplace_back(col, row, v);
    }
}

void QpBuilder::start_eq_row(double rhs) {
    eq_rhs_.push_back(rhs);
    in_eq_row_ = true;
    row_open_ = true;
}

void QpBuilder::start_ineq_row(double rhs) {
    in_rhs_.push_back(rhs);
    in_eq_row_ = false;
    row_open_ = true;
}

void QpBuilder::coeff(int col, double v) {
    if (!row_open_) throw ValidationError("QpBuilder: coeff before starting a row");
    if (v == 0.0) return;
    if (in_eq_row_)
        eq_trip_.emplace_back(static_cast<int>(eq_rhs_.size()) - 1, col, v);
    else
        in_trip_.emplace_back(static_cast<int>(in_rhs_.size()) - 1, col, v);
}

QuadraticProgram QpBuilder::build(bool check_psd) const {
    QuadraticProgram qp;
    qp.n = n_;
    qp.P.resize(n_, n_);
    qp.P.setFromTriplets(p_trip_.begin(), p_trip_.end());
    qp.c = Eigen::VectorXd::Zero(n_);
    for (const auto& [col, v] : c_entries_) qp.c(col) += v;
    qp.A_eq.resize(static_cast<int>(eq_rhs_.size()), n_);
    qp.A_eq.setFromTriplets(eq_trip_.begin(), eq_trip_.end());
    qp.b_eq = Eigen::Map<const Eigen::VectorXd>(eq_rhs_.data(),
                                                static_cast<int>(eq_rhs_.size()));
    qp.A_in.resize(static_cast<int>(in_rhs_.size()), n_);
    qp.A_in.setFromTriplets(in_trip_.begin(), in_trip_.end());
    qp.b_in = Eigen::Map<const Eigen::VectorXd>(in_rhs_.data(),
                                                static_cast<int>(in_rhs_.size()));
    if (check_psd) qp.validate();
    return qp;
}

void dump_problem(const QuadraticProgram& qp,
                  const std::vector<std::pair<std::string, std::pair<int, int>>>& layout,
                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out.precision(17);
    out << "dropf-qp 1\n";
    out << "dims " << qp.n << " " << qp.A_eq.rows() << " " << qp.A_in.rows() << "\n";
    auto emit_sparse = [&](const char* name, const SparseMat& mat) {
        out << name << " " << mat.nonZeros() << "\n";
        for (int k = 0; k < mat.outerSize(); ++k)
            for (SparseMat::InnerIterator it(mat, k); it; ++it)
                out << it.row() << " " << it.col() << " " << it.value() << "\n";
    };
    auto emit_dense = [&](const char* name, const Eigen::VectorXd& v) {
        out << name << " " << v.size() << "\n";
        for (int i = 0; i < v.size(); ++i) out << v(i) << "\n";
    };
    emit_sparse("P", qp.P);
    emit_dense("c", qp.c);
    emit_sparse("A_eq", qp.A_eq);
    emit_dense("b_eq", qp.b_eq);
    emit_sparse("A_in", qp.A_in);
    emit_dense("b_in", qp.b_in);
    out << "layout " << layout.size() << "\n";
    for (const auto& [name, range] : layout)
        out << name << " " << range.first << " " << range.second << "\n";
    out << "end\n";
}

std::pair<QuadraticProgram, std::vector<std::pair<std::string, std::pair<int, int>>>>
load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open problem dump '" + path + "'");
    std::string tag;
    int version = 0;
    in >> tag >> version;
    if (tag != "dropf-qp" || version != 1)
        throw ParseError("problem dump: bad header in '" + path + "'");
    QuadraticProgram qp;
    int m_eq = 0, m_in = 0;
    in >> tag >> qp.n >> m_eq >> m_in;
    if (tag != "dims" || !in) throw ParseError("problem dump: bad dims");

    auto read_sparse = [&](const char* name, SparseMat& mat, int rows, int cols) {
        long nnz = 0;
        in >> tag >> nnz;
        if (tag != name || !in) throw ParseError(std::string("problem dump: expected ") + name);
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<size_t>(nnz));
        for (long k = 0; k < nnz; ++k) {
            int i = 0, j = 0;
            double v = 0.0;
            in >> i >> j >> v;
            if (!in) throw ParseError(std::string("problem dump: truncated ") + name);
            trip.emplace_back(i, j, v);
        }
        mat.resize(rows, cols);
        mat.setFromTriplets(trip.begin(), trip.end());
    };
    auto read_dense = [&](const char* name, Eigen::VectorXd& v) {
        long len = 0;
        in >> tag >> len;
        if (tag != name || !in) throw ParseError(std::string("problem dump: expected ") + name);
        v.resize(len);
        for (long i = 0; i < len; ++i) in >> v(i);
        if (!in) throw ParseError(std::string("problem dump: truncated ") + name);
    };
    read_sparse("P", qp.P, qp.n, qp.n);
    read_dense("c", qp.c);
    read_sparse("A_eq", qp.A_eq, m_eq, qp.n);
    read_dense("b_eq", qp.b_eq);
    read_sparse("A_in", qp.A_in, m_in, qp.n);
    read_dense("b_in", qp.b_in);

    std::vector<std::pair<std::string, std::pair<int, int>>> layout;
    long count = 0;
    in >> tag >> count;
    if (tag != "layout") throw ParseError("problem dump: expected layout");
    for (long k = 0; k < count; ++k) {
        std::string name;
        int off = 0, size = 0;
        in >> name >> off >> size;
        layout.emplace_back(name, std::make_pair(off, size));
    }
    in >> tag;
    if (tag != "end") throw ParseError("problem dump: missing end marker");
    qp.validate();
    return {qp, layout};
}

}  // namespace dropf
