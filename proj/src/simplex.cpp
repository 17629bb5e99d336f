#include "dropf/simplex.hpp"

#include <cmath>
#include <vector>

#include "dropf/errors.hpp"

namespace dropf {

namespace {

constexpr double kTol = 1e-9;

struct Tableau {
    Eigen::MatrixXd a;       // m x n
    Eigen::VectorXd b;       // m, kept >= 0
    Eigen::VectorXd cost;    // n
    std::vector<int> basis;  // length m

    // Bland's rule pivoting; returns false when unbounded.
    bool run() {
        const int m = static_cast<int>(a.rows());
        const int n = static_cast<int>(a.cols());
        for (int guard = 0; guard < 20000; ++guard) {
            // reduced costs via basis multipliers
            Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
            Eigen::MatrixXd basis_mat(m, m);
            for (int i = 0; i < m; ++i) basis_mat.col(i) = a.col(basis[static_cast<size_t>(i)]);
            Eigen::FullPivLU<Eigen::MatrixXd> lu(basis_mat);
            Eigen::VectorXd cb(m);
            for (int i = 0; i < m; ++i) cb(i) = cost(basis[static_cast<size_t>(i)]);
            y = lu.transpose().solve(cb);

            int entering = -1;
            for (int j = 0; j < n; ++j) {
                const double reduced = cost(j) - y.dot(a.col(j));
                if (reduced < -kTol) {
                    entering = j;
                    break;  // Bland: smallest index
                }
            }
            if (entering < 0) return true;  // optimal

            const Eigen::VectorXd direction = lu.solve(a.col(entering));
            const Eigen::VectorXd xb = lu.solve(b);
            int leaving = -1;
            double best_ratio = 0.0;
            for (int i = 0; i < m; ++i) {
                if (direction(i) > kTol) {
                    const double ratio = xb(i) / direction(i);
                    if (leaving < 0 || ratio < best_ratio - kTol ||
                        (std::abs(ratio - best_ratio) <= kTol &&
                         basis[static_cast<size_t>(i)] < basis[static_cast<size_t>(leaving)])) {
                        leaving = i;
                        best_ratio = ratio;
                    }
                }
            }
            if (leaving < 0) return false;  // unbounded
            basis[static_cast<size_t>(leaving)] = entering;
        }
        throw NumericalError("simplex: iteration guard exceeded");
    }

    Eigen::VectorXd solution() const {
        const int m = static_cast<int>(a.rows());
        Eigen::MatrixXd basis_mat(m, m);
        for (int i = 0; i < m; ++i) basis_mat.col(i) = a.col(basis[static_cast<size_t>(i)]);
        const Eigen::VectorXd xb = basis_mat.fullPivLu().solve(b);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(a.cols());
        for (int i = 0; i < m; ++i) x(basis[static_cast<size_t>(i)]) = xb(i);
        return x;
    }
};

}  // namespace

LpResult simplex_solve(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                       const Eigen::VectorXd& b) {
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    if (b.size() != m || c.size() != n) throw ValidationError("simplex: dimension mismatch");

    // phase 1 with artificial variables, rows flipped so b >= 0
    Tableau t;
    t.a = Eigen::MatrixXd::Zero(m, n + m);
    t.b = b;
    for (int i = 0; i < m; ++i) {
        const double sign = b(i) < 0.0 ? -1.0 : 1.0;
        t.a.row(i).head(n) = sign * A.row(i);
        t.b(i) = sign * b(i);
        t.a(i, n + i) = 1.0;
        t.basis.push_back(n + i);
    }
    t.cost = Eigen::VectorXd::Zero(n + m);
    t.cost.tail(m).setOnes();
    if (!t.run()) throw NumericalError("simplex: phase-1 unbounded");
    const Eigen::VectorXd phase1 = t.solution();
    if (phase1.tail(m).sum() > 1e-7) return {LpStatus::infeasible, Eigen::VectorXd(), 0.0};

    // drive remaining artificials out of the basis where possible
    for (int i = 0; i < m; ++i) {
        if (t.basis[static_cast<size_t>(i)] >= n) {
            for (int j = 0; j < n; ++j) {
                Eigen::MatrixXd basis_mat(m, m);
                for (int k = 0; k < m; ++k)
                    basis_mat.col(k) = t.a.col(t.basis[static_cast<size_t>(k)]);
                const Eigen::VectorXd dir = basis_mat.fullPivLu().solve(t.a.col(j));
                if (std::abs(dir(i)) > 1e-7) {
                    bool already = false;
                    for (int k = 0; k < m; ++k)
                        if (t.basis[static_cast<size_t>(k)] == j) already = true;
                    if (!already) {
                        t.basis[static_cast<size_t>(i)] = j;
                        break;
                    }
                }
            }
        }
    }

    // rows still carried by an artificial are redundant: drop them, along
    // with every artificial column, before phase 2
    std::vector<int> keep;
    for (int i = 0; i < m; ++i)
        if (t.basis[static_cast<size_t>(i)] < n) keep.push_back(i);
    const int m2 = static_cast<int>(keep.size());
    Tableau t2;
    t2.a.resize(m2, n);
    t2.b.resize(m2);
    for (int i = 0; i < m2; ++i) {
        t2.a.row(i) = t.a.row(keep[static_cast<size_t>(i)]).head(n);
        t2.b(i) = t.b(keep[static_cast<size_t>(i)]);
        t2.basis.push_back(t.basis[static_cast<size_t>(keep[static_cast<size_t>(i)])]);
    }
    t2.cost = c;
    if (m2 == 0) {  // every row redundant: the origin is feasible, x >= 0 free
        if ((c.array() < 0.0).any()) return {LpStatus::unbounded, Eigen::VectorXd(), 0.0};
        LpResult res;
        res.status = LpStatus::optimal;
        res.x = Eigen::VectorXd::Zero(n);
        res.objective = 0.0;
        return res;
    }
    if (!t2.run()) return {LpStatus::unbounded, Eigen::VectorXd(), 0.0};
    LpResult res;
    res.status = LpStatus::optimal;
    res.x = t2.solution();
    res.objective = c.dot(res.x);
    return res;
}

LpResult simplex_solve_ineq(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                            const Eigen::VectorXd& b) {
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    // x = u - v, slack s: [A, -A, I][u; v; s] = b
    Eigen::MatrixXd a_std(m, 2 * n + m);
    a_std << A, -A, Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd c_std = Eigen::VectorXd::Zero(2 * n + m);
    c_std.head(n) = c;
    c_std.segment(n, n) = -c;
    LpResult inner = simplex_solve(c_std, a_std, b);
    LpResult res;
    res.status = inner.status;
    res.objective = inner.objective;
    if (inner.status == LpStatus::optimal)
        res.x = inner.x.head(n) - inner.x.segment(n, n);
    return res;
}

}  // namespace dropf
