#pragma once

#include <Eigen/Dense>

namespace dropf {

enum class LpStatus { optimal, infeasible, unbounded };

struct LpResult {
    LpStatus status = LpStatus::infeasible;
    Eigen::VectorXd x;
    double objective = 0.0;
};

// Dense two-phase primal simplex with Bland's rule for
//   min c'x  s.t.  A x = b,  x >= 0.
// Desk-scale utility: exact basic solutions for small LPs.
LpResult simplex_solve(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                       const Eigen::VectorXd& b);

// Convenience wrapper for min c'x s.t. A x <= b with free x
// (internally splits x and adds slacks).
LpResult simplex_solve_ineq(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                            const Eigen::VectorXd& b);

}  // namespace dropf
