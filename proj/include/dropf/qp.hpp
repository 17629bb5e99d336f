#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace dropf {

using SparseMat = Eigen::SparseMatrix<double>;

// Convex QP:  min 1/2 y'Py + c'y
//             s.t. A_eq y = b_eq,  A_in y <= b_in,  lb <= y <= ub (optional).
// P must be symmetric PSD; construct through validate() or QpBuilder.
struct QuadraticProgram {
    int n = 0;
    SparseMat P;
    Eigen::VectorXd c;
    SparseMat A_eq;
    Eigen::VectorXd b_eq;
    SparseMat A_in;
    Eigen::VectorXd b_in;
    Eigen::VectorXd lb, ub;  // empty when absent

    // checks symmetry, finiteness, dimensions and positive semidefiniteness
    void validate() const;
};

enum class SolveStatus { optimal, infeasible, unbounded, max_iter };

const char* to_string(SolveStatus s);

struct SolverResult {
    SolveStatus status = SolveStatus::max_iter;
    Eigen::VectorXd y;
    Eigen::VectorXd dual_eq;      // multipliers of A_eq
    Eigen::VectorXd dual_in;      // multipliers of A_in, >= 0 at optimality
    Eigen::VectorXd dual_bounds;  // multipliers of box rows (lower<0 / upper>0)
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;
    int iterations = 0;
    double wall_time_s = 0.0;
    Eigen::VectorXd certificate;  // infeasibility / unboundedness direction
};

struct SolverSettings {
    double eps_abs = 1e-6;
    double eps_rel = 1e-6;
    double eps_infeas = 1e-9;
    int max_iter = 50000;
    bool polish = true;
    bool warm_start = false;  // off by default for test determinism
    Eigen::VectorXd warm_y;
};

// Operator-splitting solve with Ruiz equilibration and an active-set polish
// step. Deterministic: identical inputs and settings give identical results.
SolverResult solve(const QuadraticProgram& qp, const SolverSettings& settings = {});

// Dense KKT factorization oracle for desk-scale checks: n <= 200, at most 20
// inequality rows handled by active-set enumeration. P is regularized by
// 1e-10 I.
SolverResult kkt_oracle(const QuadraticProgram& qp);

// Incremental triplet-based builder used by the assemblers.
class QpBuilder {
  public:
    int add_var(const std::string& name, int size);
    int n_vars() const { return n_; }

    void obj_linear(int col, double v);
    void obj_quad(int row, int col, double v);  // contributes v * y_row * y_col
    void obj_constant(double v) { offset_ += v; }
    double obj_constant() const { return offset_; }

    void start_eq_row(double rhs);
    void start_ineq_row(double rhs);  // row' y <= rhs
    void coeff(int col, double v);

    const std::vector<std::pair<std::string, std::pair<int, int>>>& vars() const { return vars_; }

    QuadraticProgram build(bool check_psd = true) const;

  private:
    int n_ = 0;
    double offset_ = 0.0;
    std::vector<std::pair<std::string, std::pair<int, int>>> vars_;  // name -> (offset, size)
    std::vector<Eigen::Triplet<double>> p_trip_;
    std::vector<std::pair<int, double>> c_entries_;
    std::vector<Eigen::Triplet<double>> eq_trip_, in_trip_;
    std::vector<double> eq_rhs_, in_rhs_;
    bool in_eq_row_ = false;
    bool row_open_ = false;
};

// Self-contained text dump (sparse triplets + variable-layout manifest) and
// its loader; the CLI can solve a dumped problem standalone.
void dump_problem(const QuadraticProgram& qp,
                  const std::vector<std::pair<std::string, std::pair<int, int>>>& layout,
                  const std::string& path);
std::pair<QuadraticProgram, std::vector<std::pair<std::string, std::pair<int, int>>>>
load_problem(const std::string& path);

}  // namespace dropf
