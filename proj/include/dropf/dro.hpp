#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dropf/qp.hpp"

namespace dropf {

// Bounded nonempty polytope { xi : H xi <= d }. Construction verifies
// nonemptiness (one feasibility LP) and boundedness (2 n_xi support LPs).
struct PolytopicSupport {
    Eigen::MatrixXd H;
    Eigen::VectorXd d;

    PolytopicSupport(Eigen::MatrixXd h, Eigen::VectorXd dd);
    static PolytopicSupport box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

    int dim() const { return static_cast<int>(H.cols()); }
    bool contains(const Eigen::VectorXd& xi, double tol = 1e-9) const;

    // vertex enumeration, exposed for the grid oracle (dim <= 3)
    std::vector<Eigen::VectorXd> vertices() const;
    // per-coordinate bounding box via support LPs
    void bounding_box(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const;
};

// Uniformly weighted atoms, one sample per row.
struct EmpiricalDistribution {
    Eigen::MatrixXd samples;  // N_s x n_xi

    int n_samples() const { return static_cast<int>(samples.rows()); }
    int dim() const { return static_cast<int>(samples.cols()); }
};

struct AmbiguitySet {
    EmpiricalDistribution center;
    double radius = 0.0;  // Wasserstein radius, l1 ground metric
    PolytopicSupport support;

    AmbiguitySet(EmpiricalDistribution c, double eps, PolytopicSupport s);
};

struct RiskConfig {
    double beta = 0.1;  // CVaR level, in (0, 1]
    double rho = 1.0;   // risk-aversion weight, >= 0

    void validate() const;
};

// Constraint row C(y, xi) = y'Q xi + g'xi + f'y + h over the decision prefix
// y (length n_y) and the row's uncertainty vector xi.
struct BilinearRow {
    Eigen::MatrixXd Q;  // n_y x n_xi
    Eigen::VectorXd g;  // n_xi
    Eigen::VectorXd f;  // n_y
    double h = 0.0;
    std::string name;

    double eval(const Eigen::VectorXd& y, const Eigen::VectorXd& xi) const;
};

// max-of-two-affines integrand of the CVaR reformulation. Piece k evaluates
// <a_k(y), xi> + b_k(y), with a_k(y) = A_k y + g_k and b_k(y) = f_k'y + h_k.
struct PiecewiseAffineLoss {
    Eigen::MatrixXd A[2];  // n_xi x n_y
    Eigen::VectorXd g[2];  // n_xi
    Eigen::VectorXd f[2];  // n_y
    double h[2] = {0.0, 0.0};

    Eigen::VectorXd a(int k, const Eigen::VectorXd& y) const { return A[k] * y + g[k]; }
    double b(int k, const Eigen::VectorXd& y) const { return f[k].dot(y) + h[k]; }
    double eval(const Eigen::VectorXd& y, const Eigen::VectorXd& xi) const;
};

// Loss at a fixed decision: pieces <a_k, xi> + b_k.
struct FixedPiecewiseLoss {
    Eigen::VectorXd a1, a2;
    double b1 = 0.0, b2 = 0.0;

    double eval(const Eigen::VectorXd& xi) const;
};

FixedPiecewiseLoss at_decision(const PiecewiseAffineLoss& loss, const Eigen::VectorXd& y);

// CVaR encoding of one affine constraint row: piece 1 adds kappa(1-beta) to
// the row, piece 2 is -kappa beta, where kappa is coordinate kappa_index of y.
PiecewiseAffineLoss cvar_pieces(const BilinearRow& row, double beta, int kappa_index);

// Exact minimizer over kappa of (1/N) sum (v_i + kappa)_+ - kappa beta by
// scanning the breakpoints kappa = -v_i.
double empirical_cvar(const std::vector<double>& values, double beta);
double empirical_cvar(const Eigen::VectorXd& values, double beta);

// Handles of the auxiliary variables introduced for one worst-case row.
struct DroBlockHandles {
    int lambda_col = -1;  // -1 when the radius-zero reduction applies
    int s_col = -1;
    int sigma_col = -1;  // dual polytope multipliers, n_s * 2 * r entries
    int n_s = 0;
    int r = 0;
};

// Emits the exact dual reformulation of rho * sup_Q E[max_k(<a_k(y),xi>+b_k(y))]
// over the Wasserstein ball into the builder: epigraph rows per sample and
// piece, the dual-norm rows, sigma >= 0, and the objective term
// lambda eps + (1/N_s) sum_i s_i. The decision prefix y must occupy columns
// 0..n_y-1 of the builder. With eps = 0 the reduced sample-average block is
// emitted instead.
DroBlockHandles dro_epigraph(QpBuilder& qb, const PiecewiseAffineLoss& loss,
                             const AmbiguitySet& amb, double rho, const std::string& label);

// Grid transport-LP oracle for desk-scale duality checks (dim <= 3). The grid
// covers the support's bounding box at `resolution` points per axis, keeps
// points inside the polytope, and is augmented with the polytope vertices and
// the samples. The LP value is computed exactly through its scalar dual.
double worst_case_expectation_oracle(const FixedPiecewiseLoss& loss, const AmbiguitySet& amb,
                                     int resolution);

// Refining wrapper: doubles the resolution once and flags non-convergence.
struct OracleValue {
    double value = 0.0;
    bool converged = true;
};
OracleValue worst_case_expectation_refined(const FixedPiecewiseLoss& loss, const AmbiguitySet& amb,
                                           int resolution, double tol);

// Optimal-transport distance between two discrete distributions, l1 ground
// metric. Test utility.
double wasserstein_distance(const EmpiricalDistribution& p, const EmpiricalDistribution& q);

}  // namespace dropf
