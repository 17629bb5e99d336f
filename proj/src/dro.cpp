#include "dropf/dro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "dropf/errors.hpp"
#include "dropf/simplex.hpp"

namespace dropf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

PolytopicSupport::PolytopicSupport(Eigen::MatrixXd h, Eigen::VectorXd dd)
    : H(std::move(h)), d(std::move(dd)) {
    if (H.rows() != d.size()) throw ValidationError("support: H/d dimension mismatch");
    if (H.rows() == 0) throw ValidationError("support: empty constraint set is unbounded");

    const int n = dim();
    const LpResult feas = simplex_solve_ineq(Eigen::VectorXd::Zero(n), H, d);
    if (feas.status == LpStatus::infeasible)
        throw ValidationError("support: polytope is empty");
    for (int j = 0; j < n; ++j) {
        for (const double sgn : {1.0, -1.0}) {
            Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
            c(j) = sgn;  // min sgn*xi_j, unbounded in either direction -> not a polytope
            const LpResult sup = simplex_solve_ineq(c, H, d);
            if (sup.status == LpStatus::unbounded)
                throw ValidationError("support: polytope is unbounded in coordinate " +
                                      std::to_string(j));
        }
    }
}

PolytopicSupport PolytopicSupport::box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    const int n = static_cast<int>(lo.size());
    if (hi.size() != n) throw ValidationError("support box: dimension mismatch");
    for (int j = 0; j < n; ++j)
        if (lo(j) > hi(j)) throw ValidationError("support box: lo > hi");
    Eigen::MatrixXd h(2 * n, n);
    Eigen::VectorXd d(2 * n);
    h.topRows(n) = Eigen::MatrixXd::Identity(n, n);
    h.bottomRows(n) = -Eigen::MatrixXd::Identity(n, n);
    d.head(n) = hi;
    d.tail(n) = -lo;
    return PolytopicSupport(h, d);
}

bool PolytopicSupport::contains(const Eigen::VectorXd& xi, double tol) const {
    return ((H * xi - d).array() <= tol).all();
}

std::vector<Eigen::VectorXd> PolytopicSupport::vertices() const {
    const int n = dim();
    const int r = static_cast<int>(H.rows());
    if (n > 3) throw NumericalError("support vertices: dimension cap (3) exceeded");
    std::vector<Eigen::VectorXd> verts;
    std::vector<int> comb(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) comb[static_cast<size_t>(i)] = i;
    while (true) {
        Eigen::MatrixXd sub(n, n);
        Eigen::VectorXd rhs(n);
        for (int i = 0; i < n; ++i) {
            sub.row(i) = H.row(comb[static_cast<size_t>(i)]);
            rhs(i) = d(comb[static_cast<size_t>(i)]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
        if (lu.isInvertible()) {
            const Eigen::VectorXd v = lu.solve(rhs);
            if (contains(v, 1e-8)) {
                bool dup = false;
                for (const auto& w : verts)
                    if ((w - v).lpNorm<Eigen::Infinity>() < 1e-9) dup = true;
                if (!dup) verts.push_back(v);
            }
        }
        int i = n - 1;
        while (i >= 0 && comb[static_cast<size_t>(i)] == r - n + i) --i;
        if (i < 0) break;
        ++comb[static_cast<size_t>(i)];
        for (int j = i + 1; j < n; ++j)
            comb[static_cast<size_t>(j)] = comb[static_cast<size_t>(j - 1)] + 1;
    }
    return verts;
}

void PolytopicSupport::bounding_box(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
    const int n = dim();
    lo.resize(n);
    hi.resize(n);
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        c(j) = 1.0;
        lo(j) = simplex_solve_ineq(c, H, d).objective;
        c(j) = -1.0;
        hi(j) = -simplex_solve_ineq(c, H, d).objective;
    }
}

AmbiguitySet::AmbiguitySet(EmpiricalDistribution c, double eps, PolytopicSupport s)
    : center(std::move(c)), radius(eps), support(std::move(s)) {
    if (radius < 0.0) throw ValidationError("ambiguity set: radius must be nonnegative");
    if (center.n_samples() < 1) throw ValidationError("ambiguity set: needs at least one sample");
    if (center.dim() != support.dim())
        throw ValidationError("ambiguity set: sample/support dimension mismatch");
    for (int i = 0; i < center.n_samples(); ++i) {
        if (!support.contains(center.samples.row(i).transpose(), 1e-9))
            throw ValidationError("ambiguity set: training sample " + std::to_string(i) +
                                  " lies outside the declared support");
    }
}

void RiskConfig::validate() const {
    if (!(beta > 0.0 && beta <= 1.0)) throw ValidationError("risk: beta must lie in (0, 1]");
    if (rho < 0.0) throw ValidationError("risk: rho must be nonnegative");
}

double BilinearRow::eval(const Eigen::VectorXd& y, const Eigen::VectorXd& xi) const {
    return y.dot(Q * xi) + g.dot(xi) + f.dot(y) + h;
}

double PiecewiseAffineLoss::eval(const Eigen::VectorXd& y, const Eigen::VectorXd& xi) const {
    return std::max(a(0, y).dot(xi) + b(0, y), a(1, y).dot(xi) + b(1, y));
}

double FixedPiecewiseLoss::eval(const Eigen::VectorXd& xi) const {
    return std::max(a1.dot(xi) + b1, a2.dot(xi) + b2);
}

FixedPiecewiseLoss at_decision(const PiecewiseAffineLoss& loss, const Eigen::VectorXd& y) {
    FixedPiecewiseLoss fx;
    fx.a1 = loss.a(0, y);
    fx.b1 = loss.b(0, y);
    fx.a2 = loss.a(1, y);
    fx.b2 = loss.b(1, y);
    return fx;
}

PiecewiseAffineLoss cvar_pieces(const BilinearRow& row, double beta, int kappa_index) {
    if (!(beta > 0.0 && beta <= 1.0)) throw ValidationError("cvar_pieces: beta must lie in (0, 1]");
    const int n_y = static_cast<int>(row.f.size());
    const int n_xi = static_cast<int>(row.g.size());
    if (kappa_index < 0 || kappa_index >= n_y)
        throw ValidationError("cvar_pieces: kappa index outside the decision vector");

    PiecewiseAffineLoss loss;
    loss.A[0] = row.Q.transpose();
    loss.g[0] = row.g;
    loss.f[0] = row.f;
    loss.f[0](kappa_index) += 1.0 - beta;
    loss.h[0] = row.h;

    loss.A[1] = Eigen::MatrixXd::Zero(n_xi, n_y);
    loss.g[1] = Eigen::VectorXd::Zero(n_xi);
    loss.f[1] = Eigen::VectorXd::Zero(n_y);
    loss.f[1](kappa_index) = -beta;
    loss.h[1] = 0.0;
    return loss;
}

double empirical_cvar(const std::vector<double>& values, double beta) {
    return empirical_cvar(
        Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<long>(values.size())), beta);
}

double empirical_cvar(const Eigen::VectorXd& values, double beta) {
    if (values.size() < 1) throw ValidationError("empirical_cvar: needs at least one value");
    if (!(beta > 0.0 && beta <= 1.0)) throw ValidationError("empirical_cvar: beta outside (0, 1]");
    const double n = static_cast<double>(values.size());
    double best = kInf;
    for (int j = 0; j < values.size(); ++j) {
        const double kappa = -values(j);
        double acc = 0.0;
        for (int i = 0; i < values.size(); ++i) acc += std::max(values(i) + kappa, 0.0);
        best = std::min(best, acc / n - kappa * beta);
    }
    return best;
}

DroBlockHandles dro_epigraph(QpBuilder& qb, const PiecewiseAffineLoss& loss,
                             const AmbiguitySet& amb, double rho, const std::string& label) {
    const int n_s = amb.center.n_samples();
    const int n_xi = amb.center.dim();
    const int r = static_cast<int>(amb.support.H.rows());
    const double inv_n = 1.0 / static_cast<double>(n_s);

    DroBlockHandles hd;
    hd.n_s = n_s;
    hd.r = r;
    hd.s_col = qb.add_var("s[" + label + "]", n_s);
    for (int i = 0; i < n_s; ++i) qb.obj_linear(hd.s_col + i, inv_n);

    const bool reduced = amb.radius == 0.0;  // sample-average block, lambda plays no role
    // pieces with identically zero xi-coefficient need no polytope multiplier:
    // sigma = 0 is optimal there, so only the epigraph row is emitted
    const bool trivial[2] = {loss.A[0].isZero(0.0) && loss.g[0].isZero(0.0),
                             loss.A[1].isZero(0.0) && loss.g[1].isZero(0.0)};
    const int n_dual = (trivial[0] ? 0 : 1) + (trivial[1] ? 0 : 1);
    if (!reduced) {
        hd.lambda_col = qb.add_var("lambda[" + label + "]", 1);
        qb.obj_linear(hd.lambda_col, amb.radius);
        if (n_dual > 0) {
            hd.sigma_col = qb.add_var("varsigma[" + label + "]", n_s * n_dual * r);
        } else {  // no dual-norm rows left to imply lambda >= 0
            qb.start_ineq_row(0.0);
            qb.coeff(hd.lambda_col, -1.0);
        }
    }

    const int n_y = static_cast<int>(loss.f[0].size());
    for (int i = 0; i < n_s; ++i) {
        const Eigen::VectorXd xi_hat = amb.center.samples.row(i).transpose();
        const Eigen::VectorXd slack = amb.support.d - amb.support.H * xi_hat;
        int dual_at = 0;
        for (int k = 0; k < 2; ++k) {
            // rho(b_k(y) + <a_k(y), xi_i> + <sigma, d - H xi_i>) <= s_i
            const Eigen::VectorXd y_coef = rho * (loss.f[k] + loss.A[k].transpose() * xi_hat);
            const double constant = rho * (loss.h[k] + loss.g[k].dot(xi_hat));
            qb.start_ineq_row(-constant);
            for (int j = 0; j < n_y; ++j) qb.coeff(j, y_coef(j));
            qb.coeff(hd.s_col + i, -1.0);
            if (!reduced && !trivial[k]) {
                const int sig0 = hd.sigma_col + (i * n_dual + dual_at) * r;
                ++dual_at;
                for (int t = 0; t < r; ++t) qb.coeff(sig0 + t, slack(t));
                // |(H' sigma - rho a_k(y))_j| <= lambda, expanded per coordinate
                for (int j = 0; j < n_xi; ++j) {
                    for (const double sgn : {1.0, -1.0}) {
                        qb.start_ineq_row(sgn * rho * loss.g[k](j));
                        for (int t = 0; t < r; ++t)
                            qb.coeff(sig0 + t, sgn * amb.support.H(t, j));
                        for (int c = 0; c < n_y; ++c) {
                            const double v = -sgn * rho * loss.A[k](j, c);
                            qb.coeff(c, v);
                        }
                        qb.coeff(hd.lambda_col, -1.0);
                    }
                }
                for (int t = 0; t < r; ++t) {  // sigma >= 0
                    qb.start_ineq_row(0.0);
                    qb.coeff(sig0 + t, -1.0);
                }
            }
        }
    }
    return hd;
}

namespace {

// dual of the grid transport LP:
//   min_{mu >= 0}  mu eps + (1/N) sum_i max_g (L_g - mu c_ig)
// convex piecewise linear in the scalar mu; minimized by subgradient bisection
double grid_lp_value(const Eigen::VectorXd& loss_at, const Eigen::MatrixXd& cost, double eps) {
    const int n_s = static_cast<int>(cost.rows());
    const int n_g = static_cast<int>(cost.cols());
    const double inv_n = 1.0 / static_cast<double>(n_s);

    auto eval = [&](double mu, double& subgrad) {
        double total = mu * eps;
        subgrad = eps;
        for (int i = 0; i < n_s; ++i) {
            double best = -kInf;
            double best_c = 0.0;
            for (int g = 0; g < n_g; ++g) {
                const double v = loss_at(g) - mu * cost(i, g);
                if (v > best + 1e-15 || (std::abs(v - best) <= 1e-15 && cost(i, g) < best_c)) {
                    best = v;
                    best_c = cost(i, g);
                }
            }
            total += inv_n * best;
            subgrad -= inv_n * best_c;
        }
        return total;
    };

    const double spread = loss_at.maxCoeff() - loss_at.minCoeff();
    double c_min = kInf;
    for (int i = 0; i < n_s; ++i)
        for (int g = 0; g < n_g; ++g)
            if (cost(i, g) > 1e-12) c_min = std::min(c_min, cost(i, g));
    if (!std::isfinite(c_min)) c_min = 1.0;
    double lo = 0.0, hi = spread / c_min + 1.0;

    double sg = 0.0;
    double best = eval(lo, sg);
    if (sg >= 0.0) return best;  // minimizer at mu = 0
    best = std::min(best, eval(hi, sg));
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double v = eval(mid, sg);
        best = std::min(best, v);
        if (sg < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    best = std::min(best, eval(0.5 * (lo + hi), sg));
    return best;
}

Eigen::MatrixXd oracle_grid(const FixedPiecewiseLoss& loss, const AmbiguitySet& amb,
                            int resolution) {
    const int n = amb.support.dim();
    Eigen::VectorXd lo, hi;
    amb.support.bounding_box(lo, hi);

    std::vector<Eigen::VectorXd> pts;
    std::vector<int> counter(static_cast<size_t>(n), 0);
    while (true) {
        Eigen::VectorXd p(n);
        for (int j = 0; j < n; ++j) {
            const double t = resolution > 1
                                 ? static_cast<double>(counter[static_cast<size_t>(j)]) /
                                       static_cast<double>(resolution - 1)
                                 : 0.5;
            p(j) = lo(j) + t * (hi(j) - lo(j));
        }
        if (amb.support.contains(p, 1e-9)) pts.push_back(p);
        int j = 0;
        while (j < n && ++counter[static_cast<size_t>(j)] == resolution) {
            counter[static_cast<size_t>(j)] = 0;
            ++j;
        }
        if (j == n) break;
    }
    for (const auto& v : amb.support.vertices()) pts.push_back(v);
    for (int i = 0; i < amb.center.n_samples(); ++i)
        pts.push_back(amb.center.samples.row(i).transpose());

    // The inner maximand loss(xi) - mu |xi - sample|_1 is piecewise affine;
    // its maximizers sit on vertices of the arrangement of the support faces,
    // the piece-switch hyperplane, and the l1 kink planes through each
    // sample. Adding those vertices makes the grid LP exact for such losses.
    for (int i = 0; i < amb.center.n_samples(); ++i) {
        const Eigen::VectorXd hat = amb.center.samples.row(i).transpose();
        std::vector<Eigen::RowVectorXd> planes;
        std::vector<double> offs;
        for (int r = 0; r < amb.support.H.rows(); ++r) {
            planes.emplace_back(amb.support.H.row(r));
            offs.push_back(amb.support.d(r));
        }
        planes.emplace_back((loss.a1 - loss.a2).transpose());
        offs.push_back(loss.b2 - loss.b1);
        for (int j = 0; j < n; ++j) {
            Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
            e(j) = 1.0;
            planes.emplace_back(e);
            offs.push_back(hat(j));
        }
        const int np = static_cast<int>(planes.size());
        std::vector<int> comb(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) comb[static_cast<size_t>(j)] = j;
        while (true) {
            Eigen::MatrixXd sub(n, n);
            Eigen::VectorXd rhs(n);
            for (int j = 0; j < n; ++j) {
                sub.row(j) = planes[static_cast<size_t>(comb[static_cast<size_t>(j)])];
                rhs(j) = offs[static_cast<size_t>(comb[static_cast<size_t>(j)])];
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
            if (lu.isInvertible()) {
                const Eigen::VectorXd v = lu.solve(rhs);
                if (amb.support.contains(v, 1e-9)) pts.push_back(v);
            }
            int j = n - 1;
            while (j >= 0 && comb[static_cast<size_t>(j)] == np - n + j) --j;
            if (j < 0) break;
            ++comb[static_cast<size_t>(j)];
            for (int k = j + 1; k < n; ++k)
                comb[static_cast<size_t>(k)] = comb[static_cast<size_t>(k - 1)] + 1;
        }
    }

    Eigen::MatrixXd grid(static_cast<int>(pts.size()), n);
    for (size_t i = 0; i < pts.size(); ++i) grid.row(static_cast<int>(i)) = pts[i].transpose();
    return grid;
}

}  // namespace

double worst_case_expectation_oracle(const FixedPiecewiseLoss& loss, const AmbiguitySet& amb,
                                     int resolution) {
    if (amb.support.dim() > 3)
        throw NumericalError("worst_case_expectation_oracle: dimension cap (3) exceeded");
    const int n_s = amb.center.n_samples();
    if (amb.radius == 0.0) {
        double acc = 0.0;
        for (int i = 0; i < n_s; ++i) acc += loss.eval(amb.center.samples.row(i).transpose());
        return acc / static_cast<double>(n_s);
    }

    const Eigen::MatrixXd grid = oracle_grid(loss, amb, resolution);
    const int n_g = static_cast<int>(grid.rows());
    Eigen::VectorXd loss_at(n_g);
    for (int g = 0; g < n_g; ++g) loss_at(g) = loss.eval(grid.row(g).transpose());
    Eigen::MatrixXd cost(n_s, n_g);
    for (int i = 0; i < n_s; ++i)
        for (int g = 0; g < n_g; ++g)
            cost(i, g) = (grid.row(g) - amb.center.samples.row(i)).lpNorm<1>();
    return grid_lp_value(loss_at, cost, amb.radius);
}

OracleValue worst_case_expectation_refined(const FixedPiecewiseLoss& loss, const AmbiguitySet& amb,
                                           int resolution, double tol) {
    OracleValue out;
    const double coarse = worst_case_expectation_oracle(loss, amb, resolution);
    const double fine = worst_case_expectation_oracle(loss, amb, 2 * resolution);
    out.value = fine;
    out.converged = std::abs(fine - coarse) <= tol;
    return out;
}

double wasserstein_distance(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
    if (p.dim() != q.dim()) throw ValidationError("wasserstein_distance: dimension mismatch");
    const int np = p.n_samples();
    const int nq = q.n_samples();
    // transport LP: min sum c_ij pi_ij, row sums 1/np, column sums 1/nq
    Eigen::VectorXd c(np * nq);
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < nq; ++j)
            c(i * nq + j) = (p.samples.row(i) - q.samples.row(j)).lpNorm<1>();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(np + nq, np * nq);
    Eigen::VectorXd b(np + nq);
    for (int i = 0; i < np; ++i) {
        for (int j = 0; j < nq; ++j) a(i, i * nq + j) = 1.0;
        b(i) = 1.0 / static_cast<double>(np);
    }
    for (int j = 0; j < nq; ++j) {
        for (int i = 0; i < np; ++i) a(np + j, i * nq + j) = 1.0;
        b(np + j) = 1.0 / static_cast<double>(nq);
    }
    const LpResult res = simplex_solve(c, a, b);
    if (res.status != LpStatus::optimal)
        throw NumericalError("wasserstein_distance: transport LP did not solve");
    return res.objective;
}

}  // namespace dropf
