#include <doctest.h>

#include <cstring>

#include "dropf/errors.hpp"
#include "dropf/qp.hpp"
#include "dropf/random.hpp"

using namespace dropf;

namespace {

QuadraticProgram scalar_bound_qp() {
    // min 1/2 y^2 s.t. y >= 1  (written as -y <= -1)
    QpBuilder qb;
    const int y = qb.add_var("y", 1);
    qb.obj_quad(y, y, 0.5);
    qb.start_ineq_row(-1.0);
    qb.coeff(y, -1.0);
    return qb.build();
}

// random strictly convex QP with a few equalities and inequalities
QuadraticProgram random_qp(Rng& rng, int n, int m_eq, int m_in) {
    QpBuilder qb;
    qb.add_var("y", n);
    Eigen::MatrixXd root(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) root(i, j) = rng.uniform(-1.0, 1.0);
    const Eigen::MatrixXd p = root.transpose() * root + 0.1 * Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) qb.obj_quad(i, j, i == j ? p(i, i) / 2.0 : p(i, j));
    for (int i = 0; i < n; ++i) qb.obj_linear(i, rng.uniform(-1.0, 1.0));
    for (int r = 0; r < m_eq; ++r) {
        qb.start_eq_row(rng.uniform(-1.0, 1.0));
        for (int j = 0; j < n; ++j) qb.coeff(j, rng.uniform(-1.0, 1.0));
    }
    for (int r = 0; r < m_in; ++r) {
        qb.start_ineq_row(rng.uniform(0.5, 1.5));
        for (int j = 0; j < n; ++j) qb.coeff(j, rng.uniform(-1.0, 1.0));
    }
    return qb.build();
}

}  // namespace

TEST_CASE("solve: scalar bound problem by hand") {
    const SolverResult res = solve(scalar_bound_qp());
    REQUIRE(res.status == SolveStatus::optimal);
    CHECK(res.y(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.dual_in(0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(res.objective == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("solve: matches the dense KKT oracle on a constrained random QP") {
    Rng rng(2024);
    const QuadraticProgram qp = random_qp(rng, 20, 10, 4);
    const SolverResult admm = solve(qp);
    const SolverResult oracle = kkt_oracle(qp);
    REQUIRE(admm.status == SolveStatus::optimal);
    CHECK(admm.objective ==
          doctest::Approx(oracle.objective).epsilon(1e-6));
    CHECK((admm.y - oracle.y).lpNorm<Eigen::Infinity>() < 1e-4);
}

TEST_CASE("solve: contradictory equalities are classified infeasible") {
    QpBuilder qb;
    const int y = qb.add_var("y", 1);
    qb.start_eq_row(0.0);
    qb.coeff(y, 1.0);
    qb.start_eq_row(1.0);
    qb.coeff(y, 1.0);
    const SolverResult res = solve(qb.build());
    CHECK(res.status == SolveStatus::infeasible);
    CHECK(res.certificate.size() > 0);
}

TEST_CASE("solve: unbounded direction is certified") {
    // min -y s.t. y >= 1
    QpBuilder qb;
    const int y = qb.add_var("y", 1);
    qb.obj_linear(y, -1.0);
    qb.start_ineq_row(-1.0);
    qb.coeff(y, -1.0);
    const SolverResult res = solve(qb.build());
    CHECK(res.status == SolveStatus::unbounded);
    CHECK(res.certificate.size() > 0);
}

TEST_CASE("solve: bitwise deterministic across repeated calls") {
    Rng rng(31337);
    const QuadraticProgram qp = random_qp(rng, 15, 4, 3);
    const SolverResult a = solve(qp);
    const SolverResult b = solve(qp);
    REQUIRE(a.y.size() == b.y.size());
    CHECK(std::memcmp(a.y.data(), b.y.data(), sizeof(double) * a.y.size()) == 0);
    CHECK(std::memcmp(a.dual_in.data(), b.dual_in.data(), sizeof(double) * a.dual_in.size()) == 0);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("solve: scaling the objective leaves the optimizer unchanged") {
    Rng rng(99);
    QuadraticProgram qp = random_qp(rng, 12, 3, 2);
    const SolverResult base = solve(qp);
    QuadraticProgram scaled = qp;
    scaled.P = qp.P * 7.5;
    scaled.c = qp.c * 7.5;
    const SolverResult res = solve(scaled);
    REQUIRE(base.status == SolveStatus::optimal);
    REQUIRE(res.status == SolveStatus::optimal);
    CHECK((base.y - res.y).lpNorm<Eigen::Infinity>() < 1e-5);
    CHECK(res.objective == doctest::Approx(7.5 * base.objective).epsilon(1e-5));
}

TEST_CASE("solve: polish reaches tight accuracy on a degenerate LP") {
    // min sum s_i with s_i >= v_i, s_i >= 0
    QpBuilder qb;
    const int s = qb.add_var("s", 3);
    const double vals[3] = {0.3, -0.2, 0.9};
    for (int i = 0; i < 3; ++i) {
        qb.obj_linear(s + i, 1.0);
        qb.start_ineq_row(-vals[i]);
        qb.coeff(s + i, -1.0);
        qb.start_ineq_row(0.0);
        qb.coeff(s + i, -1.0);
    }
    const SolverResult res = solve(qb.build());
    REQUIRE(res.status == SolveStatus::optimal);
    CHECK(res.objective == doctest::Approx(0.3 + 0.0 + 0.9).epsilon(1e-9));
    CHECK(res.primal_residual < 1e-8);
}

TEST_CASE("kkt_oracle: equality-only QP is a single linear solve") {
    QpBuilder qb;
    const int y = qb.add_var("y", 2);
    qb.obj_quad(y, y, 0.5);
    qb.obj_quad(y + 1, y + 1, 0.5);
    qb.start_eq_row(1.0);
    qb.coeff(y, 1.0);
    qb.coeff(y + 1, 1.0);
    const SolverResult res = kkt_oracle(qb.build());
    CHECK(res.y(0) == doctest::Approx(0.5));
    CHECK(res.y(1) == doctest::Approx(0.5));
}

TEST_CASE("kkt_oracle: active-set enumeration finds both active inequalities") {
    // min (y1-2)^2 + (y2-2)^2 s.t. y1 <= 1, y2 <= 1
    QpBuilder qb;
    const int y = qb.add_var("y", 2);
    qb.obj_quad(y, y, 1.0);
    qb.obj_quad(y + 1, y + 1, 1.0);
    qb.obj_linear(y, -4.0);
    qb.obj_linear(y + 1, -4.0);
    qb.start_ineq_row(1.0);
    qb.coeff(y, 1.0);
    qb.start_ineq_row(1.0);
    qb.coeff(y + 1, 1.0);
    const SolverResult res = kkt_oracle(qb.build());
    CHECK(res.y(0) == doctest::Approx(1.0));
    CHECK(res.y(1) == doctest::Approx(1.0));
    // complementary slackness: both duals active and positive
    CHECK(res.dual_in(0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(res.dual_in(1) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("validate: indefinite P rejected at construction") {
    QpBuilder qb;
    const int y = qb.add_var("y", 2);
    qb.obj_quad(y, y, 0.5);
    qb.obj_quad(y + 1, y + 1, -0.5);
    CHECK_THROWS_AS(qb.build(), ValidationError);
}

TEST_CASE("dump/load round trip preserves the problem and layout") {
    Rng rng(4);
    const QuadraticProgram qp = random_qp(rng, 8, 2, 2);
    std::vector<std::pair<std::string, std::pair<int, int>>> layout{{"y", {0, 8}}};
    const std::string path = "/tmp/dropf_qp_dump_test.txt";
    dump_problem(qp, layout, path);
    const auto [loaded, layout2] = load_problem(path);
    CHECK(loaded.n == qp.n);
    CHECK(layout2.size() == 1);
    CHECK(layout2[0].first == "y");
    const SolverResult a = solve(qp);
    const SolverResult b = solve(loaded);
    CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-9));
}
