#include <doctest.h>

#include "dropf/errors.hpp"
#include "dropf/linearization.hpp"
#include "dropf/network.hpp"

using namespace dropf;

namespace {

NetworkModel feeder4() { return parse_case(std::string(DROPF_DATA_DIR) + "/feeder4.json"); }

}  // namespace

TEST_CASE("nominal voltage: lossless no-load propagation on a single line") {
    const NetworkModel m = parse_case(std::string(DROPF_DATA_DIR) + "/feeder2.json");
    const AdmittanceMatrix adm = build_admittance(m);
    const Eigen::VectorXcd v_bar = nominal_voltage(adm, Complex(1.0, 0.0));
    CHECK(std::abs(v_bar(0) - Complex(1.0, 0.0)) < 1e-14);
}

TEST_CASE("nominal voltage: matches the AC oracle at zero injections") {
    const NetworkModel m = feeder4();
    const AdmittanceMatrix adm = build_admittance(m);
    const Eigen::VectorXcd v_bar = nominal_voltage(adm, Complex(1.0, 0.0));
    const Eigen::VectorXcd v_ac =
        ac_power_flow(m, {Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)}, 1e-13);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(v_bar(i) - v_ac(i + 1)) < 1e-10);
}

TEST_CASE("nominal voltage: singular reduced block rejected") {
    AdmittanceMatrix adm;
    adm.reduced = Eigen::MatrixXcd::Zero(2, 2);
    adm.y0 = Eigen::VectorXcd::Zero(2);
    CHECK_THROWS_AS(nominal_voltage(adm, Complex(1.0, 0.0)), NumericalError);
}

TEST_CASE("sensitivities: resistive network collapses to the impedance row") {
    const std::string text = R"({
      "base_mva": 1.0,
      "buses": [
        {"id": 0, "kind": "slack", "vmin": 0.9, "vmax": 1.1},
        {"id": 1, "kind": "pq", "vmin": 0.9, "vmax": 1.1}
      ],
      "lines": [{"from": 0, "to": 1, "g": 4.0, "b": 0.0, "limit": 1.0}]
    })";
    const AdmittanceMatrix adm = build_admittance(parse_case_text(text));
    const VoltageLinearization lin = build_sensitivities(adm, Complex(1.0, 0.0));
    // theta = 0, |v_bar| = 1: M = Re(Y^-1) = 1/4, N = Im(Y^-1) = 0
    CHECK(lin.M(0, 0) == doctest::Approx(0.25));
    CHECK(lin.N(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("sensitivities: M and N match central finite differences of the AC oracle") {
    const NetworkModel m = feeder4();
    const VoltageLinearization lin =
        build_sensitivities(build_admittance(m), Complex(1.0, 0.0));
    const double h = 1e-4;
    for (int j = 0; j < 3; ++j) {
        Eigen::VectorXd dp = Eigen::VectorXd::Zero(3);
        dp(j) = h;
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
        const Eigen::VectorXd up = ac_power_flow(m, {dp, zero}, 1e-12).tail(3).cwiseAbs();
        const Eigen::VectorXd dn = ac_power_flow(m, {(-dp).eval(), zero}, 1e-12).tail(3).cwiseAbs();
        const Eigen::VectorXd col = (up - dn) / (2.0 * h);
        CHECK((col - lin.M.col(j)).lpNorm<Eigen::Infinity>() < 1e-5);

        const Eigen::VectorXd upq = ac_power_flow(m, {zero, dp}, 1e-12).tail(3).cwiseAbs();
        const Eigen::VectorXd dnq =
            ac_power_flow(m, {zero, (-dp).eval()}, 1e-12).tail(3).cwiseAbs();
        const Eigen::VectorXd colq = (upq - dnq) / (2.0 * h);
        CHECK((colq - lin.N.col(j)).lpNorm<Eigen::Infinity>() < 1e-5);
    }
}

TEST_CASE("sensitivities: rectangular model recomposition is the magnitude model") {
    const NetworkModel m = feeder4();
    const VoltageLinearization lin =
        build_sensitivities(build_admittance(m), Complex(1.0, 0.0));
    Eigen::VectorXd p(3), q(3);
    p << 0.03, -0.05, 0.02;
    q << -0.01, 0.02, 0.04;
    const Eigen::VectorXd mag = approx_voltage_magnitude(lin, p, q);
    const Eigen::VectorXd via_rect = lin.a + (lin.H * p + lin.J * q).real();
    CHECK((mag - via_rect).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("magnitude model: exactness at the expansion point and affinity") {
    const NetworkModel m = feeder4();
    const VoltageLinearization lin =
        build_sensitivities(build_admittance(m), Complex(1.0, 0.0));
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
    CHECK((approx_voltage_magnitude(lin, zero, zero) - lin.a).norm() == doctest::Approx(0.0));

    Eigen::VectorXd p(3);
    p << 0.05, -0.02, 0.04;
    const Eigen::VectorXd up = approx_voltage_magnitude(lin, p, zero) - lin.a;
    const Eigen::VectorXd dn = approx_voltage_magnitude(lin, (-p).eval(), zero) - lin.a;
    CHECK((up + dn).lpNorm<Eigen::Infinity>() < 1e-14);  // affine model flips exactly
}

TEST_CASE("magnitude model: close to the AC oracle at 0.05 p.u. injections") {
    const NetworkModel m = feeder4();
    const VoltageLinearization lin =
        build_sensitivities(build_admittance(m), Complex(1.0, 0.0));
    Eigen::VectorXd p(3), q(3);
    p << -0.05, 0.05, 0.05;
    q << -0.02, 0.01, -0.02;
    const Eigen::VectorXd approx = approx_voltage_magnitude(lin, p, q);
    const Eigen::VectorXd exact = ac_power_flow(m, {p, q}, 1e-12).tail(3).cwiseAbs();
    CHECK((approx - exact).lpNorm<Eigen::Infinity>() < 5e-3);
}

TEST_CASE("magnitude model: error decays quadratically when injections shrink") {
    const NetworkModel m = feeder4();
    const VoltageLinearization lin =
        build_sensitivities(build_admittance(m), Complex(1.0, 0.0));
    Eigen::VectorXd p(3), q(3);
    p << -0.3, 0.25, 0.3;
    q << -0.1, 0.08, -0.12;
    auto max_err = [&](double scale) {
        const Eigen::VectorXd ps = scale * p, qs = scale * q;
        const Eigen::VectorXd approx = approx_voltage_magnitude(lin, ps, qs);
        const Eigen::VectorXd exact = ac_power_flow(m, {ps, qs}, 1e-12).tail(3).cwiseAbs();
        return (approx - exact).lpNorm<Eigen::Infinity>();
    };
    CHECK(max_err(1.0) / max_err(0.5) >= 3.0);
}

TEST_CASE("sensitivities: positive diagonal on the radial fixture") {
    const NetworkModel m = feeder4();
    const VoltageLinearization lin =
        build_sensitivities(build_admittance(m), Complex(1.0, 0.0));
    for (int i = 0; i < 3; ++i) {
        CHECK(lin.M(i, i) > 0.0);
        CHECK(lin.N(i, i) > 0.0);
    }
}
