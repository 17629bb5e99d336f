#include "dropf/linearization.hpp"

#include <cmath>
#include <fstream>

#include "dropf/errors.hpp"

namespace dropf {

Eigen::VectorXcd nominal_voltage(const AdmittanceMatrix& adm, Complex v0) {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(adm.reduced);
    if (!lu.isInvertible())
        throw NumericalError("nominal_voltage: reduced admittance matrix is singular");
    // no-load current balance: Y v + y0 V0 = 0
    return lu.solve((-adm.y0 * v0).eval());
}

VoltageLinearization build_sensitivities(const AdmittanceMatrix& adm, Complex v0) {
    const int n = static_cast<int>(adm.reduced.rows());
    VoltageLinearization lin;
    lin.v_bar = nominal_voltage(adm, v0);
    lin.a = lin.v_bar.cwiseAbs();
    for (int i = 0; i < n; ++i) {
        if (lin.a(i) <= 0.0)
            throw NumericalError("build_sensitivities: zero nominal voltage magnitude at bus " +
                                 std::to_string(i + 1));
    }

    Eigen::FullPivLU<Eigen::MatrixXcd> lu(adm.reduced);
    const Eigen::MatrixXcd z = lu.solve(Eigen::MatrixXcd::Identity(n, n));
    const Eigen::MatrixXd z_re = z.real();
    const Eigen::MatrixXd z_im = z.imag();

    Eigen::VectorXd cos_t(n), sin_t(n);
    for (int i = 0; i < n; ++i) {
        const double theta = std::arg(lin.v_bar(i));
        cos_t(i) = std::cos(theta) / lin.a(i);
        sin_t(i) = std::sin(theta) / lin.a(i);
    }

    lin.M = z_re * cos_t.asDiagonal() - z_im * sin_t.asDiagonal();
    lin.N = z_im * cos_t.asDiagonal() + z_re * sin_t.asDiagonal();
    lin.H = lin.M + Complex(0, 1) * lin.N;
    lin.J = lin.N - Complex(0, 1) * lin.M;
    return lin;
}

Eigen::VectorXd approx_voltage_magnitude(const VoltageLinearization& lin,
                                         const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != lin.M.cols() || q.size() != lin.N.cols())
        throw ValidationError("approx_voltage_magnitude: dimension mismatch");
    return lin.M * p + lin.N * q + lin.a;
}

void write_linearization_csv(const VoltageLinearization& lin, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    const int n = static_cast<int>(lin.a.size());
    out << "matrix,row";
    for (int j = 0; j < n; ++j) out << ",bus" << (j + 1);
    out << "\n";
    out.precision(17);
    auto emit = [&](const char* name, const Eigen::MatrixXd& m) {
        for (int i = 0; i < m.rows(); ++i) {
            out << name << "," << (i + 1);
            for (int j = 0; j < m.cols(); ++j) out << "," << m(i, j);
            out << "\n";
        }
    };
    emit("M", lin.M);
    emit("N", lin.N);
    emit("a", lin.a.transpose());
}

}  // namespace dropf
