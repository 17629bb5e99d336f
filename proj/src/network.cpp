#include "dropf/network.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dropf/errors.hpp"

namespace dropf {

using json = nlohmann::json;

double DeviceSpec::profile_at(int t) const {
    if (profile.empty()) return 0.0;
    if (profile.size() == 1) return profile[0];
    if (t < 0 || t >= static_cast<int>(profile.size()))
        throw ValidationError("device " + std::to_string(id) + ": profile has no stage " +
                              std::to_string(t));
    return profile[static_cast<size_t>(t)];
}

double DeviceSpec::q_profile_at(int t) const {
    if (q_profile.empty()) return 0.0;
    if (q_profile.size() == 1) return q_profile[0];
    if (t < 0 || t >= static_cast<int>(q_profile.size()))
        throw ValidationError("device " + std::to_string(id) + ": q_profile has no stage " +
                              std::to_string(t));
    return q_profile[static_cast<size_t>(t)];
}

namespace {

void require_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed,
                  const std::set<std::string>& required) {
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key()))
            throw ParseError(where + ": unknown field '" + item.key() + "'");
    }
    for (const auto& key : required) {
        if (!obj.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
    }
}

double num(const json& obj, const std::string& key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ParseError(where + ": field '" + key + "' must be a number");
    return v.get<double>();
}

double num_or(const json& obj, const std::string& key, const std::string& where, double dflt) {
    if (!obj.contains(key)) return dflt;
    return num(obj, key, where);
}

int integer(const json& obj, const std::string& key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) throw ParseError(where + ": field '" + key + "' must be an integer");
    return v.get<int>();
}

std::vector<double> num_list(const json& v, const std::string& where) {
    std::vector<double> out;
    if (v.is_number()) {
        out.push_back(v.get<double>());
        return out;
    }
    if (!v.is_array()) throw ParseError(where + ": expected number or array of numbers");
    for (const auto& x : v) {
        if (!x.is_number()) throw ParseError(where + ": expected numeric array entries");
        out.push_back(x.get<double>());
    }
    return out;
}

void parse_cost(const json& obj, const std::string& key, const std::string& where, double& lin,
                double& quad) {
    if (!obj.contains(key)) return;
    const auto& c = obj.at(key);
    require_keys(c, where + "." + key, {"lin", "quad"}, {});
    lin = num_or(c, "lin", where, 0.0);
    quad = num_or(c, "quad", where, 0.0);
    if (quad < 0.0) throw ValidationError(where + ": quadratic cost must be nonnegative");
}

DeviceSpec parse_device(const json& dj) {
    if (!dj.is_object()) throw ParseError("devices: entries must be objects");
    if (!dj.contains("id") || !dj.contains("kind") || !dj.contains("bus"))
        throw ParseError("devices: entries need 'id', 'bus' and 'kind'");
    DeviceSpec d;
    d.id = integer(dj, "id", "device");
    const std::string where = "device " + std::to_string(d.id);
    d.bus = integer(dj, "bus", where);
    const std::string kind = dj.at("kind").get<std::string>();

    if (kind == "generator") {
        require_keys(dj, where,
                     {"id", "bus", "kind", "p_min", "p_max", "ramp", "p0", "cost"},
                     {"p_min", "p_max", "ramp", "p0"});
        d.kind = DeviceKind::generator;
        d.p_min = num(dj, "p_min", where);
        d.p_max = num(dj, "p_max", where);
        d.ramp = num(dj, "ramp", where);
        d.p0 = num(dj, "p0", where);
        parse_cost(dj, "cost", where, d.cost_lin, d.cost_quad);
        if (d.p_min > d.p_max) throw ValidationError(where + ": p_min > p_max");
        if (d.ramp <= 0.0) throw ValidationError(where + ": ramp must be positive");
    } else if (kind == "battery") {
        require_keys(dj, where,
                     {"id", "bus", "kind", "p_min", "p_max", "soc_min", "soc_max", "soc0",
                      "leakage", "p0", "cost"},
                     {"p_min", "p_max", "soc_min", "soc_max", "soc0"});
        d.kind = DeviceKind::battery;
        d.p_min = num(dj, "p_min", where);
        d.p_max = num(dj, "p_max", where);
        d.soc_min = num(dj, "soc_min", where);
        d.soc_max = num(dj, "soc_max", where);
        d.soc0 = num(dj, "soc0", where);
        d.p0 = num_or(dj, "p0", where, 0.0);
        d.leakage = num_or(dj, "leakage", where, 1.0);
        parse_cost(dj, "cost", where, d.cost_lin, d.cost_quad);
        if (d.p_min > d.p_max) throw ValidationError(where + ": p_min > p_max");
        if (d.soc_min > d.soc_max) throw ValidationError(where + ": soc_min > soc_max");
        if (d.soc0 < d.soc_min || d.soc0 > d.soc_max)
            throw ValidationError(where + ": soc0 outside [soc_min, soc_max]");
        if (d.leakage <= 0.0 || d.leakage > 1.0)
            throw ValidationError(where + ": leakage must lie in (0, 1]");
    } else if (kind == "curtailable_res") {
        require_keys(dj, where,
                     {"id", "bus", "kind", "forecast", "error_col", "q_min", "q_max", "q_cost",
                      "curtail_cost"},
                     {"forecast"});
        d.kind = DeviceKind::curtailable_res;
        d.profile = num_list(dj.at("forecast"), where + ".forecast");
        if (dj.contains("error_col")) d.error_col = integer(dj, "error_col", where);
        if (dj.contains("q_min") != dj.contains("q_max"))
            throw ParseError(where + ": q_min and q_max must be given together");
        if (dj.contains("q_min")) {
            d.q_capable = true;
            d.q_min = num(dj, "q_min", where);
            d.q_max = num(dj, "q_max", where);
            if (d.q_min > d.q_max) throw ValidationError(where + ": q_min > q_max");
        }
        parse_cost(dj, "q_cost", where, d.q_cost_lin, d.q_cost_quad);
        parse_cost(dj, "curtail_cost", where, d.curtail_cost_lin, d.curtail_cost_quad);
    } else if (kind == "fixed_load") {
        require_keys(dj, where,
                     {"id", "bus", "kind", "profile", "error_col", "q_profile", "q_error_col"},
                     {"profile"});
        d.kind = DeviceKind::fixed_load;
        d.profile = num_list(dj.at("profile"), where + ".profile");
        if (dj.contains("error_col")) d.error_col = integer(dj, "error_col", where);
        if (dj.contains("q_profile")) d.q_profile = num_list(dj.at("q_profile"), where);
        if (dj.contains("q_error_col")) d.q_error_col = integer(dj, "q_error_col", where);
    } else {
        throw ParseError(where + ": unknown device kind '" + kind + "'");
    }
    return d;
}

NetworkModel parse_case_json(const json& root) {
    if (!root.is_object()) throw ParseError("case: top level must be an object");
    require_keys(root, "case", {"base_mva", "v_slack", "buses", "lines", "devices"},
                 {"base_mva", "buses", "lines"});

    NetworkModel model;
    model.base_mva = num(root, "base_mva", "case");
    if (model.base_mva <= 0.0) throw ValidationError("case: base_mva must be positive");
    model.v_slack = num_or(root, "v_slack", "case", 1.0);
    if (model.v_slack <= 0.0) throw ValidationError("case: v_slack must be positive");

    const auto& buses = root.at("buses");
    if (!buses.is_array() || buses.empty()) throw ParseError("case: 'buses' must be a nonempty array");
    std::set<int> seen_ids;
    int slack_count = 0;
    for (const auto& bj : buses) {
        const std::string where = "bus";
        require_keys(bj, where, {"id", "kind", "vmin", "vmax", "shunt"}, {"id", "kind", "vmin", "vmax"});
        Bus b;
        b.id = integer(bj, "id", where);
        if (!seen_ids.insert(b.id).second)
            throw ValidationError("bus " + std::to_string(b.id) + ": duplicate id");
        const std::string kind = bj.at("kind").get<std::string>();
        if (kind == "slack") {
            b.kind = BusKind::slack;
            ++slack_count;
        } else if (kind == "pq") {
            b.kind = BusKind::pq;
        } else {
            throw ParseError("bus " + std::to_string(b.id) + ": unknown kind '" + kind + "'");
        }
        b.v_min = num(bj, "vmin", where);
        b.v_max = num(bj, "vmax", where);
        if (!(b.v_min < b.v_max))
            throw ValidationError("bus " + std::to_string(b.id) + ": requires vmin < vmax");
        if (bj.contains("shunt")) {
            const auto& sj = bj.at("shunt");
            require_keys(sj, "bus.shunt", {"g", "b"}, {"g", "b"});
            b.shunt = Complex(num(sj, "g", where), num(sj, "b", where));
        }
        model.buses.push_back(b);
    }
    if (slack_count == 0) throw ValidationError("case: no slack bus declared");
    if (slack_count > 1) throw ValidationError("case: more than one slack bus declared");

    std::sort(model.buses.begin(), model.buses.end(),
              [](const Bus& a, const Bus& b) { return a.id < b.id; });
    for (size_t i = 0; i < model.buses.size(); ++i) {
        if (model.buses[i].id != static_cast<int>(i))
            throw ValidationError("case: bus ids must be contiguous from 0");
    }
    if (model.buses[0].kind != BusKind::slack)
        throw ValidationError("case: bus 0 must be the slack bus");

    const int n_buses = static_cast<int>(model.buses.size());
    for (const auto& lj : root.at("lines")) {
        require_keys(lj, "line", {"from", "to", "g", "b", "limit"}, {"from", "to", "g", "b", "limit"});
        Line l;
        l.from = integer(lj, "from", "line");
        l.to = integer(lj, "to", "line");
        l.admittance = Complex(num(lj, "g", "line"), num(lj, "b", "line"));
        l.flow_limit = num(lj, "limit", "line");
        const std::string where =
            "line " + std::to_string(l.from) + "-" + std::to_string(l.to);
        if (l.from == l.to) throw ValidationError(where + ": from == to");
        if (l.from < 0 || l.from >= n_buses || l.to < 0 || l.to >= n_buses)
            throw ValidationError(where + ": endpoint is not a declared bus");
        if (l.admittance == Complex(0.0, 0.0))
            throw ValidationError(where + ": series admittance must be nonzero");
        if (l.flow_limit <= 0.0) throw ValidationError(where + ": flow limit must be positive");
        model.lines.push_back(l);
    }

    if (root.contains("devices")) {
        std::set<int> dev_ids;
        for (const auto& dj : root.at("devices")) {
            DeviceSpec d = parse_device(dj);
            if (!dev_ids.insert(d.id).second)
                throw ValidationError("device " + std::to_string(d.id) + ": duplicate id");
            if (d.bus < 0 || d.bus >= n_buses)
                throw ValidationError("device " + std::to_string(d.id) + ": bus " +
                                      std::to_string(d.bus) + " is not a declared bus");
            model.devices.push_back(d);
        }
    }
    return model;
}

}  // namespace

NetworkModel parse_case_text(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("case: ") + e.what());
    }
    return parse_case_json(root);
}

NetworkModel parse_case(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open case file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_case_text(buf.str());
}

AdmittanceMatrix build_admittance(const NetworkModel& model) {
    const int n_total = static_cast<int>(model.buses.size());
    AdmittanceMatrix adm;
    adm.full = Eigen::MatrixXcd::Zero(n_total, n_total);
    for (const auto& bus : model.buses) adm.full(bus.id, bus.id) += bus.shunt;
    for (const auto& line : model.lines) {
        adm.full(line.from, line.from) += line.admittance;
        adm.full(line.to, line.to) += line.admittance;
        adm.full(line.from, line.to) -= line.admittance;
        adm.full(line.to, line.from) -= line.admittance;
    }

    // connectivity: the reduced block must be invertible for the linearization
    std::vector<bool> visited(static_cast<size_t>(n_total), false);
    std::queue<int> frontier;
    frontier.push(0);
    visited[0] = true;
    while (!frontier.empty()) {
        const int i = frontier.front();
        frontier.pop();
        for (const auto& line : model.lines) {
            const int other = line.from == i ? line.to : (line.to == i ? line.from : -1);
            if (other >= 0 && !visited[static_cast<size_t>(other)]) {
                visited[static_cast<size_t>(other)] = true;
                frontier.push(other);
            }
        }
    }
    for (int i = 0; i < n_total; ++i) {
        if (!visited[static_cast<size_t>(i)])
            throw ValidationError("network is disconnected: bus " + std::to_string(i) +
                                  " unreachable from the slack");
    }

    const int n = model.n_pq();
    adm.y00 = adm.full(0, 0);
    adm.y0 = adm.full.block(1, 0, n, 1);
    adm.reduced = adm.full.block(1, 1, n, n);
    return adm;
}

Eigen::VectorXcd ac_power_flow(const NetworkModel& model, const InjectionVector& injections,
                               double tol, int max_iter) {
    const AdmittanceMatrix adm = build_admittance(model);
    const int n = model.n_pq();
    if (injections.p.size() != n || injections.q.size() != n)
        throw ValidationError("ac_power_flow: injection dimension mismatch");

    const Complex v0(model.v_slack, 0.0);
    Eigen::VectorXcd v = Eigen::VectorXcd::Ones(n);  // flat start
    Eigen::VectorXcd s(n);
    for (int i = 0; i < n; ++i) s(i) = Complex(injections.p(i), injections.q(i));

    auto mismatch = [&](const Eigen::VectorXcd& vv) -> Eigen::VectorXcd {
        Eigen::VectorXcd current = adm.reduced * vv + adm.y0 * v0;
        return vv.cwiseProduct(current.conjugate()) - s;
    };

    double worst = mismatch(v).cwiseAbs().maxCoeff();
    for (int iter = 0; iter < max_iter; ++iter) {
        if (worst <= tol) {
            Eigen::VectorXcd out(n + 1);
            out(0) = v0;
            out.tail(n) = v;
            return out;
        }
        const Eigen::VectorXcd current = adm.reduced * v + adm.y0 * v0;
        // S_i = v_i conj(I_i); real 2n x 2n Jacobian in rectangular coordinates
        Eigen::MatrixXd jac(2 * n, 2 * n);
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < n; ++k) {
                Complex d_re = v(i) * std::conj(adm.reduced(i, k));
                Complex d_im = Complex(0, 1) * (i == k ? std::conj(current(i)) : Complex(0, 0)) -
                               Complex(0, 1) * v(i) * std::conj(adm.reduced(i, k));
                if (i == k) d_re += std::conj(current(i));
                jac(i, k) = d_re.real();
                jac(i, k + n) = d_im.real();
                jac(i + n, k) = d_re.imag();
                jac(i + n, k + n) = d_im.imag();
            }
        }
        const Eigen::VectorXcd f = mismatch(v);
        Eigen::VectorXd rhs(2 * n);
        rhs.head(n) = f.real();
        rhs.tail(n) = f.imag();
        Eigen::VectorXd step = jac.fullPivLu().solve(rhs);
        if (!step.allFinite())
            throw NumericalError("ac_power_flow: singular Jacobian, mismatch " +
                                 std::to_string(worst));
        for (int i = 0; i < n; ++i) v(i) -= Complex(step(i), step(i + n));
        worst = mismatch(v).cwiseAbs().maxCoeff();
    }
    if (worst <= tol) {
        Eigen::VectorXcd out(n + 1);
        out(0) = v0;
        out.tail(n) = v;
        return out;
    }
    throw NumericalError("ac_power_flow: no convergence in " + std::to_string(max_iter) +
                         " iterations, final mismatch " + std::to_string(worst));
}

Eigen::MatrixXd dc_flow_map(const NetworkModel& model) {
    const int n = model.n_pq();
    const int n_lines = model.n_lines();

    Eigen::VectorXd susceptance(n_lines);
    for (int l = 0; l < n_lines; ++l) {
        const double x = std::imag(1.0 / model.lines[static_cast<size_t>(l)].admittance);
        if (x == 0.0)
            throw ValidationError("dc_flow_map: line " + std::to_string(l) +
                                  " has zero reactance");
        susceptance(l) = 1.0 / x;
    }

    // reduced DC susceptance matrix over PQ buses (slack row/col removed)
    Eigen::MatrixXd b_red = Eigen::MatrixXd::Zero(n, n);
    for (int l = 0; l < n_lines; ++l) {
        const auto& line = model.lines[static_cast<size_t>(l)];
        const int i = line.from - 1;
        const int j = line.to - 1;
        if (i >= 0) b_red(i, i) += susceptance(l);
        if (j >= 0) b_red(j, j) += susceptance(l);
        if (i >= 0 && j >= 0) {
            b_red(i, j) -= susceptance(l);
            b_red(j, i) -= susceptance(l);
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(b_red);
    if (!lu.isInvertible())
        throw ValidationError("dc_flow_map: singular DC susceptance matrix (disconnected graph)");
    const Eigen::MatrixXd theta = lu.inverse();  // angles at PQ buses per unit injection

    Eigen::MatrixXd map(2 * n_lines, n);
    for (int l = 0; l < n_lines; ++l) {
        const auto& line = model.lines[static_cast<size_t>(l)];
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
        if (line.from >= 1) row += susceptance(l) * theta.row(line.from - 1);
        if (line.to >= 1) row -= susceptance(l) * theta.row(line.to - 1);
        map.row(l) = row;
        map.row(n_lines + l) = -row;
    }
    return map;
}

}  // namespace dropf
