#include "dropf/dataset.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dropf/errors.hpp"

namespace dropf {

using json = nlohmann::json;

Eigen::MatrixXd ForecastErrorDataset::stage_slice(int stage) const {
    if (stages == 1) return samples;  // stationary
    if (stage < 0 || stage >= stages)
        throw ValidationError("dataset: stage " + std::to_string(stage) + " out of range");
    return samples.middleCols(stage * n_xi, n_xi);
}

Eigen::MatrixXd ForecastErrorDataset::stacked_slice(int upto) const {
    if (upto < 0) throw ValidationError("dataset: bad stage range");
    Eigen::MatrixXd out(n_samples(), (upto + 1) * n_xi);
    for (int t = 0; t <= upto; ++t) out.middleCols(t * n_xi, n_xi) = stage_slice(t);
    return out;
}

PolytopicSupport ForecastErrorDataset::stage_support(int stage) const {
    if (declared_support) return *declared_support;
    const Eigen::MatrixXd slice = stage_slice(stage);
    Eigen::VectorXd lo = slice.colwise().minCoeff().transpose();
    Eigen::VectorXd hi = slice.colwise().maxCoeff().transpose();
    const Eigen::VectorXd margin = 0.1 * (hi - lo);
    return PolytopicSupport::box(lo - margin, hi + margin);
}

void ForecastErrorDataset::append_sample(const Eigen::VectorXd& xi, int cap) {
    if (stages != 1)
        throw ValidationError("dataset: online updates need a stationary (single-stage) window");
    if (xi.size() != n_xi) throw ValidationError("dataset: appended sample dimension mismatch");
    const int n = n_samples();
    if (n < cap) {
        samples.conservativeResize(n + 1, Eigen::NoChange);
        samples.row(n) = xi.transpose();
    } else {  // FIFO
        Eigen::MatrixXd shifted(n, n_xi);
        shifted.topRows(n - 1) = samples.bottomRows(n - 1);
        shifted.row(n - 1) = xi.transpose();
        samples = shifted;
    }
}

void ForecastErrorDataset::validate_against_support() const {
    if (!declared_support) return;
    for (int t = 0; t < stages; ++t) {
        const Eigen::MatrixXd slice = stage_slice(t);
        for (int i = 0; i < slice.rows(); ++i) {
            if (!declared_support->contains(slice.row(i).transpose(), 1e-9))
                throw ValidationError("dataset: sample " + std::to_string(i) + " at stage " +
                                      std::to_string(t) + " violates the declared support");
        }
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        size_t start = 0;
        while (start < cell.size() && cell[start] == ' ') ++start;
        cells.push_back(cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

ForecastErrorDataset dataset_from_text(const std::string& csv_text) {
    std::stringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("dataset: empty file");
    const auto header = split_csv_line(line);
    if (header.empty()) throw ParseError("dataset: missing header row");

    // header cells must read t<stage>_e<coord>, stage-major
    int stages = 0, n_xi = 0;
    {
        std::vector<std::pair<int, int>> tags;
        for (const auto& cell : header) {
            int t = -1, e = -1;
            if (std::sscanf(cell.c_str(), "t%d_e%d", &t, &e) != 2 || t < 0 || e < 0)
                throw ParseError("dataset: header cell '" + cell + "' is not of form t<k>_e<j>");
            tags.emplace_back(t, e);
        }
        stages = tags.back().first + 1;
        n_xi = 0;
        for (const auto& [t, e] : tags) n_xi = std::max(n_xi, e + 1);
        if (static_cast<int>(tags.size()) != stages * n_xi)
            throw ParseError("dataset: header is not a full stage-major grid");
        for (int idx = 0; idx < static_cast<int>(tags.size()); ++idx) {
            if (tags[static_cast<size_t>(idx)] != std::make_pair(idx / n_xi, idx % n_xi))
                throw ParseError("dataset: header columns must be stage-major ordered");
        }
    }

    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (static_cast<int>(cells.size()) != stages * n_xi)
            throw ParseError("dataset: row " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(stages * n_xi));
        std::vector<double> row;
        for (const auto& cell : cells) {
            try {
                size_t used = 0;
                const double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                row.push_back(v);
            } catch (const std::exception&) {
                throw ParseError("dataset: non-numeric cell '" + cell + "' in row " +
                                 std::to_string(line_no));
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("dataset: no sample rows");

    ForecastErrorDataset data;
    data.stages = stages;
    data.n_xi = n_xi;
    data.samples.resize(static_cast<int>(rows.size()), stages * n_xi);
    for (size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < stages * n_xi; ++j)
            data.samples(static_cast<int>(i), j) = rows[i][static_cast<size_t>(j)];
    return data;
}

ForecastErrorDataset ingest_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    ForecastErrorDataset data = dataset_from_text(buf.str());

    const std::string support_path = path + ".support.json";
    if (std::ifstream probe(support_path); probe.good()) {
        data.declared_support = load_support_json(support_path);
        if (data.declared_support->dim() != data.n_xi)
            throw ValidationError("dataset: declared support dimension mismatch");
        data.validate_against_support();
    }
    return data;
}

ForecastErrorDataset dataset_from_matrix(const Eigen::MatrixXd& samples, int stages, int n_xi) {
    if (samples.cols() != stages * n_xi)
        throw ValidationError("dataset: matrix width != stages * n_xi");
    if (samples.rows() < 1) throw ValidationError("dataset: no sample rows");
    ForecastErrorDataset data;
    data.stages = stages;
    data.n_xi = n_xi;
    data.samples = samples;
    return data;
}

void write_dataset_csv(const ForecastErrorDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out.precision(17);
    for (int t = 0; t < data.stages; ++t)
        for (int e = 0; e < data.n_xi; ++e)
            out << (t * data.n_xi + e ? "," : "") << "t" << t << "_e" << e;
    out << "\n";
    for (int i = 0; i < data.n_samples(); ++i) {
        for (int j = 0; j < data.samples.cols(); ++j) out << (j ? "," : "") << data.samples(i, j);
        out << "\n";
    }
}

PolytopicSupport load_support_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open support file '" + path + "'");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("support: ") + e.what());
    }
    if (!root.is_object() || !root.contains("H") || !root.contains("d"))
        throw ParseError("support: expected fields 'H' and 'd'");
    const auto& hj = root.at("H");
    const auto& dj = root.at("d");
    const int rows = static_cast<int>(hj.size());
    if (rows == 0 || static_cast<int>(dj.size()) != rows)
        throw ParseError("support: H/d size mismatch");
    const int cols = static_cast<int>(hj.at(0).size());
    Eigen::MatrixXd h(rows, cols);
    Eigen::VectorXd d(rows);
    for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(hj.at(i).size()) != cols) throw ParseError("support: ragged H");
        for (int j = 0; j < cols; ++j) h(i, j) = hj.at(i).at(j).get<double>();
        d(i) = dj.at(i).get<double>();
    }
    return PolytopicSupport(h, d);
}

std::vector<AmbiguitySet> stage_ambiguity(const ForecastErrorDataset& data,
                                          const std::vector<double>& eps, int horizon) {
    if (horizon < 1) throw ValidationError("stage_ambiguity: horizon must be >= 1");
    if (data.stages != 1 && data.stages < horizon)
        throw ValidationError("stage_ambiguity: dataset has " + std::to_string(data.stages) +
                              " stage groups, horizon needs " + std::to_string(horizon));
    if (eps.empty()) throw ValidationError("stage_ambiguity: no radius given");
    std::vector<AmbiguitySet> sets;
    sets.reserve(static_cast<size_t>(horizon));
    for (int t = 0; t < horizon; ++t) {
        const double e = eps.size() == 1 ? eps[0] : eps.at(static_cast<size_t>(t));
        if (e < 0.0) throw ValidationError("stage_ambiguity: negative radius");
        EmpiricalDistribution center{data.stage_slice(t)};
        sets.emplace_back(std::move(center), e, data.stage_support(t));
    }
    return sets;
}

}  // namespace dropf
