#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dropf/dro.hpp"

namespace dropf {

// Forecast-error training data. One CSV row per historical sample; columns
// are grouped stage-major with header cells "t<stage>_e<coord>". A dataset
// with a single stage group is stationary and is broadcast to every horizon
// stage.
struct ForecastErrorDataset {
    int stages = 0;
    int n_xi = 0;
    Eigen::MatrixXd samples;  // N_s x (stages * n_xi)
    std::optional<PolytopicSupport> declared_support;  // applies per stage

    int n_samples() const { return static_cast<int>(samples.rows()); }

    // sample block of one horizon stage (stationary datasets broadcast)
    Eigen::MatrixXd stage_slice(int stage) const;
    // samples stacked over stages [0, upto], one trajectory per row
    Eigen::MatrixXd stacked_slice(int upto) const;

    // support of one stage: declared if present, else the per-coordinate box
    // [min - 10% range, max + 10% range] of the stage's samples
    PolytopicSupport stage_support(int stage) const;

    // append one realized per-stage error (stationary datasets only),
    // dropping the oldest row beyond `cap`
    void append_sample(const Eigen::VectorXd& xi, int cap);

    void validate_against_support() const;
};

ForecastErrorDataset ingest_dataset(const std::string& path);
ForecastErrorDataset dataset_from_text(const std::string& csv_text);
ForecastErrorDataset dataset_from_matrix(const Eigen::MatrixXd& samples, int stages, int n_xi);

void write_dataset_csv(const ForecastErrorDataset& data, const std::string& path);

// side-car support file: JSON {"H": [[..]], "d": [..]} applied per stage
PolytopicSupport load_support_json(const std::string& path);

// per-stage ambiguity sets for a horizon; eps entries broadcast when a single
// radius is given
std::vector<AmbiguitySet> stage_ambiguity(const ForecastErrorDataset& data,
                                          const std::vector<double>& eps, int horizon);

}  // namespace dropf
