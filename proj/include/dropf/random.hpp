#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace dropf {

// Seeded synthetic forecast-error generators. Distributions are hand-rolled
// on top of mt19937_64 so draws are reproducible across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);
    double normal(double mean, double stddev);  // Box-Muller, one draw per call

  private:
    std::uint64_t next_word();
    std::uint64_t state_;
};

enum class ScenarioKind { gaussian, uniform_box, mixture_outliers };

ScenarioKind scenario_kind_from_string(const std::string& name);

// rows x cols matrix of errors; mixture_outliers draws a wide shifted
// component with 10% probability (heavy tail)
Eigen::MatrixXd gen_samples(ScenarioKind kind, int rows, int cols, double scale,
                            std::uint64_t seed);

}  // namespace dropf
