#include "dropf/random.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "dropf/errors.hpp"

namespace dropf {

std::uint64_t Rng::next_word() {
    // splitmix64 step; stable and standard-library independent
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_word() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

ScenarioKind scenario_kind_from_string(const std::string& name) {
    if (name == "gaussian") return ScenarioKind::gaussian;
    if (name == "uniform") return ScenarioKind::uniform_box;
    if (name == "mixture") return ScenarioKind::mixture_outliers;
    throw ValidationError("unknown scenario kind '" + name + "'");
}

Eigen::MatrixXd gen_samples(ScenarioKind kind, int rows, int cols, double scale,
                            std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd out(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            switch (kind) {
                case ScenarioKind::gaussian:
                    out(i, j) = rng.normal(0.0, scale);
                    break;
                case ScenarioKind::uniform_box:
                    out(i, j) = rng.uniform(-scale, scale);
                    break;
                case ScenarioKind::mixture_outliers: {
                    const double pick = rng.uniform();
                    const double base = rng.normal(0.0, scale);
                    out(i, j) = pick < 0.9 ? base : base + rng.normal(3.0 * scale, 2.0 * scale);
                    break;
                }
            }
        }
    }
    return out;
}

}  // namespace dropf
