#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dropf {

// Input file could not be read or is syntactically malformed.
class ParseError : public std::runtime_error {
  public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Input parsed but violates a model invariant (duplicate ids, missing slack, ...).
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: non-convergence, singular matrix, size caps exceeded.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// A solve ended infeasible or unbounded; carries the solver certificate.
class InfeasibleError : public std::runtime_error {
  public:
    InfeasibleError(const std::string& what, std::vector<double> certificate, bool unbounded)
        : std::runtime_error(what), certificate_(std::move(certificate)), unbounded_(unbounded) {}

    const std::vector<double>& certificate() const { return certificate_; }
    bool unbounded() const { return unbounded_; }

  private:
    std::vector<double> certificate_;
    bool unbounded_;
};

}  // namespace dropf
