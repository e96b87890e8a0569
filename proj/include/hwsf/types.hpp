#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace hwsf {

// Action and state vectors. Dimensions are dynamic; every operation checks
// them against the model or set it is paired with.
using ActionVec = Eigen::VectorXd;
using StateVec = Eigen::VectorXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Constraint system has empty intersection. `rows` lists the offending
// constraint indices (the most-violated set at the best attainable point).
class InfeasibleSetError : public std::runtime_error {
 public:
  InfeasibleSetError(const std::string& msg, std::vector<int> rows)
      : std::runtime_error(msg), rows_(std::move(rows)) {}
  const std::vector<int>& rows() const { return rows_; }

 private:
  std::vector<int> rows_;
};

// A Newton iterate landed where the Hessian is not negative definite.
class NonConcaveError : public std::runtime_error {
 public:
  NonConcaveError(const std::string& msg, int iterate, ActionVec at)
      : std::runtime_error(msg), iterate_(iterate), at_(std::move(at)) {}
  int iterate() const { return iterate_; }
  const ActionVec& at() const { return at_; }

 private:
  int iterate_;
  ActionVec at_;
};

class SolverStalledError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void check_finite(const Eigen::VectorXd& v, const char* name) {
  if (!v.allFinite()) throw std::invalid_argument(std::string(name) + ": non-finite entries");
}

inline bool is_symmetric(const Eigen::MatrixXd& a, double tol) {
  if (a.rows() != a.cols()) return false;
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace hwsf
