#pragma once

#include <optional>
#include <vector>

#include "hwsf/types.hpp"

namespace hwsf {

// Spherical keep-out region with barrier h(p) = |p-c|^2 - (radius+margin)^2.
struct Obstacle {
  Eigen::VectorXd center;
  double radius = 0.0;
  double margin = 0.0;

  double inflated_radius() const { return radius + margin; }
  double h(const Eigen::VectorXd& p) const {
    return (p - center).squaredNorm() - inflated_radius() * inflated_radius();
  }
  double h_dot(const Eigen::VectorXd& p, const Eigen::VectorXd& v) const {
    return 2.0 * (p - center).dot(v);
  }
};

// Convex admissible action set: rows a_i'u >= b_i plus an optional box.
// `soft` enables a shared slack sigma >= 0 on the rows, penalised in the
// projection objective by slack_weight * sigma^2.
struct AdmissibleSet {
  Eigen::MatrixXd A;       // rows x m
  Eigen::VectorXd b;       // length rows
  ActionVec box_lo, box_hi;  // size 0 when absent
  double slack_weight = 1e3;
  bool soft = false;

  int action_dim() const { return static_cast<int>(A.cols()); }
  int num_rows() const { return static_cast<int>(A.rows()); }
  bool has_box() const { return box_lo.size() > 0; }
  void validate() const;
};

// One row per obstacle from the relative-degree-2 ZCBF condition
//   hddot + 2*alpha1*hdot + alpha0^2*h >= -sigma
// under double-integrator dynamics (pddot = u), where the input enters
// through hddot = 2|v|^2 + 2(p-c)'u. At sigma = 0 the row reads
//   2(p-c)'u >= -(2|v|^2 + 4*alpha1*(p-c)'v + alpha0^2*h).
// Rows with zero input coefficient are dropped when already satisfied and
// raise InfeasibleSetError otherwise (p at an obstacle center).
AdmissibleSet build_zcbf_constraints(const Eigen::VectorXd& p, const Eigen::VectorXd& v,
                                     const std::vector<Obstacle>& obstacles, double alpha0 = 2.0,
                                     double alpha1 = 2.0);

bool contains(const AdmissibleSet& set, const ActionVec& u, double tol);

struct FeasibilityResult {
  bool feasible = false;
  ActionVec point;              // strictly feasible point when feasible
  double margin = 0.0;          // attained Chebyshev-style margin
  std::vector<int> most_violated;  // tightest/most-violated rows otherwise
};

// Max-margin interior point. Infeasibility is a return value, not an error.
FeasibilityResult feasibility_check(const AdmissibleSet& set);

}  // namespace hwsf
