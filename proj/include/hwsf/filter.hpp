#pragma once

#include <vector>

#include "hwsf/admissible.hpp"
#include "hwsf/qmodel.hpp"
#include "hwsf/types.hpp"

namespace hwsf {

// Symmetric positive-definite projection metric. `repaired` records whether
// eigenvalue clamping was needed to reach `min_eig_floor`.
struct WeightMatrix {
  Eigen::MatrixXd mat;
  bool repaired = false;
  double min_eig_floor = 0.0;

  static WeightMatrix identity(int m) {
    return WeightMatrix{Eigen::MatrixXd::Identity(m, m), false, 1.0};
  }
};

struct FilterResult {
  ActionVec action;
  std::vector<int> active_rows;  // indices into the set's row list; box faces
                                 // are reported as num_rows + 2j (lower) and
                                 // num_rows + 2j + 1 (upper)
  double slack_used = 0.0;
  double objective = 0.0;  // squared weighted distance (+ slack penalty)
  double solve_seconds = 0.0;
  int iterations = 0;
};

// argmin |u - u_ref|^2 over the set (identity metric). Bitwise identical to
// project_weighted with W = I.
FilterResult project_euclidean(const AdmissibleSet& set, const ActionVec& u_ref);

// argmin (u - u_ref)' W (u - u_ref) over the set. W must be positive
// definite; run spd_repair first for learned Hessians.
FilterResult project_weighted(const AdmissibleSet& set, const ActionVec& u_ref,
                              const WeightMatrix& W);

struct QMaxOptions {
  double grid_res = 0.05;    // seed-grid spacing over the action box
  int top_k = 8;             // seeds kept for refinement
  int max_grid_points = 4096;  // total seed-grid budget (coarsens per-axis)
  double residual_tol = 1e-7;  // gradient-projection residual target
  int max_iters = 300;
};

// Approximate argmax of Q(x,.) over the set: multi-start projected ascent
// from a coarse feasible grid, with active-face Newton polishing. Requires
// the set to carry an action box to bound the search.
FilterResult safe_q_max(const QModel& model, const StateVec& x, const AdmissibleSet& set,
                        const QMaxOptions& opts = {});

// Eigenvalue clamp of a symmetric matrix up to `floor`. Input asymmetry
// beyond 1e-10 is an error. Returns the input untouched when no clamp fires.
WeightMatrix spd_repair(const Eigen::MatrixXd& H, double floor);

}  // namespace hwsf
