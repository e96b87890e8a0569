#pragma once

#include <vector>

#include "hwsf/types.hpp"

namespace hwsf::detail {

// min 1/2 z'Pz + q'z   s.t.  G z >= h,  with P positive definite.
struct QpProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd G;  // one row per constraint; may have zero rows
  Eigen::VectorXd h;
};

struct QpResult {
  Eigen::VectorXd z;
  std::vector<int> active;     // working set at the solution
  Eigen::VectorXd lambda;      // multipliers for `active`, all >= 0
  int iterations = 0;
};

// Primal active-set method. `z0` must satisfy G z0 >= h (within 1e-10).
// Ties when adding a blocking constraint and the choice of which constraint
// to drop both go to the lowest row index, which rules out cycling.
QpResult solve_qp(const QpProblem& prob, const Eigen::VectorXd& z0, int max_iters = 0);

}  // namespace hwsf::detail
