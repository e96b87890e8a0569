#include "hwsf/detail/active_set_qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace hwsf::detail {

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kLambdaTol = 1e-10;

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& G, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<int>(idx.size()), G.cols());
  for (size_t k = 0; k < idx.size(); ++k) out.row(static_cast<int>(k)) = G.row(idx[k]);
  return out;
}

}  // namespace

QpResult solve_qp(const QpProblem& prob, const Eigen::VectorXd& z0, int max_iters) {
  const int dim = static_cast<int>(prob.P.rows());
  const int rows = static_cast<int>(prob.G.rows());
  if (prob.q.size() != dim || prob.G.cols() != dim || prob.h.size() != rows)
    throw DimensionError("solve_qp: inconsistent problem dimensions");
  if (z0.size() != dim) throw DimensionError("solve_qp: start point dimension");
  if (rows > 0 && (prob.G * z0 - prob.h).minCoeff() < -kFeasTol)
    throw std::logic_error("solve_qp: start point is not feasible");

  Eigen::LLT<Eigen::MatrixXd> pllt(prob.P);
  if (pllt.info() != Eigen::Success)
    throw std::invalid_argument("solve_qp: P must be positive definite");

  if (max_iters <= 0) {
    const long guard = rows <= 16 ? (1L << rows) : 65536L;
    max_iters = static_cast<int>(guard) + 8 * dim + 64;
  }

  Eigen::VectorXd z = z0;
  std::vector<int> working;
  QpResult result;
  bool converged = false;

  for (int it = 0; it < max_iters && !converged; ++it) {
    result.iterations = it + 1;
    const Eigen::VectorXd g = prob.P * z + prob.q;
    const Eigen::VectorXd pig = pllt.solve(g);
    Eigen::VectorXd d;
    Eigen::VectorXd mu;
    if (working.empty()) {
      d = -pig;
    } else {
      const Eigen::MatrixXd Gw = gather_rows(prob.G, working);
      const Eigen::MatrixXd PiGt = pllt.solve(Gw.transpose());
      const Eigen::MatrixXd S = Gw * PiGt;
      mu = S.completeOrthogonalDecomposition().solve(Gw * pig);
      d = -pig + PiGt * mu;
    }

    // Stationarity threshold scales with the unconstrained step so roundoff
    // in the KKT solve cannot masquerade as progress.
    if (d.norm() <= 1e-10 * (1.0 + z.norm() + pig.norm())) {
      if (working.empty()) {
        converged = true;
        break;
      }
      int drop = -1;
      for (size_t k = 0; k < working.size(); ++k) {
        if (mu(static_cast<int>(k)) < -kLambdaTol) {
          drop = static_cast<int>(k);
          break;  // lowest position in the working set wins
        }
      }
      if (drop < 0) {
        converged = true;  // all multipliers nonnegative: optimal
        break;
      }
      working.erase(working.begin() + drop);
      continue;
    }

    // Step length limited by the first blocking constraint outside the set.
    double alpha = 1.0;
    int blocker = -1;
    for (int i = 0; i < rows; ++i) {
      if (std::find(working.begin(), working.end(), i) != working.end()) continue;
      const double gd = prob.G.row(i).dot(d);
      if (gd >= -1e-14) continue;
      const double room = prob.G.row(i).dot(z) - prob.h(i);
      const double ai = std::max(0.0, room / (-gd));
      if (ai < alpha) {
        alpha = ai;
        blocker = i;
      }
    }
    z += alpha * d;
    if (blocker >= 0 && alpha < 1.0) working.push_back(blocker);
  }

  if (!converged) throw SolverStalledError("solve_qp: active-set iteration guard exceeded");

  result.z = z;
  result.active = working;
  std::sort(result.active.begin(), result.active.end());
  if (!result.active.empty()) {
    const Eigen::MatrixXd Gw = gather_rows(prob.G, result.active);
    const Eigen::VectorXd g = prob.P * z + prob.q;
    Eigen::VectorXd lam = Gw.transpose().completeOrthogonalDecomposition().solve(g);
    result.lambda = lam.cwiseMax(0.0);
  } else {
    result.lambda = Eigen::VectorXd();
  }
  return result;
}

}  // namespace hwsf::detail
