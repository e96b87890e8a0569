#include "hwsf/admissible.hpp"

#include <algorithm>
#include <cmath>

#include "hwsf/detail/active_set_qp.hpp"

namespace hwsf {

void AdmissibleSet::validate() const {
  if (b.size() != A.rows()) throw DimensionError("AdmissibleSet: A/b row mismatch");
  if (!A.allFinite() || !b.allFinite())
    throw std::invalid_argument("AdmissibleSet: non-finite coefficients");
  if (box_lo.size() != box_hi.size()) throw DimensionError("AdmissibleSet: box bound mismatch");
  if (has_box()) {
    if (box_lo.size() != A.cols() && A.rows() > 0)
      throw DimensionError("AdmissibleSet: box dimension mismatch");
    if (((box_hi - box_lo).array() < 0.0).any())
      throw std::invalid_argument("AdmissibleSet: box lower bound exceeds upper");
  }
  if (slack_weight < 0.0) throw std::invalid_argument("AdmissibleSet: negative slack weight");
}

AdmissibleSet build_zcbf_constraints(const Eigen::VectorXd& p, const Eigen::VectorXd& v,
                                     const std::vector<Obstacle>& obstacles, double alpha0,
                                     double alpha1) {
  const int dim = static_cast<int>(p.size());
  if (v.size() != dim) throw DimensionError("build_zcbf_constraints: p/v dimension mismatch");
  check_finite(p, "p");
  check_finite(v, "v");

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  std::vector<int> dead_rows;
  for (size_t k = 0; k < obstacles.size(); ++k) {
    const Obstacle& obs = obstacles[k];
    if (obs.center.size() != dim)
      throw DimensionError("build_zcbf_constraints: obstacle dimension mismatch");
    if (obs.inflated_radius() <= 0.0)
      throw std::invalid_argument("build_zcbf_constraints: nonpositive inflated radius");
    const Eigen::VectorXd d = p - obs.center;
    const double h = obs.h(p);
    const Eigen::VectorXd a = 2.0 * d;
    const double b = -(2.0 * v.squaredNorm() + 4.0 * alpha1 * d.dot(v) + alpha0 * alpha0 * h);
    if (a.norm() == 0.0) {
      // No input authority over this row; constant part decides.
      if (b <= 0.0) continue;
      dead_rows.push_back(static_cast<int>(k));
      continue;
    }
    rows.push_back(a);
    rhs.push_back(b);
  }
  if (!dead_rows.empty())
    throw InfeasibleSetError("build_zcbf_constraints: row with zero input coefficient violated",
                             dead_rows);

  AdmissibleSet set;
  set.A.resize(static_cast<int>(rows.size()), dim);
  set.b.resize(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    set.A.row(static_cast<int>(i)) = rows[i];
    set.b(static_cast<int>(i)) = rhs[i];
  }
  return set;
}

bool contains(const AdmissibleSet& set, const ActionVec& u, double tol) {
  if (set.num_rows() > 0 && u.size() != set.action_dim())
    throw DimensionError("contains: action dimension mismatch");
  if (set.num_rows() > 0 && ((set.A * u - set.b).array() < -tol).any()) return false;
  if (set.has_box()) {
    if (u.size() != set.box_lo.size()) throw DimensionError("contains: box dimension mismatch");
    if (((u - set.box_lo).array() < -tol).any() || ((set.box_hi - u).array() < -tol).any())
      return false;
  }
  return true;
}

FeasibilityResult feasibility_check(const AdmissibleSet& set) {
  set.validate();
  const int m = set.num_rows() > 0 ? set.action_dim()
                                   : static_cast<int>(set.box_lo.size());
  FeasibilityResult out;
  if (m == 0) {  // no constraints at all
    out.feasible = true;
    out.point = ActionVec();
    out.margin = std::numeric_limits<double>::infinity();
    return out;
  }

  for (int i = 0; i < set.num_rows(); ++i) {
    if (set.A.row(i).norm() == 0.0 && set.b(i) > 0.0) {
      out.most_violated.push_back(i);
      return out;  // 0 >= b_i with b_i > 0: empty set
    }
  }

  // Chebyshev-style margin maximization over z = (u, t):
  //   max t  s.t.  a_i'u - |a_i| t >= b_i,  u_j - t >= lo_j,  hi_j - t >= -u_j
  // regularized with a small quadratic so the active-set QP applies.
  const int rows = set.num_rows();
  const int box_rows = set.has_box() ? 2 * m : 0;
  Eigen::MatrixXd G(rows + box_rows, m + 1);
  Eigen::VectorXd h(rows + box_rows);
  for (int i = 0; i < rows; ++i) {
    G.row(i).head(m) = set.A.row(i);
    G(i, m) = -set.A.row(i).norm();
    h(i) = set.b(i);
  }
  if (set.has_box()) {
    for (int j = 0; j < m; ++j) {
      G.row(rows + 2 * j).setZero();
      G(rows + 2 * j, j) = 1.0;
      G(rows + 2 * j, m) = -1.0;
      h(rows + 2 * j) = set.box_lo(j);
      G.row(rows + 2 * j + 1).setZero();
      G(rows + 2 * j + 1, j) = -1.0;
      G(rows + 2 * j + 1, m) = -1.0;
      h(rows + 2 * j + 1) = -set.box_hi(j);
    }
  }

  const double reg = 1e-3;
  detail::QpProblem qp;
  qp.P = 2.0 * reg * Eigen::MatrixXd::Identity(m + 1, m + 1);
  qp.q = Eigen::VectorXd::Zero(m + 1);
  qp.q(m) = -1.0;
  qp.G = G;
  qp.h = h;

  Eigen::VectorXd z0(m + 1);
  z0.head(m) = set.has_box() ? ((set.box_lo + set.box_hi) / 2.0).eval()
                             : ActionVec::Zero(m).eval();
  double t0 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < rows + box_rows; ++i) {
    const double norm_scale = (i < rows) ? -G(i, m) : 1.0;
    t0 = std::min(t0, (G.row(i).head(m).dot(z0.head(m)) - h(i)) / std::max(norm_scale, 1e-300));
  }
  z0(m) = std::isfinite(t0) ? t0 - 1.0 : 0.0;

  const auto res = detail::solve_qp(qp, z0);
  const ActionVec u = res.z.head(m);
  const double t = res.z(m);
  out.point = u;
  out.margin = t;
  out.feasible = t > 1e-9;
  if (!out.feasible) {
    // Report the rows at (or closest to) maximum violation.
    double worst = std::numeric_limits<double>::infinity();
    Eigen::VectorXd margins(rows);
    for (int i = 0; i < rows; ++i) {
      margins(i) = (set.A.row(i).dot(u) - set.b(i)) / std::max(set.A.row(i).norm(), 1e-300);
      worst = std::min(worst, margins(i));
    }
    for (int i = 0; i < rows; ++i)
      if (margins(i) <= worst + 1e-7) out.most_violated.push_back(i);
  }
  return out;
}

}  // namespace hwsf
