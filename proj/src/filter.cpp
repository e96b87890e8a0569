#include "hwsf/filter.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "hwsf/detail/active_set_qp.hpp"

namespace hwsf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Stacks the set rows followed by box face rows (lower j at R+2j, upper at
// R+2j+1), matching the active-row indexing of FilterResult.
void stack_constraints(const AdmissibleSet& set, int m, Eigen::MatrixXd& G, Eigen::VectorXd& h) {
  const int rows = set.num_rows();
  const int box_rows = set.has_box() ? 2 * m : 0;
  G.setZero(rows + box_rows, m);
  h.resize(rows + box_rows);
  if (rows > 0) {
    G.topRows(rows) = set.A;
    h.head(rows) = set.b;
  }
  if (set.has_box()) {
    for (int j = 0; j < m; ++j) {
      G(rows + 2 * j, j) = 1.0;
      h(rows + 2 * j) = set.box_lo(j);
      G(rows + 2 * j + 1, j) = -1.0;
      h(rows + 2 * j + 1) = -set.box_hi(j);
    }
  }
}

bool lex_less(const ActionVec& a, const ActionVec& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

ActionVec feasible_start(const AdmissibleSet& set, const ActionVec& u_ref) {
  if (contains(set, u_ref, 0.0)) return u_ref;
  const auto feas = feasibility_check(set);
  if (!feas.feasible)
    throw InfeasibleSetError("projection: admissible set is empty", feas.most_violated);
  return feas.point;
}

}  // namespace

FilterResult project_weighted(const AdmissibleSet& set, const ActionVec& u_ref,
                              const WeightMatrix& W) {
  const auto t0 = Clock::now();
  set.validate();
  check_finite(u_ref, "u_ref");
  const int m = static_cast<int>(u_ref.size());
  if (set.num_rows() > 0 && set.action_dim() != m)
    throw DimensionError("project_weighted: action dimension mismatch");
  if (W.mat.rows() != m || W.mat.cols() != m)
    throw DimensionError("project_weighted: weight dimension mismatch");
  if (!is_symmetric(W.mat, 1e-10))
    throw std::invalid_argument("project_weighted: W must be symmetric; run spd_repair first");
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(W.mat);
    if (eig.eigenvalues().minCoeff() <= 0.0)
      throw std::invalid_argument(
          "project_weighted: W not positive definite; run spd_repair first");
  }

  FilterResult out;
  const int rows = set.num_rows();

  if (!set.soft) {
    detail::QpProblem qp;
    stack_constraints(set, m, qp.G, qp.h);
    qp.P = W.mat;
    qp.q = -(W.mat * u_ref);
    const auto res = detail::solve_qp(qp, feasible_start(set, u_ref));
    out.action = res.z;
    out.active_rows = res.active;
    out.slack_used = 0.0;
    out.iterations = res.iterations;
  } else {
    // Variables (u, sigma): shared nonnegative slack on the rows, penalised
    // by slack_weight * sigma^2.
    Eigen::MatrixXd Gu;
    Eigen::VectorXd hu;
    stack_constraints(set, m, Gu, hu);
    const int total = static_cast<int>(Gu.rows());
    detail::QpProblem qp;
    qp.P = Eigen::MatrixXd::Zero(m + 1, m + 1);
    qp.P.topLeftCorner(m, m) = W.mat;
    qp.P(m, m) = 2.0 * set.slack_weight;
    qp.q = Eigen::VectorXd::Zero(m + 1);
    qp.q.head(m) = -(W.mat * u_ref);
    qp.G.setZero(total + 1, m + 1);
    qp.G.topLeftCorner(total, m) = Gu;
    for (int i = 0; i < rows; ++i) qp.G(i, m) = 1.0;  // sigma relaxes set rows only
    qp.G(total, m) = 1.0;                             // sigma >= 0
    qp.h.resize(total + 1);
    qp.h.head(total) = hu;
    qp.h(total) = 0.0;

    Eigen::VectorXd z0(m + 1);
    ActionVec u0 = u_ref;
    if (set.has_box()) u0 = u0.cwiseMax(set.box_lo).cwiseMin(set.box_hi);
    z0.head(m) = u0;
    double sigma0 = 0.0;
    if (rows > 0) sigma0 = std::max(0.0, (set.b - set.A * u0).maxCoeff());
    z0(m) = sigma0 + 1.0;

    const auto res = detail::solve_qp(qp, z0);
    out.action = res.z.head(m);
    out.slack_used = std::max(0.0, res.z(m));
    out.iterations = res.iterations;
    for (int idx : res.active) {
      if (idx == total) continue;  // the sigma >= 0 row is internal
      out.active_rows.push_back(idx);
    }
  }

  const ActionVec d = out.action - u_ref;
  out.objective = d.dot(W.mat * d) + set.slack_weight * out.slack_used * out.slack_used *
                                         (set.soft ? 1.0 : 0.0);
  out.solve_seconds = seconds_since(t0);
  return out;
}

FilterResult project_euclidean(const AdmissibleSet& set, const ActionVec& u_ref) {
  return project_weighted(set, u_ref, WeightMatrix::identity(static_cast<int>(u_ref.size())));
}

WeightMatrix spd_repair(const Eigen::MatrixXd& H, double floor) {
  if (H.rows() != H.cols()) throw DimensionError("spd_repair: matrix must be square");
  if (floor <= 0.0) throw std::invalid_argument("spd_repair: floor must be positive");
  if (!is_symmetric(H, 1e-10))
    throw std::invalid_argument("spd_repair: input asymmetry exceeds 1e-10");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
  WeightMatrix out;
  out.min_eig_floor = floor;
  if (eig.eigenvalues().minCoeff() >= floor) {
    out.mat = H;
    out.repaired = false;
    return out;
  }
  const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(floor);
  out.mat = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  out.mat = 0.5 * (out.mat + out.mat.transpose());
  out.repaired = true;
  return out;
}

namespace {

struct SeedCandidate {
  ActionVec u;
  double q;
};

// Euclidean projection of a point onto the constraint system (helper for the
// ascent loop; not timed or reported).
ActionVec project_point(const Eigen::MatrixXd& G, const Eigen::VectorXd& h, const ActionVec& pt,
                        const ActionVec& fallback_feasible) {
  detail::QpProblem qp;
  qp.P = Eigen::MatrixXd::Identity(pt.size(), pt.size());
  qp.q = -pt;
  qp.G = G;
  qp.h = h;
  const bool pt_ok = G.rows() == 0 || (G * pt - h).minCoeff() >= -1e-10;
  return detail::solve_qp(qp, pt_ok ? pt : fallback_feasible).z;
}

std::vector<int> tight_rows(const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
                            const ActionVec& u) {
  std::vector<int> out;
  for (int i = 0; i < G.rows(); ++i)
    if (G.row(i).dot(u) - h(i) <= 1e-8 * (1.0 + std::abs(h(i)))) out.push_back(i);
  return out;
}

// Ascent direction restricted to the face {G_F d = 0}; requires the Hessian
// to be negative definite. Returns a zero vector when the face pins u.
bool face_newton_direction(const Eigen::MatrixXd& H, const ActionVec& g,
                           const Eigen::MatrixXd& G, const std::vector<int>& face, ActionVec& d) {
  const int m = static_cast<int>(g.size());
  const int f = static_cast<int>(face.size());
  Eigen::MatrixXd K(m + f, m + f);
  K.setZero();
  K.topLeftCorner(m, m) = -H;
  for (int k = 0; k < f; ++k) {
    K.block(m + k, 0, 1, m) = G.row(face[k]);
    K.block(0, m + k, m, 1) = G.row(face[k]).transpose();
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + f);
  rhs.head(m) = g;
  const Eigen::VectorXd sol = K.completeOrthogonalDecomposition().solve(rhs);
  d = sol.head(m);
  return d.allFinite();
}

}  // namespace

FilterResult safe_q_max(const QModel& model, const StateVec& x, const AdmissibleSet& set,
                        const QMaxOptions& opts) {
  const auto t0 = Clock::now();
  set.validate();
  if (!set.has_box())
    throw std::invalid_argument("safe_q_max: an action box is required to bound the search");
  const int m = static_cast<int>(set.box_lo.size());
  if (model.action_dim() != m) throw DimensionError("safe_q_max: action dimension mismatch");

  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  stack_constraints(set, m, G, h);

  // Seed grid over the box, coarsened to the total budget.
  std::vector<int> counts(m);
  double total = 1.0;
  for (int j = 0; j < m; ++j) {
    const double width = set.box_hi(j) - set.box_lo(j);
    counts[j] = std::max(2, static_cast<int>(std::floor(width / opts.grid_res)) + 1);
    total *= counts[j];
  }
  if (total > opts.max_grid_points) {
    const double scale = std::pow(opts.max_grid_points / total, 1.0 / m);
    for (int j = 0; j < m; ++j)
      counts[j] = std::max(2, static_cast<int>(std::floor(counts[j] * scale)));
  }

  std::vector<SeedCandidate> seeds;
  std::vector<int> idx(m, 0);
  while (true) {
    ActionVec u(m);
    for (int j = 0; j < m; ++j) {
      const double width = set.box_hi(j) - set.box_lo(j);
      u(j) = counts[j] > 1 ? set.box_lo(j) + idx[j] * width / (counts[j] - 1)
                           : 0.5 * (set.box_lo(j) + set.box_hi(j));
    }
    if (contains(set, u, 1e-12)) seeds.push_back({u, model.value(x, u)});
    int j = 0;
    for (; j < m; ++j) {
      if (++idx[j] < counts[j]) break;
      idx[j] = 0;
    }
    if (j == m) break;
  }

  const auto feas = feasibility_check(set);
  if (feas.feasible) seeds.push_back({feas.point, model.value(x, feas.point)});
  if (seeds.empty())
    throw InfeasibleSetError("safe_q_max: no feasible seed found", feas.most_violated);

  // Interior stationary point, when one exists, joins the seed pool.
  try {
    const ActionVec u_star = unconstrained_argmax(model, x, feas.feasible ? feas.point : seeds[0].u);
    if (contains(set, u_star, 1e-12)) seeds.push_back({u_star, model.value(x, u_star)});
  } catch (const std::exception&) {
  }

  std::sort(seeds.begin(), seeds.end(), [](const SeedCandidate& a, const SeedCandidate& b) {
    if (a.q != b.q) return a.q > b.q;
    return lex_less(a.u, b.u);
  });
  if (static_cast<int>(seeds.size()) > opts.top_k) seeds.resize(opts.top_k);

  const ActionVec fallback = feas.feasible ? feas.point : seeds[0].u;
  ActionVec best;
  double best_q = -std::numeric_limits<double>::infinity();
  int iterations = 0;

  for (const auto& seed : seeds) {
    ActionVec u = seed.u;
    // Ascent step on the active face; requires a negative-definite Hessian.
    const auto face_newton_step = [&](ActionVec& at, double min_improve) {
      const ActionVec g = model.gradient(x, at);
      const Eigen::MatrixXd H = model.hessian(x, at);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
      if (eig.eigenvalues().maxCoeff() >= -1e-12) return false;
      ActionVec d;
      if (!face_newton_direction(H, g, G, tight_rows(G, h, at), d) || d.norm() <= 1e-14)
        return false;
      // Ratio test against the remaining rows, then ascent line search.
      double alpha = 1.0;
      for (int i = 0; i < G.rows(); ++i) {
        const double gd = G.row(i).dot(d);
        if (gd >= -1e-14) continue;
        const double room = std::max(0.0, G.row(i).dot(at) - h(i));
        alpha = std::min(alpha, room / (-gd));
      }
      double t = alpha;
      const double q0 = model.value(x, at);
      for (int back = 0; back < 30 && t > 1e-16; ++back, t *= 0.5) {
        const ActionVec cand = at + t * d;
        if (model.value(x, cand) > q0 + min_improve) {
          at = cand;
          return true;
        }
      }
      return false;
    };

    for (int it = 0; it < opts.max_iters; ++it) {
      ++iterations;
      const ActionVec g = model.gradient(x, u);
      const ActionVec proj = project_point(G, h, u + g, fallback);
      if ((proj - u).norm() <= opts.residual_tol) break;

      bool stepped = face_newton_step(u, 1e-14);
      if (!stepped) {
        double t = 1.0;
        const double q0 = model.value(x, u);
        for (int back = 0; back < 30; ++back, t *= 0.5) {
          const ActionVec cand = project_point(G, h, u + t * g, fallback);
          if (model.value(x, cand) > q0 + 1e-14) {
            u = cand;
            stepped = true;
            break;
          }
        }
      }
      if (!stepped) break;
    }
    // Polish: the face Newton lands on the exact face optimum once the
    // residual loop has identified it.
    for (int p = 0; p < 3; ++p)
      if (!face_newton_step(u, 0.0)) break;
    const double q = model.value(x, u);
    if (q > best_q + 1e-12 || (std::abs(q - best_q) <= 1e-12 && (best.size() == 0 || lex_less(u, best)))) {
      best_q = q;
      best = u;
    }
  }

  FilterResult out;
  out.action = best;
  out.objective = best_q;  // attained Q value
  out.active_rows = tight_rows(G, h, best);
  out.iterations = iterations;
  out.slack_used = 0.0;
  out.solve_seconds = seconds_since(t0);
  return out;
}

}  // namespace hwsf
