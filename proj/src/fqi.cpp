#include "hwsf/fqi.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace hwsf {

void TransitionDataset::validate() const {
  const int n = size();
  if (n < 1) throw std::invalid_argument("TransitionDataset: empty");
  if (actions.rows() != n || rewards.size() != n || next_states.rows() != n)
    throw DimensionError("TransitionDataset: inconsistent row counts");
  if (next_states.cols() != states.cols())
    throw DimensionError("TransitionDataset: state dimension mismatch");
  if (!states.allFinite() || !actions.allFinite() || !rewards.allFinite() ||
      !next_states.allFinite())
    throw std::invalid_argument("TransitionDataset: non-finite entries");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TransitionDataset TransitionDataset::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("TransitionDataset: cannot open " + path);
  std::string header;
  std::getline(in, header);
  const auto cols = split_csv_line(header);
  int n = 0, m = 0;
  size_t k = 0;
  while (k < cols.size() && cols[k] == "x_" + std::to_string(n)) ++k, ++n;
  while (k < cols.size() && cols[k] == "u_" + std::to_string(m)) ++k, ++m;
  if (n == 0 || m == 0 || k >= cols.size() || cols[k] != "r")
    throw std::runtime_error("TransitionDataset: malformed header in " + path);
  ++k;
  for (int i = 0; i < n; ++i, ++k)
    if (k >= cols.size() || cols[k] != "xp_" + std::to_string(i))
      throw std::runtime_error("TransitionDataset: malformed header in " + path);
  if (k != cols.size()) throw std::runtime_error("TransitionDataset: trailing header columns");

  std::vector<double> flat;
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto vals = split_csv_line(line);
    if (static_cast<int>(vals.size()) != 2 * n + m + 1)
      throw std::runtime_error("TransitionDataset: bad row width in " + path);
    for (const auto& s : vals) flat.push_back(std::stod(s));
    ++rows;
  }
  TransitionDataset d;
  d.states.resize(rows, n);
  d.actions.resize(rows, m);
  d.rewards.resize(rows);
  d.next_states.resize(rows, n);
  for (int i = 0; i < rows; ++i) {
    const double* p = &flat[static_cast<size_t>(i) * (2 * n + m + 1)];
    for (int j = 0; j < n; ++j) d.states(i, j) = p[j];
    for (int j = 0; j < m; ++j) d.actions(i, j) = p[n + j];
    d.rewards(i) = p[n + m];
    for (int j = 0; j < n; ++j) d.next_states(i, j) = p[n + m + 1 + j];
  }
  d.validate();
  return d;
}

void TransitionDataset::save_csv(const std::string& path) const {
  validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("TransitionDataset: cannot write " + path);
  const int n = state_dim(), m = action_dim();
  for (int j = 0; j < n; ++j) out << "x_" << j << ",";
  for (int j = 0; j < m; ++j) out << "u_" << j << ",";
  out << "r";
  for (int j = 0; j < n; ++j) out << ",xp_" << j;
  out << "\n";
  for (int i = 0; i < size(); ++i) {
    for (int j = 0; j < n; ++j) out << format_double(states(i, j)) << ",";
    for (int j = 0; j < m; ++j) out << format_double(actions(i, j)) << ",";
    out << format_double(rewards(i));
    for (int j = 0; j < n; ++j) out << "," << format_double(next_states(i, j));
    out << "\n";
  }
}

StateGrid StateGrid::uniform(const StateVec& lo, const StateVec& hi, int per_dim, int cap,
                             std::uint64_t seed) {
  const int n = static_cast<int>(lo.size());
  if (n < 1 || hi.size() != n) throw DimensionError("StateGrid: bad bounds");
  if (per_dim < 1) throw std::invalid_argument("StateGrid: per_dim must be >= 1");
  long total = 1;
  for (int j = 0; j < n; ++j) total *= per_dim;

  std::vector<long> keep;
  if (cap > 0 && total > cap) {
    // Fixed-seed subsample of lattice linear indices.
    std::vector<long> all(total);
    for (long i = 0; i < total; ++i) all[i] = i;
    std::mt19937_64 rng(seed);
    for (long i = total - 1; i > 0; --i) {
      const long j = static_cast<long>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(all[i], all[j]);
    }
    keep.assign(all.begin(), all.begin() + cap);
    std::sort(keep.begin(), keep.end());
  } else {
    keep.resize(total);
    for (long i = 0; i < total; ++i) keep[i] = i;
  }

  StateGrid grid;
  grid.points.reserve(keep.size());
  for (long lin : keep) {
    StateVec x(n);
    long rem = lin;
    for (int j = 0; j < n; ++j) {
      const int idx = static_cast<int>(rem % per_dim);
      rem /= per_dim;
      x(j) = per_dim > 1 ? lo(j) + idx * (hi(j) - lo(j)) / (per_dim - 1)
                         : 0.5 * (lo(j) + hi(j));
    }
    grid.points.push_back(std::move(x));
  }
  return grid;
}

StateGrid StateGrid::from_data(const Eigen::MatrixXd& states, int per_dim, int cap,
                               std::uint64_t seed) {
  if (states.rows() < 1) throw std::invalid_argument("StateGrid: empty data");
  return uniform(states.colwise().minCoeff().transpose(),
                 states.colwise().maxCoeff().transpose(), per_dim, cap, seed);
}

void FqiConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("FqiConfig: gamma must lie in (0,1)");
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("FqiConfig: negative regularizer weight");
  if (tau <= 0.0 || epsilon <= 0.0) throw ConfigError("FqiConfig: tau and epsilon must be > 0");
  if (theta_tol <= 0.0) throw ConfigError("FqiConfig: theta_tol must be > 0");
  if (max_iters < 1) throw ConfigError("FqiConfig: max_iters must be >= 1");
  if (d_radius <= 0.0) throw ConfigError("FqiConfig: d_radius must be > 0");
  if (action_lo.size() == 0 || action_lo.size() != action_hi.size())
    throw ConfigError("FqiConfig: action box missing");
  if (((action_hi - action_lo).array() < 0.0).any())
    throw ConfigError("FqiConfig: action box lower bound exceeds upper");
  if (grid.points.empty()) throw ConfigError("FqiConfig: state grid is empty");
}

Eigen::MatrixXd s_theta(const FeatureQModel& model, const StateVec& x) {
  return model.s_matrix(x);
}

namespace {

ActionVec clip_box(const ActionVec& u, const ActionVec& lo, const ActionVec& hi) {
  return u.cwiseMax(lo).cwiseMin(hi);
}

// Reduced Newton ascent with clipping on the box.
ActionVec box_newton(const QModel& model, const StateVec& x, const ActionVec& lo,
                     const ActionVec& hi, const ActionVec& start) {
  const int m = static_cast<int>(lo.size());
  ActionVec u = clip_box(start, lo, hi);
  for (int it = 0; it < 60; ++it) {
    const ActionVec g = model.gradient(x, u);
    if ((clip_box(u + g, lo, hi) - u).norm() <= 1e-10) break;
    const Eigen::MatrixXd H = model.hessian(x, u);
    std::vector<int> free_set;
    for (int j = 0; j < m; ++j) {
      const bool at_lo = u(j) <= lo(j) + 1e-12 && g(j) < 0.0;
      const bool at_hi = u(j) >= hi(j) - 1e-12 && g(j) > 0.0;
      if (!at_lo && !at_hi) free_set.push_back(j);
    }
    if (free_set.empty()) break;
    const int f = static_cast<int>(free_set.size());
    Eigen::MatrixXd Hff(f, f);
    Eigen::VectorXd gf(f);
    for (int a = 0; a < f; ++a) {
      gf(a) = g(free_set[a]);
      for (int b = 0; b < f; ++b) Hff(a, b) = H(free_set[a], free_set[b]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd(-Hff));
    Eigen::VectorXd df = llt.info() == Eigen::Success ? llt.solve(gf).eval() : gf;
    ActionVec d = ActionVec::Zero(m);
    for (int a = 0; a < f; ++a) d(free_set[a]) = df(a);
    const double q0 = model.value(x, u);
    double t = 1.0;
    bool accepted = false;
    for (int back = 0; back < 40; ++back, t *= 0.5) {
      const ActionVec cand = clip_box(u + t * d, lo, hi);
      if (model.value(x, cand) > q0 + 1e-14) {
        u = cand;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return u;
}

}  // namespace

ActionVec box_argmax(const QModel& model, const StateVec& x, const ActionVec& lo,
                     const ActionVec& hi) {
  const int m = static_cast<int>(lo.size());
  if (hi.size() != m || model.action_dim() != m) throw DimensionError("box_argmax: dimensions");
  const ActionVec mid = 0.5 * (lo + hi);
  const Eigen::MatrixXd H0 = model.hessian(x, mid);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H0);
  if (eig.eigenvalues().maxCoeff() <= -1e-8) return box_newton(model, x, lo, hi, mid);

  // Coarse enumeration fallback for non-concave slices.
  const int pts = 21;
  std::vector<int> idx(m, 0);
  ActionVec best = mid;
  double best_q = -std::numeric_limits<double>::infinity();
  while (true) {
    ActionVec u(m);
    for (int j = 0; j < m; ++j)
      u(j) = lo(j) + idx[j] * (hi(j) - lo(j)) / (pts - 1);
    const double q = model.value(x, u);
    if (q > best_q) {
      best_q = q;
      best = u;
    }
    int j = 0;
    for (; j < m; ++j) {
      if (++idx[j] < pts) break;
      idx[j] = 0;
    }
    if (j == m) break;
  }
  return best;
}

Eigen::VectorXd compute_targets(const FeatureQModel& model, const TransitionDataset& data,
                                double gamma, const ActionVec& lo, const ActionVec& hi) {
  data.validate();
  if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("compute_targets: gamma in [0,1)");
  const int N = data.size();
  Eigen::VectorXd y(N);
  if (gamma == 0.0) {
    y = data.rewards;
    return y;
  }
  for (int i = 0; i < N; ++i) {
    const StateVec xp = data.next_states.row(i).transpose();
    const ActionVec u_best = box_argmax(model, xp, lo, hi);
    const double q = model.value(xp, u_best);
    y(i) = data.rewards(i) + gamma * q;
    if (!std::isfinite(y(i))) throw std::runtime_error("compute_targets: non-finite target");
  }
  return y;
}

namespace {

// tr(M * B_j) in the vech slot ordering.
Eigen::VectorXd slot_trace(const Eigen::MatrixXd& M) {
  const int m = static_cast<int>(M.rows());
  Eigen::VectorXd out(vech_size(m));
  int j = 0;
  for (int a = 0; a < m; ++a)
    for (int b = a; b < m; ++b) out(j++) = (a == b) ? M(a, a) : 2.0 * M(b, a);
  return out;
}

}  // namespace

double reg_mu(const FeatureQModel& model, const StateGrid& grid, double tau, double epsilon) {
  if (tau <= 0.0 || epsilon <= 0.0) throw std::invalid_argument("reg_mu: tau, epsilon > 0");
  double total = 0.0;
  for (const auto& x : grid.points) {
    const Eigen::MatrixXd S = model.s_matrix(x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    const Eigen::VectorXd lam = eig.eigenvalues();
    double pen = 0.0;
    double logdet = 0.0;
    for (int i = 0; i < lam.size(); ++i) {
      pen += std::pow(std::max(-lam(i), 0.0), 2);
      const double shifted = lam(i) + epsilon;
      if (shifted <= 0.0) return std::numeric_limits<double>::infinity();
      logdet += std::log(shifted);
    }
    total += pen - tau * logdet;
  }
  return total;
}

Eigen::VectorXd reg_mu_grad(const FeatureQModel& model, const StateGrid& grid, double tau,
                            double epsilon) {
  const int m = model.action_dim();
  const int J = vech_size(m);
  const int p_s = model.num_state_poly();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p_s * J);
  for (const auto& x : grid.points) {
    const Eigen::MatrixXd S = model.s_matrix(x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    const Eigen::VectorXd lam = eig.eigenvalues();
    const Eigen::MatrixXd V = eig.eigenvectors();
    // d pen / dS = -2 (-S)_+ ; d(-tau logdet(S+eps I))/dS = -tau (S+eps I)^{-1}
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      const double neg = std::max(-lam(i), 0.0);
      M -= 2.0 * neg * V.col(i) * V.col(i).transpose();
      M -= tau / (lam(i) + epsilon) * V.col(i) * V.col(i).transpose();
    }
    const Eigen::VectorXd slots = slot_trace(M);
    const Eigen::VectorXd phi = model.state_poly(x);
    for (int a = 0; a < p_s; ++a) grad.segment(a * J, J) += phi(a) * slots;
  }
  return grad;
}

double l2_feature_bound(const FeatureQModel& model, int r, const StateVec& x,
                        const ActionVec& u_ref, double d_radius) {
  if (r < 0 || r >= model.dim_nl()) throw std::invalid_argument("l2_feature_bound: bad index");
  if (u_ref.size() != model.action_dim()) throw DimensionError("l2_feature_bound: u_ref dim");
  if (d_radius <= 0.0) throw std::invalid_argument("l2_feature_bound: d_radius > 0");
  // Gaussian profile: sup_t |(3t - t^3) e^{-t^2/2}| attained at t^2 = 3 - sqrt(6).
  static const double c3 = [] {
    const double t = std::sqrt(3.0 - std::sqrt(6.0));
    return (3.0 * t - t * t * t) * std::exp(-t * t / 2.0);
  }();
  const double w = model.rbf_width();
  return model.rbf_state_amplitude(r, x) * c3 / (w * w * w);
}

double reg_l2(const FeatureQModel& model, const StateGrid& grid,
              const std::vector<ActionVec>& u_ref_map, double d_radius) {
  if (u_ref_map.size() != grid.points.size())
    throw DimensionError("reg_l2: u_ref_map size mismatch");
  const int p_nl = model.dim_nl();
  if (p_nl == 0) return 0.0;
  const Eigen::VectorXd theta_nl = model.theta_nl();
  double total = 0.0;
  for (size_t k = 0; k < grid.points.size(); ++k) {
    double lhat = 0.0;
    for (int r = 0; r < p_nl; ++r)
      lhat += std::abs(theta_nl(r)) *
              l2_feature_bound(model, r, grid.points[k], u_ref_map[k], d_radius);
    total += lhat * lhat;
  }
  return total;
}

Eigen::VectorXd reg_l2_grad(const FeatureQModel& model, const StateGrid& grid,
                            const std::vector<ActionVec>& u_ref_map, double d_radius) {
  const int p_nl = model.dim_nl();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p_nl);
  if (p_nl == 0) return grad;
  const Eigen::VectorXd theta_nl = model.theta_nl();
  for (size_t k = 0; k < grid.points.size(); ++k) {
    Eigen::VectorXd L(p_nl);
    double lhat = 0.0;
    for (int r = 0; r < p_nl; ++r) {
      L(r) = l2_feature_bound(model, r, grid.points[k], u_ref_map[k], d_radius);
      lhat += std::abs(theta_nl(r)) * L(r);
    }
    for (int r = 0; r < p_nl; ++r) {
      const double sign = theta_nl(r) > 0.0 ? 1.0 : (theta_nl(r) < 0.0 ? -1.0 : 0.0);
      grad(r) += 2.0 * lhat * L(r) * sign;
    }
  }
  return grad;
}

namespace {

struct StepWorkspace {
  Eigen::MatrixXd Psi;              // N x T design matrix
  Eigen::VectorXd y;                // targets
  std::vector<ActionVec> u_ref_map;  // reference action per grid point
  Eigen::MatrixXd L;                // grid x p_nl third-derivative bounds
};

std::vector<ActionVec> reference_actions(const FeatureQModel& model, const FqiConfig& cfg) {
  std::vector<ActionVec> out;
  out.reserve(cfg.grid.points.size());
  const ActionVec mid = 0.5 * (cfg.action_lo + cfg.action_hi);
  for (const auto& x : cfg.grid.points) {
    ActionVec u = mid;
    try {
      u = clip_box(unconstrained_argmax(model, x, mid), cfg.action_lo, cfg.action_hi);
    } catch (const std::exception&) {
      u = box_argmax(model, x, cfg.action_lo, cfg.action_hi);
    }
    out.push_back(u);
  }
  return out;
}

double composite_objective(const FeatureQModel& model, const StepWorkspace& ws,
                           const FqiConfig& cfg) {
  const Eigen::VectorXd resid = ws.y - ws.Psi * model.theta();
  double obj = resid.squaredNorm();
  if (cfg.alpha > 0.0) obj += cfg.alpha * reg_mu(model, cfg.grid, cfg.tau, cfg.epsilon);
  if (cfg.beta > 0.0 && model.dim_nl() > 0)
    obj += cfg.beta * reg_l2(model, cfg.grid, ws.u_ref_map, cfg.d_radius);
  return obj;
}

// Hessian of -tau * sum_x logdet(S(x) + eps I) with respect to theta_s:
// tau * (phi phi') kron tr(M B_j M B_j') with M = (S + eps I)^{-1}.
Eigen::MatrixXd barrier_hessian_theta_s(const FeatureQModel& model, const StateGrid& grid,
                                        double tau, double epsilon) {
  const int m = model.action_dim();
  const int J = vech_size(m);
  const int p_s = model.num_state_poly();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p_s * J, p_s * J);
  const auto& basis = model.basis();
  for (const auto& x : grid.points) {
    const Eigen::MatrixXd S = model.s_matrix(x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    const Eigen::MatrixXd Minv =
        eig.eigenvectors() *
        (eig.eigenvalues().array() + epsilon).inverse().matrix().asDiagonal() *
        eig.eigenvectors().transpose();
    Eigen::MatrixXd Tj(J, J);
    for (int j = 0; j < J; ++j)
      for (int jj = j; jj < J; ++jj) {
        Tj(j, jj) = (Minv * basis[j] * Minv * basis[jj]).trace();
        Tj(jj, j) = Tj(j, jj);
      }
    const Eigen::VectorXd phi = model.state_poly(x);
    for (int a = 0; a < p_s; ++a)
      for (int aa = 0; aa < p_s; ++aa)
        H.block(a * J, aa * J, J, J) += tau * phi(a) * phi(aa) * Tj;
  }
  return H;
}

FeatureQModel fqi_step_impl(const FeatureQModel& model, const TransitionDataset& data,
                            const FqiConfig& cfg, double* objective_out) {
  const int N = data.size();
  const int T = model.dim_total();

  StepWorkspace ws;
  ws.y = compute_targets(model, data, cfg.gamma, cfg.action_lo, cfg.action_hi);
  ws.Psi.resize(N, T);
  for (int i = 0; i < N; ++i)
    ws.Psi.row(i) = model
                        .features(data.states.row(i).transpose(),
                                  data.actions.row(i).transpose())
                        .transpose();
  ws.u_ref_map = reference_actions(model, cfg);

  // Unregularized case: one exact least-squares solve.
  if (cfg.alpha == 0.0 && (cfg.beta == 0.0 || model.dim_nl() == 0)) {
    const Eigen::VectorXd theta = ws.Psi.colPivHouseholderQr().solve(ws.y);
    FeatureQModel out = model.with_theta(theta);
    if (objective_out) *objective_out = (ws.y - ws.Psi * theta).squaredNorm();
    return out;
  }

  const int p_nl = model.dim_nl();
  ws.L.resize(static_cast<int>(cfg.grid.points.size()), std::max(p_nl, 1));
  for (size_t k = 0; k < cfg.grid.points.size(); ++k)
    for (int r = 0; r < p_nl; ++r)
      ws.L(static_cast<int>(k), r) =
          l2_feature_bound(model, r, cfg.grid.points[k], ws.u_ref_map[k], cfg.d_radius);

  const int off_s = model.offset_s();
  const int len_s = model.dim_s();
  const int len_cb = model.dim_c() + model.dim_b();
  const int off_nl = model.offset_nl();

  // Column blocks of the design matrix.
  const Eigen::MatrixXd Psi_s = ws.Psi.middleCols(off_s, len_s);
  Eigen::MatrixXd M(N, len_cb + p_nl);
  M.leftCols(len_cb) = ws.Psi.leftCols(len_cb);
  if (p_nl > 0) M.rightCols(p_nl) = ws.Psi.middleCols(off_nl, p_nl);
  const Eigen::MatrixXd MtM = M.transpose() * M;
  const Eigen::MatrixXd GramS = 2.0 * (Psi_s.transpose() * Psi_s);

  FeatureQModel cur = model;
  double cur_obj = composite_objective(cur, ws, cfg);

  const auto set_blocks = [&](const Eigen::VectorXd& w, const Eigen::VectorXd& ts) {
    Eigen::VectorXd theta(T);
    theta.head(len_cb) = w.head(len_cb);
    theta.segment(off_s, len_s) = ts;
    if (p_nl > 0) theta.tail(p_nl) = w.tail(p_nl);
    return theta;
  };

  const int sweeps = 5;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    Eigen::VectorXd theta_s = cur.theta().segment(off_s, len_s);
    Eigen::VectorXd w(len_cb + p_nl);
    w.head(len_cb) = cur.theta().head(len_cb);
    if (p_nl > 0) w.tail(p_nl) = cur.theta().tail(p_nl);

    // (1) Exact least squares on (theta_c, theta_b, theta_nl) given theta_s.
    {
      const Eigen::VectorXd r_s = ws.y - Psi_s * theta_s;
      const Eigen::VectorXd rhs = M.transpose() * r_s;
      const double ridge = 1e-10 * (MtM.trace() / std::max(1, len_cb + p_nl) + 1.0);
      Eigen::VectorXd w_new;
      if (cfg.beta == 0.0 || p_nl == 0) {
        Eigen::MatrixXd K = MtM;
        K.diagonal().array() += ridge;
        w_new = K.ldlt().solve(rhs);
      } else {
        // The regularizer is quadratic within a sign orthant of theta_nl:
        // iterate the sign pattern to a fixed point.
        Eigen::VectorXd signs(p_nl);
        {
          Eigen::MatrixXd K0 = MtM;
          K0.diagonal().array() += ridge;
          const Eigen::VectorXd w0 = K0.ldlt().solve(rhs);
          for (int r = 0; r < p_nl; ++r) {
            const double ref =
                w.tail(p_nl)(r) != 0.0 ? w.tail(p_nl)(r) : w0.tail(p_nl)(r);
            signs(r) = ref >= 0.0 ? 1.0 : -1.0;
          }
        }
        for (int pass = 0; pass < 8; ++pass) {
          Eigen::MatrixXd R = Eigen::MatrixXd::Zero(p_nl, p_nl);
          for (int k = 0; k < ws.L.rows(); ++k) {
            const Eigen::VectorXd ell = ws.L.row(k).transpose().cwiseProduct(signs);
            R += ell * ell.transpose();
          }
          Eigen::MatrixXd K = MtM;
          K.bottomRightCorner(p_nl, p_nl) += cfg.beta * R;
          K.diagonal().array() += ridge;
          w_new = K.ldlt().solve(rhs);
          Eigen::VectorXd next = signs;
          for (int r = 0; r < p_nl; ++r)
            if (w_new.tail(p_nl)(r) != 0.0) next(r) = w_new.tail(p_nl)(r) > 0.0 ? 1.0 : -1.0;
          if ((next - signs).norm() == 0.0) break;
          signs = next;
        }
      }
      const FeatureQModel cand = cur.with_theta(set_blocks(w_new, theta_s));
      const double cand_obj = composite_objective(cand, ws, cfg);
      if (cand_obj <= cur_obj) {
        cur = cand;
        cur_obj = cand_obj;
        w = w_new;
      }
    }

    // (2) Damped Newton on theta_s with the barrier.
    if (cfg.alpha > 0.0) {
      for (int inner = 0; inner < 6; ++inner) {
        theta_s = cur.theta().segment(off_s, len_s);
        const Eigen::VectorXd r_cb = ws.y - M * w;
        const Eigen::VectorXd grad_data = GramS * theta_s - 2.0 * (Psi_s.transpose() * r_cb);
        const Eigen::VectorXd grad =
            grad_data + cfg.alpha * reg_mu_grad(cur, cfg.grid, cfg.tau, cfg.epsilon);
        const double gnorm = grad.norm();
        if (gnorm <= 1e-9 * (1.0 + theta_s.norm())) break;

        Eigen::MatrixXd H =
            GramS + cfg.alpha * barrier_hessian_theta_s(cur, cfg.grid, cfg.tau, cfg.epsilon);
        H.diagonal().array() += 1e-12 * (1.0 + H.trace() / H.rows());

        const Eigen::VectorXd d = -H.ldlt().solve(grad);
        const double slope = grad.dot(d);
        double t = 1.0;
        bool accepted = false;
        for (int back = 0; back < 60; ++back, t *= 0.5) {
          const FeatureQModel cand = cur.with_theta(set_blocks(w, theta_s + t * d));
          const double cand_obj = composite_objective(cand, ws, cfg);
          if (std::isfinite(cand_obj) && cand_obj <= cur_obj + 1e-4 * t * slope) {
            cur = cand;
            cur_obj = cand_obj;
            accepted = true;
            break;
          }
        }
        if (!accepted) break;
      }
    }
  }

  // Joint damped Newton over the full parameter vector. Block alternation
  // stalls on strongly coupled feature columns; this drives the composite
  // gradient to zero so the outer theta iteration can actually contract.
  {
    const Eigen::MatrixXd GramFull = 2.0 * (ws.Psi.transpose() * ws.Psi);
    const Eigen::VectorXd Pty = 2.0 * (ws.Psi.transpose() * ws.y);
    for (int inner = 0; inner < 60; ++inner) {
      const Eigen::VectorXd theta = cur.theta();
      Eigen::VectorXd grad = GramFull * theta - Pty;
      if (cfg.alpha > 0.0)
        grad.segment(off_s, len_s) +=
            cfg.alpha * reg_mu_grad(cur, cfg.grid, cfg.tau, cfg.epsilon);
      if (cfg.beta > 0.0 && p_nl > 0)
        grad.tail(p_nl) += cfg.beta * reg_l2_grad(cur, cfg.grid, ws.u_ref_map, cfg.d_radius);
      const double gnorm = grad.norm();
      if (gnorm <= 1e-12 * (1.0 + theta.norm())) break;

      Eigen::MatrixXd H = GramFull;
      if (cfg.alpha > 0.0)
        H.block(off_s, off_s, len_s, len_s) +=
            cfg.alpha * barrier_hessian_theta_s(cur, cfg.grid, cfg.tau, cfg.epsilon);
      if (cfg.beta > 0.0 && p_nl > 0) {
        // Quadratic model of R_L2 within the current sign orthant.
        Eigen::VectorXd signs(p_nl);
        for (int r = 0; r < p_nl; ++r) signs(r) = theta.tail(p_nl)(r) >= 0.0 ? 1.0 : -1.0;
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(p_nl, p_nl);
        for (int k = 0; k < ws.L.rows(); ++k) {
          const Eigen::VectorXd ell = ws.L.row(k).transpose().cwiseProduct(signs);
          R += ell * ell.transpose();
        }
        H.bottomRightCorner(p_nl, p_nl) += 2.0 * cfg.beta * R;
      }
      H.diagonal().array() += 1e-12 * (1.0 + H.trace() / H.rows());

      const Eigen::VectorXd d = -H.ldlt().solve(grad);
      const double slope = grad.dot(d);
      if (slope >= 0.0) break;
      // Sufficient decrease up to the floating-point resolution of the
      // objective, so the last exact Newton steps are not rejected.
      const double fp_slack = 1e-15 * (1.0 + std::abs(cur_obj));
      double t = 1.0;
      bool accepted = false;
      for (int back = 0; back < 60; ++back, t *= 0.5) {
        const FeatureQModel cand = cur.with_theta(theta + t * d);
        const double cand_obj = composite_objective(cand, ws, cfg);
        if (std::isfinite(cand_obj) && cand_obj <= cur_obj + 1e-4 * t * slope + fp_slack) {
          cur = cand;
          cur_obj = cand_obj;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (gnorm > 1e-5 * (1.0 + theta.norm())) {
          std::ostringstream msg;
          msg << "fqi_step: line search stalled with gradient norm " << gnorm;
          throw SolverStalledError(msg.str());
        }
        break;
      }
    }
  }

  if (objective_out) *objective_out = cur_obj;
  return cur;
}

}  // namespace

double fqi_objective(const FeatureQModel& model, const TransitionDataset& data,
                     const Eigen::VectorXd& targets, const FqiConfig& cfg) {
  StepWorkspace ws;
  ws.y = targets;
  ws.Psi.resize(data.size(), model.dim_total());
  for (int i = 0; i < data.size(); ++i)
    ws.Psi.row(i) = model
                        .features(data.states.row(i).transpose(),
                                  data.actions.row(i).transpose())
                        .transpose();
  ws.u_ref_map = reference_actions(model, cfg);
  return composite_objective(model, ws, cfg);
}

FeatureQModel fqi_step(const FeatureQModel& model, const TransitionDataset& data,
                       const FqiConfig& cfg) {
  cfg.validate();
  data.validate();
  return fqi_step_impl(model, data, cfg, nullptr);
}

FitResult fit(const TransitionDataset& data, const FqiConfig& cfg, const FeatureQModel& init) {
  cfg.validate();
  data.validate();
  FitResult result{init, {}, {}, false, 0};
  for (int k = 0; k < cfg.max_iters; ++k) {
    double obj = 0.0;
    FeatureQModel next = fqi_step_impl(result.model, data, cfg, &obj);
    const double dtheta = (next.theta() - result.model.theta()).norm();
    result.model = std::move(next);
    result.delta_theta.push_back(dtheta);
    result.objective.push_back(obj);
    result.iterations = k + 1;
    if (dtheta < cfg.theta_tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

FeatureQModel initial_model(int state_dim, int action_dim, int poly_degree,
                            const Eigen::MatrixXd& rbf_centers, double rbf_width,
                            const StateGrid& grid) {
  FeatureQModel model(state_dim, action_dim, poly_degree, rbf_centers, rbf_width);
  if (grid.points.empty()) return model;
  const int p_s = model.num_state_poly();
  const int J = vech_size(action_dim);
  // Ridge-fit theta_s so that S_theta(x) ~ I over the grid.
  Eigen::MatrixXd Gram = Eigen::MatrixXd::Zero(p_s, p_s);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p_s);
  for (const auto& x : grid.points) {
    const Eigen::VectorXd phi = model.state_poly(x);
    Gram += phi * phi.transpose();
    rhs += phi;
  }
  Gram.diagonal().array() += 1e-8 * static_cast<double>(grid.points.size());
  const Eigen::VectorXd col = Gram.ldlt().solve(rhs);

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(model.dim_total());
  int j = 0;
  for (int a_col = 0; a_col < action_dim; ++a_col)
    for (int b_row = a_col; b_row < action_dim; ++b_row) {
      if (a_col == b_row)
        for (int a = 0; a < p_s; ++a) theta(model.offset_s() + a * J + j) = col(a);
      ++j;
    }
  return model.with_theta(theta);
}

WeightMatrix extract_w(const FeatureQModel& model, const StateVec& x, const ActionVec& u_ref,
                       double floor) {
  return spd_repair(-hessian_u(model, x, u_ref), floor);
}

double hessian_error_rho(const FeatureQModel& model, const QModel& truth,
                         const std::vector<StateVec>& probes) {
  if (truth.action_dim() != model.action_dim())
    throw DimensionError("hessian_error_rho: action dimension mismatch");
  double rho = 0.0;
  for (const auto& x : probes) {
    const ActionVec u_ref =
        unconstrained_argmax(truth, x, ActionVec::Zero(truth.action_dim()));
    const Eigen::MatrixXd diff = -hessian_u(model, x, u_ref) - (-hessian_u(truth, x, u_ref));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (diff + diff.transpose()));
    rho = std::max(rho, eig.eigenvalues().cwiseAbs().maxCoeff());
  }
  return rho;
}

}  // namespace hwsf
