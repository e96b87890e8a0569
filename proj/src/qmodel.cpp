#include "hwsf/qmodel.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace hwsf {

int vech_size(int m) { return m * (m + 1) / 2; }

std::vector<Eigen::MatrixXd> vech_basis(int m) {
  if (m < 1) throw std::invalid_argument("vech_basis: m must be >= 1");
  std::vector<Eigen::MatrixXd> basis;
  basis.reserve(vech_size(m));
  for (int a = 0; a < m; ++a) {
    for (int b = a; b < m; ++b) {
      Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m, m);
      if (a == b) {
        B(a, a) = 1.0;
      } else {
        B(a, b) = 1.0;
        B(b, a) = 1.0;
      }
      basis.push_back(std::move(B));
    }
  }
  return basis;
}

namespace {

void check_dims(const QModel& model, const StateVec& x, const ActionVec& u) {
  if (model.state_dim() >= 0 && x.size() != model.state_dim())
    throw DimensionError("QModel: state dimension mismatch");
  if (u.size() != model.action_dim()) throw DimensionError("QModel: action dimension mismatch");
}

}  // namespace

double eval_q(const QModel& model, const StateVec& x, const ActionVec& u) {
  check_dims(model, x, u);
  return model.value(x, u);
}

ActionVec grad_u(const QModel& model, const StateVec& x, const ActionVec& u) {
  check_dims(model, x, u);
  return model.gradient(x, u);
}

Eigen::MatrixXd hessian_u(const QModel& model, const StateVec& x, const ActionVec& u) {
  check_dims(model, x, u);
  return model.hessian(x, u);
}

ActionVec unconstrained_argmax(const QModel& model, const StateVec& x, const ActionVec& u0,
                               const ArgmaxOptions& opts) {
  check_dims(model, x, u0);
  ActionVec u = u0;
  for (int it = 0; it < opts.max_iters; ++it) {
    ActionVec g = model.gradient(x, u);
    if (g.norm() <= opts.grad_tol) return u;
    Eigen::MatrixXd H = model.hessian(x, u);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    if (eig.eigenvalues().maxCoeff() >= 0.0) {
      std::ostringstream msg;
      msg << "unconstrained_argmax: Hessian not negative definite at iterate " << it;
      throw NonConcaveError(msg.str(), it, u);
    }
    // Newton ascent direction: (-H) d = g with -H positive definite.
    ActionVec d = (-H).llt().solve(g);
    const double q0 = model.value(x, u);
    const double slope = g.dot(d);
    double t = 1.0;
    bool accepted = false;
    for (int back = 0; back < 40; ++back) {
      ActionVec cand = u + t * d;
      if (model.value(x, cand) >= q0 + 1e-4 * t * slope) {
        u = cand;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) return u;  // no ascent possible at fp precision
  }
  ActionVec g = model.gradient(x, u);
  if (g.norm() <= opts.grad_tol) return u;
  throw SolverStalledError("unconstrained_argmax: no convergence within iteration limit");
}

QuadraticQModel::QuadraticQModel(ActionVec center, Eigen::MatrixXd weight, double offset,
                                 std::vector<CubicTerm> cubic)
    : center_(std::move(center)), weight_(std::move(weight)), offset_(offset),
      cubic_(std::move(cubic)) {
  const int m = static_cast<int>(center_.size());
  if (m < 1) throw std::invalid_argument("QuadraticQModel: empty center");
  check_finite(center_, "center");
  if (weight_.rows() != m || weight_.cols() != m)
    throw DimensionError("QuadraticQModel: weight dimension mismatch");
  if (!is_symmetric(weight_, 1e-10))
    throw std::invalid_argument("QuadraticQModel: weight must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(weight_);
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("QuadraticQModel: weight must be positive definite");
  l2_ = 0.0;
  for (auto& term : cubic_) {
    if (term.direction.size() != m) throw DimensionError("CubicTerm: direction dimension");
    const double norm = term.direction.norm();
    if (norm <= 0.0) throw std::invalid_argument("CubicTerm: zero direction");
    term.direction /= norm;
    l2_ += std::abs(term.strength);
  }
}

double QuadraticQModel::value(const StateVec&, const ActionVec& u) const {
  const ActionVec d = u - center_;
  double q = offset_ - 0.5 * d.dot(weight_ * d);
  for (const auto& term : cubic_) {
    const double s = term.direction.dot(d);
    q += term.strength / 6.0 * s * s * s;
  }
  return q;
}

ActionVec QuadraticQModel::gradient(const StateVec&, const ActionVec& u) const {
  const ActionVec d = u - center_;
  ActionVec g = -(weight_ * d);
  for (const auto& term : cubic_) {
    const double s = term.direction.dot(d);
    g += (term.strength / 2.0) * s * s * term.direction;
  }
  return g;
}

Eigen::MatrixXd QuadraticQModel::hessian(const StateVec&, const ActionVec& u) const {
  const ActionVec d = u - center_;
  Eigen::MatrixXd H = -weight_;
  for (const auto& term : cubic_) {
    const double s = term.direction.dot(d);
    H += term.strength * s * term.direction * term.direction.transpose();
  }
  return H;
}

int PolyFeatures::count() const {
  int c = 1;
  if (degree >= 1) c += dim;
  if (degree >= 2) c += dim * (dim + 1) / 2;
  return c;
}

Eigen::VectorXd PolyFeatures::eval(const Eigen::VectorXd& z) const {
  if (z.size() != dim) throw DimensionError("PolyFeatures: input dimension mismatch");
  Eigen::VectorXd out(count());
  int k = 0;
  out(k++) = 1.0;
  if (degree >= 1)
    for (int i = 0; i < dim; ++i) out(k++) = z(i);
  if (degree >= 2)
    for (int a = 0; a < dim; ++a)
      for (int b = a; b < dim; ++b) out(k++) = z(a) * z(b);
  return out;
}

FeatureQModel::FeatureQModel(int state_dim, int action_dim, int poly_degree,
                             Eigen::MatrixXd rbf_centers, double rbf_width)
    : n_(state_dim), m_(action_dim), degree_(poly_degree), rbf_centers_(std::move(rbf_centers)),
      rbf_width_(rbf_width) {
  if (n_ < 1 || m_ < 1) throw std::invalid_argument("FeatureQModel: dims must be >= 1");
  if (degree_ < 0 || degree_ > 2) throw std::invalid_argument("FeatureQModel: poly degree in {0,1,2}");
  p_nl_ = static_cast<int>(rbf_centers_.cols());
  if (p_nl_ > 0 && rbf_centers_.rows() != n_ + m_)
    throw DimensionError("FeatureQModel: rbf centers must have n+m rows");
  if (p_nl_ > 0 && rbf_width_ <= 0.0)
    throw std::invalid_argument("FeatureQModel: rbf width must be positive");
  PolyFeatures poly{n_, degree_};
  p_c_ = poly.count();
  q_b_ = poly.count();
  p_s_ = poly.count();
  vech_ = vech_size(m_);
  theta_ = Eigen::VectorXd::Zero(dim_total());
  basis_ = vech_basis(m_);
}

void FeatureQModel::check_xu(const StateVec& x, const ActionVec& u) const {
  if (x.size() != n_) throw DimensionError("FeatureQModel: state dimension mismatch");
  if (u.size() != m_) throw DimensionError("FeatureQModel: action dimension mismatch");
}

Eigen::VectorXd FeatureQModel::state_poly(const StateVec& x) const {
  return PolyFeatures{n_, degree_}.eval(x);
}

Eigen::VectorXd FeatureQModel::quad_monomials(const ActionVec& u) const {
  Eigen::VectorXd q(vech_);
  int j = 0;
  for (int a = 0; a < m_; ++a)
    for (int b = a; b < m_; ++b) q(j++) = (a == b) ? 0.5 * u(a) * u(a) : u(a) * u(b);
  return q;
}

double FeatureQModel::rbf_value(int r, const StateVec& x, const ActionVec& u) const {
  const auto cx = rbf_centers_.col(r).head(n_);
  const auto cu = rbf_centers_.col(r).tail(m_);
  const double ssq = (x - cx).squaredNorm() + (u - cu).squaredNorm();
  return std::exp(-ssq / (2.0 * rbf_width_ * rbf_width_));
}

double FeatureQModel::rbf_state_amplitude(int r, const StateVec& x) const {
  const auto cx = rbf_centers_.col(r).head(n_);
  return std::exp(-(x - cx).squaredNorm() / (2.0 * rbf_width_ * rbf_width_));
}

ActionVec FeatureQModel::rbf_action_center(int r) const { return rbf_centers_.col(r).tail(m_); }

Eigen::VectorXd FeatureQModel::features(const StateVec& x, const ActionVec& u) const {
  check_xu(x, u);
  const Eigen::VectorXd phi = state_poly(x);
  const Eigen::VectorXd quad = quad_monomials(u);
  Eigen::VectorXd psi(dim_total());
  psi.segment(offset_c(), p_c_) = phi;
  for (int a = 0; a < q_b_; ++a)
    for (int i = 0; i < m_; ++i) psi(offset_b() + a * m_ + i) = phi(a) * u(i);
  for (int a = 0; a < p_s_; ++a)
    for (int j = 0; j < vech_; ++j) psi(offset_s() + a * vech_ + j) = -phi(a) * quad(j);
  for (int r = 0; r < p_nl_; ++r) psi(offset_nl() + r) = rbf_value(r, x, u);
  return psi;
}

Eigen::MatrixXd FeatureQModel::s_matrix(const StateVec& x) const {
  if (x.size() != n_) throw DimensionError("FeatureQModel: state dimension mismatch");
  const Eigen::VectorXd phi = state_poly(x);
  // Slot coefficients s_j = sum_a theta_s[a,j] * phi_a(x).
  Eigen::VectorXd slots = Eigen::VectorXd::Zero(vech_);
  for (int a = 0; a < p_s_; ++a)
    slots += phi(a) * theta_.segment(offset_s() + a * vech_, vech_);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m_, m_);
  int j = 0;
  for (int a = 0; a < m_; ++a)
    for (int b = a; b < m_; ++b) {
      if (a == b) {
        S(a, a) += slots(j);
      } else {
        S(a, b) += slots(j);
        S(b, a) += slots(j);
      }
      ++j;
    }
  return S;
}

double FeatureQModel::value(const StateVec& x, const ActionVec& u) const {
  check_xu(x, u);
  return theta_.dot(features(x, u));
}

ActionVec FeatureQModel::gradient(const StateVec& x, const ActionVec& u) const {
  check_xu(x, u);
  const Eigen::VectorXd phi = state_poly(x);
  ActionVec g = ActionVec::Zero(m_);
  for (int a = 0; a < q_b_; ++a)
    g += phi(a) * theta_.segment(offset_b() + a * m_, m_);
  g -= s_matrix(x) * u;
  const double w2 = rbf_width_ * rbf_width_;
  for (int r = 0; r < p_nl_; ++r) {
    const double v = theta_(offset_nl() + r) * rbf_value(r, x, u);
    g += v * (-(u - rbf_action_center(r)) / w2);
  }
  return g;
}

Eigen::MatrixXd FeatureQModel::hessian(const StateVec& x, const ActionVec& u) const {
  check_xu(x, u);
  Eigen::MatrixXd H = -s_matrix(x);
  const double w2 = rbf_width_ * rbf_width_;
  for (int r = 0; r < p_nl_; ++r) {
    const double v = theta_(offset_nl() + r) * rbf_value(r, x, u);
    const ActionVec d = u - rbf_action_center(r);
    H += v * (d * d.transpose() / (w2 * w2) - Eigen::MatrixXd::Identity(m_, m_) / w2);
  }
  return H;
}

FeatureQModel FeatureQModel::with_theta(Eigen::VectorXd theta) const {
  if (theta.size() != dim_total()) throw DimensionError("with_theta: parameter length mismatch");
  FeatureQModel out = *this;
  out.theta_ = std::move(theta);
  return out;
}

std::string to_json(const FeatureQModel& model) {
  nlohmann::json j;
  j["state_dim"] = model.state_dim();
  j["action_dim"] = model.action_dim();
  j["poly_degree"] = model.poly_degree();
  j["rbf_width"] = model.rbf_width();
  std::vector<std::vector<double>> centers;
  for (int r = 0; r < model.rbf_centers().cols(); ++r) {
    const auto col = model.rbf_centers().col(r);
    centers.emplace_back(col.data(), col.data() + col.size());
  }
  j["rbf_centers"] = centers;
  const auto slice = [&](int off, int len) {
    const Eigen::VectorXd seg = model.theta().segment(off, len);
    return std::vector<double>(seg.data(), seg.data() + seg.size());
  };
  j["theta_c"] = slice(model.offset_c(), model.dim_c());
  j["theta_b"] = slice(model.offset_b(), model.dim_b());
  j["theta_s"] = slice(model.offset_s(), model.dim_s());
  j["theta_nl"] = slice(model.offset_nl(), model.dim_nl());
  j["basis_ordering"] = "lower-triangle-column-major";
  j["sign_convention"] = "D1";
  return j.dump(2);
}

FeatureQModel feature_qmodel_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("sign_convention", "") != std::string("D1"))
    throw ConfigError("model file: unsupported sign convention");
  if (j.value("basis_ordering", "") != std::string("lower-triangle-column-major"))
    throw ConfigError("model file: unsupported basis ordering");
  const int n = j.at("state_dim").get<int>();
  const int m = j.at("action_dim").get<int>();
  const auto centers = j.at("rbf_centers").get<std::vector<std::vector<double>>>();
  Eigen::MatrixXd C(n + m, static_cast<int>(centers.size()));
  for (size_t r = 0; r < centers.size(); ++r) {
    if (static_cast<int>(centers[r].size()) != n + m)
      throw ConfigError("model file: rbf center dimension mismatch");
    C.col(static_cast<int>(r)) =
        Eigen::Map<const Eigen::VectorXd>(centers[r].data(), n + m);
  }
  FeatureQModel model(n, m, j.at("poly_degree").get<int>(), C, j.value("rbf_width", 1.0));
  const auto block = [&](const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<int>(v.size())).eval();
  };
  Eigen::VectorXd theta(model.dim_total());
  const Eigen::VectorXd tc = block("theta_c"), tb = block("theta_b"), ts = block("theta_s"),
                        tnl = block("theta_nl");
  if (tc.size() != model.dim_c() || tb.size() != model.dim_b() || ts.size() != model.dim_s() ||
      tnl.size() != model.dim_nl())
    throw ConfigError("model file: theta block length mismatch");
  theta << tc, tb, ts, tnl;
  return model.with_theta(std::move(theta));
}

}  // namespace hwsf
