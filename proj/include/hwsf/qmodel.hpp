#pragma once

#include <string>
#include <vector>

#include "hwsf/types.hpp"

namespace hwsf {

// Number of distinct quadratic monomials u_a*u_b with a <= b.
int vech_size(int m);

// Symmetric basis {B_j} with (1/2) u' B_j u enumerating the quadratic
// monomials of u. Ordering is column-major over the lower triangle:
// (0,0),(1,0),...,(m-1,0),(1,1),...  Diagonal slots are e_a e_a',
// off-diagonal slots e_a e_b' + e_b e_a'.
std::vector<Eigen::MatrixXd> vech_basis(int m);

// Action-value function with exact derivatives in the action argument.
class QModel {
 public:
  virtual ~QModel() = default;

  // Negative means "any state accepted" (state-independent models).
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;

  virtual double value(const StateVec& x, const ActionVec& u) const = 0;
  virtual ActionVec gradient(const StateVec& x, const ActionVec& u) const = 0;
  virtual Eigen::MatrixXd hessian(const StateVec& x, const ActionVec& u) const = 0;
};

double eval_q(const QModel& model, const StateVec& x, const ActionVec& u);
ActionVec grad_u(const QModel& model, const StateVec& x, const ActionVec& u);
Eigen::MatrixXd hessian_u(const QModel& model, const StateVec& x, const ActionVec& u);

struct ArgmaxOptions {
  double grad_tol = 1e-8;
  int max_iters = 100;
};

// Damped Newton ascent from u0. Requires a negative-definite Hessian at every
// iterate; throws NonConcaveError (naming the iterate) otherwise.
ActionVec unconstrained_argmax(const QModel& model, const StateVec& x, const ActionVec& u0,
                               const ArgmaxOptions& opts = {});

// Rank-one cubic term (strength/6) * (d'(u-center))^3 with unit direction d.
// Its third-derivative tensor has operator norm exactly |strength|.
struct CubicTerm {
  ActionVec direction;
  double strength = 0.0;
};

// Q(x,u) = offset - 1/2 (u-center)' W (u-center) + sum of cubic terms.
// State-independent; the x argument is ignored.
class QuadraticQModel : public QModel {
 public:
  QuadraticQModel(ActionVec center, Eigen::MatrixXd weight, double offset,
                  std::vector<CubicTerm> cubic = {});

  int state_dim() const override { return -1; }
  int action_dim() const override { return static_cast<int>(center_.size()); }

  double value(const StateVec& x, const ActionVec& u) const override;
  ActionVec gradient(const StateVec& x, const ActionVec& u) const override;
  Eigen::MatrixXd hessian(const StateVec& x, const ActionVec& u) const override;

  const ActionVec& center() const { return center_; }
  const Eigen::MatrixXd& weight() const { return weight_; }
  double offset() const { return offset_; }
  const std::vector<CubicTerm>& cubic_terms() const { return cubic_; }
  // Sum of term strengths: a Hessian-Lipschitz constant for this model.
  double lipschitz_l2() const { return l2_; }

 private:
  ActionVec center_;
  Eigen::MatrixXd weight_;
  double offset_;
  std::vector<CubicTerm> cubic_;
  double l2_;
};

// Multivariate monomial features of z up to the given degree (0, 1 or 2).
// Ordering: constant, then z_0..z_{k-1}, then z_a*z_b for (a,b) with a <= b
// ordered lexicographically.
struct PolyFeatures {
  int dim = 0;
  int degree = 2;

  int count() const;
  Eigen::VectorXd eval(const Eigen::VectorXd& z) const;
};

// Linear-in-parameters Q model:
//   Q(x,u) = theta_c' phi(x)
//          + sum_a theta_b[a,:]' u * phi_a(x)
//          - 1/2 u' S_theta(x) u
//          + sum_r theta_nl[r] * rbf_r(x,u)
// with S_theta(x) = sum_{a,j} theta_s[a,j] * phi_a(x) * B_j.  The quadratic
// block enters with a minus sign so that S_theta positive definite means
// concavity in u ("D1" convention, recorded in the serialized form).
// RBF features are Gaussians over the joint (x,u) vector with shared width.
class FeatureQModel : public QModel {
 public:
  // rbf_centers: (n+m) x p_nl matrix of centers; may have zero columns.
  FeatureQModel(int state_dim, int action_dim, int poly_degree, Eigen::MatrixXd rbf_centers,
                double rbf_width);

  int state_dim() const override { return n_; }
  int action_dim() const override { return m_; }

  double value(const StateVec& x, const ActionVec& u) const override;
  ActionVec gradient(const StateVec& x, const ActionVec& u) const override;
  Eigen::MatrixXd hessian(const StateVec& x, const ActionVec& u) const override;

  // Full feature vector psi(x,u) (quadratic block already sign-flipped) so
  // that value == theta' psi.
  Eigen::VectorXd features(const StateVec& x, const ActionVec& u) const;

  // Quadratic coefficient matrix S_theta(x).
  Eigen::MatrixXd s_matrix(const StateVec& x) const;

  // Parameter layout [theta_c | theta_b | theta_s | theta_nl].
  int dim_c() const { return p_c_; }
  int dim_b() const { return q_b_ * m_; }
  int dim_s() const { return p_s_ * vech_; }
  int dim_nl() const { return p_nl_; }
  int dim_total() const { return dim_c() + dim_b() + dim_s() + dim_nl(); }
  int offset_c() const { return 0; }
  int offset_b() const { return p_c_; }
  int offset_s() const { return p_c_ + dim_b(); }
  int offset_nl() const { return offset_s() + dim_s(); }
  int num_state_poly() const { return p_s_; }

  const Eigen::VectorXd& theta() const { return theta_; }
  Eigen::VectorXd theta_s() const { return theta_.segment(offset_s(), dim_s()); }
  Eigen::VectorXd theta_nl() const { return theta_.segment(offset_nl(), dim_nl()); }
  FeatureQModel with_theta(Eigen::VectorXd theta) const;

  int poly_degree() const { return degree_; }
  const Eigen::MatrixXd& rbf_centers() const { return rbf_centers_; }
  double rbf_width() const { return rbf_width_; }

  // State-feature vector shared by the c/b/s blocks (same polynomial family).
  Eigen::VectorXd state_poly(const StateVec& x) const;
  // Gaussian value of RBF r at (x,u), and its state-only amplitude factor.
  double rbf_value(int r, const StateVec& x, const ActionVec& u) const;
  double rbf_state_amplitude(int r, const StateVec& x) const;
  ActionVec rbf_action_center(int r) const;

  const std::vector<Eigen::MatrixXd>& basis() const { return basis_; }

 private:
  void check_xu(const StateVec& x, const ActionVec& u) const;
  // Slot values q_j(u) = 1/2 u' B_j u in basis order.
  Eigen::VectorXd quad_monomials(const ActionVec& u) const;

  int n_, m_, degree_;
  int p_c_, q_b_, p_s_, vech_, p_nl_;
  Eigen::MatrixXd rbf_centers_;
  double rbf_width_;
  Eigen::VectorXd theta_;
  std::vector<Eigen::MatrixXd> basis_;
};

// JSON serialization of the full model definition (theta blocks, feature
// hyperparameters, basis-ordering and sign-convention tags).
std::string to_json(const FeatureQModel& model);
FeatureQModel feature_qmodel_from_json(const std::string& text);

}  // namespace hwsf
