#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hwsf/filter.hpp"
#include "hwsf/qmodel.hpp"
#include "hwsf/types.hpp"

namespace hwsf {

// Offline batch of (x, u, r, x') tuples, one per row.
struct TransitionDataset {
  Eigen::MatrixXd states;       // N x n
  Eigen::MatrixXd actions;      // N x m
  Eigen::VectorXd rewards;      // N
  Eigen::MatrixXd next_states;  // N x n

  int size() const { return static_cast<int>(states.rows()); }
  int state_dim() const { return static_cast<int>(states.cols()); }
  int action_dim() const { return static_cast<int>(actions.cols()); }
  void validate() const;

  // CSV with header x_0,..,x_{n-1},u_0,..,u_{m-1},r,xp_0,..,xp_{n-1}.
  static TransitionDataset load_csv(const std::string& path);
  void save_csv(const std::string& path) const;
};

struct StateGrid {
  std::vector<StateVec> points;

  // Uniform lattice, randomly subsampled to `cap` points when larger.
  static StateGrid uniform(const StateVec& lo, const StateVec& hi, int per_dim, int cap,
                           std::uint64_t seed);
  static StateGrid from_data(const Eigen::MatrixXd& states, int per_dim, int cap,
                             std::uint64_t seed);
};

struct FqiConfig {
  double gamma = 0.99;    // discount
  double alpha = 0.5;     // curvature-dominance regularizer weight
  double beta = 0.2;      // Hessian-Lipschitz regularizer weight
  double tau = 1e-2;      // log-barrier weight
  double epsilon = 1e-3;  // barrier shift
  double d_radius = 1.0;  // ball radius for the third-derivative bounds
  double theta_tol = 1e-6;
  int max_iters = 400;
  ActionVec action_lo, action_hi;  // box for the inner maximization
  StateGrid grid;                  // regularizer evaluation grid

  void validate() const;
};

// Quadratic coefficient matrix S_theta(x) (positive definite iff the
// quadratic block is concave under the D1 sign convention).
Eigen::MatrixXd s_theta(const FeatureQModel& model, const StateVec& x);

// max_u Q(x,u) over a box: reduced Newton with clipping when the Hessian at
// the box centre is negative definite, 21-point-per-axis grid otherwise.
ActionVec box_argmax(const QModel& model, const StateVec& x, const ActionVec& lo,
                     const ActionVec& hi);

// Bootstrapped regression targets y_i = r_i + gamma * max_u' Q(x_i', u').
Eigen::VectorXd compute_targets(const FeatureQModel& model, const TransitionDataset& data,
                                double gamma, const ActionVec& lo, const ActionVec& hi);

// Curvature-dominance regularizer
//   sum_x |(-S(x))_+|_F^2 - tau * logdet(S(x) + eps*I),
// +infinity when some S(x) + eps*I is not positive definite.
double reg_mu(const FeatureQModel& model, const StateGrid& grid, double tau, double epsilon);
// Gradient with respect to theta_s (subgradient at eigenvalue crossings).
Eigen::VectorXd reg_mu_grad(const FeatureQModel& model, const StateGrid& grid, double tau,
                            double epsilon);

// Upper bound on |grad^3_u psi_nl_r(x,u)| over the ball |u-u_ref| <= D.
// Gaussian features use the closed-form envelope amplitude(x) * c3 / w^3.
double l2_feature_bound(const FeatureQModel& model, int r, const StateVec& x,
                        const ActionVec& u_ref, double d_radius);

// R_L2 = sum_x ( sum_r |theta_nl_r| L_r(x) )^2.
double reg_l2(const FeatureQModel& model, const StateGrid& grid,
              const std::vector<ActionVec>& u_ref_map, double d_radius);
Eigen::VectorXd reg_l2_grad(const FeatureQModel& model, const StateGrid& grid,
                            const std::vector<ActionVec>& u_ref_map, double d_radius);

// One fitted-Q-iteration update: recomputes targets with the incoming model,
// then minimizes the regularized least-squares objective over theta.
FeatureQModel fqi_step(const FeatureQModel& model, const TransitionDataset& data,
                       const FqiConfig& cfg);

// Composite objective for the given targets (testing / tracing hook).
double fqi_objective(const FeatureQModel& model, const TransitionDataset& data,
                     const Eigen::VectorXd& targets, const FqiConfig& cfg);

struct FitResult {
  FeatureQModel model;
  std::vector<double> delta_theta;  // per accepted iteration
  std::vector<double> objective;
  bool converged = false;
  int iterations = 0;
};

FitResult fit(const TransitionDataset& data, const FqiConfig& cfg, const FeatureQModel& init);

// theta = 0 except theta_s ridge-fitted so that S_theta(x) is close to the
// identity over the grid (keeps the barrier domain open at the start).
FeatureQModel initial_model(int state_dim, int action_dim, int poly_degree,
                            const Eigen::MatrixXd& rbf_centers, double rbf_width,
                            const StateGrid& grid);

// W_hat(x) = spd_repair(-hessian_u(model, x, u_ref), floor).
WeightMatrix extract_w(const FeatureQModel& model, const StateVec& x, const ActionVec& u_ref,
                       double floor);

// Empirical rho: max over probe states of the spectral norm of
// W_hat(x) - W_true(x), both Hessians taken at the truth's reference action.
double hessian_error_rho(const FeatureQModel& model, const QModel& truth,
                         const std::vector<StateVec>& probes);

}  // namespace hwsf
