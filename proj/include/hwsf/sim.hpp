#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hwsf/admissible.hpp"
#include "hwsf/filter.hpp"
#include "hwsf/fqi.hpp"
#include "hwsf/qmodel.hpp"
#include "hwsf/types.hpp"

namespace hwsf {

struct EnvState {
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  double t = 0.0;
};

struct EnvConfig {
  double dt = 0.1;
  int horizon = 200;
  double gamma = 0.99;
  Eigen::Vector2d start_p{0.0, 0.0};
  Eigen::Vector2d start_v{0.8, 0.0};
  Eigen::Vector2d waypoint{6.0, 0.0};  // sets the reference direction
  double ref_speed = 0.8;
  ActionVec action_lo = ActionVec::Constant(2, -3.0);
  ActionVec action_hi = ActionVec::Constant(2, 3.0);
  double alpha0 = 2.0;
  double alpha1 = 2.0;
  std::vector<Obstacle> obstacles;
  Eigen::Vector4d lqr_state_weights{10.0, 6.0, 1.0, 1.0};
  Eigen::Vector2d lqr_input_weights{0.1, 0.25};
  double slack_weight = 1e3;
  bool soft = false;
  double spd_floor = 1e-4;

  void validate() const;
  static EnvConfig defaults();
};

// Exact zero-order-hold integration of the double integrator.
EnvState step_dynamics(const EnvState& s, const ActionVec& u, double dt);

struct RefPoint {
  Eigen::Vector2d p, v;
};
// Constant-velocity straight-line reference through the waypoint direction.
RefPoint reference_at(const EnvConfig& cfg, double t);

// Fixed-point iteration for A'PA - A'PB(R+B'PB)^{-1}B'PA + Q.
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

// Discounted LQR action-value function over the tracking-error state:
//   Q(e,u) = -(e'Qe + u'Ru) - gamma (Ae+Bu)' P (Ae+Bu)
// with P from the discounted Riccati equation. The induced projection metric
// -hessian = 2(R + gamma B'PB) is constant; the unconstrained argmax is the
// familiar LQR law -Ke.
class LqrQModel : public QModel {
 public:
  LqrQModel(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd Qw, Eigen::MatrixXd Rw,
            double gamma);

  int state_dim() const override { return static_cast<int>(A_.rows()); }
  int action_dim() const override { return static_cast<int>(B_.cols()); }
  double value(const StateVec& e, const ActionVec& u) const override;
  ActionVec gradient(const StateVec& e, const ActionVec& u) const override;
  Eigen::MatrixXd hessian(const StateVec& e, const ActionVec& u) const override;

  ActionVec reference_action(const StateVec& e) const { return -(K_ * e); }
  const Eigen::MatrixXd& gain() const { return K_; }
  const Eigen::MatrixXd& riccati() const { return P_; }
  const Eigen::MatrixXd& metric() const { return W_; }

 private:
  Eigen::MatrixXd A_, B_, Qw_, Rw_, P_, K_, W_;
  double gamma_;
};

// Evaluation model / nominal-control source for the configured environment.
LqrQModel make_lqr_model(const EnvConfig& cfg);

Eigen::Vector4d tracking_error(const EnvState& s, const RefPoint& ref);

// LQR tracking law clipped to the action box.
ActionVec nominal_controller(const EnvState& s, const RefPoint& ref, const LqrQModel& lqr,
                             const EnvConfig& cfg);

enum class FilterKind { None, Euclidean, Weighted, QMax };
enum class WSource { Analytic, Learned };

const char* to_string(FilterKind k);
FilterKind filter_kind_from_string(const std::string& s);

struct StepLog {
  int step = 0;
  double t = 0.0;
  Eigen::Vector2d p, v, u_ref, u;
  double h_min = std::numeric_limits<double>::infinity();
  double q_applied = 0.0;
  double solve_us = 0.0;
  double slack = 0.0;
};

struct RolloutRecord {
  FilterKind kind = FilterKind::None;
  WSource w_source = WSource::Analytic;
  std::vector<StepLog> steps;
  EnvState final_state;
  bool safety_fault = false;
  int fault_step = -1;
  double min_h = std::numeric_limits<double>::infinity();  // includes terminal state
  double tracking_rmse = 0.0;
  double total_slack = 0.0;
  int clip_warnings = 0;
};

struct RolloutOptions {
  FilterKind kind = FilterKind::Euclidean;
  WSource w_source = WSource::Analytic;
  const FeatureQModel* learned = nullptr;  // required for WSource::Learned
  double explore_noise = 0.0;              // stddev added to the nominal action
  std::uint64_t seed = 0;
  QMaxOptions qmax;
};

// Closed-loop run of the chosen filter; deterministic given (cfg, options).
// Hard-mode infeasibility aborts with a partial record and the fault flag.
RolloutRecord rollout(const EnvConfig& cfg, const QModel& q_eval, const RolloutOptions& opts);

struct FilterMetrics {
  std::string filter;
  int steps = 0;
  double cum_q_diff = 0.0;  // vs the baseline record
  double tracking_rmse = 0.0;
  double min_h = 0.0;
  double solve_us_mean = 0.0;
  double solve_us_median = 0.0;
  double solve_us_max = 0.0;
  bool safety_fault = false;
};

struct MetricsSummary {
  std::vector<FilterMetrics> rows;
  // One column per record, aligned with `rows`: per-step q_applied minus the
  // baseline's q_applied.
  Eigen::MatrixXd qdiff_series;
};

MetricsSummary compare_metrics(const std::vector<RolloutRecord>& records,
                               const RolloutRecord& baseline);

// Seeded variation of the base scenario (obstacle geometry, speeds), with a
// safety buffer on the initial state and initial ZCBF feasibility enforced.
EnvConfig scenario_variant(const EnvConfig& base, std::uint64_t seed);

// step,t,p0,p1,v0,v1,uref0,uref1,u0,u1,h_min,q_applied,solve_us,filter
void write_rollout_csv(const RolloutRecord& record, const std::string& path);
std::string rollout_summary_json(const RolloutRecord& record);
void write_metrics_csv(const MetricsSummary& summary, const std::string& path);
void write_qdiff_csv(const MetricsSummary& summary, const std::string& path);

}  // namespace hwsf
