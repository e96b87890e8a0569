#include "hwsf/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace hwsf {

void EnvConfig::validate() const {
  if (dt <= 0.0) throw ConfigError("EnvConfig: dt must be positive");
  if (horizon < 1) throw ConfigError("EnvConfig: horizon must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("EnvConfig: gamma must lie in (0,1)");
  if (ref_speed < 0.0) throw ConfigError("EnvConfig: negative reference speed");
  if (action_lo.size() != 2 || action_hi.size() != 2)
    throw ConfigError("EnvConfig: action box must be 2-D");
  if (((action_hi - action_lo).array() <= 0.0).any())
    throw ConfigError("EnvConfig: empty action box");
  if ((lqr_state_weights.array() <= 0.0).any() || (lqr_input_weights.array() <= 0.0).any())
    throw ConfigError("EnvConfig: LQR weights must be positive");
  if (slack_weight < 0.0) throw ConfigError("EnvConfig: negative slack weight");
  if (spd_floor <= 0.0) throw ConfigError("EnvConfig: spd_floor must be positive");
  for (const auto& o : obstacles) {
    if (o.center.size() != 2) throw ConfigError("EnvConfig: obstacle center must be 2-D");
    if (o.inflated_radius() <= 0.0) throw ConfigError("EnvConfig: obstacle radius+margin <= 0");
  }
  if ((waypoint - start_p).norm() <= 0.0)
    throw ConfigError("EnvConfig: waypoint coincides with the start position");
}

EnvConfig EnvConfig::defaults() {
  EnvConfig cfg;
  Obstacle obs;
  obs.center = Eigen::Vector2d(2.5, 0.25);
  obs.radius = 0.4;
  obs.margin = 0.2;
  cfg.obstacles.push_back(obs);
  return cfg;
}

EnvState step_dynamics(const EnvState& s, const ActionVec& u, double dt) {
  if (u.size() != 2) throw DimensionError("step_dynamics: action must be 2-D");
  EnvState out;
  out.p = s.p + s.v * dt + 0.5 * u * dt * dt;
  out.v = s.v + u * dt;
  out.t = s.t + dt;
  return out;
}

RefPoint reference_at(const EnvConfig& cfg, double t) {
  const Eigen::Vector2d dir = (cfg.waypoint - cfg.start_p).normalized();
  RefPoint ref;
  ref.v = dir * cfg.ref_speed;
  ref.p = cfg.start_p + ref.v * t;
  return ref;
}

Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols())
    throw DimensionError("solve_dare: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> rllt(R);
  if (rllt.info() != Eigen::Success) throw ConfigError("solve_dare: R must be positive definite");
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < 200000; ++it) {
    const Eigen::MatrixXd BtPB = B.transpose() * P * B;
    const Eigen::MatrixXd gain = (R + BtPB).ldlt().solve(B.transpose() * P * A);
    const Eigen::MatrixXd Pn =
        Q + A.transpose() * P * A - A.transpose() * P * B * gain;
    const double delta = (Pn - P).cwiseAbs().maxCoeff();
    P = 0.5 * (Pn + Pn.transpose());
    if (delta < 1e-13 * (1.0 + P.cwiseAbs().maxCoeff())) return P;
  }
  throw ConfigError("solve_dare: Riccati iteration did not converge");
}

LqrQModel::LqrQModel(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd Qw,
                     Eigen::MatrixXd Rw, double gamma)
    : A_(std::move(A)), B_(std::move(B)), Qw_(std::move(Qw)), Rw_(std::move(Rw)),
      gamma_(gamma) {
  if (!(gamma_ > 0.0 && gamma_ <= 1.0)) throw ConfigError("LqrQModel: gamma must lie in (0,1]");
  const double sg = std::sqrt(gamma_);
  P_ = solve_dare(sg * A_, sg * B_, Qw_, Rw_);
  W_ = 2.0 * (Rw_ + gamma_ * B_.transpose() * P_ * B_);
  K_ = (Rw_ + gamma_ * B_.transpose() * P_ * B_)
           .ldlt()
           .solve(gamma_ * B_.transpose() * P_ * A_);
}

double LqrQModel::value(const StateVec& e, const ActionVec& u) const {
  const Eigen::VectorXd ep = A_ * e + B_ * u;
  return -(e.dot(Qw_ * e) + u.dot(Rw_ * u)) - gamma_ * ep.dot(P_ * ep);
}

ActionVec LqrQModel::gradient(const StateVec& e, const ActionVec& u) const {
  const Eigen::VectorXd ep = A_ * e + B_ * u;
  return -2.0 * (Rw_ * u) - 2.0 * gamma_ * (B_.transpose() * (P_ * ep));
}

Eigen::MatrixXd LqrQModel::hessian(const StateVec&, const ActionVec&) const { return -W_; }

LqrQModel make_lqr_model(const EnvConfig& cfg) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(4, 4);
  A(0, 2) = cfg.dt;
  A(1, 3) = cfg.dt;
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(4, 2);
  B(0, 0) = 0.5 * cfg.dt * cfg.dt;
  B(1, 1) = 0.5 * cfg.dt * cfg.dt;
  B(2, 0) = cfg.dt;
  B(3, 1) = cfg.dt;
  return LqrQModel(A, B, cfg.lqr_state_weights.asDiagonal(),
                   cfg.lqr_input_weights.asDiagonal(), cfg.gamma);
}

Eigen::Vector4d tracking_error(const EnvState& s, const RefPoint& ref) {
  Eigen::Vector4d e;
  e << s.p - ref.p, s.v - ref.v;
  return e;
}

ActionVec nominal_controller(const EnvState& s, const RefPoint& ref, const LqrQModel& lqr,
                             const EnvConfig& cfg) {
  const ActionVec u = lqr.reference_action(tracking_error(s, ref));
  return u.cwiseMax(cfg.action_lo).cwiseMin(cfg.action_hi);
}

const char* to_string(FilterKind k) {
  switch (k) {
    case FilterKind::None: return "none";
    case FilterKind::Euclidean: return "euclidean";
    case FilterKind::Weighted: return "weighted";
    case FilterKind::QMax: return "qmax";
  }
  return "unknown";
}

FilterKind filter_kind_from_string(const std::string& s) {
  if (s == "none") return FilterKind::None;
  if (s == "euclidean") return FilterKind::Euclidean;
  if (s == "weighted") return FilterKind::Weighted;
  if (s == "qmax") return FilterKind::QMax;
  throw ConfigError("unknown filter kind: " + s);
}

namespace {

double min_h_at(const EnvConfig& cfg, const Eigen::Vector2d& p) {
  double h = std::numeric_limits<double>::infinity();
  for (const auto& o : cfg.obstacles) h = std::min(h, o.h(p));
  return h;
}

}  // namespace

RolloutRecord rollout(const EnvConfig& cfg, const QModel& q_eval, const RolloutOptions& opts) {
  cfg.validate();
  if (opts.w_source == WSource::Learned && opts.kind == FilterKind::Weighted &&
      opts.learned == nullptr)
    throw ConfigError("rollout: learned weight source requires a fitted model");

  const LqrQModel lqr = make_lqr_model(cfg);
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  RolloutRecord rec;
  rec.kind = opts.kind;
  rec.w_source = opts.w_source;
  rec.steps.reserve(cfg.horizon);

  EnvState s;
  s.p = cfg.start_p;
  s.v = cfg.start_v;
  s.t = 0.0;

  double err_sq_sum = 0.0;
  for (int k = 0; k < cfg.horizon; ++k) {
    const RefPoint ref = reference_at(cfg, s.t);
    const Eigen::Vector4d e = tracking_error(s, ref);
    ActionVec u_nom = lqr.reference_action(e);
    if (opts.explore_noise > 0.0)
      for (int j = 0; j < 2; ++j) u_nom(j) += opts.explore_noise * gauss(rng);
    const ActionVec u_ref = u_nom.cwiseMax(cfg.action_lo).cwiseMin(cfg.action_hi);

    AdmissibleSet set;
    try {
      set = build_zcbf_constraints(s.p, s.v, cfg.obstacles, cfg.alpha0, cfg.alpha1);
    } catch (const InfeasibleSetError&) {
      rec.safety_fault = true;
      rec.fault_step = k;
      break;
    }
    set.box_lo = cfg.action_lo;
    set.box_hi = cfg.action_hi;
    set.slack_weight = cfg.slack_weight;
    set.soft = cfg.soft;

    StepLog log;
    log.step = k;
    log.t = s.t;
    log.p = s.p;
    log.v = s.v;
    log.u_ref = u_ref;
    log.h_min = min_h_at(cfg, s.p);

    ActionVec u = u_ref;
    try {
      switch (opts.kind) {
        case FilterKind::None:
          break;
        case FilterKind::Euclidean: {
          const FilterResult r = project_euclidean(set, u_ref);
          u = r.action;
          log.solve_us = r.solve_seconds * 1e6;
          log.slack = r.slack_used;
          break;
        }
        case FilterKind::Weighted: {
          WeightMatrix W;
          if (opts.w_source == WSource::Analytic) {
            W.mat = -hessian_u(q_eval, e, u_ref);
            W.min_eig_floor = cfg.spd_floor;
          } else {
            W = extract_w(*opts.learned, e, u_ref, cfg.spd_floor);
          }
          const FilterResult r = project_weighted(set, u_ref, W);
          u = r.action;
          log.solve_us = r.solve_seconds * 1e6;
          log.slack = r.slack_used;
          break;
        }
        case FilterKind::QMax: {
          const FilterResult r = safe_q_max(q_eval, e, set, opts.qmax);
          u = r.action;
          log.solve_us = r.solve_seconds * 1e6;
          break;
        }
      }
    } catch (const InfeasibleSetError&) {
      rec.safety_fault = true;
      rec.fault_step = k;
      break;
    }

    if (((u - cfg.action_lo).array() < -1e-9).any() ||
        ((cfg.action_hi - u).array() < -1e-9).any()) {
      ++rec.clip_warnings;
      u = u.cwiseMax(cfg.action_lo).cwiseMin(cfg.action_hi);
    }

    log.u = u;
    log.q_applied = eval_q(q_eval, e, u);
    rec.steps.push_back(log);
    rec.min_h = std::min(rec.min_h, log.h_min);
    rec.total_slack += log.slack;
    err_sq_sum += (s.p - ref.p).squaredNorm();

    s = step_dynamics(s, u, cfg.dt);
  }
  rec.final_state = s;
  rec.min_h = std::min(rec.min_h, min_h_at(cfg, s.p));
  if (!rec.steps.empty())
    rec.tracking_rmse = std::sqrt(err_sq_sum / static_cast<double>(rec.steps.size()));
  return rec;
}

MetricsSummary compare_metrics(const std::vector<RolloutRecord>& records,
                               const RolloutRecord& baseline) {
  MetricsSummary out;
  const int T = static_cast<int>(baseline.steps.size());
  out.qdiff_series.resize(T, static_cast<int>(records.size()));
  for (size_t r = 0; r < records.size(); ++r) {
    const RolloutRecord& rec = records[r];
    if (static_cast<int>(rec.steps.size()) != T)
      throw DimensionError("compare_metrics: mismatched horizons");
    FilterMetrics fm;
    fm.filter = to_string(rec.kind);
    fm.steps = T;
    fm.tracking_rmse = rec.tracking_rmse;
    fm.min_h = rec.min_h;
    fm.safety_fault = rec.safety_fault;
    std::vector<double> times;
    times.reserve(T);
    double cum = 0.0;
    for (int k = 0; k < T; ++k) {
      const double dq = rec.steps[k].q_applied - baseline.steps[k].q_applied;
      out.qdiff_series(k, static_cast<int>(r)) = dq;
      cum += dq;
      times.push_back(rec.steps[k].solve_us);
      fm.solve_us_mean += rec.steps[k].solve_us;
      fm.solve_us_max = std::max(fm.solve_us_max, rec.steps[k].solve_us);
    }
    fm.cum_q_diff = cum;
    if (T > 0) {
      fm.solve_us_mean /= T;
      std::sort(times.begin(), times.end());
      fm.solve_us_median = times[times.size() / 2];
    }
    out.rows.push_back(std::move(fm));
  }
  return out;
}

EnvConfig scenario_variant(const EnvConfig& base, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto uni = [&](double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
  };
  for (int attempt = 0; attempt < 100; ++attempt) {
    EnvConfig cfg = base;
    cfg.ref_speed = uni(0.5, 1.0);
    const Eigen::Vector2d dir = (cfg.waypoint - cfg.start_p).normalized();
    const Eigen::Vector2d lateral(-dir.y(), dir.x());
    cfg.start_v = dir * cfg.ref_speed;
    cfg.obstacles.clear();
    Obstacle obs;
    obs.radius = uni(0.3, 0.5);
    obs.margin = uni(0.15, 0.25);
    obs.center =
        cfg.start_p + dir * uni(1.8, 3.0) + lateral * uni(-0.35, 0.35);
    cfg.obstacles.push_back(obs);

    const double h0 = obs.h(cfg.start_p);
    const double hd0 = obs.h_dot(cfg.start_p, cfg.start_v);
    if (h0 < 0.3) continue;
    if (hd0 + 2.0 * std::min(cfg.alpha0, cfg.alpha1) * h0 < 0.1) continue;
    try {
      AdmissibleSet set =
          build_zcbf_constraints(cfg.start_p, cfg.start_v, cfg.obstacles, cfg.alpha0, cfg.alpha1);
      set.box_lo = cfg.action_lo;
      set.box_hi = cfg.action_hi;
      if (!feasibility_check(set).feasible) continue;
    } catch (const std::exception&) {
      continue;
    }
    return cfg;
  }
  throw ConfigError("scenario_variant: could not build a safe initial scenario");
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_rollout_csv(const RolloutRecord& record, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_rollout_csv: cannot write " + path);
  out << "step,t,p0,p1,v0,v1,uref0,uref1,u0,u1,h_min,q_applied,solve_us,filter\n";
  for (const auto& s : record.steps) {
    out << s.step << ',' << fmt(s.t) << ',' << fmt(s.p.x()) << ',' << fmt(s.p.y()) << ','
        << fmt(s.v.x()) << ',' << fmt(s.v.y()) << ',' << fmt(s.u_ref.x()) << ','
        << fmt(s.u_ref.y()) << ',' << fmt(s.u.x()) << ',' << fmt(s.u.y()) << ','
        << fmt(s.h_min) << ',' << fmt(s.q_applied) << ',' << fmt(s.solve_us) << ','
        << to_string(record.kind) << '\n';
  }
}

std::string rollout_summary_json(const RolloutRecord& record) {
  nlohmann::json j;
  j["filter"] = to_string(record.kind);
  j["w_source"] = record.w_source == WSource::Analytic ? "analytic" : "learned";
  j["steps"] = record.steps.size();
  j["min_h"] = record.min_h;
  j["safety_fault"] = record.safety_fault;
  j["fault_step"] = record.fault_step;
  j["tracking_rmse"] = record.tracking_rmse;
  j["total_slack"] = record.total_slack;
  j["clip_warnings"] = record.clip_warnings;
  double mean = 0.0, mx = 0.0;
  for (const auto& s : record.steps) {
    mean += s.solve_us;
    mx = std::max(mx, s.solve_us);
  }
  if (!record.steps.empty()) mean /= static_cast<double>(record.steps.size());
  j["solve_us_mean"] = mean;
  j["solve_us_max"] = mx;
  return j.dump(2);
}

void write_metrics_csv(const MetricsSummary& summary, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot write " + path);
  out << "filter,steps,cum_q_diff,tracking_rmse,min_h,solve_us_mean,solve_us_median,"
         "solve_us_max,safety_fault\n";
  for (const auto& r : summary.rows)
    out << r.filter << ',' << r.steps << ',' << fmt(r.cum_q_diff) << ','
        << fmt(r.tracking_rmse) << ',' << fmt(r.min_h) << ',' << fmt(r.solve_us_mean) << ','
        << fmt(r.solve_us_median) << ',' << fmt(r.solve_us_max) << ','
        << (r.safety_fault ? 1 : 0) << '\n';
}

void write_qdiff_csv(const MetricsSummary& summary, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_qdiff_csv: cannot write " + path);
  out << "step";
  for (const auto& r : summary.rows) out << ',' << r.filter;
  out << '\n';
  for (int k = 0; k < summary.qdiff_series.rows(); ++k) {
    out << k;
    for (int c = 0; c < summary.qdiff_series.cols(); ++c)
      out << ',' << fmt(summary.qdiff_series(k, c));
    out << '\n';
  }
}

}  // namespace hwsf
