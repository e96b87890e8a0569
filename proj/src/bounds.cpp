#include "hwsf/bounds.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "hwsf/admissible.hpp"

namespace hwsf {

void BoundInputs::validate() const {
  const auto fin = [](double v) { return std::isfinite(v); };
  if (!(fin(mu) && fin(L2) && fin(D_radius) && fin(G) && fin(rho) && fin(delta) &&
        fin(beta_ratio) && fin(c_ratio)))
    throw std::invalid_argument("BoundInputs: non-finite entry");
  if (mu <= 0.0) throw std::invalid_argument("BoundInputs: mu must be positive");
  if (L2 < 0.0 || G < 0.0 || rho < 0.0 || delta < 0.0 || D_radius <= 0.0)
    throw std::invalid_argument("BoundInputs: negative constant");
  if (rho >= mu * mu) throw std::invalid_argument("BoundInputs: rho must stay below mu^2");
  if (std::abs(c_ratio - c_from_beta(beta_ratio)) > 1e-9 * (1.0 + std::abs(c_ratio)))
    throw std::invalid_argument("BoundInputs: c_ratio inconsistent with beta_ratio");
}

double theorem1_bound(const BoundInputs& in) {
  if (in.mu <= 0.0) throw std::invalid_argument("theorem1_bound: mu must be positive");
  return in.L2 * std::pow(in.D_radius, 3) / (3.0 * std::pow(in.mu, 3));
}

double theorem2_threshold(const BoundInputs& in) {
  if (in.mu <= 0.0) throw std::invalid_argument("theorem2_threshold: mu must be positive");
  if (in.c_ratio <= 0.0)
    throw std::invalid_argument("theorem2_threshold: c_ratio must be positive (beta > 1)");
  return std::sqrt(in.L2 * std::pow(in.D_radius, 3) / (3.0 * in.c_ratio * std::pow(in.mu, 3)));
}

bool theorem2_condition(const BoundInputs& in) { return in.delta >= theorem2_threshold(in); }

double lemma2_gap(const BoundInputs& in) {
  if (in.mu <= 0.0) throw std::invalid_argument("lemma2_gap: mu must be positive");
  if (in.rho >= in.mu * in.mu)
    throw std::invalid_argument("lemma2_gap: rho must stay below mu^2");
  return std::sqrt(2.0 * in.rho) * in.D_radius / (in.mu * in.mu);
}

double theorem3_bound(const BoundInputs& in) { return theorem1_bound(in) + in.G * lemma2_gap(in); }

double theorem4_margin(const BoundInputs& in) {
  return in.c_ratio * in.delta * in.delta - theorem1_bound(in) - in.G * lemma2_gap(in);
}

bool theorem4_condition(const BoundInputs& in) { return theorem4_margin(in) >= 0.0; }

namespace {

double halton(std::uint64_t index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

constexpr int kHaltonBases[] = {2, 3, 5, 7, 11, 13, 17, 19};

double spectral_norm(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

ConstantEstimates estimate_constants(const QModel& model, const StateVec& x,
                                     const ActionVec& u_ref, double d_radius, int samples) {
  if (samples <= 0) throw std::invalid_argument("estimate_constants: samples must be positive");
  if (d_radius <= 0.0) throw std::invalid_argument("estimate_constants: d_radius must be positive");
  const int m = model.action_dim();
  if (m > 8) throw std::invalid_argument("estimate_constants: action dimension above 8");

  const Eigen::MatrixXd W = -hessian_u(model, x, u_ref);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> weig(W);
  if (weig.eigenvalues().minCoeff() <= 0.0)
    throw NonConcaveError("estimate_constants: Hessian at u_ref not negative definite", 0, u_ref);
  const Eigen::MatrixXd W_inv_sqrt = weig.eigenvectors() *
                                     weig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                                     weig.eigenvectors().transpose();

  std::vector<ActionVec> points;
  points.reserve(samples);
  std::uint64_t index = 1;
  std::uint64_t tries = 0;
  const std::uint64_t max_tries = 64ull * static_cast<std::uint64_t>(samples) + 1024;
  while (static_cast<int>(points.size()) < samples && tries < max_tries) {
    Eigen::VectorXd s(m);
    for (int j = 0; j < m; ++j) s(j) = 2.0 * halton(index, kHaltonBases[j]) - 1.0;
    ++index;
    ++tries;
    const double norm = s.norm();
    if (norm > 1.0) {
      if (tries < max_tries / 2) continue;
      s /= norm;  // dense fallback for high-rejection dimensions
    }
    points.push_back(u_ref + d_radius * (W_inv_sqrt * s));
  }

  ConstantEstimates out;
  out.samples = static_cast<int>(points.size());
  out.mu_sq = std::numeric_limits<double>::infinity();
  std::vector<Eigen::MatrixXd> hessians;
  hessians.reserve(points.size());
  for (const auto& u : points) {
    const Eigen::MatrixXd H = hessian_u(model, x, u);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    const double lmax = eig.eigenvalues().maxCoeff();
    if (lmax >= 0.0)
      throw NonConcaveError("estimate_constants: A2 violated at a sampled point", 0, u);
    out.mu_sq = std::min(out.mu_sq, -lmax);
    out.G = std::max(out.G, grad_u(model, x, u).norm());
    hessians.push_back(H);
  }
  for (size_t k = 0; k + 1 < points.size(); k += 2) {
    const double dist = (points[k] - points[k + 1]).norm();
    if (dist < 1e-12) continue;
    out.L2 = std::max(out.L2, spectral_norm(hessians[k] - hessians[k + 1]) / dist);
  }
  return out;
}

// ---------- certification harness ----------

namespace {

struct Instance {
  QuadraticQModel model;
  AdmissibleSet set;
  ActionVec u_ref;
  double D = 0.0;
  double mu = 0.0;  // construction-valid curvature constant
  double L2 = 0.0;
  double G = 0.0;  // analytic gradient sup over the ball
  double lam_min = 0.0;
  double lam_max = 0.0;
};

Eigen::MatrixXd random_orthogonal(int m, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd A(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) A(i, j) = gauss(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ();
  return Q;
}

ActionVec random_unit(int m, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  ActionVec v(m);
  do {
    for (int j = 0; j < m; ++j) v(j) = gauss(rng);
  } while (v.norm() < 1e-8);
  return v / v.norm();
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng);
}

double weighted_norm(const Eigen::MatrixXd& W, const ActionVec& v) {
  return std::sqrt(std::max(0.0, v.dot(W * v)));
}

// Random instance: PD metric, reference action pushed outside 1..max_rows
// halfspaces, action box bounding the oracle search. Cubic instances keep Q
// strictly concave over the whole box so that (mu, L2, D) are construction
// constants.
Instance make_instance(std::mt19937_64& rng, int m, bool cubic, int max_rows, double d_scale) {
  Instance inst{QuadraticQModel(ActionVec::Ones(1), Eigen::MatrixXd::Identity(1, 1), 0.0),
                {}, {}, 0, 0, 0, 0, 0, 0};
  const double lam_min = uniform(rng, 0.5, 1.5);
  const double ratio = cubic ? uniform(rng, 1.5, 6.0) : uniform(rng, 1.5, 80.0);
  Eigen::VectorXd eigs(m);
  eigs(0) = lam_min;
  for (int j = 1; j < m; ++j) eigs(j) = lam_min * std::pow(ratio, uniform(rng, 0.0, 1.0));
  const Eigen::MatrixXd Q = random_orthogonal(m, rng);
  Eigen::MatrixXd W = Q * eigs.asDiagonal() * Q.transpose();
  W = 0.5 * (W + W.transpose());
  inst.lam_min = lam_min;
  inst.lam_max = eigs.maxCoeff();

  ActionVec u_ref(m);
  for (int j = 0; j < m; ++j) u_ref(j) = uniform(rng, -1.0, 1.0);

  const double w_box = cubic ? 1.2 : 3.0;
  std::vector<CubicTerm> cubic_terms;
  if (cubic) {
    const double cap = 0.5 * lam_min / (w_box * std::sqrt(static_cast<double>(m)));
    inst.L2 = uniform(rng, 0.2, 0.9) * cap;
    const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
    cubic_terms.push_back({random_unit(m, rng), sign * inst.L2});
    const double mu_sq = lam_min - inst.L2 * w_box * std::sqrt(static_cast<double>(m));
    inst.mu = std::sqrt(mu_sq);
    inst.D = uniform(rng, 0.55, 0.95) * w_box * std::sqrt(lam_min) * d_scale;
  } else {
    inst.L2 = 0.0;
    inst.mu = std::sqrt(lam_min);
    inst.D = 0.0;  // set after the projections are known
  }

  inst.model = QuadraticQModel(u_ref, W, uniform(rng, -1.0, 1.0), cubic_terms);
  inst.u_ref = u_ref;

  AdmissibleSet set;
  const int rows = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_rows));
  set.A.resize(rows, m);
  set.b.resize(rows);
  const ActionVec a0 = random_unit(m, rng);
  const double viol = cubic ? uniform(rng, 0.10, 0.45) * inst.D / std::sqrt(inst.lam_max)
                            : uniform(rng, 0.05, 0.6);
  set.A.row(0) = a0;
  set.b(0) = a0.dot(u_ref) + viol;
  const ActionVec anchor = u_ref + a0 * (viol * 1.15 + 1e-3);
  for (int i = 1; i < rows; ++i) {
    const ActionVec ai = random_unit(m, rng);
    set.A.row(i) = ai;
    set.b(i) = ai.dot(anchor) - uniform(rng, 0.05, 0.5);
  }
  set.box_lo = u_ref.array() - w_box;
  set.box_hi = u_ref.array() + w_box;
  inst.set = set;

  // Gradient sup over the Euclidean hull of the ball.
  const double r_e = inst.D > 0.0 ? inst.D / std::sqrt(lam_min) : w_box;
  inst.G = inst.lam_max * r_e + 0.5 * inst.L2 * r_e * r_e;
  return inst;
}

const StateVec kNoState = StateVec();

struct Projections {
  FilterResult u_I, u_W, u_star;
};

Projections solve_instance(const Instance& inst) {
  Projections out;
  out.u_I = project_euclidean(inst.set, inst.u_ref);
  out.u_W = project_weighted(inst.set, inst.u_ref, WeightMatrix{inst.model.weight(), false, 0.0});
  QMaxOptions qopts;
  out.u_star = safe_q_max(inst.model, kNoState, inst.set, qopts);
  return out;
}

bool in_ball(const Instance& inst, const ActionVec& u) {
  return weighted_norm(inst.model.weight(), u - inst.u_ref) <= inst.D * (1.0 + 1e-9);
}

CertCheck make_check(const std::string& name, double observed, double bound) {
  return CertCheck{name, bound, observed, observed <= bound};
}

}  // namespace

std::vector<CertRecord> certify_lemma1(const CertifyOptions& opts) {
  std::mt19937_64 rng(opts.seed ^ 0x1ea11ULL);
  const int dims[] = {1, 2, 4};
  std::vector<CertRecord> records;
  for (int i = 0; i < opts.instances; ++i) {
    const Instance inst = make_instance(rng, dims[i % 3], false, 4, opts.d_scale);
    const Projections proj = solve_instance(inst);
    CertRecord rec;
    rec.family = "lemma1";
    rec.instance = i;
    rec.premises_hold = true;
    rec.constants.mu = inst.mu;
    rec.constants.L2 = 0.0;
    rec.constants.D_radius =
        std::max({weighted_norm(inst.model.weight(), proj.u_W.action - inst.u_ref),
                  weighted_norm(inst.model.weight(), proj.u_I.action - inst.u_ref), 1e-6}) *
        1.1;
    rec.constants.G = inst.G;
    const double action_gap = (proj.u_star.action - proj.u_W.action).norm();
    const double value_gap = std::abs(eval_q(inst.model, kNoState, proj.u_W.action) -
                                      eval_q(inst.model, kNoState, proj.u_star.action));
    rec.checks.push_back(make_check("action_gap", action_gap, 1e-6));
    rec.checks.push_back(make_check("value_gap", value_gap, opts.tol));
    rec.satisfied = rec.checks[0].satisfied && rec.checks[1].satisfied;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<CertRecord> certify_theorem1(const CertifyOptions& opts) {
  std::mt19937_64 rng(opts.seed ^ 0x7e01ULL);
  const int dims[] = {1, 2, 4};
  std::vector<CertRecord> records;
  for (int i = 0; i < opts.instances; ++i) {
    Instance inst = make_instance(rng, dims[i % 3], true, 2, opts.d_scale);
    Projections proj = solve_instance(inst);
    // Containment of {u_I, u_W, u*} in the ball is part of A2; regenerate
    // until the construction satisfies it.
    int tries = 0;
    while ((!in_ball(inst, proj.u_I.action) || !in_ball(inst, proj.u_W.action) ||
            !in_ball(inst, proj.u_star.action)) &&
           tries < 60) {
      inst = make_instance(rng, dims[i % 3], true, 2, opts.d_scale);
      proj = solve_instance(inst);
      ++tries;
    }
    CertRecord rec;
    rec.family = "theorem1";
    rec.instance = i;
    rec.constants.mu = inst.mu;
    rec.constants.L2 = inst.L2;
    rec.constants.D_radius = inst.D;
    rec.constants.G = inst.G;
    rec.premises_hold = in_ball(inst, proj.u_I.action) && in_ball(inst, proj.u_W.action) &&
                        in_ball(inst, proj.u_star.action);
    if (!rec.premises_hold) rec.premise_note = "projections left the A2 ball";
    const double gap = std::abs(eval_q(inst.model, kNoState, proj.u_W.action) -
                                eval_q(inst.model, kNoState, proj.u_star.action));
    rec.checks.push_back(make_check("value_gap", gap, theorem1_bound(rec.constants) + opts.tol));

    if (opts.cross_check_sampling && rec.premises_hold) {
      // Sampled constants must stay on the conservative side of the
      // construction constants.
      const auto est = estimate_constants(inst.model, kNoState, inst.u_ref, inst.D, 512);
      rec.checks.push_back(make_check("sampled_L2_within_construction", est.L2, inst.L2 + 1e-9));
      rec.checks.push_back(
          make_check("construction_mu_sq_within_sampled", inst.mu * inst.mu, est.mu_sq + 1e-9));
      rec.checks.push_back(make_check("sampled_G_within_analytic", est.G, inst.G + 1e-9));
      const auto est4 = estimate_constants(inst.model, kNoState, inst.u_ref, inst.D, 2048);
      rec.checks.push_back(
          make_check("sampling_stability_mu", std::abs(est4.mu_sq - est.mu_sq), 0.25 * est.mu_sq));
    }

    rec.satisfied = true;
    for (const auto& c : rec.checks) rec.satisfied = rec.satisfied && c.satisfied;
    records.push_back(std::move(rec));
  }
  return records;
}

namespace {

void measure_delta_beta(const Instance& inst, const Projections& proj, BoundInputs& c) {
  c.delta = weighted_norm(inst.model.weight(), proj.u_W.action - inst.u_ref);
  const double dI = weighted_norm(inst.model.weight(), proj.u_I.action - inst.u_ref);
  c.beta_ratio = c.delta > 0.0 ? dI / c.delta : 1.0;
  c.c_ratio = BoundInputs::c_from_beta(c.beta_ratio);
}

}  // namespace

std::vector<CertRecord> certify_theorem2(const CertifyOptions& opts) {
  std::mt19937_64 rng(opts.seed ^ 0x7e02ULL);
  const int dims[] = {2, 4};
  std::vector<CertRecord> records;
  for (int i = 0; i < opts.instances; ++i) {
    const bool cubic = (i % 2) == 1;
    Instance inst = make_instance(rng, dims[i % 2], cubic, 3, opts.d_scale);
    Projections proj = solve_instance(inst);
    if (!cubic) {
      inst.D = std::max(weighted_norm(inst.model.weight(), proj.u_W.action - inst.u_ref),
                        weighted_norm(inst.model.weight(), proj.u_I.action - inst.u_ref)) *
                   1.05 +
               1e-9;
    }
    CertRecord rec;
    rec.family = "theorem2";
    rec.instance = i;
    rec.constants.mu = inst.mu;
    rec.constants.L2 = inst.L2;
    rec.constants.D_radius = inst.D;
    rec.constants.G = inst.G;
    measure_delta_beta(inst, proj, rec.constants);

    const bool contained = in_ball(inst, proj.u_I.action) && in_ball(inst, proj.u_W.action);
    const bool beta_regime = rec.constants.beta_ratio > 1.0 + 1e-12;
    bool threshold_ok = false;
    if (beta_regime) threshold_ok = theorem2_condition(rec.constants);
    rec.premises_hold = contained && beta_regime && threshold_ok && rec.constants.delta > 0.0;
    if (!beta_regime)
      rec.premise_note = "beta_ratio <= 1: not in the outperformance regime";
    else if (!threshold_ok)
      rec.premise_note = "delta below theorem-2 threshold";
    else if (!contained)
      rec.premise_note = "projections left the A2 ball";

    if (rec.premises_hold) {
      const double q_w = eval_q(inst.model, kNoState, proj.u_W.action);
      const double q_i = eval_q(inst.model, kNoState, proj.u_I.action);
      rec.checks.push_back(make_check("euclidean_minus_weighted_value", q_i - q_w, opts.tol));
    }
    rec.satisfied = true;
    for (const auto& c : rec.checks) rec.satisfied = rec.satisfied && c.satisfied;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<CertRecord> certify_learned(const CertifyOptions& opts) {
  std::mt19937_64 rng(opts.seed ^ 0x1ea2ULL);
  const int dims[] = {1, 2, 4};
  std::vector<CertRecord> records;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < opts.instances; ++i) {
    const int m = dims[i % 3];
    Instance inst = make_instance(rng, m, true, 2, opts.d_scale);
    Projections proj = solve_instance(inst);
    int tries = 0;
    while ((!in_ball(inst, proj.u_I.action) || !in_ball(inst, proj.u_W.action) ||
            !in_ball(inst, proj.u_star.action)) &&
           tries < 60) {
      inst = make_instance(rng, m, true, 2, opts.d_scale);
      proj = solve_instance(inst);
      ++tries;
    }

    // Injected symmetric perturbation of known spectral norm rho < mu^2.
    Eigen::MatrixXd E(m, m);
    for (int r = 0; r < m; ++r)
      for (int c = r; c < m; ++c) {
        E(r, c) = gauss(rng);
        E(c, r) = E(r, c);
      }
    E /= spectral_norm(E);
    const double mu_sq = inst.mu * inst.mu;
    const double rho = uniform(rng, 0.05, 0.6) * mu_sq;
    const Eigen::MatrixXd W_hat = inst.model.weight() + rho * E;
    const FilterResult u_hat =
        project_weighted(inst.set, inst.u_ref, WeightMatrix{W_hat, false, 0.0});

    CertRecord rec;
    rec.family = "learned";
    rec.instance = i;
    rec.constants.mu = inst.mu;
    rec.constants.L2 = inst.L2;
    rec.constants.D_radius = inst.D;
    rec.constants.G = inst.G;
    rec.constants.rho = rho;
    measure_delta_beta(inst, proj, rec.constants);

    const bool contained = in_ball(inst, proj.u_I.action) && in_ball(inst, proj.u_W.action) &&
                           in_ball(inst, proj.u_star.action) && in_ball(inst, u_hat.action);
    rec.premises_hold = contained && rho < mu_sq;
    if (!rec.premises_hold) rec.premise_note = "error model or containment premise failed";

    if (rec.premises_hold) {
      const double action_gap = (u_hat.action - proj.u_W.action).norm();
      rec.checks.push_back(
          make_check("lemma2_action_gap", action_gap, lemma2_gap(rec.constants) + opts.tol));
      const double value_gap = std::abs(eval_q(inst.model, kNoState, u_hat.action) -
                                        eval_q(inst.model, kNoState, proj.u_star.action));
      rec.checks.push_back(
          make_check("theorem3_value_gap", value_gap, theorem3_bound(rec.constants) + opts.tol));
      const double margin = theorem4_margin(rec.constants);
      if (margin > 0.0) {
        const double q_hat = eval_q(inst.model, kNoState, u_hat.action);
        const double q_i = eval_q(inst.model, kNoState, proj.u_I.action);
        rec.checks.push_back(make_check("theorem4_ordering", q_i - q_hat, opts.tol));
      }
    }
    rec.satisfied = true;
    for (const auto& c : rec.checks) rec.satisfied = rec.satisfied && c.satisfied;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<CertRecord> certify_all(const CertifyOptions& opts) {
  std::vector<CertRecord> all;
  for (auto fn : {certify_lemma1, certify_theorem1, certify_theorem2, certify_learned}) {
    auto part = fn(opts);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

CertSummary summarize(const std::vector<CertRecord>& records) {
  CertSummary s;
  s.total = static_cast<int>(records.size());
  for (const auto& r : records) {
    if (!r.premises_hold) continue;
    ++s.in_premise;
    if (!r.satisfied) ++s.violations;
  }
  return s;
}

namespace {

nlohmann::json record_to_json(const CertRecord& r) {
  nlohmann::json j;
  j["family"] = r.family;
  j["instance"] = r.instance;
  j["premises_hold"] = r.premises_hold;
  if (!r.premise_note.empty()) j["premise_note"] = r.premise_note;
  j["constants"] = {{"mu", r.constants.mu},       {"L2", r.constants.L2},
                    {"D", r.constants.D_radius},  {"G", r.constants.G},
                    {"rho", r.constants.rho},     {"delta", r.constants.delta},
                    {"beta", r.constants.beta_ratio}, {"c", r.constants.c_ratio}};
  j["satisfied"] = r.satisfied;
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name},
                      {"bound", c.bound},
                      {"observed", c.observed},
                      {"satisfied", c.satisfied}});
  j["checks"] = checks;
  return j;
}

}  // namespace

std::string cert_report_json(const std::vector<CertRecord>& records) {
  nlohmann::json j;
  const CertSummary s = summarize(records);
  j["summary"] = {{"total", s.total}, {"in_premise", s.in_premise}, {"violations", s.violations}};
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : records) recs.push_back(record_to_json(r));
  j["records"] = recs;
  return j.dump(2);
}

std::string cert_report_csv(const std::vector<CertRecord>& records) {
  std::ostringstream out;
  out << "family,instance,premises_hold,check,bound,observed,satisfied,mu,L2,D,G,rho,delta,"
         "beta,c\n";
  out.precision(17);
  for (const auto& r : records) {
    if (r.checks.empty()) {
      out << r.family << ',' << r.instance << ',' << (r.premises_hold ? 1 : 0)
          << ",none,0,0," << (r.satisfied ? 1 : 0) << ',' << r.constants.mu << ','
          << r.constants.L2 << ',' << r.constants.D_radius << ',' << r.constants.G << ','
          << r.constants.rho << ',' << r.constants.delta << ',' << r.constants.beta_ratio << ','
          << r.constants.c_ratio << '\n';
      continue;
    }
    for (const auto& c : r.checks)
      out << r.family << ',' << r.instance << ',' << (r.premises_hold ? 1 : 0) << ',' << c.name
          << ',' << c.bound << ',' << c.observed << ',' << (c.satisfied ? 1 : 0) << ','
          << r.constants.mu << ',' << r.constants.L2 << ',' << r.constants.D_radius << ','
          << r.constants.G << ',' << r.constants.rho << ',' << r.constants.delta << ','
          << r.constants.beta_ratio << ',' << r.constants.c_ratio << '\n';
  }
  return out.str();
}

}  // namespace hwsf
