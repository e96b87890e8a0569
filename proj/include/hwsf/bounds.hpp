#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hwsf/filter.hpp"
#include "hwsf/qmodel.hpp"
#include "hwsf/types.hpp"

namespace hwsf {

// Constants consumed by the performance bounds. `mu` enters squared: the
// curvature assumption is hessian <= -mu^2 I on the ball of weighted radius
// D_radius around u_ref.
struct BoundInputs {
  double mu = 1.0;
  double L2 = 0.0;
  double D_radius = 1.0;
  double G = 0.0;
  double rho = 0.0;  // must stay below mu^2
  double delta = 0.0;
  double beta_ratio = 1.0;
  double c_ratio = 0.0;  // (beta_ratio^2 - 1) / 2

  static double c_from_beta(double beta) { return 0.5 * (beta * beta - 1.0); }
  void validate() const;
};

// L2 D^3 / (3 mu^3): cap on |Q(u_W) - Q(u*)|.
double theorem1_bound(const BoundInputs& in);

// delta_min = sqrt(L2 D^3 / (3 c mu^3)); the outperformance condition holds
// iff delta >= delta_min. Requires c_ratio > 0.
double theorem2_threshold(const BoundInputs& in);
bool theorem2_condition(const BoundInputs& in);

// sqrt(2 rho) D / mu^2: cap on |u_hat_W - u_W|. Requires rho < mu^2.
double lemma2_gap(const BoundInputs& in);

// theorem1_bound + G * lemma2_gap: cap on |Q(u_hat_W) - Q(u*)|.
double theorem3_bound(const BoundInputs& in);

// c delta^2 - theorem1_bound - G * lemma2_gap; nonnegative margin implies
// Q(u_hat_W) >= Q(u_I).
double theorem4_margin(const BoundInputs& in);
bool theorem4_condition(const BoundInputs& in);

// Sampled estimates of the assumption constants (lower bounds on the sup
// quantities; mu_sq is an upper bound on the inf).
struct ConstantEstimates {
  double mu_sq = 0.0;
  double L2 = 0.0;
  double G = 0.0;
  int samples = 0;
  bool estimated = true;
};

// Quasi-uniform (Halton) sampling of the ball |u - u_ref|_W <= D with
// W = -hessian(model, x, u_ref). Throws NonConcaveError with the witness
// point if a sampled Hessian fails negative definiteness (A2 violation).
ConstantEstimates estimate_constants(const QModel& model, const StateVec& x,
                                     const ActionVec& u_ref, double d_radius, int samples);

// ---------- empirical certification harness ----------

struct CertCheck {
  std::string name;
  double bound = 0.0;
  double observed = 0.0;
  bool satisfied = true;
};

struct CertRecord {
  std::string family;
  int instance = 0;
  BoundInputs constants;
  bool premises_hold = false;
  std::string premise_note;
  std::vector<CertCheck> checks;
  bool satisfied = true;  // all checks pass; vacuously true out of premise
};

struct CertifyOptions {
  int instances = 100;
  std::uint64_t seed = 20250901;
  double tol = 1e-9;
  double d_scale = 1.0;
  bool cross_check_sampling = true;  // re-estimate constants at 4x samples
};

// Exact-quadratic instances: safe_q_max must coincide with project_weighted.
std::vector<CertRecord> certify_lemma1(const CertifyOptions& opts);
// Cubic-perturbed instances with construction-known (mu, L2, D).
std::vector<CertRecord> certify_theorem1(const CertifyOptions& opts);
// Outperformance condition on measured (delta, beta).
std::vector<CertRecord> certify_theorem2(const CertifyOptions& opts);
// Injected Hessian error of known spectral norm: Lemma 2, Theorems 3-4.
std::vector<CertRecord> certify_learned(const CertifyOptions& opts);
std::vector<CertRecord> certify_all(const CertifyOptions& opts);

struct CertSummary {
  int total = 0;
  int in_premise = 0;
  int violations = 0;  // in-premise records with a failed check
};
CertSummary summarize(const std::vector<CertRecord>& records);

std::string cert_report_json(const std::vector<CertRecord>& records);
std::string cert_report_csv(const std::vector<CertRecord>& records);

}  // namespace hwsf
