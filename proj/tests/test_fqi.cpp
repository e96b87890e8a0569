#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "hwsf/fqi.hpp"
#include "support/finite_diff.hpp"
#include "support/random_models.hpp"

using namespace hwsf;
using namespace hwsf::testsupport;

namespace {

double gauss_c3() {
  const double t = std::sqrt(3.0 - std::sqrt(6.0));
  return (3.0 * t - t * t * t) * std::exp(-t * t / 2.0);
}

// Ground-truth representable model: Q(x,u) = 1 + (0.3 + 0.1 x) u0 - 0.2 u1
//                                            - 1/2 u' diag(4,1) u.
FeatureQModel truth_quadratic() {
  FeatureQModel base(1, 2, 2, Eigen::MatrixXd(3, 0), 1.0);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(base.dim_total());
  theta(0) = 1.0;                    // constant
  theta(base.offset_b() + 0) = 0.3;  // u0
  theta(base.offset_b() + 1) = -0.2; // u1
  theta(base.offset_b() + 2) = 0.1;  // x*u0
  theta(base.offset_s() + 0) = 4.0;  // S slot (0,0)
  theta(base.offset_s() + 2) = 1.0;  // S slot (1,1)
  return base.with_theta(theta);
}

// Transitions whose rewards satisfy the Bellman identity of `truth`, so the
// regression targets computed from `truth` reproduce its own values.
TransitionDataset generative_dataset(const FeatureQModel& truth, int count, double gamma,
                                     const ActionVec& lo, const ActionVec& hi,
                                     std::mt19937_64& rng) {
  const int n = truth.state_dim(), m = truth.action_dim();
  TransitionDataset data;
  data.states.resize(count, n);
  data.actions.resize(count, m);
  data.rewards.resize(count);
  data.next_states.resize(count, n);
  for (int i = 0; i < count; ++i) {
    const StateVec x = random_vec(n, rng, 2.0);
    const ActionVec u = random_vec(m, rng, 2.0);
    const StateVec xp = random_vec(n, rng, 2.0);
    const ActionVec up = box_argmax(truth, xp, lo, hi);
    data.states.row(i) = x.transpose();
    data.actions.row(i) = u.transpose();
    data.next_states.row(i) = xp.transpose();
    data.rewards(i) = eval_q(truth, x, u) - gamma * eval_q(truth, xp, up);
  }
  return data;
}

// 1-D LQR-style MDP: x' = a x + b u, r = -(x^2 + u^2).
TransitionDataset lqr_dataset(int count, double a, double b, std::mt19937_64& rng,
                              double x_range = 3.0, double u_range = 3.0) {
  TransitionDataset data;
  data.states.resize(count, 1);
  data.actions.resize(count, 1);
  data.rewards.resize(count);
  data.next_states.resize(count, 1);
  for (int i = 0; i < count; ++i) {
    const double x = random_vec(1, rng, x_range)(0);
    const double u = random_vec(1, rng, u_range)(0);
    data.states(i, 0) = x;
    data.actions(i, 0) = u;
    data.rewards(i) = -(x * x + u * u);
    data.next_states(i, 0) = a * x + b * u;
  }
  return data;
}

// Discounted scalar Riccati fixed point for r = -(x^2+u^2).
double scalar_riccati(double a, double b, double gamma) {
  double P = 1.0;
  for (int i = 0; i < 10000; ++i) {
    const double Pn =
        1.0 + gamma * a * a * P -
        (gamma * a * b * P) * (gamma * a * b * P) / (1.0 + gamma * b * b * P);
    if (std::abs(Pn - P) < 1e-14) return Pn;
    P = Pn;
  }
  return P;
}

FqiConfig lqr_config(double alpha = 0.5, double beta = 0.2) {
  FqiConfig cfg;
  cfg.gamma = 0.99;
  cfg.alpha = alpha;
  cfg.beta = beta;
  cfg.action_lo = ActionVec::Constant(1, -3.0);
  cfg.action_hi = ActionVec::Constant(1, 3.0);
  cfg.grid = StateGrid::uniform(StateVec::Constant(1, -3.0), StateVec::Constant(1, 3.0), 7,
                                2401, 1);
  return cfg;
}

FeatureQModel lqr_init(int rbf_count, const StateGrid& grid, std::mt19937_64& rng) {
  Eigen::MatrixXd centers(2, rbf_count);
  for (int c = 0; c < rbf_count; ++c) centers.col(c) = random_vec(2, rng, 3.0);
  return initial_model(1, 1, 2, centers, 2.0, grid);
}

}  // namespace

TEST_CASE("s_theta assembles the quadratic coefficient matrix") {
  SUBCASE("zero parameters give the zero matrix") {
    FeatureQModel model(2, 2, 2, Eigen::MatrixXd(4, 0), 1.0);
    StateVec x(2);
    x << 0.7, -0.4;
    CHECK(s_theta(model, x).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("unit state feature with slot vector (1,0,1) gives the identity") {
    FeatureQModel base(1, 2, 0, Eigen::MatrixXd(3, 0), 1.0);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(base.dim_total());
    theta(base.offset_s() + 0) = 1.0;
    theta(base.offset_s() + 2) = 1.0;
    const FeatureQModel model = base.with_theta(theta);
    StateVec x(1);
    x << 5.0;
    CHECK((s_theta(model, x) - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("s_theta equals minus the Hessian when the nonlinear block is empty") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const FeatureQModel model = random_feature_model(2, 2, 0, rng);
      const StateVec x = random_vec(2, rng);
      const ActionVec u = random_vec(2, rng);
      CHECK((s_theta(model, x) + hessian_u(model, x, u)).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("regression targets") {
  std::mt19937_64 rng(5);
  const FeatureQModel truth = truth_quadratic();
  const ActionVec lo = ActionVec::Constant(2, -3.0);
  const ActionVec hi = ActionVec::Constant(2, 3.0);
  TransitionDataset data = generative_dataset(truth, 40, 0.9, lo, hi, rng);

  SUBCASE("gamma = 0 returns the rewards") {
    const Eigen::VectorXd y = compute_targets(truth, data, 0.0, lo, hi);
    CHECK((y - data.rewards).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("inner maximization matches a dense grid") {
    FeatureQModel base(1, 1, 2, Eigen::MatrixXd(2, 0), 1.0);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(base.dim_total());
    theta(base.offset_b() + 0) = 0.5;
    theta(base.offset_b() + 1) = 0.3;  // x u
    theta(base.offset_s() + 0) = 2.0;  // S = 2
    const FeatureQModel model = base.with_theta(theta);
    const ActionVec alo = ActionVec::Constant(1, -3.0);
    const ActionVec ahi = ActionVec::Constant(1, 3.0);
    TransitionDataset d1 = lqr_dataset(20, 0.9, 0.5, rng);
    const Eigen::VectorXd y = compute_targets(model, d1, 0.9, alo, ahi);
    for (int i = 0; i < d1.size(); ++i) {
      const StateVec xp = d1.next_states.row(i).transpose();
      double best = -1e300;
      for (int k = 0; k <= 6000; ++k) {
        ActionVec u(1);
        u << -3.0 + k * 1e-3;
        best = std::max(best, eval_q(model, xp, u));
      }
      CHECK(std::abs(y(i) - (d1.rewards(i) + 0.9 * best)) <= 1e-4);
    }
  }
  SUBCASE("adding a reward shift moves every target by exactly that shift") {
    const Eigen::VectorXd y0 = compute_targets(truth, data, 0.9, lo, hi);
    TransitionDataset shifted = data;
    shifted.rewards.array() += 0.37;
    const Eigen::VectorXd y1 = compute_targets(truth, shifted, 0.9, lo, hi);
    CHECK((y1 - y0 - Eigen::VectorXd::Constant(y0.size(), 0.37)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("curvature regularizer") {
  SUBCASE("identity S leaves only the barrier") {
    FeatureQModel base(1, 2, 0, Eigen::MatrixXd(3, 0), 1.0);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(base.dim_total());
    theta(base.offset_s() + 0) = 1.0;
    theta(base.offset_s() + 2) = 1.0;
    const FeatureQModel model = base.with_theta(theta);
    StateGrid grid;
    for (int k = 0; k < 4; ++k) grid.points.push_back(StateVec::Constant(1, 0.5 * k));
    const double tau = 0.01, eps = 1e-3;
    const double expected = -tau * 4.0 * 2.0 * std::log(1.0 + eps);
    CHECK(reg_mu(model, grid, tau, eps) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("negative definite S pays the squared positive part") {
    FeatureQModel base(1, 2, 0, Eigen::MatrixXd(3, 0), 1.0);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(base.dim_total());
    theta(base.offset_s() + 0) = -1.0;
    theta(base.offset_s() + 2) = -1.0;
    const FeatureQModel model = base.with_theta(theta);
    StateGrid grid;
    grid.points.push_back(StateVec::Zero(1));
    // With eps = 2 the barrier is logdet(I) = 0, isolating the penalty.
    CHECK(reg_mu(model, grid, 0.7, 2.0) == doctest::Approx(2.0).epsilon(1e-12));
    // With a small shift the barrier blows up.
    CHECK(std::isinf(reg_mu(model, grid, 0.7, 1e-3)));
  }
  SUBCASE("gradient matches finite differences at a generic point") {
    FeatureQModel base(1, 2, 1, Eigen::MatrixXd(3, 0), 1.0);  // phi = (1, x)
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(base.dim_total());
    theta(base.offset_s() + 0) = 0.5;   // S ~ diag(0.5, -0.2) plus x terms
    theta(base.offset_s() + 1) = 0.05;
    theta(base.offset_s() + 2) = -0.2;
    theta(base.offset_s() + 3) = 0.02;
    theta(base.offset_s() + 4) = -0.01;
    theta(base.offset_s() + 5) = 0.03;
    const FeatureQModel model = base.with_theta(theta);
    StateGrid grid;
    for (double x : {-1.0, 0.0, 1.0}) grid.points.push_back(StateVec::Constant(1, x));
    const double tau = 0.02, eps = 0.5;
    const Eigen::VectorXd analytic = reg_mu_grad(model, grid, tau, eps);
    const auto f = [&](const Eigen::VectorXd& ts) {
      Eigen::VectorXd th = model.theta();
      th.segment(model.offset_s(), model.dim_s()) = ts;
      return reg_mu(model.with_theta(th), grid, tau, eps);
    };
    const Eigen::VectorXd fd = fd_gradient_of(f, model.theta_s(), 1e-6);
    CHECK(close_rel(analytic, fd, 1e-4));
  }
}

TEST_CASE("third-derivative bounds") {
  const double c3 = gauss_c3();
  SUBCASE("cubic width scaling") {
    StateVec x(1);
    x << 0.4;
    ActionVec u_ref(1);
    u_ref << 0.0;
    Eigen::MatrixXd centers(2, 1);
    centers << 0.4, 0.1;  // state part equals x: amplitude is one
    const FeatureQModel wide(1, 1, 2, centers, 1.0);
    const FeatureQModel narrow(1, 1, 2, centers, 0.5);
    const double b1 = l2_feature_bound(wide, 0, x, u_ref, 1.0);
    const double b2 = l2_feature_bound(narrow, 0, x, u_ref, 1.0);
    CHECK(b1 == doctest::Approx(c3).epsilon(1e-12));
    CHECK(b2 == doctest::Approx(8.0 * c3).epsilon(1e-12));
  }
  SUBCASE("sampled Hessian variation never exceeds the bound") {
    std::mt19937_64 rng(7);
    Eigen::MatrixXd centers(3, 1);
    centers << 0.2, -0.1, 0.3;
    FeatureQModel base(1, 2, 2, centers, 0.8);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(base.dim_total());
    theta(base.offset_nl()) = 1.0;  // pure single-RBF model
    const FeatureQModel model = base.with_theta(theta);
    StateVec x(1);
    x << 0.1;
    ActionVec u_ref(2);
    u_ref << -0.1, 0.3;
    const double D = 1.5;
    const double bound = l2_feature_bound(model, 0, x, u_ref, D);
    double worst = 0.0;
    for (int k = 0; k < 400; ++k) {
      ActionVec a = u_ref + random_vec(2, rng, D / std::sqrt(2.0));
      ActionVec b = u_ref + random_vec(2, rng, D / std::sqrt(2.0));
      if ((a - b).norm() < 1e-9) continue;
      const Eigen::MatrixXd diff = hessian_u(model, x, a) - hessian_u(model, x, b);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(diff);
      worst = std::max(worst, eig.eigenvalues().cwiseAbs().maxCoeff() / (a - b).norm());
    }
    CHECK(worst <= bound + 1e-12);
    CHECK(worst > 0.05 * bound);
  }
}

TEST_CASE("Hessian-Lipschitz regularizer") {
  SUBCASE("vanishes without nonlinear parameters") {
    std::mt19937_64 rng(9);
    FeatureQModel model = random_feature_model(1, 2, 3, rng);
    Eigen::VectorXd theta = model.theta();
    theta.tail(model.dim_nl()).setZero();
    model = model.with_theta(theta);
    StateGrid grid;
    grid.points.push_back(StateVec::Zero(1));
    CHECK(reg_l2(model, grid, {ActionVec::Zero(2)}, 1.0) == 0.0);
  }
  SUBCASE("hand arithmetic: 5 grid points, |theta| = 2, bound 3") {
    const double c3 = gauss_c3();
    const double w = std::cbrt(c3 / 3.0);  // makes the envelope bound exactly 3
    StateVec x0(1);
    x0 << 0.7;
    Eigen::MatrixXd centers(2, 1);
    centers << x0(0), 0.0;
    FeatureQModel base(1, 1, 2, centers, w);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(base.dim_total());
    theta(base.offset_nl()) = -2.0;
    const FeatureQModel model = base.with_theta(theta);
    StateGrid grid;
    std::vector<ActionVec> refs;
    for (int k = 0; k < 5; ++k) {
      grid.points.push_back(x0);
      refs.push_back(ActionVec::Zero(1));
    }
    CHECK(reg_l2(model, grid, refs, 1.0) == doctest::Approx(180.0).epsilon(1e-10));
  }
  SUBCASE("gradient matches finite differences away from zero") {
    std::mt19937_64 rng(11);
    FeatureQModel model = random_feature_model(1, 2, 3, rng);
    Eigen::VectorXd theta = model.theta();
    theta.tail(3) << 0.4, -0.6, 0.9;
    model = model.with_theta(theta);
    StateGrid grid;
    std::vector<ActionVec> refs;
    for (double x : {-0.5, 0.2, 0.9}) {
      grid.points.push_back(StateVec::Constant(1, x));
      refs.push_back(ActionVec::Zero(2));
    }
    const Eigen::VectorXd analytic = reg_l2_grad(model, grid, refs, 1.0);
    const auto f = [&](const Eigen::VectorXd& tn) {
      Eigen::VectorXd th = model.theta();
      th.tail(3) = tn;
      return reg_l2(model.with_theta(th), grid, refs, 1.0);
    };
    const Eigen::VectorXd fd = fd_gradient_of(f, model.theta_nl(), 1e-6);
    CHECK(close_rel(analytic, fd, 1e-5));
  }
}

TEST_CASE("fqi_step") {
  std::mt19937_64 rng(13);
  const FeatureQModel truth = truth_quadratic();
  const ActionVec lo = ActionVec::Constant(2, -3.0);
  const ActionVec hi = ActionVec::Constant(2, 3.0);
  const TransitionDataset data = generative_dataset(truth, 200, 0.9, lo, hi, rng);

  FqiConfig cfg;
  cfg.gamma = 0.9;
  cfg.action_lo = lo;
  cfg.action_hi = hi;
  cfg.grid = StateGrid::uniform(StateVec::Constant(1, -2.0), StateVec::Constant(1, 2.0), 5, 100, 1);

  SUBCASE("unregularized step solves the normal equations") {
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    const FeatureQModel out = fqi_step(truth, data, cfg);
    // Residual gradient of the least-squares objective.
    Eigen::MatrixXd Psi(data.size(), out.dim_total());
    for (int i = 0; i < data.size(); ++i)
      Psi.row(i) = out.features(data.states.row(i).transpose(),
                                data.actions.row(i).transpose()).transpose();
    const Eigen::VectorXd y = compute_targets(truth, data, cfg.gamma, lo, hi);
    const Eigen::VectorXd grad = 2.0 * Psi.transpose() * (Psi * out.theta() - y);
    CHECK(grad.norm() <= 1e-8 * (1.0 + y.norm()));
  }
  SUBCASE("generative quadratic data is reproduced by the exact solve") {
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    const FeatureQModel out = fqi_step(truth, data, cfg);
    for (int i = 0; i < 40; ++i) {
      const StateVec x = data.states.row(i).transpose();
      const ActionVec u = data.actions.row(i).transpose();
      CHECK(std::abs(eval_q(out, x, u) - eval_q(truth, x, u)) <= 1e-6);
    }
  }
  SUBCASE("regularized step keeps the extracted metric near the construction") {
    cfg.alpha = 0.5;
    cfg.beta = 0.2;
    const FeatureQModel out = fqi_step(truth, data, cfg);
    StateVec x(1);
    x << 0.3;
    const auto W = extract_w(out, x, ActionVec::Zero(2), 1e-4);
    Eigen::MatrixXd W_true(2, 2);
    W_true << 4.0, 0.0, 0.0, 1.0;
    CHECK((W.mat - W_true).norm() <= 1e-3);
    CHECK_FALSE(W.repaired);
  }
  SUBCASE("objective never increases across a step") {
    cfg.alpha = 0.5;
    cfg.beta = 0.2;
    const FeatureQModel start = initial_model(1, 2, 2, Eigen::MatrixXd(3, 0), 1.0, cfg.grid);
    const Eigen::VectorXd y = compute_targets(start, data, cfg.gamma, lo, hi);
    const double before = fqi_objective(start, data, y, cfg);
    const FeatureQModel stepped = fqi_step(start, data, cfg);
    const double after = fqi_objective(stepped, data, y, cfg);
    CHECK(after <= before + 1e-9 * (1.0 + std::abs(before)));
  }
}

TEST_CASE("fit on the scalar LQR task") {
  std::mt19937_64 rng(19);
  const double a = 0.9, b = 0.5, gamma = 0.99;
  const TransitionDataset data = lqr_dataset(600, a, b, rng);
  FqiConfig cfg = lqr_config();
  const FeatureQModel init = lqr_init(4, cfg.grid, rng);

  const FitResult res = fit(data, cfg, init);
  REQUIRE(res.converged);

  SUBCASE("extracted curvature is near the Riccati ground truth") {
    const double P = scalar_riccati(a, b, gamma);
    const double W_true = 2.0 * (1.0 + gamma * b * b * P);
    for (double x : {-2.0, -0.5, 0.0, 0.5, 2.0}) {
      const auto W = extract_w(res.model, StateVec::Constant(1, x), ActionVec::Zero(1), 1e-4);
      CHECK(std::abs(W.mat(0, 0) - W_true) / W_true <= 0.10);
    }
  }
  SUBCASE("curvature regularizer keeps S positive on the grid") {
    for (const auto& x : cfg.grid.points) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s_theta(res.model, x));
      CHECK(eig.eigenvalues().minCoeff() > 0.0);
    }
  }
  SUBCASE("restarting from the converged model terminates immediately") {
    const FitResult again = fit(data, cfg, res.model);
    CHECK(again.iterations == 1);
    CHECK(again.converged);
  }
  SUBCASE("stronger beta does not increase the learned Lipschitz estimate") {
    std::vector<ActionVec> refs(cfg.grid.points.size(), ActionVec::Zero(1));
    double prev = std::numeric_limits<double>::infinity();
    for (double beta : {0.0, 0.2, 1.0}) {
      FqiConfig c2 = cfg;
      c2.beta = beta;
      c2.max_iters = 60;
      const FitResult r2 = fit(data, c2, init);
      // Sum over the grid of the squared Lipschitz estimate at the optimum.
      const double total = reg_l2(r2.model, c2.grid, refs, c2.d_radius);
      CHECK(total <= prev + 1e-9);
      prev = total;
    }
  }
}

TEST_CASE("hessian error rho") {
  const FeatureQModel truth = truth_quadratic();
  std::vector<StateVec> probes;
  for (double x : {-1.0, 0.0, 1.0}) probes.push_back(StateVec::Constant(1, x));

  SUBCASE("identical models have zero error") {
    CHECK(hessian_error_rho(truth, truth, probes) == 0.0);
  }
  SUBCASE("a 0.1 identity shift is measured exactly") {
    Eigen::VectorXd theta = truth.theta();
    theta(truth.offset_s() + 0) += 0.1;  // S slot (0,0)
    theta(truth.offset_s() + 2) += 0.1;  // S slot (1,1)
    const FeatureQModel shifted = truth.with_theta(theta);
    CHECK(hessian_error_rho(shifted, truth, probes) == doctest::Approx(0.1).epsilon(1e-9));
  }
}

TEST_CASE("extract_w repairs indefinite curvature") {
  FeatureQModel base(1, 2, 0, Eigen::MatrixXd(3, 0), 1.0);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(base.dim_total());
  theta(base.offset_s() + 0) = 2.0;
  theta(base.offset_s() + 2) = -0.5;  // S = diag(2, -0.5): indefinite
  const FeatureQModel model = base.with_theta(theta);
  const auto W = extract_w(model, StateVec::Zero(1), ActionVec::Zero(2), 1e-4);
  CHECK(W.repaired);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(W.mat);
  CHECK(eig.eigenvalues().minCoeff() == doctest::Approx(1e-4).epsilon(1e-6));
}

TEST_CASE("dataset CSV round trip") {
  std::mt19937_64 rng(23);
  const FeatureQModel truth = truth_quadratic();
  const ActionVec lo = ActionVec::Constant(2, -3.0);
  const ActionVec hi = ActionVec::Constant(2, 3.0);
  const TransitionDataset data = generative_dataset(truth, 25, 0.9, lo, hi, rng);
  const std::string path = "/tmp/hwsf_test_dataset.csv";
  data.save_csv(path);
  const TransitionDataset back = TransitionDataset::load_csv(path);
  CHECK(back.states == data.states);
  CHECK(back.actions == data.actions);
  CHECK(back.rewards == data.rewards);
  CHECK(back.next_states == data.next_states);
  std::remove(path.c_str());
}

TEST_CASE("initial model starts inside the barrier domain") {
  StateGrid grid = StateGrid::uniform(StateVec::Constant(2, -2.0), StateVec::Constant(2, 2.0),
                                      5, 2401, 1);
  const FeatureQModel model = initial_model(2, 2, 2, Eigen::MatrixXd(4, 0), 1.0, grid);
  for (const auto& x : grid.points) {
    const Eigen::MatrixXd S = s_theta(model, x);
    CHECK((S - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-4);
  }
}
