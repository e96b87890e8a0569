#pragma once

#include <random>

#include "hwsf/qmodel.hpp"

namespace hwsf::testsupport {

// Random symmetric matrix with eigenvalues drawn uniformly from
// [lam_lo, lam_hi]; positive definite for the default range.
inline Eigen::MatrixXd random_sym(int m, std::mt19937_64& rng, double lam_lo = 0.5,
                                  double lam_hi = 4.0) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> lam(lam_lo, lam_hi);
  Eigen::MatrixXd A(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) A(i, j) = gauss(rng);
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ();
  Eigen::VectorXd eigs(m);
  for (int i = 0; i < m; ++i) eigs(i) = lam(rng);
  Eigen::MatrixXd W = Q * eigs.asDiagonal() * Q.transpose();
  return 0.5 * (W + W.transpose());
}

inline Eigen::VectorXd random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

// FeatureQModel with random theta; RBF block included when p_nl > 0.
inline FeatureQModel random_feature_model(int n, int m, int p_nl, std::mt19937_64& rng,
                                          double theta_scale = 0.5) {
  Eigen::MatrixXd centers(n + m, p_nl);
  for (int c = 0; c < p_nl; ++c) centers.col(c) = random_vec(n + m, rng, 1.5);
  FeatureQModel model(n, m, 2, centers, 1.3);
  return model.with_theta(random_vec(model.dim_total(), rng, theta_scale));
}

}  // namespace hwsf::testsupport
