#pragma once

#include <Eigen/Dense>
#include <complex>
#include <random>

namespace testutil {

using Cx = std::complex<double>;

inline Eigen::MatrixXcd random_gaussian(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXcd a(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) a(r, c) = Cx(nd(rng), nd(rng));
  return a;
}

// Wishart-style full-rank density matrix: always Hermitian positive with unit trace.
inline Eigen::MatrixXcd random_density(int n, std::mt19937_64& rng) {
  Eigen::MatrixXcd a = random_gaussian(n, rng);
  Eigen::MatrixXcd rho = a * a.adjoint();
  rho /= rho.trace().real();
  return rho;
}

inline Eigen::MatrixXcd random_hermitian(int n, std::mt19937_64& rng) {
  Eigen::MatrixXcd a = random_gaussian(n, rng);
  return Eigen::MatrixXcd(0.5 * (a + a.adjoint()));
}

inline Eigen::VectorXcd random_pure(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXcd c(n);
  for (int k = 0; k < n; ++k) c(k) = Cx(nd(rng), nd(rng));
  c /= c.norm();
  return c;
}

}  // namespace testutil
