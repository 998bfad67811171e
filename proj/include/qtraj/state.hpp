#pragma once

// State-space machinery for N-level systems: the generalized Gell-Mann basis,
// Bloch-vector coordinates, and density-matrix diagnostics.
//
// Conventions fixed here and relied on everywhere else:
//   * level labels are 0-based, |0> ... |N-1>;
//   * basis matrices satisfy Tr(G_i G_j) = 2 delta_ij;
//   * linear index order: symmetric pair matrices |m><n| + |n><m| (m < n,
//     row-major), then antisymmetric -i(|n><m| - |m><n|) (m > n, row-major),
//     then the N-1 diagonal matrices;
//   * rho = I/N + (1/2) sum_k q_k G_k,  q_k = Tr(rho G_k).

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace qtraj {

using Cx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;

class GellMannBasis {
 public:
  struct Label {
    int m = 0;
    int n = 0;
    bool diagonal = false;
  };

  explicit GellMannBasis(int dim) : dim_(dim) {
    if (dim < 2) throw std::invalid_argument("GellMannBasis: dim must be >= 2");
    mats_.reserve(size());
    // Symmetric pairs, m < n.
    for (int m = 0; m < dim; ++m)
      for (int n = m + 1; n < dim; ++n) {
        Matrix g = Matrix::Zero(dim, dim);
        g(m, n) = 1.0;
        g(n, m) = 1.0;
        mats_.push_back(std::move(g));
      }
    // Antisymmetric pairs, m > n: -i(|n><m| - |m><n|).
    for (int m = 0; m < dim; ++m)
      for (int n = 0; n < m; ++n) {
        Matrix g = Matrix::Zero(dim, dim);
        g(n, m) = Cx(0.0, -1.0);
        g(m, n) = Cx(0.0, 1.0);
        mats_.push_back(std::move(g));
      }
    // Diagonals: a_n (sum_{k<=n} |k><k| - (n+1)|n+1><n+1|).
    for (int n = 0; n + 1 < dim; ++n) {
      Matrix g = Matrix::Zero(dim, dim);
      double a = diag_scale(n);
      for (int k = 0; k <= n; ++k) g(k, k) = a;
      g(n + 1, n + 1) = -double(n + 1) * a;
      mats_.push_back(std::move(g));
    }
  }

  int dim() const { return dim_; }
  int size() const { return dim_ * dim_ - 1; }

  const Matrix& matrix(int k) const {
    if (k < 0 || k >= size()) throw std::out_of_range("GellMannBasis: index");
    return mats_[static_cast<size_t>(k)];
  }
  const std::vector<Matrix>& matrices() const { return mats_; }

  int pair_index(int m, int n) const {
    if (m < 0 || n < 0 || m >= dim_ || n >= dim_ || m == n)
      throw std::out_of_range("GellMannBasis: pair labels");
    int pairs = dim_ * (dim_ - 1) / 2;
    if (m < n)  // symmetric block, row-major over m < n
      return m * dim_ - m * (m + 1) / 2 + (n - m - 1);
    return pairs + m * (m - 1) / 2 + n;  // antisymmetric block
  }

  int diag_index(int n) const {
    if (n < 0 || n + 1 >= dim_) throw std::out_of_range("GellMannBasis: diag label");
    return dim_ * (dim_ - 1) + n;
  }

  Label label(int k) const {
    if (k < 0 || k >= size()) throw std::out_of_range("GellMannBasis: index");
    int pairs = dim_ * (dim_ - 1) / 2;
    if (k >= 2 * pairs) return Label{k - 2 * pairs, k - 2 * pairs, true};
    bool anti = k >= pairs;
    int rem = anti ? k - pairs : k;
    if (anti) {
      int m = 1;
      while (rem >= m) rem -= m, ++m;
      return Label{m, rem, false};
    }
    int m = 0;
    while (rem >= dim_ - m - 1) rem -= dim_ - m - 1, ++m;
    return Label{m, m + 1 + rem, false};
  }

  static double diag_scale(int n) {
    return std::sqrt(2.0 / (double(n + 1) * double(n + 2)));
  }

 private:
  int dim_;
  std::vector<Matrix> mats_;
};

inline void require_square(const Matrix& rho, const char* who) {
  if (rho.rows() != rho.cols() || rho.rows() < 1)
    throw std::invalid_argument(std::string(who) + ": matrix must be square");
}

inline RVector density_to_bloch(const Matrix& rho, const GellMannBasis& basis) {
  require_square(rho, "density_to_bloch");
  if (rho.rows() != basis.dim())
    throw std::invalid_argument("density_to_bloch: dimension mismatch");
  RVector q(basis.size());
  for (int k = 0; k < basis.size(); ++k)
    q(k) = (rho * basis.matrix(k)).trace().real();
  return q;
}

inline Matrix bloch_to_density(const RVector& q, const GellMannBasis& basis) {
  if (q.size() != basis.size())
    throw std::invalid_argument("bloch_to_density: coordinate count mismatch");
  int n = basis.dim();
  Matrix rho = Matrix::Identity(n, n) / double(n);
  for (int k = 0; k < basis.size(); ++k) rho += 0.5 * q(k) * basis.matrix(k);
  return rho;
}

// Diagonal of bloch_to_density(q) without building the matrix.
inline RVector populations_from_bloch(const RVector& q, int dim) {
  if (dim < 2 || q.size() != dim * dim - 1)
    throw std::invalid_argument("populations_from_bloch: bad dimensions");
  int diag0 = dim * (dim - 1);
  RVector pops(dim);
  for (int k = 0; k < dim; ++k) {
    double v = 1.0 / double(dim);
    for (int n = k; n + 1 < dim; ++n)
      v += 0.5 * q(diag0 + n) * GellMannBasis::diag_scale(n);
    if (k >= 1) v -= 0.5 * double(k) * q(diag0 + k - 1) * GellMannBasis::diag_scale(k - 1);
    pops(k) = v;
  }
  return pops;
}

inline double purity(const Matrix& rho) {
  require_square(rho, "purity");
  return (rho * rho).trace().real();
}

inline Matrix pure_density(const CVector& c) {
  double n2 = c.squaredNorm();
  if (!(n2 > 0.0)) throw std::invalid_argument("pure_density: zero amplitude vector");
  return (c * c.adjoint()) / n2;
}

inline Matrix projector(int dim, int level) {
  if (level < 0 || level >= dim) throw std::out_of_range("projector: level");
  Matrix p = Matrix::Zero(dim, dim);
  p(level, level) = 1.0;
  return p;
}

struct StateDiagnostics {
  double hermiticity_defect = 0.0;  // max |rho_mn - conj(rho_nm)|
  double trace_defect = 0.0;        // |Tr rho - 1|
  double min_eigenvalue = 0.0;      // of the Hermitian part

  bool physical(double herm_tol = 1e-10, double trace_tol = 1e-10,
                double eig_floor = -1e-9) const {
    return hermiticity_defect <= herm_tol && trace_defect <= trace_tol &&
           min_eigenvalue >= eig_floor;
  }
};

inline StateDiagnostics validate_state(const Matrix& rho) {
  require_square(rho, "validate_state");
  StateDiagnostics d;
  d.hermiticity_defect = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  d.trace_defect = std::abs(rho.trace() - Cx(1.0, 0.0));
  Matrix herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = es.eigenvalues().minCoeff();
  return d;
}

// Projects negative eigenvalues of the Hermitian part to zero and restores
// unit trace. Not called by any stepper unless explicitly requested.
inline Matrix clamp_negative_eigenvalues(const Matrix& rho) {
  require_square(rho, "clamp_negative_eigenvalues");
  Matrix herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(herm);
  RVector ev = es.eigenvalues();
  for (int k = 0; k < ev.size(); ++k) ev(k) = std::max(ev(k), 0.0);
  double total = ev.sum();
  if (!(total > 0.0))
    throw std::invalid_argument("clamp_negative_eigenvalues: no positive weight left");
  ev /= total;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace qtraj
