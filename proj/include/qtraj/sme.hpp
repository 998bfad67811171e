#pragma once

// Stochastic master equation engines for continuous diagonal measurement.
//
// All engines share one noise convention: xi_p are white-noise increments
// with variance 1/dt (NoiseDraws), the readout at a step is built from the
// state *before* the update, and the same xi drives both record and state.
//
// Ito update, per channel p with diagonal operator L_p = diag(l_p):
//   rho' = rho + sum_p D_p[rho] dt + sum_p sqrt(eta_p) M_p[rho] xi_p dt
// with D[rho] = L rho L^+ - (L^+L rho + rho L^+L)/2 and
// M[rho] = L rho + rho L^+ - rho Tr(L rho + rho L^+).  For diagonal L this
// reduces to an elementwise multiplicative update, which is what the fast
// stepper applies; dissipators always act at full strength, only the
// innovation term carries sqrt(eta).

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qtraj/dispersive.hpp"
#include "qtraj/noise.hpp"
#include "qtraj/state.hpp"

namespace qtraj {

struct ReadoutSample {
  double t = 0.0;
  double i = 0.0;  // first quadrature, or the single amplified quadrature
  double q = 0.0;  // second quadrature; zero for single-quadrature records
};

// Measurement operators, diagonal in the qudit basis.  Two-quadrature
// detection splits the record between two channels (hence the extra
// sqrt(2) in the denominator); the second channel is -i times the first.
inline std::vector<Matrix> lindblad_ops(const MeasurementConfig& cfg) {
  cfg.check();
  const int n = cfg.levels;
  std::vector<Matrix> ops;
  if (cfg.scheme == Scheme::phase_preserving) {
    Matrix li = Matrix::Zero(n, n);
    const double amp = 1.0 / (2.0 * std::sqrt(2.0 * cfg.tau));
    for (int j = 0; j < n; ++j) li(j, j) = std::polar(amp, cfg.theta_eff(j));
    ops.push_back(li);
    ops.push_back(Cx(0.0, -1.0) * li);
  } else {
    Matrix l = Matrix::Zero(n, n);
    const double amp = 1.0 / (2.0 * std::sqrt(cfg.tau));
    for (int j = 0; j < n; ++j) l(j, j) = std::polar(amp, cfg.theta_eff(j));
    ops.push_back(l);
  }
  return ops;
}

inline Matrix dissipator(const Matrix& l, const Matrix& rho) {
  const Matrix ll = l.adjoint() * l;
  return l * rho * l.adjoint() - 0.5 * (ll * rho + rho * ll);
}

// Measurement backaction (innovation) superoperator.
inline Matrix innovation(const Matrix& l, const Matrix& rho) {
  const Matrix s = l * rho + rho * l.adjoint();
  return s - s.trace() * rho;
}

// Noise-free record means {I, Q} (two-quadrature) or {r, 0}.
inline std::array<double, 2> readout_mean_pops(const MeasurementConfig& cfg,
                                               const RVector& pops) {
  double ci = 0.0, cq = 0.0;
  for (int j = 0; j < cfg.levels; ++j) {
    ci += pops(j) * std::cos(cfg.theta_eff(j));
    cq += pops(j) * std::sin(cfg.theta_eff(j));
  }
  const double s = cfg.readout_scale();
  if (cfg.scheme == Scheme::phase_preserving) return {s * ci, s * cq};
  return {std::sqrt(2.0) * s * ci, 0.0};
}

inline std::array<double, 2> readout_mean(const MeasurementConfig& cfg,
                                          const Matrix& rho) {
  return readout_mean_pops(cfg, rho.diagonal().real());
}

// Record sample for one step; xi_p carries variance 1/dt, so the record
// variance per component is 2 tau C^2 alpha^2 / (eta_p dt).
inline ReadoutSample sample_readout_pops(const MeasurementConfig& cfg,
                                         const RVector& pops, double t,
                                         const NoiseDraws& xi) {
  const auto mean = readout_mean_pops(cfg, pops);
  const double s = cfg.readout_scale();
  ReadoutSample ro;
  ro.t = t;
  ro.i = mean[0] + s * std::sqrt(2.0 * cfg.tau / cfg.eta[0]) * xi.xi1;
  if (cfg.scheme == Scheme::phase_preserving)
    ro.q = mean[1] + s * std::sqrt(2.0 * cfg.tau / cfg.eta[1]) * xi.xi2;
  return ro;
}

inline ReadoutSample sample_readout(const MeasurementConfig& cfg,
                                    const Matrix& rho, double t,
                                    const NoiseDraws& xi) {
  return sample_readout_pops(cfg, rho.diagonal().real(), t, xi);
}

// Fast Euler-Maruyama stepper.  For diagonal L the update multiplies each
// element:
//   rho_mn *= 1 + dt * (c_mn + sum_p sqrt(eta_p) xi_p (l_m + l_n* - s_p))
// with c_mn = sum_p (l_m l_n* - (|l_m|^2 + |l_n|^2)/2) precomputed and
// s_p = sum_k 2 Re(l_k) rho_kk.  Constructing only the upper triangle and
// mirroring keeps the state Hermitian to the last bit, and basis states
// (the measurement pointer states) are exact fixed points.
class ItoStepper {
 public:
  explicit ItoStepper(const MeasurementConfig& cfg) : cfg_(cfg) {
    cfg_.check();
    const int n = cfg_.levels;
    const int nc = cfg_.channels();
    const double amp = cfg_.scheme == Scheme::phase_preserving
                           ? 1.0 / (2.0 * std::sqrt(2.0 * cfg_.tau))
                           : 1.0 / (2.0 * std::sqrt(cfg_.tau));
    l_.assign(size_t(nc), CVector(n));
    for (int j = 0; j < n; ++j) l_[0](j) = std::polar(amp, cfg_.theta_eff(j));
    if (nc == 2) l_[1] = Cx(0.0, -1.0) * l_[0];
    two_re_.assign(size_t(nc), RVector(n));
    for (int p = 0; p < nc; ++p) {
      sqrt_eta_[p] = std::sqrt(cfg_.eta[size_t(p)]);
      for (int j = 0; j < n; ++j) two_re_[size_t(p)](j) = 2.0 * l_[size_t(p)](j).real();
    }
    c_ = Matrix::Zero(n, n);
    for (int p = 0; p < nc; ++p) {
      const CVector& l = l_[size_t(p)];
      for (int m = 0; m < n; ++m)
        for (int v = 0; v < n; ++v) {
          const double nm = l(m).real() * l(m).real() + l(m).imag() * l(m).imag();
          const double nv = l(v).real() * l(v).real() + l(v).imag() * l(v).imag();
          c_(m, v) += l(m) * std::conj(l(v)) - 0.5 * (nm + nv);
        }
    }
  }

  const MeasurementConfig& config() const { return cfg_; }

  // Returns the trace before renormalization so callers can track the
  // discretization defect (identically 1 up to rounding for this update).
  double step(Matrix& rho, const NoiseDraws& xi) const {
    const int n = cfg_.levels;
    const int nc = cfg_.channels();
    const double x[2] = {xi.xi1, xi.xi2};
    double s[2] = {0.0, 0.0};
    for (int p = 0; p < nc; ++p)
      for (int k = 0; k < n; ++k) s[p] += two_re_[size_t(p)](k) * rho(k, k).real();
    for (int m = 0; m < n; ++m)
      for (int v = m; v < n; ++v) {
        Cx noise(0.0, 0.0);
        for (int p = 0; p < nc; ++p)
          noise += (sqrt_eta_[p] * x[p]) *
                   (l_[size_t(p)](m) + std::conj(l_[size_t(p)](v)) - s[p]);
        const Cx factor = 1.0 + cfg_.dt * (c_(m, v) + noise);
        rho(m, v) *= factor;
        if (v != m) rho(v, m) = std::conj(rho(m, v));
      }
    double tr = 0.0;
    for (int k = 0; k < n; ++k) tr += rho(k, k).real();
    if (!(tr > 0.0) || !std::isfinite(tr))
      throw std::runtime_error("ItoStepper: state trace collapsed");
    for (int m = 0; m < n; ++m)
      for (int v = 0; v < n; ++v) rho(m, v) /= tr;
    return tr;
  }

 private:
  MeasurementConfig cfg_;
  std::vector<CVector> l_;
  std::vector<RVector> two_re_;
  Matrix c_;
  double sqrt_eta_[2] = {1.0, 1.0};
};

inline Matrix step_ito(const MeasurementConfig& cfg, Matrix rho,
                       const NoiseDraws& xi) {
  ItoStepper(cfg).step(rho, xi);
  return rho;
}

// Ensemble average: coherences rotate and decay independently,
//   rho_mn(t) = rho_mn(0) exp[(e^{i (theta_m - theta_n)} - 1) t / (4 tau)],
// identically for both detection schemes (phi drops out of differences).
inline Matrix analytic_mean(const MeasurementConfig& cfg, const Matrix& rho0,
                            double t) {
  require_square(rho0, "analytic_mean");
  if (rho0.rows() != cfg.levels)
    throw std::invalid_argument("analytic_mean: dimension mismatch");
  const int n = cfg.levels;
  Matrix out(n, n);
  for (int m = 0; m < n; ++m)
    for (int v = 0; v < n; ++v) {
      if (m == v) {
        out(m, v) = rho0(m, v);
        continue;
      }
      const Cx rate =
          (std::polar(1.0, cfg.theta[size_t(m)] - cfg.theta[size_t(v)]) - 1.0) /
          (4.0 * cfg.tau);
      out(m, v) = rho0(m, v) * std::exp(rate * t);
    }
  return out;
}

// Mean of one coherence pair (q_s, q_a) = (q_mn, q_nm), m < n: a damped
// spiral w(t) = (q_s + i q_a) e^{(-gamma + i omega) t} with
// gamma = (1 - cos(theta_n - theta_m))/(4 tau), omega = sin(theta_n - theta_m)/(4 tau).
inline std::array<double, 2> bloch_pair_mean(const MeasurementConfig& cfg,
                                             int m, int n, double qs0,
                                             double qa0, double t) {
  if (!(0 <= m && m < n && n < cfg.levels))
    throw std::invalid_argument("bloch_pair_mean: need 0 <= m < n < levels");
  const double th = cfg.theta[size_t(n)] - cfg.theta[size_t(m)];
  const double gamma = (1.0 - std::cos(th)) / (4.0 * cfg.tau);
  const double omega = std::sin(th) / (4.0 * cfg.tau);
  const Cx w = Cx(qs0, qa0) * std::exp(Cx(-gamma * t, omega * t));
  return {w.real(), w.imag()};
}

// Exact pure-state update for unit-efficiency records: conditioning the
// state on the observed record multiplies each amplitude by an exponential
// of the record.  Two-quadrature form:
//   c_j' = c_j exp[dt (I - iQ) e^{i theta_j} / (4 tau C alpha)]
// single-quadrature form:
//   c_j' = c_j exp[dt e^{i theta_j} (sqrt(2) r - C alpha cos theta_j) / (4 tau C alpha)]
// (angles in the detection frame).
struct PureUpdate {
  CVector raw;
  CVector normalized;
};

inline PureUpdate step_pure_exact(const MeasurementConfig& cfg,
                                  const CVector& amps,
                                  const ReadoutSample& ro) {
  cfg.check();
  if (amps.size() != cfg.levels)
    throw std::invalid_argument("step_pure_exact: amplitude count mismatch");
  for (double e : cfg.eta)
    if (e != 1.0)
      throw std::invalid_argument(
          "step_pure_exact: exact pure-state updates need unit efficiency");
  const int n = cfg.levels;
  const double s = cfg.readout_scale();
  const double denom = 4.0 * cfg.tau * s;
  PureUpdate up;
  up.raw.resize(n);
  if (cfg.scheme == Scheme::phase_preserving) {
    const Cx rec(ro.i, -ro.q);
    for (int j = 0; j < n; ++j)
      up.raw(j) = amps(j) *
                  std::exp(cfg.dt * rec * std::polar(1.0, cfg.theta_eff(j)) / denom);
  } else {
    for (int j = 0; j < n; ++j) {
      const double th = cfg.theta_eff(j);
      up.raw(j) =
          amps(j) * std::exp(cfg.dt * std::polar(1.0, th) *
                             (std::sqrt(2.0) * ro.i - s * std::cos(th)) / denom);
    }
  }
  const double norm = up.raw.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw std::runtime_error("step_pure_exact: amplitude norm collapsed");
  up.normalized = up.raw / norm;
  return up;
}

// Euler stepper in generalized Bloch coordinates (two-quadrature, unit
// efficiency).  Level noises xi_k = xi_1 cos theta_k + xi_2 sin theta_k and
// xi'_k = xi_1 sin theta_k - xi_2 cos theta_k drive, per pair m < n,
//   dq_s = [-gamma q_s - omega q_a + q_s A + q_a B] dt
//   dq_a = [-gamma q_a + omega q_s + q_a A - q_s B] dt
//   A = (xi_m + xi_n - 2 sum_k rho_kk xi_k) / (2 sqrt(2 tau))
//   B = (xi'_m - xi'_n) / (2 sqrt(2 tau))
// and per level d rho_kk = rho_kk (xi_k - sum_j rho_jj xi_j) dt / sqrt(2 tau),
// mapped onto the diagonal coordinates.
class BlochStepper {
 public:
  explicit BlochStepper(const MeasurementConfig& cfg) : cfg_(cfg) {
    cfg_.check();
    if (cfg_.scheme != Scheme::phase_preserving)
      throw std::invalid_argument(
          "BlochStepper: implemented for two-quadrature detection only");
    for (double e : cfg_.eta)
      if (e != 1.0)
        throw std::invalid_argument("BlochStepper: requires unit efficiency");
    const int n = cfg_.levels;
    cos_.resize(size_t(n));
    sin_.resize(size_t(n));
    for (int j = 0; j < n; ++j) {
      cos_[size_t(j)] = std::cos(cfg_.theta_eff(j));
      sin_[size_t(j)] = std::sin(cfg_.theta_eff(j));
    }
    const GellMannBasis basis(n);
    for (int m = 0; m < n; ++m)
      for (int v = m + 1; v < n; ++v) {
        Pair p;
        p.m = m;
        p.n = v;
        p.sym = basis.pair_index(m, v);
        p.anti = basis.pair_index(v, m);
        const double th = cfg_.theta_eff(v) - cfg_.theta_eff(m);
        p.gamma = (1.0 - std::cos(th)) / (4.0 * cfg_.tau);
        p.omega = std::sin(th) / (4.0 * cfg_.tau);
        pairs_.push_back(p);
      }
    diag0_ = n * (n - 1);
  }

  const MeasurementConfig& config() const { return cfg_; }

  void step(RVector& q, const NoiseDraws& xi) const {
    const int n = cfg_.levels;
    const RVector pops = populations_from_bloch(q, n);
    std::vector<double> xk(static_cast<size_t>(n));
    std::vector<double> xpk(static_cast<size_t>(n));
    double xbar = 0.0;
    for (int k = 0; k < n; ++k) {
      xk[size_t(k)] = xi.xi1 * cos_[size_t(k)] + xi.xi2 * sin_[size_t(k)];
      xpk[size_t(k)] = xi.xi1 * sin_[size_t(k)] - xi.xi2 * cos_[size_t(k)];
      xbar += pops(k) * xk[size_t(k)];
    }
    const double root8tau = 2.0 * std::sqrt(2.0 * cfg_.tau);
    const double root2tau = std::sqrt(2.0 * cfg_.tau);
    RVector out = q;
    for (const Pair& p : pairs_) {
      const double a = (xk[size_t(p.m)] + xk[size_t(p.n)] - 2.0 * xbar) / root8tau;
      const double b = (xpk[size_t(p.m)] - xpk[size_t(p.n)]) / root8tau;
      const double qs = q(p.sym), qa = q(p.anti);
      out(p.sym) += cfg_.dt * (-p.gamma * qs - p.omega * qa + qs * a + qa * b);
      out(p.anti) += cfg_.dt * (-p.gamma * qa + p.omega * qs + qa * a - qs * b);
    }
    std::vector<double> drho(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k)
      drho[size_t(k)] = cfg_.dt * pops(k) * (xk[size_t(k)] - xbar) / root2tau;
    double prefix = 0.0;
    for (int d = 0; d + 1 < n; ++d) {
      prefix += drho[size_t(d)];
      out(diag0_ + d) += GellMannBasis::diag_scale(d) *
                         (prefix - double(d + 1) * drho[size_t(d + 1)]);
    }
    q = out;
  }

 private:
  struct Pair {
    int m, n, sym, anti;
    double gamma, omega;
  };
  MeasurementConfig cfg_;
  std::vector<double> cos_, sin_;
  std::vector<Pair> pairs_;
  int diag0_ = 0;
};

inline RVector step_bloch(const MeasurementConfig& cfg, RVector q,
                          const NoiseDraws& xi) {
  BlochStepper(cfg).step(q, xi);
  return q;
}

}  // namespace qtraj
