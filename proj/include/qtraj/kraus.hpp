#pragma once

// Kraus-operator (Bayesian-update) formulation of the continuous record.
//
// Conditioning on one record segment multiplies the state by a diagonal
// operator exp(m dt), where m is built from the observed record:
//   two-quadrature:    m = (I - iQ) / (4 tau C alpha^2) sum_j alpha_j P_j
//   single-quadrature: m = 1/(4 tau C alpha) sum_j e^{i theta_j}
//                          (sqrt(2) r - C alpha cos theta_j) P_j
// with alpha_j = alpha e^{i theta_j} the pointer amplitudes (angles in the
// detection frame).  The same m generates the Stratonovich-form master
// equation d rho = m rho + rho m^+ - rho Tr(m rho + rho m^+) dt, and the
// conversion term (1/2) sum_p (dM_p/d rho)[M_p[rho]] recovers the Ito drift.
// All of this assumes unit efficiency: every record is in the state update.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "qtraj/dispersive.hpp"
#include "qtraj/sme.hpp"
#include "qtraj/state.hpp"

namespace qtraj {

// <beta|alpha> for coherent states.
inline Cx coherent_overlap(Cx beta, Cx alpha) {
  return std::exp(Cx(-0.5 * std::norm(beta - alpha),
                     (std::conj(beta) * alpha).imag()));
}

// Unnormalized <X|alpha>; |<X|alpha>|^2 integrates to sqrt(pi).
inline Cx quadrature_overlap(double x, Cx alpha) {
  const double re = alpha.real(), im = alpha.imag();
  const double d = x - std::sqrt(2.0) * re;
  return std::exp(Cx(-0.5 * d * d, im * (std::sqrt(2.0) * x - re)));
}

inline CVector pointer_amplitudes(const MeasurementConfig& cfg) {
  CVector a(cfg.levels);
  for (int j = 0; j < cfg.levels; ++j)
    a(j) = std::polar(cfg.alpha_mag, cfg.theta_eff(j));
  return a;
}

namespace detail {
inline void require_unit_efficiency(const MeasurementConfig& cfg,
                                    const char* who) {
  for (double e : cfg.eta)
    if (e != 1.0)
      throw std::invalid_argument(std::string(who) +
                                  ": record-conditioned updates need unit "
                                  "efficiency");
}
}  // namespace detail

inline Matrix m_beta(const MeasurementConfig& cfg, const ReadoutSample& ro) {
  cfg.check();
  if (cfg.scheme != Scheme::phase_preserving)
    throw std::invalid_argument("m_beta: two-quadrature records only");
  detail::require_unit_efficiency(cfg, "m_beta");
  const int n = cfg.levels;
  const Cx rec(ro.i, -ro.q);
  const double denom =
      4.0 * cfg.tau * cfg.amp_gain * cfg.alpha_mag * cfg.alpha_mag;
  const CVector a = pointer_amplitudes(cfg);
  Matrix m = Matrix::Zero(n, n);
  for (int j = 0; j < n; ++j) m(j, j) = rec * a(j) / denom;
  return m;
}

inline Matrix m_x(const MeasurementConfig& cfg, const ReadoutSample& ro) {
  cfg.check();
  if (cfg.scheme != Scheme::phase_sensitive)
    throw std::invalid_argument("m_x: single-quadrature records only");
  detail::require_unit_efficiency(cfg, "m_x");
  const int n = cfg.levels;
  const double s = cfg.readout_scale();
  const double denom = 4.0 * cfg.tau * s;
  Matrix m = Matrix::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    const double th = cfg.theta_eff(j);
    m(j, j) = std::polar(1.0, th) *
              ((std::sqrt(2.0) * ro.i - s * std::cos(th)) / denom);
  }
  return m;
}

inline Matrix record_generator(const MeasurementConfig& cfg,
                               const ReadoutSample& ro) {
  return cfg.scheme == Scheme::phase_preserving ? m_beta(cfg, ro)
                                                : m_x(cfg, ro);
}

// Normalized Stratonovich drift for a given record generator; identical in
// form to the measurement backaction superoperator.
inline Matrix stratonovich_rhs(const Matrix& m, const Matrix& rho) {
  return innovation(m, rho);
}

// One raw Euler step of the record-conditioned equation.
inline Matrix step_stratonovich(const MeasurementConfig& cfg,
                                const Matrix& rho, const ReadoutSample& ro) {
  return rho + cfg.dt * stratonovich_rhs(record_generator(cfg, ro), rho);
}

// Midpoint (Heun) step, the production Stratonovich integrator: predict half
// a step, re-evaluate the record mean at the midpoint state keeping the same
// noise, then take the full step from the original state.  Returns the
// pre-step record, which is what an experiment would log.
inline ReadoutSample step_stratonovich_heun(const MeasurementConfig& cfg,
                                            Matrix& rho, double t,
                                            const NoiseDraws& xi,
                                            double* pre_trace = nullptr) {
  const ReadoutSample ro = sample_readout(cfg, rho, t, xi);
  const Matrix mid =
      rho + (0.5 * cfg.dt) * stratonovich_rhs(record_generator(cfg, ro), rho);
  const auto mean0 = readout_mean(cfg, rho);
  const auto meanm = readout_mean(cfg, mid);
  ReadoutSample rom = ro;
  rom.i += meanm[0] - mean0[0];
  rom.q += meanm[1] - mean0[1];
  Matrix out = rho + cfg.dt * stratonovich_rhs(record_generator(cfg, rom),
                                               Matrix(mid));
  out = 0.5 * (out + out.adjoint()).eval();
  double tr = 0.0;
  for (int k = 0; k < cfg.levels; ++k) tr += out(k, k).real();
  if (!(tr > 0.0) || !std::isfinite(tr))
    throw std::runtime_error("step_stratonovich_heun: state trace collapsed");
  if (pre_trace) *pre_trace = tr;
  for (int a = 0; a < cfg.levels; ++a)
    for (int b = 0; b < cfg.levels; ++b) out(a, b) /= tr;
  rho = out;
  return ro;
}

// Noise-conversion (Wong-Zakai) term: for diagonal operators, with
// T_p = sum_k 2 Re(l_k) rho_kk and B_p = M_p[rho],
//   corr_mn = (1/2) sum_p [ B_mn (l_m + l_n* - T_p)
//                           - rho_mn sum_k 2 Re(l_k) B_kk ].
inline Matrix stratonovich_correction(const MeasurementConfig& cfg,
                                      const Matrix& rho) {
  cfg.check();
  require_square(rho, "stratonovich_correction");
  if (rho.rows() != cfg.levels)
    throw std::invalid_argument("stratonovich_correction: dimension mismatch");
  detail::require_unit_efficiency(cfg, "stratonovich_correction");
  const int n = cfg.levels;
  Matrix corr = Matrix::Zero(n, n);
  for (const Matrix& lop : lindblad_ops(cfg)) {
    const CVector l = lop.diagonal();
    double t_p = 0.0;
    for (int k = 0; k < n; ++k) t_p += 2.0 * l(k).real() * rho(k, k).real();
    double s_p = 0.0;  // sum_k 2 Re(l_k) B_kk; B diagonal entries are real
    for (int k = 0; k < n; ++k) {
      const double b_kk = (2.0 * l(k).real() - t_p) * rho(k, k).real();
      s_p += 2.0 * l(k).real() * b_kk;
    }
    for (int m = 0; m < n; ++m)
      for (int v = 0; v < n; ++v) {
        const Cx g = l(m) + std::conj(l(v)) - t_p;
        const Cx b_mv = g * rho(m, v);
        corr(m, v) += 0.5 * (b_mv * g - rho(m, v) * s_p);
      }
  }
  return corr;
}

// Full Ito drift reassembled from the Stratonovich pieces: the drift at the
// noise-free record plus the conversion term.
inline Matrix ito_drift_from_stratonovich(const MeasurementConfig& cfg,
                                          const Matrix& rho) {
  const auto mean = readout_mean(cfg, rho);
  const ReadoutSample ro{0.0, mean[0], mean[1]};
  return stratonovich_rhs(record_generator(cfg, ro), rho) +
         stratonovich_correction(cfg, rho);
}

// Batched coherent-record update: multiply amplitudes by the overlap with
// each record sample.  Unnormalized.
inline CVector kraus_update_pp(const MeasurementConfig& cfg,
                               const CVector& amps,
                               const std::vector<Cx>& betas) {
  cfg.check();
  if (cfg.scheme != Scheme::phase_preserving)
    throw std::invalid_argument("kraus_update_pp: two-quadrature records only");
  if (amps.size() != cfg.levels)
    throw std::invalid_argument("kraus_update_pp: amplitude count mismatch");
  const CVector a = pointer_amplitudes(cfg);
  CVector out = amps;
  for (int j = 0; j < cfg.levels; ++j)
    for (const Cx& beta : betas) out(j) *= coherent_overlap(beta, a(j));
  return out;
}

}  // namespace qtraj
