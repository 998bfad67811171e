#pragma once

// Dispersive coupling model: maps circuit-level parameters (couplings g_j,
// detunings Delta_j, drive amplitude |alpha|, segment time T) to the
// effective measurement configuration used by the trajectory engines
// (pointer angles theta_j, characteristic time tau).
//
// Level-dependent cavity pulls follow the second-order ladder result
//   chi_0     = -g_0^2/Delta_0
//   chi_j     =  g_{j-1}^2/Delta_{j-1} - g_j^2/Delta_j   (0 < j < N-1)
//   chi_{N-1} =  g_{N-2}^2/Delta_{N-2}
// and pointer angles accumulate as theta_j = -chi_j T.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtraj/state.hpp"

namespace qtraj {

enum class Scheme { phase_preserving, phase_sensitive };

// Everything the stochastic engines need. Angles are stored raw
// (unreduced); phi rotates the detection frame, theta_eff = theta - phi.
struct MeasurementConfig {
  int levels = 0;
  std::vector<double> theta;  // pointer angles, rad
  double tau = 1.0;           // characteristic measurement time
  double dt = 0.01;           // integrator step
  std::vector<double> eta;    // per-channel quantum efficiency, (0, 1]
  double amp_gain = 1.0;      // record amplification C
  double alpha_mag = 1.0;     // |alpha|, sets the record scale C|alpha|
  Scheme scheme = Scheme::phase_preserving;
  double phi = 0.0;           // amplified-quadrature angle

  int channels() const { return scheme == Scheme::phase_preserving ? 2 : 1; }
  double readout_scale() const { return amp_gain * alpha_mag; }
  double theta_eff(int j) const { return theta[static_cast<size_t>(j)] - phi; }

  void check() const {
    auto fail = [](const std::string& msg) {
      throw std::invalid_argument("MeasurementConfig: " + msg);
    };
    if (levels < 1) fail("levels must be >= 1");
    if (int(theta.size()) != levels) fail("theta must have one angle per level");
    for (double t : theta)
      if (!std::isfinite(t)) fail("theta must be finite");
    if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be positive");
    if (!(dt > 0.0) || !std::isfinite(dt)) fail("dt must be positive");
    if (dt > tau) fail("dt must not exceed tau");
    if (int(eta.size()) != channels())
      fail(scheme == Scheme::phase_preserving
               ? "phase-preserving scheme needs two eta entries"
               : "phase-sensitive scheme needs one eta entry");
    for (double e : eta)
      if (!(e > 0.0 && e <= 1.0)) fail("eta entries must lie in (0, 1]");
    if (!(amp_gain > 0.0) || !std::isfinite(amp_gain)) fail("amp_gain must be positive");
    if (!(alpha_mag > 0.0) || !std::isfinite(alpha_mag)) fail("alpha_mag must be positive");
    if (!std::isfinite(phi)) fail("phi must be finite");
  }
};

struct PhysicalParams {
  std::vector<double> g;      // transition couplings, length N-1
  std::vector<double> delta;  // transition-cavity detunings, length N-1
  double alpha_mag = 1.0;     // steady intracavity amplitude |alpha|
  double T = 1.0;             // integration segment duration
  std::optional<double> kappa;  // cavity linewidth, used in validity check only
};

inline std::vector<double> dispersive_shifts(const PhysicalParams& p) {
  if (p.g.empty() || p.g.size() != p.delta.size())
    throw std::invalid_argument("dispersive_shifts: g and delta must be equal-length, non-empty");
  for (size_t j = 0; j < p.delta.size(); ++j)
    if (p.delta[j] == 0.0)
      throw std::invalid_argument("dispersive_shifts: zero detuning on transition " +
                                  std::to_string(j));
  size_t levels = p.g.size() + 1;
  std::vector<double> chi(levels, 0.0);
  for (size_t j = 0; j < levels; ++j) {
    double below = (j > 0) ? p.g[j - 1] * p.g[j - 1] / p.delta[j - 1] : 0.0;
    double above = (j + 1 < levels) ? p.g[j] * p.g[j] / p.delta[j] : 0.0;
    chi[j] = below - above;
  }
  return chi;
}

inline std::vector<double> pointer_angles(const std::vector<double>& chi, double T) {
  std::vector<double> theta(chi.size());
  for (size_t j = 0; j < chi.size(); ++j) theta[j] = -chi[j] * T;
  return theta;
}

// Reduce to the reporting branch (-pi, pi].
inline double wrap_angle(double x) {
  double w = std::fmod(x + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

inline double char_meas_time(double T, double alpha_mag) {
  if (!(T > 0.0)) throw std::invalid_argument("char_meas_time: T must be positive");
  if (!(alpha_mag > 0.0))
    throw std::invalid_argument("char_meas_time: alpha_mag must be positive");
  return T / (4.0 * alpha_mag * alpha_mag);
}

// Clock layout: N pointer angles equally spaced around the circle.
inline MeasurementConfig clock_config(int levels, double tau, double dt) {
  if (levels < 2) throw std::invalid_argument("clock_config: levels must be >= 2");
  MeasurementConfig cfg;
  cfg.levels = levels;
  cfg.theta.resize(static_cast<size_t>(levels));
  for (int j = 0; j < levels; ++j) cfg.theta[static_cast<size_t>(j)] = 2.0 * kPi * j / levels;
  cfg.tau = tau;
  cfg.dt = dt;
  cfg.eta = {1.0, 1.0};
  cfg.scheme = Scheme::phase_preserving;
  cfg.check();
  return cfg;
}

struct ValidityReport {
  std::vector<double> photon_ratio;  // 4 nbar (g_j/Delta_j)^2 per transition
  std::vector<double> n_crit;        // (Delta_j / 2 g_j)^2 per transition
  std::optional<double> kappa_to_chi;
  bool within_regime = true;         // all ratios <= 0.1
};

inline ValidityReport dispersive_validity(const PhysicalParams& p) {
  auto chi = dispersive_shifts(p);  // also validates sizes/detunings
  double nbar = p.alpha_mag * p.alpha_mag;
  ValidityReport rep;
  for (size_t j = 0; j < p.g.size(); ++j) {
    double r = p.g[j] / p.delta[j];
    double ratio = 4.0 * nbar * r * r;
    rep.photon_ratio.push_back(ratio);
    rep.n_crit.push_back(p.g[j] == 0.0
                             ? std::numeric_limits<double>::infinity()
                             : (p.delta[j] * p.delta[j]) / (4.0 * p.g[j] * p.g[j]));
    if (ratio > 0.1) rep.within_regime = false;
  }
  if (p.kappa) {
    double chimax = 0.0;
    for (double c : chi) chimax = std::max(chimax, std::abs(c));
    if (chimax > 0.0) rep.kappa_to_chi = *p.kappa / chimax;
  }
  return rep;
}

inline MeasurementConfig config_from_physical(const PhysicalParams& p, double dt,
                                              Scheme scheme, std::vector<double> eta,
                                              double phi = 0.0, double amp_gain = 1.0) {
  MeasurementConfig cfg;
  cfg.theta = pointer_angles(dispersive_shifts(p), p.T);
  cfg.levels = int(cfg.theta.size());
  cfg.tau = char_meas_time(p.T, p.alpha_mag);
  cfg.dt = dt;
  cfg.eta = std::move(eta);
  cfg.scheme = scheme;
  cfg.phi = phi;
  cfg.amp_gain = amp_gain;
  cfg.alpha_mag = p.alpha_mag;
  cfg.check();
  return cfg;
}

}  // namespace qtraj
