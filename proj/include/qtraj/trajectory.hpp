#pragma once

// Single-trajectory orchestration: per step, draw counter-based noise, sample
// the readout from the current state, then advance the state with the chosen
// formulation.  Records are bitwise reproducible given (seed, trajectory
// index, config, method, duration).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtraj/dispersive.hpp"
#include "qtraj/kraus.hpp"
#include "qtraj/noise.hpp"
#include "qtraj/sme.hpp"
#include "qtraj/state.hpp"

namespace qtraj {

enum class Method { ito_sme, pure_exact, stratonovich_kraus, bloch_sme };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::ito_sme: return "ito_sme";
    case Method::pure_exact: return "pure_exact";
    case Method::stratonovich_kraus: return "stratonovich_kraus";
    case Method::bloch_sme: return "bloch_sme";
  }
  throw std::invalid_argument("method_name: unknown method");
}

inline Method method_from_name(const std::string& name) {
  if (name == "ito_sme") return Method::ito_sme;
  if (name == "pure_exact") return Method::pure_exact;
  if (name == "stratonovich_kraus") return Method::stratonovich_kraus;
  if (name == "bloch_sme") return Method::bloch_sme;
  throw std::invalid_argument("method_from_name: unknown method '" + name + "'");
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < len; ++k) {
    h ^= p[k];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t config_digest(const MeasurementConfig& cfg) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix_u64 = [&](std::uint64_t v) { h = fnv1a64(&v, sizeof v, h); };
  auto mix_d = [&](double v) {
    std::uint64_t b;
    std::memcpy(&b, &v, sizeof b);
    mix_u64(b);
  };
  mix_u64(std::uint64_t(cfg.levels));
  mix_u64(cfg.scheme == Scheme::phase_preserving ? 0u : 1u);
  mix_d(cfg.tau);
  mix_d(cfg.dt);
  mix_d(cfg.phi);
  mix_d(cfg.alpha_mag);
  mix_d(cfg.amp_gain);
  for (double th : cfg.theta) mix_d(th);
  for (double e : cfg.eta) mix_d(e);
  return h;
}

// Worst-case step diagnostics over a run.  The pre-normalization trace defect
// is meaningful for the trace-preserving updates (ito_sme, stratonovich_kraus,
// bloch_sme); the exact pure update renormalizes by the outcome probability,
// which is conditioning, not error, so it contributes zero there.
struct DefectStats {
  double max_pre_trace_defect = 0.0;
  double max_trace_defect = 0.0;
  double max_hermiticity_defect = 0.0;
  double min_eigenvalue = 1.0;
};

struct TrajectoryRecord {
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
  std::uint32_t trajectory_index = 0;
  Method method = Method::ito_sme;
  int levels = 0;
  double dt = 0.0;
  std::vector<double> times;             // n_steps + 1 entries, starts at 0
  std::vector<RVector> states;           // generalized Bloch coordinates
  std::vector<Matrix> densities;         // filled when store_densities is set
  std::vector<ReadoutSample> readouts;   // one per step, from the pre-update state
  DefectStats defects;
};

struct SimulateOptions {
  std::uint32_t trajectory_index = 0;
  bool store_densities = false;
  // Positivity abort threshold (negative).  NaN selects
  // default_positivity_floor; pass a tighter value to enforce a stricter
  // policy on the recorded minimum eigenvalue.
  double eig_abort = std::numeric_limits<double>::quiet_NaN();
};

// Euler-Maruyama steps jitter boundary (pure) states slightly negative with
// per-step magnitude ~ p(1-p) (dt/tau) chi^2, and rare excursions compound to
// order-one dips that still mean-revert (observed down to about -3 over 10^6
// coarse steps) - an intrinsic property of the linear update, not a sign of
// instability.  Genuine divergence looks completely different: once a
// population overshoots past ~10 the state-dependent innovation feeds back
// super-exponentially and the eigenvalues scream past -1e13 within a few
// steps.  The default floor sits between the two regimes; DefectStats carries
// the honest per-run minimum so callers can apply any stricter policy (or
// pass eig_abort themselves).
inline double default_positivity_floor(const MeasurementConfig&) {
  return -32.0;
}

namespace detail {

inline StateDiagnostics check_initial_density(const Matrix& rho, int levels) {
  require_square(rho, "simulate");
  if (rho.rows() != levels)
    throw std::invalid_argument(
        "simulate: state dimension does not match config levels");
  const auto d = validate_state(rho);
  if (d.hermiticity_defect > 1e-9 || d.trace_defect > 1e-9 ||
      d.min_eigenvalue < -1e-6)
    throw std::invalid_argument(
        "simulate: initial state is not a valid density matrix");
  return d;
}

inline void fold_defects(DefectStats& df, double pre_trace_defect,
                         const StateDiagnostics& d) {
  df.max_pre_trace_defect = std::max(df.max_pre_trace_defect, pre_trace_defect);
  df.max_trace_defect = std::max(df.max_trace_defect, d.trace_defect);
  df.max_hermiticity_defect =
      std::max(df.max_hermiticity_defect, d.hermiticity_defect);
  df.min_eigenvalue = std::min(df.min_eigenvalue, d.min_eigenvalue);
}

[[noreturn]] inline void abort_divergent(long long step, double min_eig) {
  throw std::runtime_error(
      "simulate: state positivity violated at step " + std::to_string(step) +
      " (min eigenvalue " + std::to_string(min_eig) + "); reduce dt");
}

inline TrajectoryRecord simulate_impl(const Matrix* rho0, const CVector* amps0,
                                      const MeasurementConfig& cfg,
                                      double duration, std::uint64_t seed,
                                      Method method,
                                      const SimulateOptions& opt) {
  cfg.check();
  if (!(duration >= cfg.dt))
    throw std::invalid_argument("simulate: duration must cover at least one step");
  const long long n_steps = std::llround(duration / cfg.dt);

  if (method == Method::pure_exact && amps0 == nullptr)
    throw std::invalid_argument(
        "simulate: pure_exact requires an amplitude initial state");
  if (amps0 && amps0->size() != cfg.levels)
    throw std::invalid_argument(
        "simulate: state dimension does not match config levels");

  const GellMannBasis basis(cfg.levels);
  const NoiseStream stream(seed, opt.trajectory_index);
  const double eig_floor = std::isnan(opt.eig_abort)
                               ? default_positivity_floor(cfg)
                               : opt.eig_abort;

  TrajectoryRecord rec;
  rec.config_digest = fnv1a64(&duration, sizeof duration, config_digest(cfg));
  rec.seed = seed;
  rec.trajectory_index = opt.trajectory_index;
  rec.method = method;
  rec.levels = cfg.levels;
  rec.dt = cfg.dt;
  rec.times.reserve(size_t(n_steps) + 1);
  rec.states.reserve(size_t(n_steps) + 1);
  rec.readouts.reserve(size_t(n_steps));
  if (opt.store_densities) rec.densities.reserve(size_t(n_steps) + 1);

  auto record_density = [&](const Matrix& rho, double t) {
    rec.times.push_back(t);
    rec.states.push_back(density_to_bloch(rho, basis));
    if (opt.store_densities) rec.densities.push_back(rho);
  };

  switch (method) {
    case Method::ito_sme: {
      Matrix rho = rho0 ? *rho0 : pure_density(*amps0);
      fold_defects(rec.defects, 0.0,
                   check_initial_density(rho, cfg.levels));
      record_density(rho, 0.0);
      const ItoStepper stepper(cfg);
      for (long long k = 0; k < n_steps; ++k) {
        const double t = double(k) * cfg.dt;
        const auto xi = stream.draws(std::uint64_t(k), cfg.channels(), cfg.dt);
        rec.readouts.push_back(sample_readout(cfg, rho, t, xi));
        const double pre_trace = stepper.step(rho, xi);
        const auto diag = validate_state(rho);
        fold_defects(rec.defects, std::abs(pre_trace - 1.0), diag);
        if (diag.min_eigenvalue < eig_floor) abort_divergent(k, diag.min_eigenvalue);
        record_density(rho, double(k + 1) * cfg.dt);
      }
      break;
    }
    case Method::stratonovich_kraus: {
      Matrix rho = rho0 ? *rho0 : pure_density(*amps0);
      fold_defects(rec.defects, 0.0,
                   check_initial_density(rho, cfg.levels));
      record_density(rho, 0.0);
      for (long long k = 0; k < n_steps; ++k) {
        const double t = double(k) * cfg.dt;
        const auto xi = stream.draws(std::uint64_t(k), cfg.channels(), cfg.dt);
        double pre_trace = 1.0;
        rec.readouts.push_back(
            step_stratonovich_heun(cfg, rho, t, xi, &pre_trace));
        const auto diag = validate_state(rho);
        fold_defects(rec.defects, std::abs(pre_trace - 1.0), diag);
        if (diag.min_eigenvalue < eig_floor) abort_divergent(k, diag.min_eigenvalue);
        record_density(rho, double(k + 1) * cfg.dt);
      }
      break;
    }
    case Method::pure_exact: {
      CVector c = *amps0;
      {
        const double norm = c.norm();
        if (!(norm > 0.0) || !std::isfinite(norm))
          throw std::invalid_argument("simulate: zero amplitude initial state");
        c /= norm;
      }
      fold_defects(rec.defects, 0.0,
                   check_initial_density(pure_density(c), cfg.levels));
      record_density(pure_density(c), 0.0);
      RVector pops(cfg.levels);
      for (long long k = 0; k < n_steps; ++k) {
        const double t = double(k) * cfg.dt;
        const auto xi = stream.draws(std::uint64_t(k), cfg.channels(), cfg.dt);
        for (int j = 0; j < cfg.levels; ++j) pops(j) = std::norm(c(j));
        rec.readouts.push_back(sample_readout_pops(cfg, pops, t, xi));
        c = step_pure_exact(cfg, c, rec.readouts.back()).normalized;
        StateDiagnostics diag;
        diag.trace_defect = std::abs(c.squaredNorm() - 1.0);
        fold_defects(rec.defects, 0.0, diag);
        record_density(pure_density(c), double(k + 1) * cfg.dt);
      }
      break;
    }
    case Method::bloch_sme: {
      const BlochStepper stepper(cfg);  // validates scheme and efficiency
      Matrix rho_init = rho0 ? *rho0 : pure_density(*amps0);
      fold_defects(rec.defects, 0.0,
                   check_initial_density(rho_init, cfg.levels));
      RVector q = density_to_bloch(rho_init, basis);
      auto record_bloch = [&](const RVector& qk, double t) {
        rec.times.push_back(t);
        rec.states.push_back(qk);
        if (opt.store_densities)
          rec.densities.push_back(bloch_to_density(qk, basis));
      };
      record_bloch(q, 0.0);
      for (long long k = 0; k < n_steps; ++k) {
        const double t = double(k) * cfg.dt;
        const auto xi = stream.draws(std::uint64_t(k), cfg.channels(), cfg.dt);
        const RVector pops = populations_from_bloch(q, cfg.levels);
        rec.readouts.push_back(sample_readout_pops(cfg, pops, t, xi));
        stepper.step(q, xi);
        const auto diag = validate_state(bloch_to_density(q, basis));
        fold_defects(rec.defects, 0.0, diag);
        if (diag.min_eigenvalue < eig_floor) abort_divergent(k, diag.min_eigenvalue);
        record_bloch(q, double(k + 1) * cfg.dt);
      }
      break;
    }
  }
  return rec;
}

}  // namespace detail

inline TrajectoryRecord simulate(const Matrix& rho0,
                                 const MeasurementConfig& cfg, double duration,
                                 std::uint64_t seed, Method method,
                                 const SimulateOptions& opt = {}) {
  return detail::simulate_impl(&rho0, nullptr, cfg, duration, seed, method, opt);
}

inline TrajectoryRecord simulate(const CVector& amps0,
                                 const MeasurementConfig& cfg, double duration,
                                 std::uint64_t seed, Method method,
                                 const SimulateOptions& opt = {}) {
  return detail::simulate_impl(nullptr, &amps0, cfg, duration, seed, method, opt);
}

}  // namespace qtraj
