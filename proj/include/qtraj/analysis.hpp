#pragma once

// Ensemble reductions and distinguishability analytics: means, post-selection,
// trajectory-density histograms, Bhattacharyya signals, and collapse-rate
// fits.  All reductions combine records in ascending trajectory-index order so
// results are independent of storage order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qtraj/dispersive.hpp"
#include "qtraj/state.hpp"
#include "qtraj/trajectory.hpp"

namespace qtraj {

struct Ensemble {
  std::vector<TrajectoryRecord> trajectories;
  std::uint64_t config_digest = 0;
};

inline Ensemble make_ensemble(std::vector<TrajectoryRecord> records) {
  if (records.empty())
    throw std::invalid_argument("make_ensemble: no trajectories");
  const auto& head = records.front();
  for (const auto& r : records) {
    if (r.config_digest != head.config_digest)
      throw std::invalid_argument("make_ensemble: mixed config digests");
    if (r.dt != head.dt)
      throw std::invalid_argument("make_ensemble: mixed dt");
    if (r.times.size() != head.times.size())
      throw std::invalid_argument("make_ensemble: mixed step counts");
    if (r.states.size() != r.times.size())
      throw std::invalid_argument("make_ensemble: malformed record");
  }
  Ensemble e;
  e.config_digest = head.config_digest;
  e.trajectories = std::move(records);
  return e;
}

namespace detail {

// Indices of e.trajectories in ascending trajectory-index order, the canonical
// reduction order.
inline std::vector<size_t> reduction_order(const Ensemble& e) {
  std::vector<size_t> order(e.trajectories.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const auto& ra = e.trajectories[a];
    const auto& rb = e.trajectories[b];
    if (ra.trajectory_index != rb.trajectory_index)
      return ra.trajectory_index < rb.trajectory_index;
    return ra.seed < rb.seed;
  });
  return order;
}

inline void require_nonempty(const Ensemble& e, const char* who) {
  if (e.trajectories.empty())
    throw std::invalid_argument(std::string(who) + ": empty ensemble");
}

inline void require_coordinate(const Ensemble& e, int coordinate,
                               const char* who) {
  require_nonempty(e, who);
  const auto& states = e.trajectories.front().states;
  if (states.empty() || coordinate < 0 ||
      coordinate >= int(states.front().size()))
    throw std::invalid_argument(std::string(who) +
                                ": coordinate index out of range");
}

}  // namespace detail

inline std::vector<RVector> ensemble_mean(const Ensemble& e) {
  detail::require_nonempty(e, "ensemble_mean");
  const auto order = detail::reduction_order(e);
  const auto& head = e.trajectories.front();
  std::vector<RVector> sum(head.times.size(),
                           RVector::Zero(head.states.front().size()));
  for (size_t idx : order) {
    const auto& r = e.trajectories[idx];
    for (size_t k = 0; k < sum.size(); ++k) sum[k] += r.states[k];
  }
  for (auto& q : sum) q /= double(e.trajectories.size());
  return sum;
}

// Partition by the sign of the final-time coordinate relative to the
// threshold; exact ties land in the >= branch.
inline std::pair<Ensemble, Ensemble> postselect_final(const Ensemble& e,
                                                      int coordinate,
                                                      double threshold = 0.0) {
  detail::require_coordinate(e, coordinate, "postselect_final");
  Ensemble ge, lt;
  ge.config_digest = e.config_digest;
  lt.config_digest = e.config_digest;
  for (const auto& r : e.trajectories) {
    if (r.states.back()(coordinate) >= threshold)
      ge.trajectories.push_back(r);
    else
      lt.trajectories.push_back(r);
  }
  return {std::move(ge), std::move(lt)};
}

enum class DensityNorm { per_time_column, global };

struct TrajectoryDensity {
  std::vector<double> time_edges;   // time_bins + 1 entries
  std::vector<double> coord_edges;  // coord_bins + 1 entries
  Eigen::MatrixXd counts;           // coord_bins x time_bins
  DensityNorm normalization = DensityNorm::per_time_column;
};

// Histogram of one Bloch coordinate across the ensemble.  The coordinate axis
// spans the physical range [-R, R] with R the pure-state Bloch radius
// sqrt(2(N-1)/N); integrator jitter past the boundary is clipped into the edge
// bins so every sample is counted.  Columns with at least one sample are
// normalized to unit mass.
inline TrajectoryDensity trajectory_density(const Ensemble& e, int coordinate,
                                            int time_bins = 100,
                                            int coord_bins = 61) {
  detail::require_coordinate(e, coordinate, "trajectory_density");
  if (time_bins < 1 || coord_bins < 1)
    throw std::invalid_argument("trajectory_density: bins must be positive");

  const auto& head = e.trajectories.front();
  const double duration = head.times.back();
  if (!(duration > 0.0))
    throw std::invalid_argument("trajectory_density: zero-length records");
  const double n = double(head.levels);
  const double radius = std::sqrt(2.0 * (n - 1.0) / n);

  TrajectoryDensity d;
  d.time_edges.resize(size_t(time_bins) + 1);
  for (int k = 0; k <= time_bins; ++k)
    d.time_edges[size_t(k)] = duration * double(k) / double(time_bins);
  d.coord_edges.resize(size_t(coord_bins) + 1);
  for (int k = 0; k <= coord_bins; ++k)
    d.coord_edges[size_t(k)] =
        -radius + 2.0 * radius * double(k) / double(coord_bins);

  d.counts = Eigen::MatrixXd::Zero(coord_bins, time_bins);
  const auto order = detail::reduction_order(e);
  for (size_t idx : order) {
    const auto& r = e.trajectories[idx];
    for (size_t k = 0; k < r.times.size(); ++k) {
      int col = int(r.times[k] / duration * double(time_bins));
      col = std::clamp(col, 0, time_bins - 1);
      const double v = r.states[k](coordinate);
      int row = int((v + radius) / (2.0 * radius) * double(coord_bins));
      row = std::clamp(row, 0, coord_bins - 1);
      d.counts(row, col) += 1.0;
    }
  }
  for (int col = 0; col < time_bins; ++col) {
    const double total = d.counts.col(col).sum();
    if (total > 0.0) d.counts.col(col) /= total;
  }
  return d;
}

namespace detail {

inline void require_signal_args(const MeasurementConfig& cfg, int i, int j,
                                double delta_t, const char* who) {
  if (i < 0 || j < 0 || i >= cfg.levels || j >= cfg.levels)
    throw std::invalid_argument(std::string(who) + ": level index out of range");
  if (!(delta_t > 0.0) || !std::isfinite(delta_t))
    throw std::invalid_argument(std::string(who) +
                                ": segment length must be positive");
}

}  // namespace detail

// Distinguishability of levels i, j accumulated over a record segment of
// length delta_t, with T = 4 tau |alpha|^2 the segment duration implied by
// the measurement time.
inline double bhattacharyya_signal_pp(const MeasurementConfig& cfg, int i,
                                      int j, double delta_t) {
  detail::require_signal_args(cfg, i, j, delta_t, "bhattacharyya_signal_pp");
  if (i == j) return 0.0;
  const double a2 = cfg.alpha_mag * cfg.alpha_mag;
  const double T = 4.0 * cfg.tau * a2;
  const double dth =
      cfg.theta[static_cast<size_t>(i)] - cfg.theta[static_cast<size_t>(j)];
  return delta_t * a2 / (2.0 * T) * (1.0 - std::cos(dth));
}

inline double bhattacharyya_signal_ps(const MeasurementConfig& cfg, int i,
                                      int j, double delta_t) {
  detail::require_signal_args(cfg, i, j, delta_t, "bhattacharyya_signal_ps");
  if (i == j) return 0.0;
  const double a2 = cfg.alpha_mag * cfg.alpha_mag;
  const double T = 4.0 * cfg.tau * a2;
  const double ci = std::cos(cfg.theta[static_cast<size_t>(i)] - cfg.phi);
  const double cj = std::cos(cfg.theta[static_cast<size_t>(j)] - cfg.phi);
  return delta_t * a2 / (2.0 * T) * (ci - cj) * (ci - cj);
}

// -ln of the Bhattacharyya overlap of two isotropic Gaussians, by trapezoid
// quadrature on a grid covering both means +-10 sigma (2048 points per axis).
// For shared variance this equals |mu_i - mu_j|^2 / (8 sigma^2).
inline double bhattacharyya_numeric(const RVector& means_i,
                                    const RVector& means_j, double variance,
                                    int dims) {
  if (dims != 1 && dims != 2)
    throw std::invalid_argument("bhattacharyya_numeric: dims must be 1 or 2");
  if (means_i.size() != dims || means_j.size() != dims)
    throw std::invalid_argument(
        "bhattacharyya_numeric: means must have one entry per dimension");
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw std::invalid_argument(
        "bhattacharyya_numeric: variance must be positive and finite");
  for (int d = 0; d < dims; ++d)
    if (!std::isfinite(means_i(d)) || !std::isfinite(means_j(d)))
      throw std::invalid_argument("bhattacharyya_numeric: non-finite mean");

  constexpr int kPoints = 2048;
  const double sigma = std::sqrt(variance);
  std::vector<std::vector<double>> axes(static_cast<size_t>(dims));
  std::vector<double> steps(static_cast<size_t>(dims));
  for (int d = 0; d < dims; ++d) {
    const double lo = std::min(means_i(d), means_j(d)) - 10.0 * sigma;
    const double hi = std::max(means_i(d), means_j(d)) + 10.0 * sigma;
    const double h = (hi - lo) / double(kPoints - 1);
    auto& axis = axes[size_t(d)];
    axis.resize(kPoints);
    for (int k = 0; k < kPoints; ++k) axis[size_t(k)] = lo + h * double(k);
    steps[size_t(d)] = h;
  }

  const double inv4v = 1.0 / (4.0 * variance);
  double integral = 0.0;
  if (dims == 1) {
    const double norm = 1.0 / (std::sqrt(2.0 * kPi) * sigma);
    for (int k = 0; k < kPoints; ++k) {
      const double x = axes[0][size_t(k)];
      const double di = x - means_i(0);
      const double dj = x - means_j(0);
      const double w = (k == 0 || k == kPoints - 1) ? 0.5 : 1.0;
      integral += w * norm * std::exp(-(di * di + dj * dj) * inv4v);
    }
    integral *= steps[0];
  } else {
    const double norm = 1.0 / (2.0 * kPi * variance);
    for (int kx = 0; kx < kPoints; ++kx) {
      const double x = axes[0][size_t(kx)];
      const double dix = x - means_i(0);
      const double djx = x - means_j(0);
      const double qx = dix * dix + djx * djx;
      const double wx = (kx == 0 || kx == kPoints - 1) ? 0.5 : 1.0;
      double row = 0.0;
      for (int ky = 0; ky < kPoints; ++ky) {
        const double y = axes[1][size_t(ky)];
        const double diy = y - means_i(1);
        const double djy = y - means_j(1);
        const double wy = (ky == 0 || ky == kPoints - 1) ? 0.5 : 1.0;
        row += wy * std::exp(-(qx + diy * diy + djy * djy) * inv4v);
      }
      integral += wx * row;
    }
    integral *= norm * steps[0] * steps[1];
  }
  return std::max(0.0, -std::log(integral));
}

struct OptimalPhase {
  double phi = 0.0;
  bool degenerate = false;
};

// Amplification phase maximizing the phase-sensitive signal for the pair
// (theta_e, theta_g): the signal is 4 sin^2((theta_e + theta_g)/2 - phi)
// sin^2((theta_e - theta_g)/2) up to a positive factor, so the argmax sits at
// (theta_e + theta_g)/2 - pi/2 (mod pi).  When the two angles coincide the
// signal vanishes identically and the result is flagged degenerate.
inline OptimalPhase optimal_phase(double theta_e, double theta_g) {
  if (!std::isfinite(theta_e) || !std::isfinite(theta_g))
    throw std::invalid_argument("optimal_phase: angles must be finite");
  OptimalPhase r;
  double w = std::remainder(0.5 * (theta_e + theta_g) - 0.5 * kPi, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  r.phi = w;
  r.degenerate =
      std::abs(std::sin(0.5 * std::remainder(theta_e - theta_g, 2.0 * kPi))) <
      1e-12;
  return r;
}

struct CollapseRate {
  double rate = 0.0;
  double standard_error = std::numeric_limits<double>::infinity();
  bool degenerate = true;
};

// Exponential rate of the ensemble <q^2> deficit D(t) = 1 - <q^2(t)>, fitted
// by least squares on ln D over the window where D has decayed to between 80%
// and 10% of its initial value.  The relative window makes fitted-rate RATIOS
// between experiments exact under a pure time rescaling of the ensemble law,
// which is what the quadrature-variance argument predicts.  Data that never
// enters the window (constant or non-collapsing ensembles) is flagged
// degenerate with rate 0.
inline CollapseRate collapse_rate(const Ensemble& e, int coordinate) {
  detail::require_coordinate(e, coordinate, "collapse_rate");
  const auto order = detail::reduction_order(e);
  const auto& head = e.trajectories.front();
  const size_t n_times = head.times.size();
  std::vector<double> mean_sq(n_times, 0.0);
  for (size_t idx : order) {
    const auto& r = e.trajectories[idx];
    for (size_t k = 0; k < n_times; ++k) {
      const double v = r.states[k](coordinate);
      mean_sq[k] += v * v;
    }
  }
  for (double& m : mean_sq) m /= double(e.trajectories.size());

  CollapseRate out;
  const double d0 = 1.0 - mean_sq[0];
  if (!(d0 > 0.0)) return out;

  std::vector<double> ts, ys;
  for (size_t k = 0; k < n_times; ++k) {
    const double d = 1.0 - mean_sq[k];
    if (d >= 0.1 * d0 && d <= 0.8 * d0 && d > 0.0) {
      ts.push_back(head.times[k]);
      ys.push_back(std::log(d));
    }
  }
  const size_t n = ts.size();
  if (n < 3) return out;

  const double tbar = std::accumulate(ts.begin(), ts.end(), 0.0) / double(n);
  const double ybar = std::accumulate(ys.begin(), ys.end(), 0.0) / double(n);
  double sxx = 0.0, sxy = 0.0;
  for (size_t k = 0; k < n; ++k) {
    sxx += (ts[k] - tbar) * (ts[k] - tbar);
    sxy += (ts[k] - tbar) * (ys[k] - ybar);
  }
  if (!(sxx > 0.0)) return out;
  const double slope = sxy / sxx;
  const double intercept = ybar - slope * tbar;
  double ssr = 0.0;
  for (size_t k = 0; k < n; ++k) {
    const double r = ys[k] - (intercept + slope * ts[k]);
    ssr += r * r;
  }
  out.rate = -slope;
  out.standard_error = std::sqrt(ssr / double(n - 2) / sxx);
  out.degenerate = false;
  return out;
}

}  // namespace qtraj
