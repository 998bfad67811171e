#pragma once

// Execution front end shared by the CLI and the end-to-end tests: fan
// trajectories across worker threads into fixed slots (results never depend
// on the thread count), reduce, and emit CSV/JSON artifacts.  All numbers are
// serialized in shortest round-trip form; CSVs are comma-separated, LF
// terminated, with a mandatory header row.

#include <atomic>
#include <charconv>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <system_error>
#include <thread>
#include <utility>
#include <vector>

#include "qtraj/analysis.hpp"
#include "qtraj/runcfg.hpp"
#include "qtraj/trajectory.hpp"

namespace qtraj {

inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Runs trajectories 0..n_traj-1 of the experiment.  Workers pull indices from
// a shared counter but write into preallocated slots, so any thread count
// produces identical records.
inline std::vector<TrajectoryRecord> run_trajectories(
    const ExperimentConfig& ec, int n_threads = 1) {
  if (ec.method == Method::pure_exact && ec.init_form != InitForm::amplitudes)
    throw std::invalid_argument(
        "run: method pure_exact requires init_amplitudes");
  const Matrix rho0 = initial_density(ec);
  CVector amps0;
  if (ec.init_form == InitForm::amplitudes) {
    amps0.resize(int(ec.init_amplitudes.size()));
    for (size_t k = 0; k < ec.init_amplitudes.size(); ++k)
      amps0(int(k)) = ec.init_amplitudes[k];
  }

  std::vector<TrajectoryRecord> slots(size_t(ec.n_traj));
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= ec.n_traj) return;
      SimulateOptions opt;
      opt.trajectory_index = std::uint32_t(i);
      try {
        slots[size_t(i)] =
            ec.init_form == InitForm::amplitudes
                ? simulate(amps0, ec.measurement, ec.duration, ec.seed,
                           ec.method, opt)
                : simulate(rho0, ec.measurement, ec.duration, ec.seed,
                           ec.method, opt);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(ec.n_traj);
        return;
      }
    }
  };

  const int workers = std::max(1, std::min(n_threads, ec.n_traj));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(size_t(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return slots;
}

namespace detail {

inline std::ofstream open_artifact(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("run: cannot write '" + path.string() + "'");
  return out;
}

inline void write_manifest(const std::filesystem::path& path,
                           const ExperimentConfig& ec,
                           const DefectStats& defects) {
  auto out = open_artifact(path);
  out << manifest_json(ec, defects).dump(2) << '\n';
}

inline DefectStats fold_ensemble_defects(
    const std::vector<TrajectoryRecord>& recs) {
  DefectStats d;
  for (const auto& r : recs) {
    d.max_pre_trace_defect =
        std::max(d.max_pre_trace_defect, r.defects.max_pre_trace_defect);
    d.max_trace_defect = std::max(d.max_trace_defect, r.defects.max_trace_defect);
    d.max_hermiticity_defect =
        std::max(d.max_hermiticity_defect, r.defects.max_hermiticity_defect);
    d.min_eigenvalue = std::min(d.min_eigenvalue, r.defects.min_eigenvalue);
  }
  return d;
}

inline void write_state_header(std::ofstream& out, int levels,
                               const char* extra_columns) {
  out << 't';
  for (int k = 1; k < levels * levels; ++k) out << ",q_" << k;
  out << extra_columns << '\n';
}

}  // namespace detail

// One trajectory: t, Bloch coordinates, and the readout sampled at t (the
// final row carries the terminal state and empty readout cells).
inline void write_trajectory_csv(const std::filesystem::path& path,
                                 const TrajectoryRecord& rec,
                                 Scheme scheme) {
  auto out = detail::open_artifact(path);
  detail::write_state_header(out, rec.levels,
                             scheme == Scheme::phase_preserving ? ",I,Q" : ",r");
  for (size_t k = 0; k < rec.times.size(); ++k) {
    out << format_double(rec.times[k]);
    const RVector& q = rec.states[k];
    for (int c = 0; c < q.size(); ++c) out << ',' << format_double(q(c));
    if (k < rec.readouts.size()) {
      out << ',' << format_double(rec.readouts[k].i);
      if (scheme == Scheme::phase_preserving)
        out << ',' << format_double(rec.readouts[k].q);
    } else {
      out << (scheme == Scheme::phase_preserving ? ",," : ",");
    }
    out << '\n';
  }
}

inline void write_mean_csv(const std::filesystem::path& path,
                           const std::vector<double>& times,
                           const std::vector<RVector>& mean, int levels) {
  auto out = detail::open_artifact(path);
  detail::write_state_header(out, levels, "");
  for (size_t k = 0; k < mean.size(); ++k) {
    out << format_double(times[k]);
    for (int c = 0; c < mean[k].size(); ++c)
      out << ',' << format_double(mean[k](c));
    out << '\n';
  }
}

inline void write_density_csv(const std::filesystem::path& path,
                              const TrajectoryDensity& d) {
  auto out = detail::open_artifact(path);
  out << "t_center,coord_center,weight\n";
  for (int col = 0; col < d.counts.cols(); ++col) {
    const double tc =
        0.5 * (d.time_edges[size_t(col)] + d.time_edges[size_t(col) + 1]);
    for (int row = 0; row < d.counts.rows(); ++row) {
      const double cc =
          0.5 * (d.coord_edges[size_t(row)] + d.coord_edges[size_t(row) + 1]);
      out << format_double(tc) << ',' << format_double(cc) << ','
          << format_double(d.counts(row, col)) << '\n';
    }
  }
}

// Single-trajectory run: trajectory.csv + manifest.json.
inline void run_simulate(const ExperimentConfig& ec,
                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  ExperimentConfig one = ec;
  one.n_traj = 1;
  const auto recs = run_trajectories(one, 1);
  write_trajectory_csv(out_dir / "trajectory.csv", recs.front(),
                       ec.measurement.scheme);
  detail::write_manifest(out_dir / "manifest.json", ec, recs.front().defects);
}

// Ensemble run: mean.csv, density.csv, postselect_{ge,lt}.csv, manifest.json.
// The density and post-selection act on the last diagonal Bloch coordinate
// (the qubit z).
inline void run_ensemble(const ExperimentConfig& ec,
                         const std::filesystem::path& out_dir,
                         int n_threads = 1, int time_bins = 100,
                         int coord_bins = 61) {
  if (ec.n_traj < 2)
    throw std::invalid_argument(
        "run: ensemble needs n_traj > 1; use the simulate subcommand for a "
        "single trajectory");
  std::filesystem::create_directories(out_dir);
  auto recs = run_trajectories(ec, n_threads);
  const DefectStats defects = detail::fold_ensemble_defects(recs);
  const std::vector<double> times = recs.front().times;
  const int levels = recs.front().levels;
  const auto e = make_ensemble(std::move(recs));

  write_mean_csv(out_dir / "mean.csv", times, ensemble_mean(e), levels);
  const int zcoord = levels * levels - 2;
  write_density_csv(out_dir / "density.csv",
                    trajectory_density(e, zcoord, time_bins, coord_bins));
  const auto [ge, lt] = postselect_final(e, zcoord, 0.0);
  auto write_branch = [&](const Ensemble& part, const char* name) {
    if (part.trajectories.empty()) {
      auto out = detail::open_artifact(out_dir / name);
      detail::write_state_header(out, levels, "");
    } else {
      write_mean_csv(out_dir / name, times, ensemble_mean(part), levels);
    }
  };
  write_branch(ge, "postselect_ge.csv");
  write_branch(lt, "postselect_lt.csv");
  detail::write_manifest(out_dir / "manifest.json", ec, defects);
}

// Pairwise distinguishability table for a record segment of length delta_t:
// closed form for the config's scheme next to the quadrature value and their
// relative defect.
inline void run_signal(const ExperimentConfig& ec, double delta_t,
                       const std::filesystem::path& out_dir) {
  if (!(delta_t > 0.0) || !std::isfinite(delta_t))
    throw std::invalid_argument("run: signal needs a positive --delta-t");
  std::filesystem::create_directories(out_dir);
  const auto& m = ec.measurement;
  auto out = detail::open_artifact(out_dir / "signal.csv");
  out << "i,j,closed_form,numeric,relative_defect\n";
  const double scale = m.readout_scale();
  const double variance = 2.0 * m.tau * scale * scale / delta_t;
  for (int i = 0; i < m.levels; ++i)
    for (int j = i + 1; j < m.levels; ++j) {
      double closed = 0.0, numeric = 0.0;
      if (m.scheme == Scheme::phase_preserving) {
        closed = bhattacharyya_signal_pp(m, i, j, delta_t);
        RVector mi(2), mj(2);
        mi << scale * std::cos(m.theta_eff(i)), scale * std::sin(m.theta_eff(i));
        mj << scale * std::cos(m.theta_eff(j)), scale * std::sin(m.theta_eff(j));
        numeric = bhattacharyya_numeric(mi, mj, variance, 2);
      } else {
        closed = bhattacharyya_signal_ps(m, i, j, delta_t);
        RVector mi(1), mj(1);
        mi << std::sqrt(2.0) * scale * std::cos(m.theta_eff(i));
        mj << std::sqrt(2.0) * scale * std::cos(m.theta_eff(j));
        numeric = bhattacharyya_numeric(mi, mj, variance, 1);
      }
      const double defect =
          closed > 0.0 ? std::abs(numeric - closed) / closed
                       : std::abs(numeric - closed);
      out << i << ',' << j << ',' << format_double(closed) << ','
          << format_double(numeric) << ',' << format_double(defect) << '\n';
    }
}

}  // namespace qtraj
