#pragma once

// Experiment-level configuration: a flat key=value file format for archiving
// runs, plus the JSON manifest that makes every artifact reproducible.  Times
// are given in microseconds in config files; the library itself is
// unit-agnostic so the values pass through unchanged.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qtraj/dispersive.hpp"
#include "qtraj/state.hpp"
#include "qtraj/trajectory.hpp"
#include "qtraj/version.hpp"

namespace qtraj {

inline constexpr char kVersion[] = QTRAJ_VERSION;

enum class InitForm { bloch, amplitudes };

struct ExperimentConfig {
  MeasurementConfig measurement;
  InitForm init_form = InitForm::bloch;
  std::vector<double> init_bloch;       // N^2 - 1 coordinates
  std::vector<Cx> init_amplitudes;      // N complex amplitudes
  double duration = 0.0;                // us
  int n_traj = 1;
  std::uint64_t seed = 0;
  Method method = Method::ito_sme;
};

// Initial density matrix implied by the config (normalized where applicable).
inline Matrix initial_density(const ExperimentConfig& ec) {
  if (ec.init_form == InitForm::amplitudes) {
    CVector c(int(ec.init_amplitudes.size()));
    for (size_t k = 0; k < ec.init_amplitudes.size(); ++k)
      c(int(k)) = ec.init_amplitudes[k];
    return pure_density(c);
  }
  const GellMannBasis basis(ec.measurement.levels);
  RVector q(int(ec.init_bloch.size()));
  for (size_t k = 0; k < ec.init_bloch.size(); ++k) q(int(k)) = ec.init_bloch[k];
  return bloch_to_density(q, basis);
}

namespace detail {

[[noreturn]] inline void config_fail(int line, const std::string& msg) {
  throw std::invalid_argument(
      line > 0 ? "config line " + std::to_string(line) + ": " + msg
               : "config: " + msg);
}

inline std::vector<double> parse_reals(int line, const std::string& key,
                                       const std::string& value) {
  std::string spaced = value;
  for (char& c : spaced)
    if (c == ',') c = ' ';
  std::istringstream in(spaced);
  std::vector<double> out;
  double v = 0.0;
  while (in >> v) out.push_back(v);
  std::string rest;
  if (!(in >> rest).eof() || out.empty())
    config_fail(line, "key '" + key + "': expected a list of reals, got '" +
                          value + "'");
  return out;
}

inline double parse_real(int line, const std::string& key,
                         const std::string& value) {
  const auto list = parse_reals(line, key, value);
  if (list.size() != 1)
    config_fail(line, "key '" + key + "': expected a single real");
  return list[0];
}

inline long long parse_integer(int line, const std::string& key,
                               const std::string& value) {
  std::istringstream in(value);
  long long v = 0;
  std::string rest;
  if (!(in >> v) || !(in >> rest).eof())
    config_fail(line, "key '" + key + "': expected an integer, got '" + value +
                          "'");
  return v;
}

inline std::uint64_t parse_seed(int line, const std::string& value) {
  std::istringstream in(value);
  std::uint64_t v = 0;
  std::string rest;
  if (!(in >> v) || !(in >> rest).eof())
    config_fail(line, "key 'seed': expected an unsigned integer, got '" +
                          value + "'");
  return v;
}

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace detail

// Parses the flat key=value format.  '#' starts a comment; keys may appear
// once.  Errors carry the offending line number and key.
inline ExperimentConfig parse_experiment_config(const std::string& text) {
  std::map<std::string, std::pair<int, std::string>> kv;
  {
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      const std::string line = detail::trim(raw);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        detail::config_fail(line_no, "expected key = value, got '" + line + "'");
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty()) detail::config_fail(line_no, "missing key before '='");
      if (value.empty())
        detail::config_fail(line_no, "key '" + key + "': missing value");
      if (kv.count(key))
        detail::config_fail(line_no, "duplicate key '" + key + "' (first on line " +
                                         std::to_string(kv[key].first) + ")");
      kv[key] = {line_no, value};
    }
  }

  static const std::vector<std::string> known = {
      "scheme",      "levels",     "theta",       "clock",
      "tau_us",      "dt_us",      "duration_us", "eta",
      "phi",         "alpha_mag",  "amp_C",       "init_bloch",
      "init_amplitudes", "n_traj", "seed",        "method"};
  for (const auto& [key, lv] : kv) {
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) detail::config_fail(lv.first, "unknown key '" + key + "'");
  }

  auto have = [&](const char* key) { return kv.count(key) != 0; };
  auto at = [&](const char* key) -> std::pair<int, std::string>& {
    return kv[key];
  };
  auto require = [&](const char* key) -> std::pair<int, std::string>& {
    if (!have(key))
      detail::config_fail(0, std::string("missing required key '") + key + "'");
    return kv[key];
  };

  ExperimentConfig ec;
  auto& m = ec.measurement;

  {
    const auto& [line, value] = require("scheme");
    if (value == "phase_preserving")
      m.scheme = Scheme::phase_preserving;
    else if (value == "phase_sensitive")
      m.scheme = Scheme::phase_sensitive;
    else
      detail::config_fail(
          line, "key 'scheme': expected phase_preserving or phase_sensitive");
  }

  if (have("clock")) {
    const auto& [line, value] = at("clock");
    if (have("theta"))
      detail::config_fail(line, "keys 'clock' and 'theta' are mutually exclusive");
    const long long n = detail::parse_integer(line, "clock", value);
    if (n < 2) detail::config_fail(line, "key 'clock': needs at least 2 levels");
    if (have("levels") &&
        detail::parse_integer(at("levels").first, "levels", at("levels").second) != n)
      detail::config_fail(at("levels").first,
                          "key 'levels' disagrees with 'clock'");
    m.levels = int(n);
    m.theta.resize(size_t(n));
    for (long long j = 0; j < n; ++j)
      m.theta[size_t(j)] = 2.0 * kPi * double(j) / double(n);
  } else {
    const auto& [lline, lvalue] = require("levels");
    const long long n = detail::parse_integer(lline, "levels", lvalue);
    if (n < 1) detail::config_fail(lline, "key 'levels': must be >= 1");
    m.levels = int(n);
    const auto& [tline, tvalue] = require("theta");
    m.theta = detail::parse_reals(tline, "theta", tvalue);
    if (int(m.theta.size()) != m.levels)
      detail::config_fail(tline, "key 'theta': expected " +
                                     std::to_string(m.levels) + " angles, got " +
                                     std::to_string(m.theta.size()));
  }

  m.tau = detail::parse_real(require("tau_us").first, "tau_us",
                             require("tau_us").second);
  m.dt = detail::parse_real(require("dt_us").first, "dt_us",
                            require("dt_us").second);
  ec.duration = detail::parse_real(require("duration_us").first, "duration_us",
                                   require("duration_us").second);
  if (have("phi")) m.phi = detail::parse_real(at("phi").first, "phi", at("phi").second);
  if (have("alpha_mag"))
    m.alpha_mag =
        detail::parse_real(at("alpha_mag").first, "alpha_mag", at("alpha_mag").second);
  if (have("amp_C"))
    m.amp_gain = detail::parse_real(at("amp_C").first, "amp_C", at("amp_C").second);
  if (have("eta"))
    m.eta = detail::parse_reals(at("eta").first, "eta", at("eta").second);
  else
    m.eta.assign(size_t(m.channels()), 1.0);

  if (have("n_traj")) {
    const long long n =
        detail::parse_integer(at("n_traj").first, "n_traj", at("n_traj").second);
    if (n < 1) detail::config_fail(at("n_traj").first, "key 'n_traj': must be >= 1");
    ec.n_traj = int(n);
  }
  if (have("seed")) ec.seed = detail::parse_seed(at("seed").first, at("seed").second);
  if (have("method")) {
    const auto& [line, value] = at("method");
    try {
      ec.method = method_from_name(value);
    } catch (const std::invalid_argument&) {
      detail::config_fail(line, "key 'method': unknown method '" + value + "'");
    }
  }

  if (have("init_bloch") && have("init_amplitudes"))
    detail::config_fail(at("init_bloch").first,
                        "exactly one of 'init_bloch' and 'init_amplitudes' "
                        "may be given");
  if (!have("init_bloch") && !have("init_amplitudes"))
    detail::config_fail(0,
                        "missing initial state: provide 'init_bloch' or "
                        "'init_amplitudes'");
  if (have("init_bloch")) {
    const auto& [line, value] = at("init_bloch");
    ec.init_form = InitForm::bloch;
    ec.init_bloch = detail::parse_reals(line, "init_bloch", value);
    const size_t want = size_t(m.levels) * size_t(m.levels) - 1;
    if (m.levels < 2)
      detail::config_fail(line,
                          "key 'init_bloch': needs levels >= 2; use "
                          "'init_amplitudes' for a single level");
    if (ec.init_bloch.size() != want)
      detail::config_fail(line, "key 'init_bloch': expected " +
                                    std::to_string(want) + " coordinates, got " +
                                    std::to_string(ec.init_bloch.size()));
  } else {
    const auto& [line, value] = at("init_amplitudes");
    ec.init_form = InitForm::amplitudes;
    const auto flat = detail::parse_reals(line, "init_amplitudes", value);
    if (flat.size() != 2 * size_t(m.levels))
      detail::config_fail(line, "key 'init_amplitudes': expected " +
                                    std::to_string(2 * m.levels) +
                                    " reals (re, im pairs), got " +
                                    std::to_string(flat.size()));
    ec.init_amplitudes.resize(size_t(m.levels));
    for (int k = 0; k < m.levels; ++k)
      ec.init_amplitudes[size_t(k)] =
          Cx(flat[2 * size_t(k)], flat[2 * size_t(k) + 1]);
  }

  try {
    m.check();
  } catch (const std::invalid_argument& e) {
    detail::config_fail(0, e.what());
  }
  if (!(ec.duration >= m.dt))
    detail::config_fail(0, "key 'duration_us': must cover at least one step");

  {
    Matrix rho;
    try {
      rho = initial_density(ec);
    } catch (const std::invalid_argument& e) {
      detail::config_fail(0, std::string("initial state: ") + e.what());
    }
    const auto d = validate_state(rho);
    if (d.hermiticity_defect > 1e-9 || d.trace_defect > 1e-9 ||
        d.min_eigenvalue < -1e-6)
      detail::config_fail(0, "initial state is not a valid density matrix");
  }
  return ec;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

// Manifest: the full resolved config plus provenance and run diagnostics.
// Re-parsing the "config" object reproduces an identical run.
inline nlohmann::json manifest_json(const ExperimentConfig& ec,
                                    const DefectStats& defects) {
  nlohmann::json cfg;
  cfg["scheme"] = ec.measurement.scheme == Scheme::phase_preserving
                      ? "phase_preserving"
                      : "phase_sensitive";
  cfg["levels"] = ec.measurement.levels;
  cfg["theta"] = ec.measurement.theta;
  cfg["tau_us"] = ec.measurement.tau;
  cfg["dt_us"] = ec.measurement.dt;
  cfg["duration_us"] = ec.duration;
  cfg["eta"] = ec.measurement.eta;
  cfg["phi"] = ec.measurement.phi;
  cfg["alpha_mag"] = ec.measurement.alpha_mag;
  cfg["amp_C"] = ec.measurement.amp_gain;
  if (ec.init_form == InitForm::bloch) {
    cfg["init_bloch"] = ec.init_bloch;
  } else {
    std::vector<double> flat;
    flat.reserve(2 * ec.init_amplitudes.size());
    for (const Cx& a : ec.init_amplitudes) {
      flat.push_back(a.real());
      flat.push_back(a.imag());
    }
    cfg["init_amplitudes"] = flat;
  }
  cfg["n_traj"] = ec.n_traj;
  cfg["seed"] = ec.seed;
  cfg["method"] = method_name(ec.method);

  nlohmann::json j;
  j["library_version"] = kVersion;
  j["seed"] = ec.seed;
  j["method"] = method_name(ec.method);
  j["config"] = cfg;
  j["defects"] = {{"max_pre_trace_defect", defects.max_pre_trace_defect},
                  {"max_trace_defect", defects.max_trace_defect},
                  {"max_hermiticity_defect", defects.max_hermiticity_defect},
                  {"min_eigenvalue", defects.min_eigenvalue}};
  return j;
}

// Rebuilds the experiment from a manifest's "config" object (or from a bare
// config object), for bit-identical replays.
inline ExperimentConfig config_from_manifest(const nlohmann::json& j) {
  const nlohmann::json& cfg = j.contains("config") ? j.at("config") : j;
  ExperimentConfig ec;
  auto& m = ec.measurement;
  const std::string scheme = cfg.at("scheme").get<std::string>();
  if (scheme == "phase_preserving")
    m.scheme = Scheme::phase_preserving;
  else if (scheme == "phase_sensitive")
    m.scheme = Scheme::phase_sensitive;
  else
    throw std::invalid_argument("manifest: unknown scheme '" + scheme + "'");
  m.levels = cfg.at("levels").get<int>();
  m.theta = cfg.at("theta").get<std::vector<double>>();
  m.tau = cfg.at("tau_us").get<double>();
  m.dt = cfg.at("dt_us").get<double>();
  ec.duration = cfg.at("duration_us").get<double>();
  m.eta = cfg.at("eta").get<std::vector<double>>();
  m.phi = cfg.at("phi").get<double>();
  m.alpha_mag = cfg.at("alpha_mag").get<double>();
  m.amp_gain = cfg.at("amp_C").get<double>();
  if (cfg.contains("init_bloch")) {
    ec.init_form = InitForm::bloch;
    ec.init_bloch = cfg.at("init_bloch").get<std::vector<double>>();
  } else {
    ec.init_form = InitForm::amplitudes;
    const auto flat = cfg.at("init_amplitudes").get<std::vector<double>>();
    if (flat.size() % 2 != 0)
      throw std::invalid_argument("manifest: init_amplitudes must pair re, im");
    ec.init_amplitudes.resize(flat.size() / 2);
    for (size_t k = 0; k + 1 < flat.size(); k += 2)
      ec.init_amplitudes[k / 2] = Cx(flat[k], flat[k + 1]);
  }
  ec.n_traj = cfg.at("n_traj").get<int>();
  ec.seed = cfg.at("seed").get<std::uint64_t>();
  ec.method = method_from_name(cfg.at("method").get<std::string>());
  m.check();
  return ec;
}

}  // namespace qtraj
