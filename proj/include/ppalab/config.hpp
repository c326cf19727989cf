#pragma once

// Run configuration: a single JSON document controlling lattice shape, kept
// series orders, physical parameters, scan lists, numerical knobs, suite
// selection and per-check tolerance overrides. Validation happens before any
// computation; every violation is a ConfigError.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ppalab {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CutoffShape {
  int ramp_start = 0;
  int plateau_start = 3;
};

struct RunConfig {
  // lattice
  int n_t = 8, n_x = 8, dim = 1;
  double dt = 0.2, dx = 0.2;
  // kept series orders
  int hbar_max = 2, lambda_max = 2;
  // physics
  double m1 = 1.0;  // mass of the base free theory
  double m2 = 2.0;  // target mass of the ramped-frequency modes
  double m_q = 1.0;  // single virtual-mass value where only one is needed
  double beta = 1.0;
  double coupling = 1.0;
  // temporal interaction cutoffs: primary shape, an alternate ramp reaching
  // the same final plateau, and a nested narrow/wide plateau pair
  CutoffShape chi{0, 3};
  CutoffShape chi_alt{1, 4};
  CutoffShape chi_narrow{0, 2};
  CutoffShape chi_wide{0, 4};
  // scan lists
  std::vector<double> mu_list{4.0, 8.0, 16.0, 32.0};
  std::vector<double> k_list{0.5, 1.0, 2.0};
  std::vector<double> beta_list{1.0, 2.0, 4.0, 8.0};
  std::vector<double> mq_list{0.5, 1.0};
  std::vector<double> cluster_masses{0.5, 1.0, 2.0};
  // numerical knobs
  int simplex_nodes = 16;    // Gauss-Legendre nodes per simplex dimension
  int r_lambda_refine = 16;  // grid refinement for the iterated-integral series
  int neumann_terms = 8;
  // plumbing
  std::uint64_t seed = 12345;
  std::string out_dir = "reports";
  std::map<std::string, bool> suites;        // empty = every suite enabled
  std::map<std::string, double> tolerances;  // per-check overrides
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"propagators", "moller",       "ppa",  "gppa",
                                              "kms",         "thermal-mass", "modes"};
  return names;
}

inline bool known_suite(const std::string& name) {
  for (const std::string& s : suite_names())
    if (s == name) return true;
  return false;
}

inline bool suite_enabled(const RunConfig& c, const std::string& name) {
  auto it = c.suites.find(name);
  return it == c.suites.end() ? true : it->second;
}

inline void validate_config(const RunConfig& c) {
  if (!(c.beta > 0.0)) throw ConfigError("config: beta must be positive");
  for (double b : c.beta_list)
    if (!(b > 0.0)) throw ConfigError("config: beta_list entries must be positive");
  if (c.n_t < 2) throw ConfigError("config: need at least two time slices");
  if (c.n_x < 1 || c.dim < 1 || c.dim > 3) throw ConfigError("config: lattice shape out of range");
  if (!(c.dt > 0.0) || !(c.dx > 0.0)) throw ConfigError("config: spacings must be positive");
  if (c.hbar_max < 0 || c.lambda_max < 0)
    throw ConfigError("config: kept orders must be non-negative");
  if (c.m1 < 0.0 || c.m2 < 0.0 || c.m_q < 0.0)
    throw ConfigError("config: masses must be non-negative");
  const auto cutoff_ok = [&](const CutoffShape& s, const char* which) {
    if (s.ramp_start < 0 || s.plateau_start <= s.ramp_start || s.plateau_start > c.n_t - 1)
      throw ConfigError(std::string("config: cutoff shape out of range: ") + which);
  };
  cutoff_ok(c.chi, "chi");
  cutoff_ok(c.chi_alt, "chi_alt");
  cutoff_ok(c.chi_narrow, "chi_narrow");
  cutoff_ok(c.chi_wide, "chi_wide");
  for (double v : c.mu_list)
    if (!(v > 0.0)) throw ConfigError("config: mu_list entries must be positive");
  for (double v : c.k_list)
    if (!(v > 0.0)) throw ConfigError("config: k_list entries must be positive");
  for (double v : c.mq_list)
    if (!(v > 0.0)) throw ConfigError("config: mq_list entries must be positive");
  for (double v : c.cluster_masses)
    if (!(v > 0.0)) throw ConfigError("config: cluster_masses entries must be positive");
  if (c.simplex_nodes < 2) throw ConfigError("config: quadrature order < 2");
  if (c.r_lambda_refine < 1) throw ConfigError("config: r_lambda_refine must be positive");
  if (c.neumann_terms < 1) throw ConfigError("config: neumann_terms must be positive");
  for (const auto& [name, flag] : c.suites) {
    (void)flag;
    if (!known_suite(name)) throw ConfigError("config: unknown suite flag: " + name);
  }
  for (const auto& [name, tol] : c.tolerances)
    if (!(tol >= 0.0)) throw ConfigError("config: negative tolerance for " + name);
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const char* where,
                                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string("config: expected an object at ") + where);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

inline CutoffShape parse_cutoff(const nlohmann::json& j, const char* where, CutoffShape dflt) {
  reject_unknown_keys(j, where, {"ramp_start", "plateau_start"});
  CutoffShape s = dflt;
  s.ramp_start = j.value("ramp_start", s.ramp_start);
  s.plateau_start = j.value("plateau_start", s.plateau_start);
  return s;
}

}  // namespace detail

inline RunConfig parse_config_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    detail::reject_unknown_keys(j, "the top level",
                                {"lattice", "orders", "masses", "beta", "coupling", "cutoffs",
                                 "scans", "numerics", "suites", "tolerances", "output_dir",
                                 "seed"});
    if (j.contains("lattice")) {
      const auto& l = j.at("lattice");
      detail::reject_unknown_keys(l, "lattice", {"n_t", "n_x", "dim", "dt", "dx"});
      c.n_t = l.value("n_t", c.n_t);
      c.n_x = l.value("n_x", c.n_x);
      c.dim = l.value("dim", c.dim);
      c.dt = l.value("dt", c.dt);
      c.dx = l.value("dx", c.dx);
    }
    if (j.contains("orders")) {
      const auto& o = j.at("orders");
      detail::reject_unknown_keys(o, "orders", {"hbar_max", "lambda_max"});
      c.hbar_max = o.value("hbar_max", c.hbar_max);
      c.lambda_max = o.value("lambda_max", c.lambda_max);
    }
    if (j.contains("masses")) {
      const auto& m = j.at("masses");
      detail::reject_unknown_keys(m, "masses", {"m1", "m2", "m_q"});
      c.m1 = m.value("m1", c.m1);
      c.m2 = m.value("m2", c.m2);
      c.m_q = m.value("m_q", c.m_q);
    }
    c.beta = j.value("beta", c.beta);
    c.coupling = j.value("coupling", c.coupling);
    if (j.contains("cutoffs")) {
      const auto& u = j.at("cutoffs");
      detail::reject_unknown_keys(u, "cutoffs", {"chi", "chi_alt", "chi_narrow", "chi_wide"});
      if (u.contains("chi")) c.chi = detail::parse_cutoff(u.at("chi"), "cutoffs.chi", c.chi);
      if (u.contains("chi_alt"))
        c.chi_alt = detail::parse_cutoff(u.at("chi_alt"), "cutoffs.chi_alt", c.chi_alt);
      if (u.contains("chi_narrow"))
        c.chi_narrow = detail::parse_cutoff(u.at("chi_narrow"), "cutoffs.chi_narrow", c.chi_narrow);
      if (u.contains("chi_wide"))
        c.chi_wide = detail::parse_cutoff(u.at("chi_wide"), "cutoffs.chi_wide", c.chi_wide);
    }
    if (j.contains("scans")) {
      const auto& s = j.at("scans");
      detail::reject_unknown_keys(
          s, "scans", {"mu_list", "k_list", "beta_list", "mq_list", "cluster_masses"});
      if (s.contains("mu_list")) c.mu_list = s.at("mu_list").get<std::vector<double>>();
      if (s.contains("k_list")) c.k_list = s.at("k_list").get<std::vector<double>>();
      if (s.contains("beta_list")) c.beta_list = s.at("beta_list").get<std::vector<double>>();
      if (s.contains("mq_list")) c.mq_list = s.at("mq_list").get<std::vector<double>>();
      if (s.contains("cluster_masses"))
        c.cluster_masses = s.at("cluster_masses").get<std::vector<double>>();
    }
    if (j.contains("numerics")) {
      const auto& n = j.at("numerics");
      detail::reject_unknown_keys(n, "numerics",
                                  {"simplex_nodes", "r_lambda_refine", "neumann_terms"});
      c.simplex_nodes = n.value("simplex_nodes", c.simplex_nodes);
      c.r_lambda_refine = n.value("r_lambda_refine", c.r_lambda_refine);
      c.neumann_terms = n.value("neumann_terms", c.neumann_terms);
    }
    if (j.contains("suites")) c.suites = j.at("suites").get<std::map<std::string, bool>>();
    if (j.contains("tolerances"))
      c.tolerances = j.at("tolerances").get<std::map<std::string, double>>();
    c.out_dir = j.value("output_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate_config(c);
  return c;
}

inline RunConfig parse_config_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config_json(j);
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_string(buf.str());
}

}  // namespace ppalab
