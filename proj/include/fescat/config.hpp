#pragma once

// JSON run configuration: parsing, schema validation, and construction of
// field models and domains from their JSON descriptions.  The full schema is
// documented in the README; configs/ holds worked examples.

#include "fescat/boundary.hpp"
#include "fescat/domain.hpp"
#include "fescat/dynamics.hpp"
#include "fescat/fields.hpp"
#include "fescat/thresholds.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace fescat {

using nlohmann::json;

// Raised for anything wrong with a configuration document; the CLI maps it
// to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  json raw;  // the parsed document, kept for hashing and sidecars

  int dim = 2;
  double c = 1.0;
  Mode mode = Mode::relativistic;

  double energy = 0.0;
  std::vector<double> ladder;  // nonempty when energy_ladder given
  bool allow_below_threshold = false;

  int boundary_per_angle = 12;
  int interior_per_axis = 16;
  double diagonal_cutoff = 0.05;  // fraction of the domain diameter
  int samples = 50;               // sample count for simulate / scattering

  double flow_rtol = 1e-10;
  double flow_atol = 1e-12;
  double shoot_rtol = 1e-10;
  double shoot_atol = 1e-12;
  double residual_tol = 1e-11;
  double fd_step = 0.0;  // 0 = module default

  std::string outdir = "out";
  std::uint64_t seed = 20240801;
  int jobs = 1;

  std::string hash;  // FNV-1a of the canonical document dump

  FlowOptions flow_options() const {
    FlowOptions f;
    f.rtol = flow_rtol;
    f.atol = flow_atol;
    return f;
  }
  template <int N>
  ShootOptions<N> shoot_options() const {
    ShootOptions<N> s;
    s.rtol = shoot_rtol;
    s.atol = shoot_atol;
    s.residual_tol = residual_tol;
    return s;
  }
};

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
  }
}

inline double positive_number(const json& j, const std::string& key,
                              double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ConfigError(where + "." + key + ": not a number");
  const double v = j[key].get<double>();
  if (!(v > 0.0)) throw ConfigError(where + "." + key + ": must be > 0");
  return v;
}

template <int N>
Vec<N> vec_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != N) {
    throw ConfigError(where + ": expected an array of " + std::to_string(N) +
                      " numbers");
  }
  Vec<N> v;
  for (int i = 0; i < N; ++i) {
    if (!j[i].is_number()) throw ConfigError(where + ": entries must be numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Top-level parsing.

inline RunConfig parse_run_config(const json& doc) {
  detail::require_keys(
      doc,
      {"dim", "c", "mode", "potential", "magnetic", "domain", "energy",
       "energy_ladder", "allow_below_threshold", "grids", "tolerances",
       "samples", "out", "seed", "jobs", "family", "optimizer"},
      "config");

  RunConfig cfg;
  cfg.raw = doc;

  if (doc.contains("dim")) {
    if (!doc["dim"].is_number_integer()) throw ConfigError("config.dim: not an integer");
    cfg.dim = doc["dim"].get<int>();
  }
  if (cfg.dim != 2 && cfg.dim != 3) {
    throw ConfigError("config.dim: supported dimensions are 2 and 3");
  }
  cfg.c = detail::positive_number(doc, "c", 1.0, "config");

  if (doc.contains("mode")) {
    const std::string m = doc["mode"].get<std::string>();
    if (m == "relativistic") {
      cfg.mode = Mode::relativistic;
    } else if (m == "nonrelativistic") {
      cfg.mode = Mode::nonrelativistic;
    } else {
      throw ConfigError("config.mode: expected \"relativistic\" or "
                        "\"nonrelativistic\"");
    }
  }

  if (doc.contains("energy")) {
    cfg.energy = detail::positive_number(doc, "energy", 0.0, "config");
  }
  if (doc.contains("energy_ladder")) {
    const json& l = doc["energy_ladder"];
    detail::require_keys(l, {"start", "octaves", "per_octave"},
                         "config.energy_ladder");
    const double start = detail::positive_number(l, "start", 0.0, "config.energy_ladder");
    if (!(start > 0.0)) throw ConfigError("config.energy_ladder.start: required");
    const int octaves = l.value("octaves", 4);
    const int per_octave = l.value("per_octave", 4);
    if (octaves <= 0 || per_octave <= 0) {
      throw ConfigError("config.energy_ladder: octaves and per_octave must be > 0");
    }
    cfg.ladder = energy_ladder(start, octaves, per_octave);
  }
  if (!(cfg.energy > 0.0) && cfg.ladder.empty()) {
    throw ConfigError("config: need \"energy\" or \"energy_ladder\"");
  }
  if (!(cfg.energy > 0.0) && !cfg.ladder.empty()) cfg.energy = cfg.ladder.front();
  cfg.allow_below_threshold = doc.value("allow_below_threshold", false);

  if (doc.contains("grids")) {
    const json& g = doc["grids"];
    detail::require_keys(
        g, {"boundary_per_angle", "interior_per_axis", "diagonal_cutoff"},
        "config.grids");
    cfg.boundary_per_angle = g.value("boundary_per_angle", cfg.boundary_per_angle);
    cfg.interior_per_axis = g.value("interior_per_axis", cfg.interior_per_axis);
    cfg.diagonal_cutoff = g.value("diagonal_cutoff", cfg.diagonal_cutoff);
    if (cfg.boundary_per_angle < 2 || cfg.interior_per_axis < 2) {
      throw ConfigError("config.grids: resolutions must be at least 2");
    }
    if (!(cfg.diagonal_cutoff >= 0.0) || cfg.diagonal_cutoff >= 1.0) {
      throw ConfigError("config.grids.diagonal_cutoff: must lie in [0, 1)");
    }
  }
  if (doc.contains("tolerances")) {
    const json& t = doc["tolerances"];
    detail::require_keys(t,
                         {"flow_rtol", "flow_atol", "shoot_rtol", "shoot_atol",
                          "residual_tol", "fd_step"},
                         "config.tolerances");
    cfg.flow_rtol = detail::positive_number(t, "flow_rtol", cfg.flow_rtol,
                                            "config.tolerances");
    cfg.flow_atol = detail::positive_number(t, "flow_atol", cfg.flow_atol,
                                            "config.tolerances");
    cfg.shoot_rtol = detail::positive_number(t, "shoot_rtol", cfg.shoot_rtol,
                                             "config.tolerances");
    cfg.shoot_atol = detail::positive_number(t, "shoot_atol", cfg.shoot_atol,
                                             "config.tolerances");
    cfg.residual_tol = detail::positive_number(t, "residual_tol", cfg.residual_tol,
                                               "config.tolerances");
    if (t.contains("fd_step")) {
      cfg.fd_step = detail::positive_number(t, "fd_step", cfg.fd_step,
                                            "config.tolerances");
    }
  }

  if (doc.contains("samples")) {
    cfg.samples = doc["samples"].get<int>();
    if (cfg.samples <= 0) throw ConfigError("config.samples: must be > 0");
  }
  if (doc.contains("out")) cfg.outdir = doc["out"].get<std::string>();
  if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("jobs")) {
    cfg.jobs = doc["jobs"].get<int>();
    if (cfg.jobs <= 0) throw ConfigError("config.jobs: must be > 0");
  }

  // nlohmann::json orders object keys, so the dump is canonical.
  cfg.hash = hash_hex(fnv1a64(doc.dump()));
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return parse_run_config(doc);
}

// ---------------------------------------------------------------------------
// Field construction.
//
// potential:  {"type": "zero"}
//             {"type": "bump", "amplitude": a, "center": [...], "rho": r}
//             {"type": "gaussian", "amplitude": a, "center": [...], "sigma": s}
//             {"type": "harmonic", "omega": w, "center": [...], "rho": r}
//             {"type": "sum", "terms": [ ... ]}
// magnetic:   {"type": "zero"}
//             {"type": "constant", "b12": v}                        (dim 2)
//             {"type": "constant", "b12": v, "b13": v, "b23": v}    (dim 3)
//             {"type": "bump", "amplitude": a, "center": [...], "rho": r}
//             {"type": "sum", "terms": [ ... ]}

namespace detail {

template <int N>
FieldModel<N> build_potential(const json& j, Mode mode, double c) {
  const std::string type = j.value("type", std::string("zero"));
  if (type == "zero") {
    require_keys(j, {"type"}, "potential");
    return make_zero_field<N>(mode, c);
  }
  if (type == "bump") {
    require_keys(j, {"type", "amplitude", "center", "rho"}, "potential");
    if (!j.contains("amplitude") || !j.contains("center") || !j.contains("rho")) {
      throw ConfigError("potential.bump: needs amplitude, center, rho");
    }
    return make_bump_v<N>(j["amplitude"].get<double>(),
                          vec_from<N>(j["center"], "potential.center"),
                          positive_number(j, "rho", 0.0, "potential"), mode, c);
  }
  if (type == "gaussian") {
    require_keys(j, {"type", "amplitude", "center", "sigma"}, "potential");
    if (!j.contains("amplitude") || !j.contains("center") || !j.contains("sigma")) {
      throw ConfigError("potential.gaussian: needs amplitude, center, sigma");
    }
    return make_gaussian_v<N>(j["amplitude"].get<double>(),
                              vec_from<N>(j["center"], "potential.center"),
                              positive_number(j, "sigma", 0.0, "potential"),
                              mode, c);
  }
  if (type == "harmonic") {
    require_keys(j, {"type", "omega", "center", "rho"}, "potential");
    if (!j.contains("omega") || !j.contains("center") || !j.contains("rho")) {
      throw ConfigError("potential.harmonic: needs omega, center, rho");
    }
    return make_truncated_harmonic_v<N>(
        j["omega"].get<double>(), vec_from<N>(j["center"], "potential.center"),
        positive_number(j, "rho", 0.0, "potential"), mode, c);
  }
  if (type == "sum") {
    require_keys(j, {"type", "terms"}, "potential");
    if (!j.contains("terms") || !j["terms"].is_array() || j["terms"].empty()) {
      throw ConfigError("potential.sum: needs a nonempty terms array");
    }
    FieldModel<N> model = build_potential<N>(j["terms"][0], mode, c);
    for (std::size_t i = 1; i < j["terms"].size(); ++i) {
      model = combine_fields(model, build_potential<N>(j["terms"][i], mode, c));
    }
    return model;
  }
  throw ConfigError("potential.type: unknown type \"" + type + "\"");
}

template <int N>
FieldModel<N> build_magnetic(const json& j, Mode mode, double c) {
  const std::string type = j.value("type", std::string("zero"));
  if (type == "zero") {
    require_keys(j, {"type"}, "magnetic");
    return make_zero_field<N>(mode, c);
  }
  if (type == "constant") {
    require_keys(j, {"type", "b12", "b13", "b23"}, "magnetic");
    Mat<N> b = Mat<N>::Zero();
    auto set = [&](const std::string& key, int i, int k) {
      if (!j.contains(key)) return;
      const double v = j[key].get<double>();
      b(i, k) = v;
      b(k, i) = -v;
    };
    set("b12", 0, 1);
    if constexpr (N == 3) {
      set("b13", 0, 2);
      set("b23", 1, 2);
    } else {
      if (j.contains("b13") || j.contains("b23")) {
        throw ConfigError("magnetic.constant: b13/b23 need dim = 3");
      }
    }
    return make_constant_b<N>(b, mode, c);
  }
  if (type == "bump") {
    require_keys(j, {"type", "amplitude", "center", "rho", "direction"},
                 "magnetic");
    if (!j.contains("amplitude") || !j.contains("center") || !j.contains("rho")) {
      throw ConfigError("magnetic.bump: needs amplitude, center, rho");
    }
    const double amp = j["amplitude"].get<double>();
    const Vec<N> center = vec_from<N>(j["center"], "magnetic.center");
    const double rho = positive_number(j, "rho", 0.0, "magnetic");
    if constexpr (N == 2) {
      if (j.contains("direction")) {
        throw ConfigError("magnetic.bump: direction applies to dim = 3 only");
      }
      return make_bump_b2(amp, center, rho, mode, c);
    } else {
      if (!j.contains("direction")) {
        throw ConfigError(
            "magnetic.bump: dim = 3 needs a potential direction vector");
      }
      return make_bump_b_potential<N>(
          amp, center, rho, vec_from<N>(j["direction"], "magnetic.direction"),
          mode, c);
    }
  }
  if (type == "sum") {
    require_keys(j, {"type", "terms"}, "magnetic");
    if (!j.contains("terms") || !j["terms"].is_array() || j["terms"].empty()) {
      throw ConfigError("magnetic.sum: needs a nonempty terms array");
    }
    FieldModel<N> model = build_magnetic<N>(j["terms"][0], mode, c);
    for (std::size_t i = 1; i < j["terms"].size(); ++i) {
      model = combine_fields(model, build_magnetic<N>(j["terms"][i], mode, c));
    }
    return model;
  }
  throw ConfigError("magnetic.type: unknown type \"" + type + "\"");
}

}  // namespace detail

template <int N>
FieldModel<N> build_field_model(const RunConfig& cfg) {
  if (N != cfg.dim) throw ConfigError("build_field_model: dimension mismatch");
  const json pot = cfg.raw.value("potential", json{{"type", "zero"}});
  const json mag = cfg.raw.value("magnetic", json{{"type", "zero"}});
  try {
    return combine_fields(detail::build_potential<N>(pot, cfg.mode, cfg.c),
                          detail::build_magnetic<N>(mag, cfg.mode, cfg.c));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("field construction: ") + e.what());
  }
}

// domain:  {"type": "ball", "center": [...], "radius": r}
//          {"type": "ellipsoid", "center": [...], "semi_axes": [...]}
template <int N>
ConvexDomain<N> build_domain(const RunConfig& cfg) {
  if (N != cfg.dim) throw ConfigError("build_domain: dimension mismatch");
  const json j = cfg.raw.value(
      "domain", json{{"type", "ball"}, {"radius", 1.0}});
  const std::string type = j.value("type", std::string("ball"));
  const Vec<N> center = j.contains("center")
                            ? detail::vec_from<N>(j["center"], "domain.center")
                            : Vec<N>(Vec<N>::Zero());
  try {
    if (type == "ball") {
      detail::require_keys(j, {"type", "center", "radius"}, "domain");
      return make_ball<N>(center,
                          detail::positive_number(j, "radius", 1.0, "domain"));
    }
    if (type == "ellipsoid") {
      detail::require_keys(j, {"type", "center", "semi_axes"}, "domain");
      if (!j.contains("semi_axes")) {
        throw ConfigError("domain.ellipsoid: needs semi_axes");
      }
      return make_ellipsoid<N>(
          center, detail::vec_from<N>(j["semi_axes"], "domain.semi_axes"));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("domain construction: ") + e.what());
  }
  throw ConfigError("domain.type: unknown type \"" + type + "\"");
}

}  // namespace fescat
