#pragma once

// Dataset persistence: CSV for bulk numeric data, JSON sidecars describing
// how the numbers were produced.  All doubles go through format_double so a
// given config and seed always reproduces files byte for byte.

#include "fescat/boundary.hpp"
#include "fescat/config.hpp"
#include "fescat/scattering.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fescat {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot open for writing: " + path);
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw DatasetError(where + ": cannot parse number \"" + s + "\"");
  }
}

template <int N>
void append_coords(std::string& line, const Vec<N>& v) {
  for (int i = 0; i < N; ++i) {
    line += ',';
    line += format_double(v[i]);
  }
}

inline void append_header_coords(std::string& line, const std::string& stem,
                                 int n) {
  for (int i = 0; i < n; ++i) {
    line += ',';
    line += stem;
    line += '_';
    line += std::to_string(i);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Boundary datasets.
// Columns: q0 coords, q coords, E, s, k0 coords, k coords, S0, residual.
// Rows follow the sweep's grid order; unsolved diagonal slots are omitted and
// failed solves carry residual = inf.

template <int N>
void write_boundary_csv(const std::string& path, const BoundaryDataSet<N>& set) {
  std::ofstream out = detail::open_out(path);
  std::string header;
  detail::append_header_coords(header, "q0", N);
  detail::append_header_coords(header, "q", N);
  header += ",E,s";
  detail::append_header_coords(header, "k0", N);
  detail::append_header_coords(header, "k", N);
  header += ",S0,residual";
  out << header.substr(1) << '\n';

  for (const BoundaryDatum<N>& d : set.entries) {
    if ((d.q0 - d.q).squaredNorm() == 0.0) continue;  // untouched diagonal
    std::string line;
    detail::append_coords(line, d.q0);
    detail::append_coords(line, d.q);
    line += ',';
    line += format_double(d.energy);
    line += ',';
    line += format_double(d.s);
    detail::append_coords(line, d.k0);
    detail::append_coords(line, d.k);
    line += ',';
    line += format_double(d.s0);
    line += ',';
    line += format_double(d.residual);
    out << line.substr(1) << '\n';
  }
}

// Reads a boundary CSV back.  `points` lists the distinct sources in file
// order; `entries` holds the rows as written, so the result is a valid input
// for the misfit and recovery routines (the m x m grid accessor only applies
// to freshly swept sets).
template <int N>
BoundaryDataSet<N> read_boundary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DatasetError(path + ": empty file");
  const auto header = detail::split_csv_line(line);
  if (header.size() != 4 * N + 4) {
    throw DatasetError(path + ": column count does not match dimension " +
                       std::to_string(N));
  }

  BoundaryDataSet<N> set;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DatasetError(path + ": row " + std::to_string(row) +
                         " has the wrong number of columns");
    }
    const std::string where = path + ": row " + std::to_string(row);
    std::size_t at = 0;
    auto next = [&] { return detail::parse_double(cells[at++], where); };
    BoundaryDatum<N> d;
    for (int i = 0; i < N; ++i) d.q0[i] = next();
    for (int i = 0; i < N; ++i) d.q[i] = next();
    d.energy = next();
    d.s = next();
    for (int i = 0; i < N; ++i) d.k0[i] = next();
    for (int i = 0; i < N; ++i) d.k[i] = next();
    d.s0 = next();
    d.residual = next();
    d.converged = std::isfinite(d.residual);
    d.stayed_inside = d.converged;
    if (set.points.empty() ||
        (set.points.back() - d.q0).squaredNorm() != 0.0) {
      bool seen = false;
      for (const Vec<N>& p : set.points) {
        if ((p - d.q0).squaredNorm() == 0.0) {
          seen = true;
          break;
        }
      }
      if (!seen) set.points.push_back(d.q0);
    }
    set.energy = d.energy;
    set.entries.push_back(std::move(d));
  }
  if (set.entries.empty()) throw DatasetError(path + ": no data rows");
  return set;
}

// ---------------------------------------------------------------------------
// Scattering datasets.
// Columns: v_minus, x_minus, v_plus, x_plus coords, E, chi (deflection
// angle), tau_minus, tau_plus.

template <int N>
void write_scattering_csv(const std::string& path,
                          const std::vector<ScatteringDatum<N>>& data) {
  std::ofstream out = detail::open_out(path);
  std::string header;
  detail::append_header_coords(header, "vm", N);
  detail::append_header_coords(header, "xm", N);
  detail::append_header_coords(header, "vp", N);
  detail::append_header_coords(header, "xp", N);
  header += ",E,chi,tau_minus,tau_plus";
  out << header.substr(1) << '\n';

  for (const ScatteringDatum<N>& d : data) {
    std::string line;
    detail::append_coords(line, d.v_minus);
    detail::append_coords(line, d.x_minus);
    detail::append_coords(line, d.v_plus);
    detail::append_coords(line, d.x_plus);
    line += ',';
    line += format_double(d.energy);
    line += ',';
    line += format_double(d.deflection);
    line += ',';
    line += format_double(d.tau_minus);
    line += ',';
    line += format_double(d.tau_plus);
    out << line.substr(1) << '\n';
  }
}

template <int N>
std::vector<ScatteringDatum<N>> read_scattering_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DatasetError(path + ": empty file");
  if (detail::split_csv_line(line).size() != 4 * N + 4) {
    throw DatasetError(path + ": column count does not match dimension " +
                       std::to_string(N));
  }

  std::vector<ScatteringDatum<N>> out;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != static_cast<std::size_t>(4 * N + 4)) {
      throw DatasetError(path + ": row " + std::to_string(row) +
                         " has the wrong number of columns");
    }
    const std::string where = path + ": row " + std::to_string(row);
    std::size_t at = 0;
    auto next = [&] { return detail::parse_double(cells[at++], where); };
    ScatteringDatum<N> d;
    for (int i = 0; i < N; ++i) d.v_minus[i] = next();
    for (int i = 0; i < N; ++i) d.x_minus[i] = next();
    for (int i = 0; i < N; ++i) d.v_plus[i] = next();
    for (int i = 0; i < N; ++i) d.x_plus[i] = next();
    d.energy = next();
    d.deflection = next();
    d.tau_minus = next();
    d.tau_plus = next();
    d.interacted = true;
    out.push_back(std::move(d));
  }
  if (out.empty()) throw DatasetError(path + ": no data rows");
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory dumps (simulate) and field grids (reconstruct).

template <int N>
void write_trajectory_csv(const std::string& path,
                          const std::vector<FlowResult<N>>& flows,
                          int samples_per_flow = 200) {
  std::ofstream out = detail::open_out(path);
  std::string header = "sample,t";
  detail::append_header_coords(header, "x", N);
  detail::append_header_coords(header, "p", N);
  out << header << '\n';
  for (std::size_t s = 0; s < flows.size(); ++s) {
    const FlowResult<N>& flow = flows[s];
    const double t0 = flow.sol.t_begin;
    const double t1 = flow.sol.t_end;
    for (int i = 0; i <= samples_per_flow; ++i) {
      const double t = t0 + (t1 - t0) * i / samples_per_flow;
      const PhaseState<N> st = flow.state_at(t);
      std::string line = std::to_string(s);
      line += ',';
      line += format_double(t);
      detail::append_coords(line, st.x);
      detail::append_coords(line, st.p);
      out << line << '\n';
    }
  }
}

template <int N>
void write_field_grid_csv(const std::string& path, const FieldModel<N>& model,
                          const std::vector<Vec<N>>& points) {
  std::ofstream out = detail::open_out(path);
  std::string header;
  detail::append_header_coords(header, "x", N);
  header += ",V";
  for (int i = 0; i < N; ++i) {
    for (int j = i + 1; j < N; ++j) {
      header += ",B_" + std::to_string(i) + std::to_string(j);
    }
  }
  out << header.substr(1) << '\n';
  for (const Vec<N>& x : points) {
    std::string line;
    detail::append_coords(line, x);
    line += ',';
    line += format_double(model.V(x));
    const Mat<N> b = model.B(x);
    for (int i = 0; i < N; ++i) {
      for (int j = i + 1; j < N; ++j) {
        line += ',';
        line += format_double(b(i, j));
      }
    }
    out << line.substr(1) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sidecars and JSON reports.

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

// Standard sidecar: enough to trace a dataset back to the exact model, grid
// and tolerances that produced it.
inline json make_sidecar(const RunConfig& cfg, const json& grid) {
  json side;
  side["config_hash"] = cfg.hash;
  side["dim"] = cfg.dim;
  side["mode"] = mode_name(cfg.mode);
  side["c"] = cfg.c;
  side["energy"] = cfg.energy;
  side["seed"] = cfg.seed;
  side["model"] = {{"potential", cfg.raw.value("potential", json{{"type", "zero"}})},
                   {"magnetic", cfg.raw.value("magnetic", json{{"type", "zero"}})},
                   {"domain", cfg.raw.value("domain", json{{"type", "ball"}, {"radius", 1.0}})}};
  side["grid"] = grid;
  side["tolerances"] = {{"flow_rtol", cfg.flow_rtol},
                        {"flow_atol", cfg.flow_atol},
                        {"shoot_rtol", cfg.shoot_rtol},
                        {"shoot_atol", cfg.shoot_atol},
                        {"residual_tol", cfg.residual_tol},
                        {"fd_step", cfg.fd_step}};
  return side;
}

}  // namespace fescat
