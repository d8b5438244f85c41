#pragma once

// Command-line surface.  Subcommands: simulate, boundary-sweep,
// scattering-sweep, convert, thresholds, verify, reconstruct.  Exit codes:
// 0 success, 1 configuration error, 2 solver failure, 3 verification
// failure.  All artifacts are deterministic for a fixed config and seed and
// embed the config hash.

#include "fescat/config.hpp"
#include "fescat/dataset.hpp"
#include "fescat/identities.hpp"
#include "fescat/inverse.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fescat {

// Raised when the numerics (integration, shooting) fail wholesale; the CLI
// maps it to exit code 2.
struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace cli_detail {

// Worker pool over [0, count).  Tasks are claimed dynamically but results
// must be written into index-addressed slots by the callee, which keeps
// artifacts independent of scheduling order.
inline void parallel_for(std::size_t count, int jobs,
                         const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_lock;
  std::exception_ptr error;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> hold(error_lock);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int width = std::min<int>(jobs, static_cast<int>(count));
  pool.reserve(width);
  for (int t = 0; t < width; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Boundary sweep with the configured diagonal cutoff, parallel over source
// rows.  Warm starts chain within a row only, so the result is identical to
// the serial sweep for any job count.
template <int N>
BoundaryDataSet<N> sweep_with_cutoff(const FieldModel<N>& model,
                                     const ConvexDomain<N>& domain,
                                     double energy, int per_angle,
                                     double cutoff_frac,
                                     const ShootOptions<N>& base_opts,
                                     int jobs) {
  BoundaryDataSet<N> set;
  set.points = boundary_grid(domain, per_angle);
  set.energy = energy;
  const int m = set.size();
  set.entries.assign(static_cast<std::size_t>(m) * m, BoundaryDatum<N>{});
  const double cutoff = cutoff_frac * domain.diameter;

  parallel_for(static_cast<std::size_t>(m), jobs, [&](std::size_t row) {
    const int i = static_cast<int>(row);
    std::optional<Vec<N>> warm_dir;
    std::optional<double> warm_s;
    for (int off = 1; off < m; ++off) {
      const int j = (i + off) % m;
      if ((set.points[i] - set.points[j]).norm() < cutoff) continue;
      ShootOptions<N> opts = base_opts;
      opts.warm_dir = warm_dir;
      opts.warm_s = warm_s;
      BoundaryDatum<N> datum = solve_boundary(model, domain, energy,
                                              set.points[i], set.points[j],
                                              opts);
      if (datum.converged) {
        warm_dir = datum.k0.normalized();
        warm_s = datum.s;
      } else {
        warm_dir.reset();
        warm_s.reset();
      }
      set.at(i, j) = std::move(datum);
    }
  });
  return set;
}

template <int N>
double scanned_sup_v(const FieldModel<N>& model, const ConvexDomain<N>& domain) {
  double sup = -std::numeric_limits<double>::infinity();
  for (const Vec<N>& x : interior_grid(domain, (N == 2) ? 64 : 24)) {
    sup = std::max(sup, model.V(x));
  }
  for (const Vec<N>& x : boundary_grid(domain, (N == 2) ? 128 : 24)) {
    sup = std::max(sup, model.V(x));
  }
  return sup;
}

// Energy admissibility.  The rest floor (motion exists at all) is always
// enforced; the certified threshold E* is enforced for relativistic models
// unless the config opts out, since the paper-grade constants are
// deliberately conservative and desk-scale experiments routinely run below
// them.
template <int N>
void threshold_guard(const RunConfig& cfg, const FieldModel<N>& model,
                     const ConvexDomain<N>& domain, double energy) {
  if (model.mode == Mode::nonrelativistic) {
    const double floor = scanned_sup_v(model, domain);
    if (!(energy > floor)) {
      throw ConfigError("energy " + format_double(energy) +
                        " does not exceed sup V = " + format_double(floor) +
                        "; no classical motion fills the domain");
    }
    return;
  }
  ThresholdEvaluator<N> eval(model, domain);
  const double rest = eval.rest_threshold();
  if (!(energy > rest)) {
    throw ConfigError("energy " + format_double(energy) +
                      " does not exceed the rest threshold c^2 + sup V = " +
                      format_double(rest));
  }
  if (cfg.allow_below_threshold) return;
  const ThresholdReport rep = eval.report(energy);
  if (!rep.meets_operational) {
    std::string msg =
        "energy " + format_double(energy) +
        " is below the certified working threshold (needs E > max(C1, C2) = " +
        format_double(std::max(rep.c1, rep.c2_strict)) +
        " among other gates); set \"allow_below_threshold\": true to run "
        "anyway";
    if (!cfg.ladder.empty()) {
      try {
        msg += "; first admissible ladder energy: " +
               format_double(eval.operational_threshold(cfg.ladder));
      } catch (const std::runtime_error&) {
        msg += "; no ladder energy is admissible either";
      }
    }
    throw ConfigError(msg);
  }
}

inline std::filesystem::path prepare_outdir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.outdir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory: " + cfg.outdir);
  return dir;
}

// ---------------------------------------------------------------------------
// simulate: flow a batch of interior states to the boundary and dump the
// trajectories.

template <int N>
int cmd_simulate(const RunConfig& cfg) {
  const FieldModel<N> model = build_field_model<N>(cfg);
  const ConvexDomain<N> domain = build_domain<N>(cfg);
  threshold_guard(cfg, model, domain, cfg.energy);
  const auto dir = prepare_outdir(cfg);

  // Draw all initial states up front so the stream is independent of jobs.
  Rng rng(cfg.seed);
  std::vector<PhaseState<N>> starts;
  starts.reserve(cfg.samples);
  for (int s = 0; s < cfg.samples; ++s) {
    const Vec<N> x = sample_interior(domain, rng, 0.05);
    const Vec<N> u = rng.template unit_vector<N>();
    starts.push_back({x, Vec<N>(impulse_radius(model, cfg.energy, x) * u)});
  }

  std::vector<FlowResult<N>> flows(starts.size());
  std::atomic<int> trapped{0};
  const FlowOptions fopts = cfg.flow_options();
  parallel_for(starts.size(), cfg.jobs, [&](std::size_t i) {
    const double speed =
        speed_from_energy(model, cfg.energy, starts[i].x);
    const double budget = 50.0 * domain.diameter / std::max(speed, 1e-12);
    flows[i] = integrate_flow(model, &domain, starts[i], budget, fopts);
    if (flows[i].status == FlowStatus::ok) ++trapped;
  });

  write_trajectory_csv((dir / "trajectories.csv").string(), flows);
  json side = make_sidecar(cfg, json{{"type", "interior-samples"},
                                     {"count", cfg.samples}});
  side["trapped"] = trapped.load();
  write_json((dir / "simulate.json").string(), side);
  std::cout << "simulate: " << starts.size() << " trajectories, " << trapped
            << " still inside at the time budget\n";
  return 0;
}

// ---------------------------------------------------------------------------
// boundary-sweep.

template <int N>
int cmd_boundary_sweep(const RunConfig& cfg) {
  const FieldModel<N> model = build_field_model<N>(cfg);
  const ConvexDomain<N> domain = build_domain<N>(cfg);
  threshold_guard(cfg, model, domain, cfg.energy);
  const auto dir = prepare_outdir(cfg);

  const BoundaryDataSet<N> set = sweep_with_cutoff(
      model, domain, cfg.energy, cfg.boundary_per_angle, cfg.diagonal_cutoff,
      cfg.template shoot_options<N>(), cfg.jobs);

  int attempted = 0, converged = 0;
  for (const BoundaryDatum<N>& d : set.entries) {
    if ((d.q0 - d.q).squaredNorm() == 0.0) continue;
    ++attempted;
    if (d.converged) ++converged;
  }
  write_boundary_csv((dir / "boundary.csv").string(), set);
  json side = make_sidecar(
      cfg, json{{"type", "boundary"},
                {"per_angle", cfg.boundary_per_angle},
                {"points", set.size()},
                {"diagonal_cutoff", cfg.diagonal_cutoff}});
  side["attempted"] = attempted;
  side["converged"] = converged;
  write_json((dir / "boundary.json").string(), side);
  std::cout << "boundary-sweep: " << converged << "/" << attempted
            << " pairs converged\n";
  if (converged == 0) {
    throw SolverFailure("boundary-sweep: no pair converged");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// scattering-sweep.

template <int N>
int cmd_scattering_sweep(const RunConfig& cfg) {
  const FieldModel<N> model = build_field_model<N>(cfg);
  const ConvexDomain<N> domain = build_domain<N>(cfg);
  if (!model.has_support) {
    throw ConfigError(
        "scattering-sweep needs a compactly supported model (asymptotes must "
        "be free)");
  }
  threshold_guard(cfg, model, domain, cfg.energy);
  const auto dir = prepare_outdir(cfg);

  Rng rng(cfg.seed);
  const std::vector<ScatteringState<N>> states = sample_scattering_states(
      model, domain, cfg.energy, cfg.samples, rng);
  std::vector<ScatteringDatum<N>> data(states.size());
  ScatterOptions sopts;
  sopts.rtol = cfg.flow_rtol;
  sopts.atol = cfg.flow_atol;
  parallel_for(states.size(), cfg.jobs, [&](std::size_t i) {
    data[i] = scatter(model, domain, cfg.energy, states[i].v_minus,
                      states[i].x_minus, sopts);
  });

  int incomplete = 0;
  for (const ScatteringDatum<N>& d : data) {
    if (!d.completed) ++incomplete;
  }
  write_scattering_csv((dir / "scattering.csv").string(), data);
  json side = make_sidecar(cfg, json{{"type", "scattering-samples"},
                                     {"count", cfg.samples}});
  side["incomplete"] = incomplete;
  write_json((dir / "scattering.json").string(), side);
  std::cout << "scattering-sweep: " << data.size() << " samples, "
            << incomplete << " incomplete\n";
  if (incomplete > 0) {
    throw SolverFailure("scattering-sweep: " + std::to_string(incomplete) +
                        " samples did not complete within the time budget");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// convert: the geometric dictionary between scattering and boundary data.

template <int N>
int cmd_convert(const RunConfig& cfg, const std::string& direction,
                const std::string& input) {
  const ConvexDomain<N> domain = build_domain<N>(cfg);
  const auto dir = prepare_outdir(cfg);

  if (direction == "s2b") {
    const auto rows = read_scattering_csv<N>(input);
    BoundaryDataSet<N> set;
    set.energy = rows.front().energy;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const ScatteringDatum<N>& d = rows[r];
      BoundaryBridge<N> bridge;
      try {
        bridge = scattering_to_boundary(domain, d.v_minus, d.x_minus,
                                        d.v_plus, d.x_plus);
      } catch (const std::invalid_argument& e) {
        throw DatasetError(input + ": row " + std::to_string(r + 1) + ": " +
                           e.what());
      }
      BoundaryDatum<N> out;
      out.q0 = bridge.q0;
      out.q = bridge.q;
      out.s = bridge.s;
      out.k0 = bridge.k0;
      out.k = bridge.k;
      out.energy = d.energy;
      out.residual = 0.0;
      out.converged = true;
      out.stayed_inside = true;
      set.points.push_back(bridge.q0);
      set.entries.push_back(std::move(out));
    }
    write_boundary_csv((dir / "converted_boundary.csv").string(), set);
  } else if (direction == "b2s") {
    const auto set = read_boundary_csv<N>(input);
    std::vector<ScatteringDatum<N>> rows;
    for (std::size_t r = 0; r < set.entries.size(); ++r) {
      const BoundaryDatum<N>& d = set.entries[r];
      BoundaryBridge<N> bridge{d.q0, d.q, d.s, d.k0, d.k};
      try {
        rows.push_back(boundary_to_scattering(domain, bridge, d.energy));
      } catch (const std::invalid_argument& e) {
        throw DatasetError(input + ": row " + std::to_string(r + 1) + ": " +
                           e.what());
      }
    }
    write_scattering_csv((dir / "converted_scattering.csv").string(), rows);
  } else {
    throw ConfigError("convert: direction must be s2b or b2s");
  }

  json side = make_sidecar(cfg, json{{"type", "converted"},
                                     {"direction", direction},
                                     {"input", input}});
  write_json((dir / "convert.json").string(), side);
  std::cout << "convert " << direction << ": wrote "
            << (direction == "s2b" ? "converted_boundary.csv"
                                   : "converted_scattering.csv")
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// thresholds: the regime constants, formula by formula.

template <int N>
int cmd_thresholds(const RunConfig& cfg) {
  const FieldModel<N> model = build_field_model<N>(cfg);
  const ConvexDomain<N> domain = build_domain<N>(cfg);
  if (model.mode != Mode::relativistic) {
    throw ConfigError(
        "threshold constants are defined for the relativistic dynamics");
  }
  const auto dir = prepare_outdir(cfg);
  ThresholdEvaluator<N> eval(model, domain);
  if (!(cfg.energy > eval.rest_threshold())) {
    throw ConfigError("energy " + format_double(cfg.energy) +
                      " does not exceed the rest threshold " +
                      format_double(eval.rest_threshold()));
  }
  const ThresholdReport rep = eval.report(cfg.energy);

  json out;
  out["config_hash"] = cfg.hash;
  out["dimension"] = rep.dimension;
  out["c"] = rep.c;
  out["energy"] = rep.energy;
  out["beta"] = rep.beta;
  out["delta"] = rep.delta;
  out["sup_v"] = rep.sup_v;
  out["rest_threshold"] = eval.rest_threshold();
  out["c1"] = rep.c1;
  out["c2_strict"] = rep.c2_strict;
  out["c2_relaxed"] = rep.c2_relaxed;
  out["c3_sup"] = rep.c3_sup;
  out["c4_sup"] = rep.c4_sup;
  out["c5_sup"] = rep.c5_sup;
  out["c6"] = rep.c6;
  out["c7"] = rep.c7;
  out["c8"] = rep.c8;
  out["c9"] = rep.c9;
  out["c10"] = rep.c10;
  out["max_exit_time"] = rep.max_exit_time;
  out["meets_energy_bound"] = rep.meets_energy_bound;
  out["meets_local_diffeo"] = rep.meets_local_diffeo;
  out["meets_surjectivity"] = rep.meets_surjectivity;
  out["meets_operational"] = rep.meets_operational;
  if (!cfg.ladder.empty()) {
    json rungs = json::array();
    for (const double e : cfg.ladder) {
      if (!(e > eval.rest_threshold())) {
        rungs.push_back({{"energy", e}, {"defined", false}});
        continue;
      }
      rungs.push_back({{"energy", e},
                       {"defined", true},
                       {"meets_operational", eval.report(e).meets_operational}});
    }
    out["ladder"] = rungs;
    try {
      out["operational_threshold"] = eval.operational_threshold(cfg.ladder);
    } catch (const std::runtime_error&) {
      out["operational_threshold"] = nullptr;
    }
  }

  write_json((dir / "thresholds.json").string(), out);
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// verify: run the identity/regime suite (optionally a named subset).

template <int N>
int cmd_verify(const RunConfig& cfg, const std::string& suite) {
  const FieldModel<N> model = build_field_model<N>(cfg);
  const ConvexDomain<N> domain = build_domain<N>(cfg);
  const auto dir = prepare_outdir(cfg);

  const std::vector<CheckResult> all =
      run_default_suite(model, domain, cfg.energy, cfg.seed);
  std::vector<CheckResult> selected;
  for (const CheckResult& r : all) {
    if (suite.empty() || suite == "all" ||
        r.name.find(suite) != std::string::npos) {
      selected.push_back(r);
    }
  }
  if (selected.empty()) {
    std::string names;
    for (const CheckResult& r : all) names += " " + r.name;
    throw ConfigError("verify: no check matches suite \"" + suite +
                      "\"; available:" + names);
  }

  json checks;
  bool all_passed = true;
  for (const CheckResult& r : selected) {
    checks[r.name] = {{"passed", r.passed},
                      {"max_residual", r.max_residual},
                      {"tolerance", r.tolerance},
                      {"samples", r.sample_count},
                      {"details", r.details}};
    all_passed = all_passed && r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  residual "
              << format_double(r.max_residual) << " vs tolerance "
              << format_double(r.tolerance) << "\n";
  }
  json report;
  report["config_hash"] = cfg.hash;
  report["suite"] = suite.empty() ? "all" : suite;
  report["energy"] = cfg.energy;
  report["checks"] = checks;
  report["passed"] = all_passed;
  write_json((dir / "verify.json").string(), report);
  return all_passed ? 0 : 3;
}

// ---------------------------------------------------------------------------
// reconstruct: parametric least squares against an observed boundary dataset.

inline ParametricFamily<2> family_from_json(const json& f, Mode mode, double c) {
  const std::string type = f.value("type", std::string(""));
  if (type == "bump_pair") {
    return bump_pair_family(f.value("v_rho", 0.55), f.value("b_rho", 0.5),
                            mode, c);
  }
  if (type == "bump_amplitude") {
    if (!f.contains("center") || !f.contains("rho")) {
      throw ConfigError("family.bump_amplitude: needs center and rho");
    }
    const Vec<2> center = detail::vec_from<2>(f["center"], "family.center");
    const double rho = detail::positive_number(f, "rho", 0.0, "family");
    ParametricFamily<2> fam;
    fam.parameter_count = 1;
    fam.names = {"v_amp"};
    fam.build = [center, rho, mode, c](const Eigen::VectorXd& t) {
      return make_bump_v<2>(t[0], center, rho, mode, c);
    };
    return fam;
  }
  throw ConfigError("family.type: expected bump_pair or bump_amplitude");
}

template <int N>
int cmd_reconstruct(const RunConfig& cfg, const std::string& input) {
  if constexpr (N != 2) {
    throw ConfigError("reconstruct: parametric families are planar (dim = 2)");
  } else {
    if (!cfg.raw.contains("family")) {
      throw ConfigError("reconstruct: config needs a \"family\" section");
    }
    const ConvexDomain<2> domain = build_domain<2>(cfg);
    const ParametricFamily<2> family =
        family_from_json(cfg.raw["family"], cfg.mode, cfg.c);

    const BoundaryDataSet<2> observed = read_boundary_csv<2>(input);
    {
      // Guard with the dataset's own energy: that is what the solves use.
      const FieldModel<2> probe = build_field_model<2>(cfg);
      threshold_guard(cfg, probe, domain, observed.energy);
    }

    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(family.parameter_count);
    const json& f = cfg.raw["family"];
    if (f.contains("start")) {
      if (!f["start"].is_array() ||
          f["start"].size() != static_cast<std::size_t>(family.parameter_count)) {
        throw ConfigError("family.start: expected " +
                          std::to_string(family.parameter_count) + " numbers");
      }
      for (int i = 0; i < family.parameter_count; ++i) {
        theta0[i] = f["start"][i].get<double>();
      }
    }

    NelderMeadOptions nm;
    MisfitOptions<2> mo;
    mo.shoot = cfg.shoot_options<2>();
    if (cfg.raw.contains("optimizer")) {
      const json& o = cfg.raw["optimizer"];
      detail::require_keys(o,
                           {"max_iterations", "restarts", "initial_step",
                            "f_tol", "x_tol", "w_k", "w_k0", "w_s",
                            "failure_penalty"},
                           "config.optimizer");
      nm.max_iterations = o.value("max_iterations", nm.max_iterations);
      nm.restarts = o.value("restarts", nm.restarts);
      nm.initial_step = o.value("initial_step", nm.initial_step);
      nm.f_tol = o.value("f_tol", nm.f_tol);
      nm.x_tol = o.value("x_tol", nm.x_tol);
      mo.w_k = o.value("w_k", mo.w_k);
      mo.w_k0 = o.value("w_k0", mo.w_k0);
      mo.w_s = o.value("w_s", mo.w_s);
      mo.failure_penalty = o.value("failure_penalty", mo.failure_penalty);
    }

    const auto dir = prepare_outdir(cfg);
    const ReconstructionResult result =
        reconstruct_least_squares(family, domain, observed, theta0, nm, mo);
    if (result.misfit >= mo.failure_penalty) {
      throw SolverFailure(
          "reconstruct: every trial point failed its forward solves");
    }

    json rep;
    rep["config_hash"] = cfg.hash;
    rep["family"] = f;
    rep["parameter_names"] = family.names;
    json theta = json::array();
    for (int i = 0; i < result.theta.size(); ++i) theta.push_back(result.theta[i]);
    rep["theta"] = theta;
    rep["misfit"] = result.misfit;
    rep["iterations"] = result.iterations;
    rep["evaluations"] = result.evaluations;
    rep["converged"] = result.converged;
    rep["trace"] = result.trace;
    rep["observed"] = {{"path", input},
                       {"energy", observed.energy},
                       {"entries", observed.entries.size()}};
    write_json((dir / "reconstruction.json").string(), rep);

    const FieldModel<2> recovered = family.build(result.theta);
    write_field_grid_csv((dir / "recovered_fields.csv").string(), recovered,
                         interior_grid(domain, cfg.interior_per_axis));
    std::cout << "reconstruct: misfit " << format_double(result.misfit)
              << " after " << result.evaluations << " evaluations\n";
    return 0;
  }
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// Entry point.

inline int run_cli(int argc, char** argv) {
  CLI::App app{
      "Forward and inverse toolkit for fixed-energy motion in electromagnetic "
      "fields on a convex domain"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::string suite;
  std::string direction;
  std::string input;
  double energy_override = 0.0;
  int jobs_override = 0;
  std::int64_t seed_override = -1;

  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", config_path,
                                "JSON run configuration");
    if (needs_config) opt->required();
    cmd->add_option("--out", out_override, "output directory (overrides config)");
    cmd->add_option("--energy", energy_override, "energy override");
    cmd->add_option("--jobs", jobs_override, "worker count (overrides config)");
    cmd->add_option("--seed", seed_override, "sampling seed (overrides config)");
  };

  CLI::App* c_sim = app.add_subcommand("simulate", "integrate and dump trajectories");
  add_common(c_sim);
  CLI::App* c_bnd = app.add_subcommand("boundary-sweep",
                                       "solve the boundary pair grid");
  add_common(c_bnd);
  CLI::App* c_sct = app.add_subcommand("scattering-sweep",
                                       "direct scattering over sampled asymptotes");
  add_common(c_sct);
  CLI::App* c_cnv = app.add_subcommand("convert",
                                       "dictionary between scattering and boundary data");
  add_common(c_cnv);
  c_cnv->add_option("--direction", direction, "s2b or b2s")->required();
  c_cnv->add_option("--in", input, "input dataset CSV")->required();
  CLI::App* c_thr = app.add_subcommand("thresholds", "regime constants as JSON");
  add_common(c_thr);
  CLI::App* c_ver = app.add_subcommand("verify", "run the identity/regime checks");
  add_common(c_ver);
  c_ver->add_option("suite,--suite", suite, "check-name filter (substring)");
  CLI::App* c_rec = app.add_subcommand("reconstruct",
                                       "parametric least squares from boundary data");
  add_common(c_rec);
  c_rec->add_option("--in", input, "observed boundary dataset CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // a bad command line is a config error
  }

  try {
    RunConfig cfg = load_run_config(config_path);
    if (!out_override.empty()) cfg.outdir = out_override;
    if (energy_override > 0.0) cfg.energy = energy_override;
    if (jobs_override > 0) cfg.jobs = jobs_override;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);

    auto dispatch = [&](auto&& fn2, auto&& fn3) {
      return cfg.dim == 2 ? fn2() : fn3();
    };
    if (app.got_subcommand(c_sim)) {
      return dispatch([&] { return cli_detail::cmd_simulate<2>(cfg); },
                      [&] { return cli_detail::cmd_simulate<3>(cfg); });
    }
    if (app.got_subcommand(c_bnd)) {
      return dispatch([&] { return cli_detail::cmd_boundary_sweep<2>(cfg); },
                      [&] { return cli_detail::cmd_boundary_sweep<3>(cfg); });
    }
    if (app.got_subcommand(c_sct)) {
      return dispatch([&] { return cli_detail::cmd_scattering_sweep<2>(cfg); },
                      [&] { return cli_detail::cmd_scattering_sweep<3>(cfg); });
    }
    if (app.got_subcommand(c_cnv)) {
      return dispatch(
          [&] { return cli_detail::cmd_convert<2>(cfg, direction, input); },
          [&] { return cli_detail::cmd_convert<3>(cfg, direction, input); });
    }
    if (app.got_subcommand(c_thr)) {
      return dispatch([&] { return cli_detail::cmd_thresholds<2>(cfg); },
                      [&] { return cli_detail::cmd_thresholds<3>(cfg); });
    }
    if (app.got_subcommand(c_ver)) {
      return dispatch([&] { return cli_detail::cmd_verify<2>(cfg, suite); },
                      [&] { return cli_detail::cmd_verify<3>(cfg, suite); });
    }
    if (app.got_subcommand(c_rec)) {
      return dispatch([&] { return cli_detail::cmd_reconstruct<2>(cfg, input); },
                      [&] { return cli_detail::cmd_reconstruct<3>(cfg, input); });
    }
    throw ConfigError("no subcommand");  // unreachable: require_subcommand(1)
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return 1;
  } catch (const SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace fescat
