#pragma once

// Stage runners shared by the CLI subcommands and the full pipeline.
//
// Each stage writes into its own directory under the output root together with
// a stage.json stamp holding the content hash of everything the stage read.
// A stage is skipped when its stamp matches and all of its files exist.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gpk/config.hpp"
#include "gpk/error.hpp"
#include "gpk/fock_scenarios.hpp"
#include "gpk/gp_dynamics.hpp"
#include "gpk/io.hpp"
#include "gpk/kernels.hpp"
#include "gpk/scattering.hpp"

namespace gpk::pipeline {

namespace fs = std::filesystem;
using io::Json;

inline constexpr const char* kFormatVersion = "gpk-pipeline/1";

// ---------------------------------------------------------------- scattering

struct ScatteringInputs {
  std::string potential = "square-well:8,1";
  double r_max = 0.0;  ///< 0: max(10, 6 x support)
  int points = 10001;
};

inline scattering::RadialPotential load_potential(const std::string& spec) {
  return scattering::RadialPotential::from_spec(spec);
}

inline double default_r_max(const scattering::RadialPotential& v) { return std::max(10.0, 6.0 * v.r_support()); }

struct ScatteringResult {
  scattering::RadialPotential potential = scattering::RadialPotential::zero();
  scattering::ScatteringSolution solution;
  Json summary;
};

inline ScatteringResult solve_scattering(const ScatteringInputs& in) {
  ScatteringResult res;
  res.potential = load_potential(in.potential);
  const double r_max = in.r_max > 0.0 ? in.r_max : default_r_max(res.potential);
  res.solution = scattering::solve_zero_energy(res.potential, r_max, in.points);
  const double a0_integral = scattering::scattering_length_integral(res.solution, res.potential);
  res.summary = Json{{"a0_tail", res.solution.a0},
                     {"a0_integral", a0_integral},
                     {"ode_residual", res.solution.ode_residual},
                     {"tail_fit_error", res.solution.tail_fit_error},
                     {"potential", in.potential},
                     {"r_max", r_max},
                     {"points", in.points}};
  return res;
}

inline std::string profile_csv(const scattering::ScatteringSolution& sol) {
  io::CsvWriter csv({"r", "f", "w", "dw_dr"});
  for (std::size_t i = 0; i < sol.r.size(); ++i) csv.numbers({sol.r[i], sol.f[i], sol.w[i], sol.dw[i]});
  return csv.str();
}

/// Re-solves the scattering problem described by a summary JSON.
inline ScatteringResult scattering_from_summary(const Json& j) {
  ScatteringInputs in;
  try {
    in.potential = j.at("potential").get<std::string>();
    in.r_max = j.at("r_max").get<double>();
    in.points = j.at("points").get<int>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("scattering summary: ") + e.what());
  }
  return solve_scattering(in);
}

// ------------------------------------------------------------------- dynamics

struct DatumSpec {
  std::string kind = "gaussian";
  double sigma = 1.0;
  std::array<double, 3> center{};
  std::array<double, 3> momentum{};
  std::array<int, 3> modes{};
  fs::path file;
};

inline gp::WaveFunction build_datum(const DatumSpec& d, const GridSpec& g) {
  if (d.kind == "gaussian") return gp::WaveFunction::gaussian(g, d.sigma, d.center, d.momentum);
  if (d.kind == "plane") return gp::WaveFunction::plane_wave(g, d.modes);
  if (d.kind == "constant") return gp::WaveFunction::constant(g);
  if (d.kind == "file") {
    auto dump = io::read_field(d.file);
    if (!dump.grid.same_mesh(g)) throw ConfigError("datum.file: field dump lives on a different grid");
    gp::WaveFunction psi{g, std::move(dump.values)};
    psi.normalize();
    return psi;
  }
  throw ConfigError("datum.kind: unknown kind '" + d.kind + "'");
}

struct SweepSpec {
  std::vector<double> N = {8, 16, 32, 64};
  double t_star = 0.5;
  GridSpec grid;  ///< mesh and dt of the comparison runs
};

struct EvolveInputs {
  GridSpec grid;
  DatumSpec datum;
  int snapshot_stride = 0;  ///< steps between dumps; 0: only t = 0 and t_final
  std::optional<SweepSpec> sweep;
};

struct EvolveResult {
  gp::Trajectory trajectory;
  std::optional<gp::ComparisonReport> comparison;
  std::vector<std::string> files;
};

inline EvolveResult run_evolve(const EvolveInputs& in, const ScatteringResult& sc, const fs::path& dir) {
  EvolveResult res;
  const auto psi0 = build_datum(in.datum, in.grid);
  res.trajectory = gp::evolve(psi0, gp::NonlinearitySpec::gp(sc.solution.a0), in.grid, in.snapshot_stride);
  fs::create_directories(dir);
  for (const auto& old : fs::directory_iterator(dir))
    if (old.path().extension() == ".gpkf") fs::remove(old.path());
  for (std::size_t i = 0; i < res.trajectory.snapshots.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "field_%04zu.gpkf", i);
    io::write_field(dir / name, in.grid, res.trajectory.times[i], res.trajectory.snapshots[i].values);
    res.files.push_back(name);
  }
  const auto& rep = res.trajectory.report;
  io::CsvWriter norms({"t", "l2", "energy", "h1", "h2", "h3", "h4"});
  for (std::size_t i = 0; i < rep.times.size(); ++i)
    norms.numbers({rep.times[i], rep.mass[i], rep.energy[i], rep.h_norms[0][i], rep.h_norms[1][i],
                   rep.h_norms[2][i], rep.h_norms[3][i]});
  io::write_text(dir / "norms.csv", norms.str());
  res.files.push_back("norms.csv");

  io::CsvWriter rates({"N", "l2_difference", "slope"});
  if (in.sweep) {
    const auto& sw = *in.sweep;
    const auto datum = build_datum(in.datum, sw.grid);
    auto symbol = std::make_shared<const gp::RadialSymbol>(sc.solution, sc.potential);
    res.comparison = gp::compare_dynamics(datum, sc.solution.a0, symbol, sw.N, sw.t_star, sw.grid);
    for (std::size_t i = 0; i < res.comparison->N.size(); ++i)
      rates.numbers({res.comparison->N[i], res.comparison->l2_difference[i], res.comparison->rate.slope});
  }
  io::write_text(dir / "rates.csv", rates.str());
  res.files.push_back("rates.csv");
  return res;
}

// -------------------------------------------------------------------- kernels

struct KernelsResult {
  std::vector<kernels::KernelBoundReport> reports;
  std::vector<double> cancellation;
  bool all_zero = true;
};

inline KernelsResult run_kernels(const gp::WaveFunction& phi, const ScatteringResult& sc,
                                 const std::vector<double>& n_list, const kernels::KernelBoundOptions& opt,
                                 const fs::path& dir) {
  KernelsResult res;
  res.reports = kernels::kernel_bound_report(phi, sc.solution, n_list, opt);
  io::CsvWriter csv({"N", "l2_k", "grad1_k_over_sqrtN", "grad1_kkbar", "sup_slice", "cancellation_residual"});
  for (const auto& r : res.reports) {
    const double c = kernels::zero_energy_cancellation_residual(sc.solution, sc.potential, r.N);
    res.cancellation.push_back(c);
    csv.numbers({r.N, r.l2_k, r.grad1_k_over_sqrt_n(), r.l2_grad1_kkbar, r.sup_x_l2_slice, c});
    if (r.l2_k != 0.0 || r.l2_grad1_kkbar != 0.0 || r.sup_x_l2_slice != 0.0) res.all_zero = false;
  }
  io::write_text(dir / "kernel_bounds.csv", csv.str());
  return res;
}

// ----------------------------------------------------------------------- fock

struct CancellationInputs {
  std::string potential = "gaussian:0.2,1";
  fock::CancellationScenario scenario;
};

struct FockInputs {
  fock::ToyScenario toy = fock::ToyScenario::reference();
  CancellationInputs cancellation;
  int identity_modes = 2;
  int identity_n_max = 10;
  std::vector<double> tnt_norms = {0.0, 0.5, 1.0, 1.5};
};

inline Json rate_json(const RateReport& r) {
  Json j{{"defined", r.defined}, {"monotone", r.monotone}, {"note", r.note}};
  j["slope"] = r.defined ? Json(r.slope) : Json(nullptr);
  j["intercept"] = r.defined ? Json(r.intercept) : Json(nullptr);
  j["r_squared"] = r.defined ? Json(r.r_squared) : Json(nullptr);
  return j;
}

inline Json run_fock(const FockInputs& in, const fs::path& dir) {
  Json report;
  const auto id = fock::identity_suite(in.identity_modes, in.identity_n_max);
  Json outside = Json::array();
  for (const auto& [r, e] : id.squeezed_outside) outside.push_back({{"r", r}, {"error", e}});
  report["identities"] = {{"d", id.d},
                          {"n_max", id.n_max},
                          {"ccr", id.ccr},
                          {"weyl_product", id.weyl_product},
                          {"weyl_shift", id.weyl_shift},
                          {"bogoliubov_conjugation", id.bogoliubov_conjugation},
                          {"symplectic", id.symplectic},
                          {"poisson_shell", id.poisson_shell},
                          {"squeezed_number", id.squeezed_number},
                          {"squeezed_r", id.squeezed_r},
                          {"squeezed_beyond_probe", outside}};

  // Smallest constant in T*NT ≤ C(N+1) along a fixed direction of kernels.
  const fock::FockBasis tb(in.identity_modes, in.identity_n_max);
  Json tnt = Json::array();
  for (double s : in.tnt_norms) {
    fock::Mat k = fock::Mat::Zero(in.identity_modes, in.identity_modes);
    k(0, 0) = 0.8;
    k(0, 1) = k(1, 0) = fock::cplx(0.3, 0.2);
    k(1, 1) = -0.4;
    k *= s / k.norm();
    const auto r = fock::check_TNT_inequality(tb, k, 1.0);
    tnt.push_back({{"k_norm", s}, {"smallest_c", r.smallest_c}, {"subspace_c", r.subspace_c}, {"heuristic", r.heuristic}});
  }
  report["tnt"] = tnt;

  const auto toy = fock::toy_main_theorem(in.toy);
  io::CsvWriter csv({"N", "t", "trace_distance", "number_expectation"});
  double leak = 0.0;
  for (const auto& p : toy.points) {
    csv.numbers({double(p.N), p.t, p.trace_distance, p.number_expectation});
    leak = std::max(leak, p.max_leakage);
  }
  io::write_text(dir / "toy_convergence.csv", csv.str());
  report["toy"] = {{"distance_rate", rate_json(toy.distance_rate)},
                   {"number_spread", toy.number_spread},
                   {"max_leakage", leak},
                   {"t", in.toy.times.back()}};

  const auto cv = load_potential(in.cancellation.potential);
  const auto csol = scattering::solve_zero_energy(cv, default_r_max(cv), 6001);
  auto sc = in.cancellation.scenario;
  sc.correlated = true;
  const auto corr = fock::generator_cancellation_check(sc, csol, cv);
  sc.correlated = false;
  const auto plain = fock::generator_cancellation_check(sc, csol, cv);
  report["cancellation"] = {{"potential", in.cancellation.potential},
                            {"ratio_correlated", corr.ratio},
                            {"ratio_uncorrelated", plain.ratio},
                            {"kernel_norm", corr.kernel_norm},
                            {"linear_single", corr.linear_single},
                            {"linear_sum", corr.linear_sum}};
  io::write_json(dir / "fock_report.json", report);
  return report;
}

// ------------------------------------------------------------ config parsing

inline ScatteringInputs scattering_inputs(const ConfigFile& c) {
  ScatteringInputs in;
  in.potential = c.require("potential.spec");
  if (in.potential.rfind("file:", 0) == 0)
    in.potential = "file:" + c.existing_path("potential.spec", in.potential.substr(5)).string();
  in.r_max = c.num("potential.r_max", 0.0);
  in.points = c.integer("potential.points", 10001);
  return in;
}

inline GridSpec grid_from(const ConfigFile& c, const std::string& s, const GridSpec& base) {
  GridSpec g = base;
  g.dim = c.integer(s + ".dim", g.dim);
  g.points = c.integer(s + ".points", g.points);
  g.box_length = c.num(s + ".box_length", g.box_length);
  g.dt = c.num(s + ".dt", g.dt);
  g.t_final = c.num(s + ".t_final", g.t_final);
  g.validate();
  return g;
}

inline std::array<double, 3> triple(const ConfigFile& c, const std::string& key) {
  const auto v = c.list(key, {});
  if (v.size() > 3) throw ConfigError(c.where(key) + ": at most three components");
  std::array<double, 3> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

inline EvolveInputs evolve_inputs(const ConfigFile& c) {
  EvolveInputs in;
  in.grid = grid_from(c, "grid", GridSpec{});
  in.snapshot_stride = c.integer("grid.snapshot_stride", 0);
  in.datum.kind = c.str("datum.kind", "gaussian");
  in.datum.sigma = c.num("datum.sigma", 1.0);
  in.datum.center = triple(c, "datum.center");
  in.datum.momentum = triple(c, "datum.momentum");
  const auto m = triple(c, "datum.modes");
  for (int a = 0; a < 3; ++a) in.datum.modes[a] = static_cast<int>(m[a]);
  if (in.datum.kind == "file") in.datum.file = c.existing_path("datum.file", c.require("datum.file"));
  if (c.has_section("sweep")) {
    SweepSpec sw;
    sw.N = c.list("sweep.N", sw.N);
    sw.t_star = c.num("sweep.t_star", sw.t_star);
    sw.grid = grid_from(c, "sweep", in.grid);
    in.sweep = sw;
  }
  return in;
}

inline kernels::KernelBoundOptions kernel_options(const ConfigFile& c) {
  kernels::KernelBoundOptions o;
  o.kernel_points = c.integer("kernels.kernel_points", o.kernel_points);
  o.column_stride = c.integer("kernels.column_stride", o.column_stride);
  o.t = c.num("kernels.t", 0.0);
  return o;
}

inline fock::ModeTensor parse_interaction(const ConfigFile& c, int d) {
  const std::string v = c.str("fock.v", "on-site:1");
  if (v == "zero") return fock::ModeTensor::zero(d);
  if (v.rfind("on-site:", 0) == 0)
    return fock::ModeTensor::on_site(d, config_detail::to_double(c.where("fock.v"), v.substr(8)));
  if (v == "density") return fock::ModeTensor::density(c.matrix("fock.v_pair"));
  throw ConfigError(c.where("fock.v") + ": expected zero, on-site:<u> or density");
}

inline FockInputs fock_inputs(const ConfigFile& c) {
  FockInputs in;
  auto& t = in.toy;
  if (c.raw("fock.phi0")) {
    const auto phi = c.complex_list("fock.phi0");
    t.phi0 = Eigen::Map<const fock::Vec>(phi.data(), static_cast<Eigen::Index>(phi.size()));
    if (!(t.phi0.norm() > 0.0)) throw DomainError(c.where("fock.phi0") + ": zero vector");
    t.phi0 /= t.phi0.norm();
  }
  const int d = static_cast<int>(t.phi0.size());
  if (c.raw("fock.h")) t.h = c.matrix("fock.h");
  else if (d != 2) throw ConfigError(c.where("fock.h") + ": required when phi0 does not have two entries");
  if (c.raw("fock.v")) t.v = parse_interaction(c, d);
  t.g = c.num("fock.g", t.g);
  t.kappa = c.num("fock.kappa", t.kappa);
  t.times = c.list("fock.times", t.times);
  t.hartree_dt = c.num("fock.hartree_dt", t.hartree_dt);
  t.extra_shells = c.integer("fock.extra_shells", t.extra_shells);
  std::vector<double> ns;
  for (double n : c.list("fock.N", {})) ns.push_back(n);
  if (!ns.empty()) {
    t.N_list.clear();
    for (double n : ns) {
      if (n != std::floor(n)) throw ConfigError(c.where("fock.N") + ": N must be integers");
      t.N_list.push_back(static_cast<int>(n));
    }
  }
  t.validate();

  auto& cn = in.cancellation;
  cn.potential = c.str("cancellation.potential", cn.potential);
  cn.scenario.modes = c.integer("cancellation.modes", cn.scenario.modes);
  cn.scenario.N = c.num("cancellation.N", cn.scenario.N);
  cn.scenario.spacing = c.num("cancellation.spacing", cn.scenario.spacing);
  cn.scenario.n_max = c.integer("cancellation.n_max", cn.scenario.n_max);
  return in;
}

// ------------------------------------------------------------------ pipeline

struct StageResult {
  std::string hash;
  bool cached = false;
  fs::path dir;
};

struct ReportBundle {
  std::map<std::string, StageResult> stages;
  std::vector<std::string> flags;
  Json summary;
};

/// Runs `body`, prefixing any library error with the stage name and config path
/// while keeping its type (and therefore its exit code).
template <class F>
auto with_context(const std::string& stage, const ConfigFile& c, F&& body) -> decltype(body()) {
  const std::string prefix = "stage " + stage + " (" + c.path().string() + "): ";
  try {
    return body();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const DomainError& e) {
    throw DomainError(prefix + e.what());
  } catch (const NumericalBudgetError& e) {
    throw NumericalBudgetError(prefix + e.what());
  } catch (const InvariantViolation& e) {
    throw InvariantViolation(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

inline std::string stamp_hash(const std::vector<std::string>& parts) {
  std::uint64_t h = io::fnv1a(kFormatVersion);
  for (const auto& p : parts) h = io::fnv1a(p + '\x1f', h);
  return io::hex64(h);
}

inline bool stamp_matches(const fs::path& dir, const std::string& hash) {
  const fs::path stamp = dir / "stage.json";
  if (!fs::exists(stamp)) return false;
  try {
    const Json j = io::read_json(stamp);
    if (j.at("hash").get<std::string>() != hash) return false;
    for (const auto& f : j.at("files")) {
      if (!fs::exists(dir / f.get<std::string>())) return false;
    }
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

inline void write_stamp(const fs::path& dir, const std::string& hash, std::vector<std::string> files) {
  std::sort(files.begin(), files.end());
  io::write_json(dir / "stage.json", Json{{"hash", hash}, {"files", files}});
}

inline std::string file_digest(const fs::path& p) { return io::hex64(io::fnv1a(io::read_text(p))); }

/// Scattering, dynamics, kernels and Fock stages in dependency order.
inline ReportBundle run_pipeline(const ConfigFile& c, std::optional<fs::path> out_override = std::nullopt) {
  ReportBundle bundle;
  const fs::path out = out_override ? *out_override : c.resolve(c.str("output.dir", "gpk_out"));
  fs::create_directories(out);

  // scattering
  const auto sc_in = with_context("scattering", c, [&] { return scattering_inputs(c); });
  std::vector<std::string> sc_parts{c.section_text("potential")};
  if (sc_in.potential.rfind("file:", 0) == 0) sc_parts.push_back(file_digest(sc_in.potential.substr(5)));
  const std::string sc_hash = stamp_hash(sc_parts);
  const fs::path sc_dir = out / "scattering";
  const auto sc = with_context("scattering", c, [&] { return solve_scattering(sc_in); });
  bundle.stages["scattering"] = {sc_hash, stamp_matches(sc_dir, sc_hash), sc_dir};
  if (!bundle.stages["scattering"].cached) {
    io::write_text(sc_dir / "profile.csv", profile_csv(sc.solution));
    io::write_json(sc_dir / "summary.json", sc.summary);
    write_stamp(sc_dir, sc_hash, {"profile.csv", "summary.json"});
  }
  if (sc.potential.is_zero()) bundle.flags.push_back("degenerate scenario");

  // dynamics
  const auto ev_in = with_context("evolve", c, [&] { return evolve_inputs(c); });
  std::vector<std::string> ev_parts{sc_hash, c.section_text("grid"), c.section_text("datum"), c.section_text("sweep")};
  if (!ev_in.datum.file.empty()) ev_parts.push_back(file_digest(ev_in.datum.file));
  const std::string ev_hash = stamp_hash(ev_parts);
  const fs::path ev_dir = out / "evolve";
  bundle.stages["evolve"] = {ev_hash, stamp_matches(ev_dir, ev_hash), ev_dir};
  Json dyn;
  if (!bundle.stages["evolve"].cached) {
    const auto ev = with_context("evolve", c, [&] { return run_evolve(ev_in, sc, ev_dir); });
    const auto& rep = ev.trajectory.report;
    dyn = {{"mass_drift", std::abs(rep.mass.back() - rep.mass.front())},
           {"energy_drift", std::abs(rep.energy.back() - rep.energy.front())},
           {"warnings", rep.warnings}};
    if (ev.comparison) {
      dyn["rate"] = rate_json(ev.comparison->rate);
      dyn["flagged_non_monotone"] = ev.comparison->flagged;
      dyn["max_l2_difference"] = *std::max_element(ev.comparison->l2_difference.begin(), ev.comparison->l2_difference.end());
    }
    io::write_json(ev_dir / "summary.json", dyn);
    auto files = ev.files;
    files.push_back("summary.json");
    write_stamp(ev_dir, ev_hash, files);
  } else {
    dyn = io::read_json(ev_dir / "summary.json");
  }

  // kernels
  const std::string kn_hash = stamp_hash({sc_hash, c.section_text("grid"), c.section_text("datum"), c.section_text("kernels")});
  const fs::path kn_dir = out / "kernels";
  bundle.stages["kernels"] = {kn_hash, stamp_matches(kn_dir, kn_hash), kn_dir};
  Json kern;
  if (!bundle.stages["kernels"].cached) {
    with_context("kernels", c, [&] {
      const auto phi = build_datum(ev_in.datum, ev_in.grid);
      const auto res = run_kernels(phi, sc, c.list("kernels.N", {4, 8, 16, 32}), kernel_options(c), kn_dir);
      kern = {{"all_zero", res.all_zero},
              {"max_cancellation_residual", *std::max_element(res.cancellation.begin(), res.cancellation.end())}};
      io::write_json(kn_dir / "summary.json", kern);
      write_stamp(kn_dir, kn_hash, {"kernel_bounds.csv", "summary.json"});
    });
  } else {
    kern = io::read_json(kn_dir / "summary.json");
  }

  // fock (independent of the continuum stages)
  Json fk;
  if (c.has_section("fock")) {
    const std::string fk_hash = stamp_hash({c.section_text("fock"), c.section_text("cancellation")});
    const fs::path fk_dir = out / "fock";
    bundle.stages["fock"] = {fk_hash, stamp_matches(fk_dir, fk_hash), fk_dir};
    if (!bundle.stages["fock"].cached) {
      fk = with_context("fock", c, [&] {
        fs::create_directories(fk_dir);
        return run_fock(fock_inputs(c), fk_dir);
      });
      write_stamp(fk_dir, fk_hash, {"fock_report.json", "toy_convergence.csv"});
    } else {
      fk = io::read_json(fk_dir / "fock_report.json");
    }
  }

  Json stages = Json::object();
  for (const auto& [name, st] : bundle.stages) stages[name] = {{"hash", st.hash}};
  bundle.summary = {{"stages", stages},
                    {"flags", bundle.flags},
                    {"seed", c.integer("run.seed", 0)},
                    {"scattering", sc.summary},
                    {"dynamics", dyn},
                    {"kernels", kern}};
  if (!fk.is_null()) bundle.summary["fock"] = fk;
  io::write_json(out / "report.json", bundle.summary);
  return bundle;
}

}  // namespace gpk::pipeline
