#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gpk/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gpk;
using pipeline::Json;

namespace {

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : config_detail::split(text, ','))
    if (!item.empty()) out.push_back(config_detail::to_double("--N", item));
  if (out.empty()) throw ConfigError("--N: empty list");
  return out;
}

int cmd_run(const std::string& config, const std::string& out) {
  const auto c = ConfigFile::load(config);
  const auto bundle = pipeline::run_pipeline(c, out.empty() ? std::nullopt : std::optional<fs::path>(out));
  for (const auto& [name, st] : bundle.stages)
    std::cout << name << ": " << (st.cached ? "cached" : "ran") << " (" << st.hash << ")\n";
  for (const auto& f : bundle.flags) std::cout << "flag: " << f << "\n";
  return 0;
}

int cmd_scattering(const std::string& potential, double r_max, int points, const std::string& out) {
  pipeline::ScatteringInputs in;
  in.potential = fs::is_regular_file(potential) ? "file:" + fs::absolute(potential).string() : potential;
  in.r_max = r_max;
  in.points = points;
  const auto res = pipeline::solve_scattering(in);
  io::write_text(out, pipeline::profile_csv(res.solution));
  fs::path summary = out;
  summary.replace_extension(".json");
  io::write_json(summary, res.summary);
  std::cout << res.summary.dump(2) << "\n";
  return 0;
}

int cmd_evolve(const std::string& config, const std::string& out) {
  const auto c = ConfigFile::load(config);
  const auto sc = pipeline::with_context("scattering", c, [&] {
    return pipeline::solve_scattering(pipeline::scattering_inputs(c));
  });
  const auto res = pipeline::with_context("evolve", c, [&] {
    return pipeline::run_evolve(pipeline::evolve_inputs(c), sc, out);
  });
  const auto& rep = res.trajectory.report;
  std::cout << "mass drift " << std::abs(rep.mass.back() - rep.mass.front()) << ", energy drift "
            << std::abs(rep.energy.back() - rep.energy.front()) << "\n";
  if (res.comparison) {
    const auto& r = res.comparison->rate;
    if (r.defined) std::cout << "rate slope " << r.slope << " (r^2 " << r.r_squared << ")\n";
    else std::cout << "rate: " << r.note << "\n";
  }
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int cmd_kernels(const std::string& phi_file, const std::string& scattering_json, const std::string& n_text,
                const std::string& out, int kernel_points) {
  const auto dump = io::read_field(phi_file);
  gp::WaveFunction phi{dump.grid, dump.values};
  const auto sc = pipeline::scattering_from_summary(io::read_json(scattering_json));
  kernels::KernelBoundOptions opt;
  opt.t = dump.time;
  opt.kernel_points = kernel_points;
  fs::create_directories(out);
  const auto res = pipeline::run_kernels(phi, sc, parse_list(n_text), opt, out);
  for (const auto& r : res.reports)
    for (const auto& w : r.warnings) std::cerr << "warning (N = " << r.N << "): " << w << "\n";
  std::cout << io::read_text(fs::path(out) / "kernel_bounds.csv");
  return 0;
}

int cmd_fock(const std::string& scenario, const std::string& out) {
  const auto c = ConfigFile::load(scenario);
  fs::create_directories(out);
  const auto report = pipeline::with_context("fock", c, [&] {
    return pipeline::run_fock(pipeline::fock_inputs(c), out);
  });
  std::cout << report.dump(2) << "\n";
  return 0;
}

std::string show(const Json& j) {
  if (j.is_number_float()) {
    std::ostringstream s;
    s.precision(6);
    s << j.get<double>();
    return s.str();
  }
  return j.dump();
}

int cmd_report(const std::string& dir) {
  const fs::path p = fs::path(dir) / "report.json";
  if (!fs::exists(p)) throw ConfigError("no report.json in " + dir + " (run `gpk run` first)");
  const Json j = io::read_json(p);
  std::cout << "report " << dir << "\n";
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) {
      std::cout << section << ": " << body.dump() << "\n";
      continue;
    }
    std::cout << "[" << section << "]\n";
    for (const auto& [k, v] : body.items()) std::cout << "  " << k << " = " << show(v) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gpk: scattering, Gross-Pitaevskii dynamics, correlation kernels and Fock-space checks"};
  app.require_subcommand(1);

  std::string config, out, potential, phi, scat, n_list, scenario, dir;
  double r_max = 0.0;
  int points = 10001, kernel_points = 32;

  auto* run = app.add_subcommand("run", "run the whole pipeline from a config file");
  run->add_option("config", config, "config file")->required();
  run->add_option("--out", out, "output directory (overrides output.dir)");

  auto* sc = app.add_subcommand("scattering", "solve the zero-energy scattering problem");
  sc->add_option("--potential", potential, "potential file or spec (square-well:h,R, gaussian:s,w, zero)")->required();
  sc->add_option("--rmax", r_max, "outer radius (default max(10, 6 x support))");
  sc->add_option("--points", points, "grid points (>= 1000)");
  sc->add_option("--out", out, "profile CSV; the summary goes next to it as .json")->required();

  auto* ev = app.add_subcommand("evolve", "evolve the GP equation and the N sweep");
  ev->add_option("--config", config, "config file")->required();
  ev->add_option("--out", out, "output directory")->required();

  auto* kn = app.add_subcommand("kernels", "norms of the correlation kernel");
  kn->add_option("--phi", phi, "field dump")->required();
  kn->add_option("--scattering", scat, "scattering summary JSON")->required();
  kn->add_option("--N", n_list, "comma-separated N values")->required();
  kn->add_option("--out", out, "output directory")->required();
  kn->add_option("--kernel-points", kernel_points, "points per axis after downsampling");

  auto* fk = app.add_subcommand("fock", "Fock-space identities, toy model and cancellation");
  fk->add_option("--scenario", scenario, "scenario file")->required();
  fk->add_option("--out", out, "output directory")->required();

  auto* rp = app.add_subcommand("report", "print the report of a pipeline run");
  rp->add_option("dir", dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(config, out);
    if (*sc) return cmd_scattering(potential, r_max, points, out);
    if (*ev) return cmd_evolve(config, out);
    if (*kn) return cmd_kernels(phi, scat, n_list, out, kernel_points);
    if (*fk) return cmd_fock(scenario, out);
    if (*rp) return cmd_report(dir);
  } catch (const Error& e) {
    std::cerr << "gpk: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "gpk: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
