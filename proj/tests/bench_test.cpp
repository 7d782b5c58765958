#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "gpk/pipeline.hpp"

using namespace gpk;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = GPK_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gpk_bench_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kSmall = R"(
[potential]
spec = square-well:8,1
r_max = 10
points = 2001

[grid]
dim = 1
points = 64
box_length = 20
dt = 2e-3
t_final = 0.2

[datum]
kind = gaussian
sigma = 1.0
momentum = 0.5

[sweep]
N = 8, 16, 32, 64
t_star = 0.2

[kernels]
N = 4, 8, 16
kernel_points = 64

[output]
dir = out

[run]
seed = 3
)";

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return text.replace(pos, from.size(), to);
}

template <class E, class F>
std::string message_of(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  ADD_FAILURE() << "no exception";
  return "";
}

}  // namespace

TEST(FitRate, InverseNGivesSlopeMinusOne) {
  std::vector<double> x{4, 8, 16, 32}, y;
  for (double n : x) y.push_back(1.0 / n);
  const auto r = fit_rate(x, y);
  EXPECT_NEAR(r.slope, -1.0, 1e-12);
  EXPECT_NEAR(r.r_squared, 1.0, 1e-12);
  EXPECT_NEAR(r.intercept, 0.0, 1e-12);
  EXPECT_TRUE(r.monotone);
}

TEST(FitRate, InverseSqrtNGivesSlopeMinusHalf) {
  std::vector<double> x{4, 8, 16, 32}, y;
  for (double n : x) y.push_back(1.0 / std::sqrt(n));
  const auto r = fit_rate(x, y);
  EXPECT_NEAR(r.slope, -0.5, 1e-12);
  EXPECT_NEAR(r.r_squared, 1.0, 1e-12);
}

TEST(FitRate, MatchesHandComputedRegression) {
  const std::vector<double> x{1, 2, 4}, y{1, 4, 8};
  const double lx[] = {0, std::log(2.0), std::log(4.0)}, ly[] = {0, std::log(4.0), std::log(8.0)};
  double mx = (lx[0] + lx[1] + lx[2]) / 3, my = (ly[0] + ly[1] + ly[2]) / 3, sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 3; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  const auto r = fit_rate(x, y);
  EXPECT_NEAR(r.slope, sxy / sxx, 1e-12);
  EXPECT_NEAR(r.intercept, my - sxy / sxx * mx, 1e-12);
  EXPECT_NEAR(r.r_squared, sxy * sxy / (sxx * syy), 1e-12);
  EXPECT_GE(r.r_squared, 0.0);
  EXPECT_LE(r.r_squared, 1.0);
}

TEST(FitRate, FlagsNonMonotoneData) {
  const auto r = fit_rate({4, 8, 16}, {1.0, 0.5, 0.6});
  EXPECT_FALSE(r.monotone);
  EXPECT_FALSE(r.note.empty());
}

TEST(FitRate, RejectsFewerThanThreePoints) {
  EXPECT_THROW(fit_rate({4, 8}, {0.25, 0.125}), ConfigError);
}

TEST(FitRate, RejectsNonPositiveValues) {
  EXPECT_THROW(fit_rate({4, 8, 16}, {0.25, 0.0, 0.1}), DomainError);
  EXPECT_THROW(fit_rate({4, 8, 16}, {0.25, -1.0, 0.1}), DomainError);
}

TEST(FitRate, DegenerateZerosGiveUndefinedSlope) {
  const auto r = fit_rate_or_degenerate({8, 16, 32}, {0, 0, 0});
  EXPECT_FALSE(r.defined);
  EXPECT_TRUE(std::isnan(r.slope));
}

TEST(Csv, QuotesSpecialFields) {
  EXPECT_EQ(io::csv_escape("plain"), "plain");
  EXPECT_EQ(io::csv_escape("a,b"), "\"a,b\"");
  EXPECT_EQ(io::csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(io::csv_escape("two\nlines"), "\"two\nlines\"");
}

TEST(Csv, RoundTripsThroughParser) {
  const std::vector<std::string> header{"name", "note"};
  const std::vector<std::string> row{"x,y", "he said \"ok\"\r\nthen left"};
  io::CsvWriter w(header);
  w.row(row);
  const auto rows = io::parse_csv(w.str());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], header);
  EXPECT_EQ(rows[1], row);
}

TEST(Csv, RowsEndWithCrlf) {
  io::CsvWriter w({"a"});
  w.numbers({0.1});
  EXPECT_EQ(w.str(), "a\r\n0.1\r\n");
}

TEST(Csv, RejectsRaggedRows) {
  io::CsvWriter w({"a", "b"});
  EXPECT_THROW(w.row({"1"}), InvariantViolation);
}

TEST(Csv, NumbersRoundTripExactly) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    EXPECT_EQ(std::strtod(io::format_number(v).c_str(), nullptr), v);
  }
  EXPECT_EQ(io::format_number(0.1), "0.1");
}

TEST(Json, KeysAreSorted) {
  io::Json j;
  j["zeta"] = 1;
  j["alpha"] = 2;
  j["mid"] = {{"b", 1}, {"a", 2}};
  const std::string s = j.dump();
  EXPECT_EQ(s, R"({"alpha":2,"mid":{"a":2,"b":1},"zeta":1})");
}

TEST(FieldDump, RoundTripsBitExactly) {
  GridSpec g;
  g.dim = 2;
  g.points = 16;
  g.box_length = 3.5;
  Field f(g.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = {std::sin(0.3 * i), std::cos(1.7 * i) / 3.0};
  const fs::path p = scratch("field") / "f.gpkf";
  io::write_field(p, g, 0.75, f);
  const auto d = io::read_field(p);
  EXPECT_EQ(d.grid.dim, 2);
  EXPECT_EQ(d.grid.points, 16);
  EXPECT_EQ(d.grid.box_length, 3.5);
  EXPECT_EQ(d.time, 0.75);
  ASSERT_EQ(d.values.size(), f.size());
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(d.values[i], f[i]);
}

TEST(FieldDump, RejectsCorruptFiles) {
  const fs::path dir = scratch("corrupt");
  io::write_text(dir / "bad.gpkf", "NOPE");
  EXPECT_THROW(io::read_field(dir / "bad.gpkf"), ConfigError);
  GridSpec g;
  g.dim = 1;
  g.points = 16;
  g.box_length = 1.0;
  io::write_field(dir / "ok.gpkf", g, 0.0, Field(16));
  EXPECT_NO_THROW(io::read_field(dir / "ok.gpkf"));
  auto text = io::read_text(dir / "ok.gpkf");
  io::write_text(dir / "short.gpkf", text.substr(0, text.size() - 8));
  EXPECT_THROW(io::read_field(dir / "short.gpkf"), ConfigError);
}

TEST(Config, TypedAccessors) {
  const auto c = ConfigFile::from_string(
      "[a]\nx = 2.5\nn = 3\nflag = yes\nlist = 1, 2, 4\nz = 1:-2\nm = 1, 0; 0, 2:1\n");
  EXPECT_EQ(c.num("a.x", 0), 2.5);
  EXPECT_EQ(c.integer("a.n", 0), 3);
  EXPECT_TRUE(c.flag("a.flag", false));
  EXPECT_EQ(c.list("a.list", {}), (std::vector<double>{1, 2, 4}));
  EXPECT_EQ(c.complex_list("a.z")[0], fock::cplx(1, -2));
  const auto m = c.matrix("a.m");
  EXPECT_EQ(m(1, 1), fock::cplx(2, 1));
  EXPECT_EQ(c.num("a.missing", 7.0), 7.0);
}

TEST(Config, ErrorsNameTheField) {
  const auto c = ConfigFile::from_string("[a]\nx = abc\nn = 1.5\nm = 1, 2; 3\n");
  EXPECT_NE(message_of<ConfigError>([&] { c.num("a.x", 0); }).find("a.x"), std::string::npos);
  EXPECT_NE(message_of<ConfigError>([&] { c.integer("a.n", 0); }).find("a.n"), std::string::npos);
  EXPECT_NE(message_of<ConfigError>([&] { c.matrix("a.m"); }).find("a.m"), std::string::npos);
  EXPECT_NE(message_of<ConfigError>([&] { c.require("b.y"); }).find("b.y"), std::string::npos);
}

TEST(Config, MalformedFileReportsLine) {
  EXPECT_NE(message_of<ConfigError>([] { ConfigFile::from_string("[a]\nx = 1\nnot a pair\n"); }).find("3"),
            std::string::npos);
}

TEST(Config, MissingConfigFile) {
  EXPECT_THROW(ConfigFile::load("/nonexistent/gpk.ini"), ConfigError);
}

TEST(Pipeline, MissingPotentialFileNamesTheField) {
  const fs::path dir = scratch("missing");
  const auto c = ConfigFile::from_string(replace(kSmall, "square-well:8,1", "file:absent.txt"), dir);
  const auto msg = message_of<ConfigError>([&] { pipeline::run_pipeline(c); });
  EXPECT_NE(msg.find("potential.spec"), std::string::npos) << msg;
  EXPECT_NE(msg.find("scattering"), std::string::npos) << msg;
}

TEST(Pipeline, StageErrorsKeepTheirType) {
  const fs::path dir = scratch("budget");
  const auto c = ConfigFile::from_string(replace(kSmall, "points = 64\n", "points = 63\n"), dir);
  const auto msg = message_of<ConfigError>([&] { pipeline::run_pipeline(c); });
  EXPECT_NE(msg.find("stage evolve"), std::string::npos) << msg;
}

TEST(Pipeline, DeterministicOutputs) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  pipeline::run_pipeline(ConfigFile::from_string(kSmall, a));
  pipeline::run_pipeline(ConfigFile::from_string(kSmall, b));
  for (const auto* f : {"report.json", "evolve/rates.csv", "evolve/norms.csv", "evolve/field_0001.gpkf",
                        "kernels/kernel_bounds.csv", "scattering/profile.csv", "scattering/summary.json"}) {
    EXPECT_EQ(io::read_text(a / "out" / f), io::read_text(b / "out" / f)) << f;
  }
}

TEST(Pipeline, SecondRunIsCached) {
  const fs::path dir = scratch("cache");
  const auto c = ConfigFile::from_string(kSmall, dir);
  const auto first = pipeline::run_pipeline(c);
  for (const auto& [name, st] : first.stages) EXPECT_FALSE(st.cached) << name;
  const auto report = io::read_text(dir / "out" / "report.json");
  const auto second = pipeline::run_pipeline(c);
  for (const auto& [name, st] : second.stages) EXPECT_TRUE(st.cached) << name;
  EXPECT_EQ(io::read_text(dir / "out" / "report.json"), report);
}

TEST(Pipeline, DownstreamChangeKeepsUpstreamCache) {
  const fs::path dir = scratch("downstream");
  pipeline::run_pipeline(ConfigFile::from_string(kSmall, dir));
  const auto b = pipeline::run_pipeline(ConfigFile::from_string(replace(kSmall, "N = 4, 8, 16", "N = 4, 8"), dir));
  EXPECT_TRUE(b.stages.at("scattering").cached);
  EXPECT_TRUE(b.stages.at("evolve").cached);
  EXPECT_FALSE(b.stages.at("kernels").cached);
  const auto rows = io::parse_csv(io::read_text(dir / "out" / "kernels" / "kernel_bounds.csv"));
  EXPECT_EQ(rows.size(), 3u);
}

TEST(Pipeline, UpstreamChangeInvalidatesEverything) {
  const fs::path dir = scratch("upstream");
  pipeline::run_pipeline(ConfigFile::from_string(kSmall, dir));
  const auto before = io::read_text(dir / "out" / "evolve" / "rates.csv");
  const auto b =
      pipeline::run_pipeline(ConfigFile::from_string(replace(kSmall, "square-well:8,1", "square-well:6,1"), dir));
  for (const auto& [name, st] : b.stages) EXPECT_FALSE(st.cached) << name;
  EXPECT_NE(io::read_text(dir / "out" / "evolve" / "rates.csv"), before);
}

TEST(Pipeline, TabulatedFileContentIsHashed) {
  const fs::path dir = scratch("table");
  io::write_text(dir / "v.txt", "0 2\n0.5 2\n1 0\n");
  const std::string text = replace(kSmall, "square-well:8,1", "file:v.txt");
  const auto a = pipeline::run_pipeline(ConfigFile::from_string(text, dir));
  io::write_text(dir / "v.txt", "0 3\n0.5 3\n1 0\n");
  const auto b = pipeline::run_pipeline(ConfigFile::from_string(text, dir));
  EXPECT_NE(a.stages.at("scattering").hash, b.stages.at("scattering").hash);
  EXPECT_FALSE(b.stages.at("scattering").cached);
  EXPECT_FALSE(b.stages.at("evolve").cached);
}

TEST(Pipeline, DeletedArtifactForcesRerun) {
  const fs::path dir = scratch("deleted");
  const auto c = ConfigFile::from_string(kSmall, dir);
  pipeline::run_pipeline(c);
  fs::remove(dir / "out" / "kernels" / "kernel_bounds.csv");
  const auto b = pipeline::run_pipeline(c);
  EXPECT_FALSE(b.stages.at("kernels").cached);
  EXPECT_TRUE(fs::exists(dir / "out" / "kernels" / "kernel_bounds.csv"));
}

TEST(Pipeline, DegenerateScenario) {
  const fs::path dir = scratch("degenerate");
  const auto c = ConfigFile::load(kSource / "configs" / "degenerate.ini");
  const auto b = pipeline::run_pipeline(c, dir);
  ASSERT_EQ(b.flags.size(), 1u);
  EXPECT_EQ(b.flags[0], "degenerate scenario");
  const auto kb = io::parse_csv(io::read_text(dir / "kernels" / "kernel_bounds.csv"));
  ASSERT_GE(kb.size(), 2u);
  for (std::size_t i = 1; i < kb.size(); ++i)
    for (std::size_t j = 1; j < kb[i].size(); ++j) EXPECT_EQ(std::stod(kb[i][j]), 0.0) << i << "," << j;
  const auto rates = io::parse_csv(io::read_text(dir / "evolve" / "rates.csv"));
  for (std::size_t i = 1; i < rates.size(); ++i) EXPECT_EQ(std::stod(rates[i][1]), 0.0);
  EXPECT_FALSE(b.summary["dynamics"]["rate"]["defined"].get<bool>());
}

TEST(Pipeline, ReferenceRatesMatchGolden) {
  const auto c = ConfigFile::load(kSource / "configs" / "reference_1d.ini");
  const auto sc = pipeline::solve_scattering(pipeline::scattering_inputs(c));
  const fs::path dir = scratch("golden");
  pipeline::run_evolve(pipeline::evolve_inputs(c), sc, dir);
  EXPECT_EQ(io::read_text(dir / "rates.csv"), io::read_text(kSource / "tests" / "golden" / "rates_reference_1d.csv"));
}
