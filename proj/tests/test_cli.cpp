#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sigdet/cli.hpp"
#include "sigdet/error.hpp"

using namespace sigdet;
using namespace sigdet::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sigdetect_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

json base_config() {
  return json::parse(R"({
    "region": {"lo": 1, "hi": 2},
    "signal": {"family": "truncated_gaussian", "params": {"mu": 1.28, "sigma": 0.02}},
    "seed": 11
  })");
}

std::string sample_file(const DensityModel& d, std::size_t n, std::uint64_t seed) {
  std::string out = "# synthetic\n";
  char buf[40];
  for (double x : d.sample(n, seed)) {
    std::snprintf(buf, sizeof buf, "%.17g\n", x);
    out += buf;
  }
  return out;
}

}  // namespace

TEST_CASE("reading event files") {
  const auto dir = scratch("read");
  write(dir / "a.txt", "1.0\n2.0\n# c\n3.0\n");
  CHECK(read_events(dir / "a.txt", Transform::identity) == std::vector<double>{1.0, 2.0, 3.0});

  write(dir / "b.txt", "1.0\nabc\n");
  try {
    read_events(dir / "b.txt", Transform::identity);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  write(dir / "c.txt", "35\n1\n");
  const auto logs = read_events(dir / "c.txt", Transform::log);
  CHECK(logs == std::vector<double>{std::log(35.0), 0.0});

  write(dir / "d.txt", "\n# only comments\n  \r\n");
  CHECK(code_of([&] { read_events(dir / "d.txt", Transform::identity); }) == ErrorCode::EmptyFile);

  write(dir / "e.txt", "1.5\r\n  1.7 \n2.5\n0.5\n");
  try {
    read_events(dir / "e.txt", Transform::identity, SearchRegion(1.0, 2.0));
    FAIL("expected ValueOutsideRegion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ValueOutsideRegion);
    CHECK(std::string(e.what()).find("2 of 4") != std::string::npos);
  }
  write(dir / "f.txt", "-1\n");
  CHECK(code_of([&] { read_events(dir / "f.txt", Transform::log); }) == ErrorCode::ValueOutsideRegion);
  CHECK(code_of([&] { read_events(dir / "missing.txt", Transform::identity); }) == ErrorCode::IoError);
}

TEST_CASE("config validation") {
  auto cfg = base_config();
  cfg["mode"] = "lrt";
  CHECK(parse_config(cfg).mode == Mode::lrt);

  auto bad = cfg;
  bad["mode"] = "nonsense";
  CHECK(code_of([&] { parse_config(bad); }) == ErrorCode::ConfigError);
  bad = cfg;
  bad["typo"] = 1;
  CHECK(code_of([&] { parse_config(bad); }) == ErrorCode::ConfigError);
  bad = cfg;
  bad.erase("region");
  CHECK(code_of([&] { parse_config(bad); }) == ErrorCode::ConfigError);
  bad = cfg;
  bad["level"] = 1.5;
  CHECK(code_of([&] { parse_config(bad); }) == ErrorCode::ConfigError);

  auto raw = cfg;
  raw["transform"] = "log";
  raw["region"] = {{"lo", 1}, {"hi", 35}, {"scale", "raw"}};
  const auto parsed = parse_config(raw);
  CHECK(parsed.region.lo == 0.0);
  CHECK(parsed.region.hi == std::log(35.0));

  const SearchRegion r(1.0, 2.0);
  CHECK(code_of([&] { build_density(json::parse(R"({"family": "nope"})"), r); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { build_density(json::parse(R"({"family": "pareto1"})"), r); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] {
          build_density(json::parse(R"({"family": "pareto1", "params": {"beta": 2, "x": 1}})"), r);
        }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { build_family(json::parse(R"({"family": "uniform", "free": {}})"), r); }) ==
        ErrorCode::ConfigError);
  const auto fam = build_family(
      json::parse(R"({"family": "pareto1", "free": {"beta": {"lo": 0.1, "hi": 10}}})"), r);
  CHECK(fam.dim() == 1);
  CHECK(fam.initial()(0) == 0.5 * (0.1 + 10));
  const auto mix = build_density(json::parse(R"({"family": "mixture", "components": [
      {"weight": 0.25, "density": {"family": "uniform"}},
      {"weight": 0.75, "density": {"family": "pareto1", "params": {"beta": 4}}}]})"), r);
  CHECK(std::abs(mix.pdf(1.5) - (0.25 + 0.75 * pareto1(r, 4.0).pdf(1.5))) < 1e-12);
}

TEST_CASE("with_background runs end to end and the report round-trips") {
  const auto dir = scratch("z1");
  const SearchRegion r(1.0, 2.0);
  const auto fb = truncated_gamma(r, 3.3, 0.5);
  write(dir / "phys.txt", sample_file(fb, 400, 1));
  write(dir / "bkg.txt", sample_file(fb, 800, 2));
  auto cfg = base_config();
  cfg["mode"] = "with_background";
  cfg["proposal"] = {{"family", "uniform"}};
  write(dir / "cfg.json", cfg.dump());

  Options opts;
  opts.config = dir / "cfg.json";
  opts.physics = dir / "phys.txt";
  opts.background = dir / "bkg.txt";
  opts.out = dir / "out";
  run(opts);
  const auto report = json::parse(slurp(dir / "out" / "report.json"));
  CHECK(report["method"] == "Z1");
  CHECK(report["config"] == cfg);
  CHECK(report["seed"] == 11);

  // Same numbers as the library call.
  const auto xs = read_events(dir / "phys.txt", Transform::identity, r);
  const auto ys = read_events(dir / "bkg.txt", Transform::identity, r);
  const auto est = estimate_two_sample(score_geometry(truncated_gaussian(r, 1.28, 0.02), uniform_density(r)), xs, ys);
  const auto z1 = test_z1(est, 0.05);
  CHECK(report["estimate"].get<double>() == z1.estimate);
  CHECK(report["statistic"].get<double>() == z1.statistic);
  CHECK(report["p_value"].get<double>() == z1.p_value);
  CHECK(report["p_value_display"] == format_p_value(z1.p_value));

  // Missing background is a configuration error.
  opts.background.reset();
  CHECK(code_of([&] { run(opts); }) == ErrorCode::ConfigError);
}

TEST_CASE("p-values print with four significant digits") {
  CHECK(format_p_value(7.506e-7) == "7.506e-07");
  CHECK(format_p_value(0.0954) == "9.540e-02");
}

TEST_CASE("simulate output is byte-identical across runs") {
  const auto dir = scratch("sim");
  auto cfg = base_config();
  cfg["mode"] = "simulate";
  cfg["simulate"] = json::parse(R"({
    "background": {"family": "truncated_gamma", "params": {"rate": 3.3, "shape": 0.5}},
    "replicates": 1, "spool_statistics": true,
    "scenarios": [{"label": "null", "method": "Z1", "eta": 0, "n": 200, "m": 400,
                   "proposal": {"family": "uniform"}}]})");
  write(dir / "cfg.json", cfg.dump());
  for (const char* o : {"a", "b"}) {
    Options opts;
    opts.config = dir / "cfg.json";
    opts.out = dir / o;
    run(opts);
  }
  for (const char* f : {"report.json", "mc_grid.csv", "statistics_null.txt"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  const auto table = slurp(dir / "a" / "mc_grid.csv");
  CHECK(table.find('\r') == std::string::npos);
  CHECK(table.rfind("label,method,", 0) == 0);
}

TEST_CASE("sensitivity writes curves and per-lambda reports") {
  const auto dir = scratch("sens");
  const SearchRegion r(1.0, 2.0);
  write(dir / "phys.txt", sample_file(truncated_gamma(r, 3.3, 0.5), 500, 3));
  auto cfg = base_config();
  cfg["mode"] = "sensitivity";
  cfg["proposal"] = json::parse(R"({"family": "pareto1", "free": {"beta": {"lo": 0.1, "hi": 10}}})");
  cfg["bump"] = {{"mu1", 1.25}, {"mu2", 1.31}, {"sigma0", 0.08}};
  cfg["lambdas"] = {0.01, 0.03, 0.05, 0.07};
  cfg["x_grid"] = {{"points", 11}};
  write(dir / "cfg.json", cfg.dump());
  Options opts;
  opts.config = dir / "cfg.json";
  opts.physics = dir / "phys.txt";
  opts.out = dir / "out";
  run(opts);
  const auto table = slurp(dir / "out" / "sensitivity_reports.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 5);
  const auto curves = slurp(dir / "out" / "sensitivity_curves.csv");
  CHECK(std::count(curves.begin(), curves.end(), '\n') == 12);
  const auto report = json::parse(slurp(dir / "out" / "report.json"));
  CHECK(report["reports"].size() == 4);
}

TEST_CASE("executable exit codes") {
  const char* bin = std::getenv("SIGDETECT_BIN");
  if (!bin) SKIP("SIGDETECT_BIN not set");
  const auto dir = scratch("exit");
  auto status = [&](const std::string& args) {
    const int rc = std::system((std::string(bin) + " " + args + " 2>" + (dir / "err.txt").string()).c_str());
    return WEXITSTATUS(rc);
  };
  CHECK(status("--bogus") == 2);
  write(dir / "bad.json", "{not json");
  CHECK(status("--config " + (dir / "bad.json").string()) == 2);
  CHECK(slurp(dir / "err.txt").find("ConfigError") != std::string::npos);

  auto cfg = base_config();
  cfg["mode"] = "lrt";
  cfg["proposal"] = {{"family", "uniform"}};
  write(dir / "lrt.json", cfg.dump());
  write(dir / "phys.txt", "1.5\n2.5\n");
  CHECK(status("--config " + (dir / "lrt.json").string() + " --physics " + (dir / "phys.txt").string() +
               " --out " + dir.string()) == 3);
  write(dir / "phys.txt", "1.5\n1.28\n1.3\n");
  CHECK(status("--config " + (dir / "lrt.json").string() + " --physics " + (dir / "phys.txt").string() +
               " --out " + dir.string()) == 0);
  const auto report = json::parse(slurp(dir / "report.json"));
  CHECK(report["method"] == "LRT");
  CHECK(report["estimate_clipped"].get<double>() >= 0.0);
}
