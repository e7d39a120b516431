#include "sigdet/cli.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "sigdet/compensator.hpp"
#include "sigdet/error.hpp"
#include "sigdet/lrt.hpp"
#include "sigdet/montecarlo.hpp"
#include "sigdet/nobkg.hpp"

namespace sigdet::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// JSON accessors that turn type and presence problems into ConfigError.

const json& member(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    fail(ErrorCode::ConfigError, where + ": missing required field '" + key + "'");
  }
  return obj.at(key);
}

double number(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = member(obj, key, where);
  if (!v.is_number()) fail(ErrorCode::ConfigError, where + ": field '" + key + "' must be a number");
  return v.get<double>();
}

double number_or(const json& obj, const std::string& key, double fallback, const std::string& where) {
  return obj.is_object() && obj.contains(key) ? number(obj, key, where) : fallback;
}

std::size_t count(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = member(obj, key, where);
  if (!v.is_number_unsigned()) {
    fail(ErrorCode::ConfigError, where + ": field '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string text(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = member(obj, key, where);
  if (!v.is_string()) fail(ErrorCode::ConfigError, where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

std::string text_or(const json& obj, const std::string& key, const std::string& fallback,
                    const std::string& where) {
  return obj.is_object() && obj.contains(key) ? text(obj, key, where) : fallback;
}

std::vector<double> numbers(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = member(obj, key, where);
  if (!v.is_array()) fail(ErrorCode::ConfigError, where + ": field '" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) fail(ErrorCode::ConfigError, where + ": '" + key + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

// Rejects keys a declaration does not understand, so typos do not silently
// fall back to defaults.
void only_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorCode::ConfigError, where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items()) {
    if (!ok.count(k)) fail(ErrorCode::ConfigError, where + ": unknown field '" + k + "'");
  }
}

std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json matrix_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::IoError, "cannot write " + path.string());
  f << content;
  if (!f) fail(ErrorCode::IoError, "failed writing " + path.string());
}

json report_json(const InferenceReport& r) {
  json j;
  j["method"] = std::string(to_string(r.method));
  j["estimate"] = r.estimate;
  j["estimate_clipped"] = r.estimate_clipped;
  j["std_error"] = number_or_null(r.std_error);
  j["statistic"] = r.statistic;
  j["p_value"] = r.p_value;
  j["p_value_display"] = format_p_value(r.p_value);
  j["ci"] = {number_or_null(r.ci_lo), number_or_null(r.ci_hi)};
  j["level"] = r.level;
  j["diagnostics"] = r.diagnostics;
  return j;
}

Mode mode_from_string(const std::string& s) {
  if (s == "with_background") return Mode::with_background;
  if (s == "no_background") return Mode::no_background;
  if (s == "lrt") return Mode::lrt;
  if (s == "simulate") return Mode::simulate;
  if (s == "sensitivity") return Mode::sensitivity;
  fail(ErrorCode::ConfigError, "unknown mode '" + s + "'");
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::with_background: return "with_background";
    case Mode::no_background: return "no_background";
    case Mode::lrt: return "lrt";
    case Mode::simulate: return "simulate";
    case Mode::sensitivity: return "sensitivity";
  }
  return "with_background";
}

double apply_transform(double v, Transform t) {
  return t == Transform::log ? std::log(v) : v;
}

BumpParams parse_bump(const json& obj, const std::string& where) {
  only_keys(obj, {"mu1", "mu2", "sigma0"}, where);
  return {number(obj, "mu1", where), number(obj, "mu2", where), number(obj, "sigma0", where)};
}

}  // namespace

Transform transform_from_string(const std::string& name) {
  if (name == "identity") return Transform::identity;
  if (name == "log") return Transform::log;
  fail(ErrorCode::ConfigError, "unknown transform '" + name + "' (expected identity or log)");
}

std::string format_p_value(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", p);
  return buf;
}

std::vector<double> read_events(const fs::path& path, Transform transform,
                                const std::optional<SearchRegion>& region) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open event file " + path.string());
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    const char* b = line.data() + first;
    const char* e = line.data() + last + 1;
    if (*b == '+') ++b;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || !std::isfinite(v)) {
      fail(ErrorCode::ParseError, path.string() + ": line " + std::to_string(lineno) +
                                      ": not a number: '" + line.substr(first, last - first + 1) + "'");
    }
    if (transform == Transform::log && !(v > 0.0)) {
      fail(ErrorCode::ValueOutsideRegion, path.string() + ": line " + std::to_string(lineno) +
                                              ": log transform needs positive values");
    }
    out.push_back(apply_transform(v, transform));
  }
  if (out.empty()) fail(ErrorCode::EmptyFile, path.string() + " holds no events");
  if (region) {
    const double slack = 1e-12 * std::max(1.0, std::max(std::abs(region->lo), std::abs(region->hi)));
    std::size_t outside = 0;
    for (double& v : out) {
      if (!region->contains(v, slack)) {
        ++outside;
      } else {
        v = std::clamp(v, region->lo, region->hi);
      }
    }
    if (outside > 0) {
      fail(ErrorCode::ValueOutsideRegion,
           path.string() + ": " + std::to_string(outside) + " of " + std::to_string(out.size()) +
               " values lie outside the search region");
    }
  }
  return out;
}

AnalysisConfig parse_config(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::ConfigError, "config must be a JSON object");
  only_keys(doc, {"region", "transform", "mode", "level", "seed", "signal", "proposal", "bump",
                  "lambda", "lambdas", "x_grid", "epsilon", "lrt", "simulate", "description"},
            "config");
  AnalysisConfig cfg;
  cfg.raw = doc;
  cfg.transform = transform_from_string(text_or(doc, "transform", "identity", "config"));
  const auto& r = member(doc, "region", "config");
  only_keys(r, {"lo", "hi", "scale"}, "region");
  double lo = number(r, "lo", "region"), hi = number(r, "hi", "region");
  const auto scale = text_or(r, "scale", "analysis", "region");
  if (scale == "raw") {
    if (cfg.transform == Transform::log && !(lo > 0.0)) {
      fail(ErrorCode::ConfigError, "region: raw bounds must be positive under the log transform");
    }
    lo = apply_transform(lo, cfg.transform);
    hi = apply_transform(hi, cfg.transform);
  } else if (scale != "analysis") {
    fail(ErrorCode::ConfigError, "region: scale must be 'analysis' or 'raw'");
  }
  try {
    cfg.region = SearchRegion(lo, hi);
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, std::string("region: ") + e.what());
  }
  cfg.mode = mode_from_string(text(doc, "mode", "config"));
  cfg.level = number_or(doc, "level", 0.05, "config");
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) fail(ErrorCode::ConfigError, "level must lie in (0, 1)");
  if (doc.contains("seed")) cfg.seed = doc.at("seed").is_number_unsigned()
                                            ? doc.at("seed").get<std::uint64_t>()
                                            : (fail(ErrorCode::ConfigError, "seed must be a non-negative integer"), 0);
  member(doc, "signal", "config");
  return cfg;
}

AnalysisConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config(doc);
}

bool is_parametric(const json& decl) { return decl.is_object() && decl.contains("free"); }

DensityModel build_density(const json& decl, const SearchRegion& region, const DensityModel* signal) {
  const std::string where = "density declaration";
  if (!decl.is_object()) fail(ErrorCode::ConfigError, where + " must be an object");
  if (is_parametric(decl)) {
    fail(ErrorCode::ConfigError, where + ": a fixed density cannot declare free parameters here");
  }
  const auto family = text(decl, "family", where);
  const json params = decl.contains("params") ? decl.at("params") : json::object();
  auto p = [&](const char* k) { return number(params, k, family); };
  auto p_or = [&](const char* k, double d) { return number_or(params, k, d, family); };
  auto keys = [&](std::initializer_list<const char*> k) { only_keys(params, k, family + " params"); };

  if (family == "uniform") {
    keys({});
    return uniform_density(region);
  }
  if (family == "truncated_gamma") {
    keys({"rate", "shape"});
    return truncated_gamma(region, p("rate"), p("shape"));
  }
  if (family == "pareto1") {
    keys({"beta"});
    return pareto1(region, p("beta"));
  }
  if (family == "truncated_gaussian") {
    keys({"mu", "sigma"});
    return truncated_gaussian(region, p("mu"), p("sigma"));
  }
  if (family == "power_law_shifted") {
    keys({"alpha", "shift"});
    return power_law_shifted(region, p("alpha"), p_or("shift", 1.0));
  }
  if (family == "exponential_logscale") {
    keys({"psi"});
    return exponential_logscale(region, p("psi"));
  }
  if (family == "gaussian_signal_logscale") {
    keys({"kappa", "rel_width"});
    return gaussian_signal_logscale(region, p("kappa"), p_or("rel_width", 0.1));
  }
  if (family == "gaussian_tail") {
    keys({"beta", "center"});
    return gaussian_tail(region, p("beta"), p_or("center", -1.0));
  }
  if (family == "mixture") {
    only_keys(decl, {"family", "components"}, "mixture");
    std::vector<MixtureComponent> comps;
    for (const auto& c : member(decl, "components", "mixture")) {
      only_keys(c, {"weight", "density"}, "mixture component");
      comps.push_back({number(c, "weight", "mixture component"),
                       build_density(member(c, "density", "mixture component"), region, signal)});
    }
    return make_mixture(std::move(comps));
  }
  if (family == "spurious_signal") {
    only_keys(decl, {"family", "eps", "q"}, "spurious_signal");
    if (!signal) fail(ErrorCode::ConfigError, "spurious_signal needs the top-level signal");
    return spurious_signal_proposal(*signal, build_density(member(decl, "q", family), region, signal),
                                    number(decl, "eps", family));
  }
  if (family == "bump_mixture") {
    only_keys(decl, {"family", "q", "lambda", "mu1", "mu2", "sigma0"}, "bump_mixture");
    return make_bump_mixture(build_density(member(decl, "q", family), region, signal),
                             number(decl, "lambda", family), number(decl, "mu1", family),
                             number(decl, "mu2", family), number(decl, "sigma0", family), region);
  }
  fail(ErrorCode::ConfigError, "unknown density family '" + family + "'");
}

ParametricProposal build_family(const json& decl, const SearchRegion& region) {
  const std::string where = "parametric declaration";
  only_keys(decl, {"family", "free", "params", "grad_mode"}, where);
  const auto family = text(decl, "family", where);
  const auto& free = member(decl, "free", where);
  const json params = decl.contains("params") ? decl.at("params") : json::object();
  const auto mode_name = text_or(decl, "grad_mode", "analytic", where);
  GradMode mode;
  if (mode_name == "analytic") {
    mode = GradMode::analytic;
  } else if (mode_name == "central_fd") {
    mode = GradMode::central_fd;
  } else {
    fail(ErrorCode::ConfigError, where + ": grad_mode must be analytic or central_fd");
  }
  auto box = [&](const char* k) {
    const auto& b = member(free, k, family + " free");
    only_keys(b, {"lo", "hi", "initial"}, std::string(family) + " free." + k);
    const double lo = number(b, "lo", k), hi = number(b, "hi", k);
    return ParamBox{lo, hi, number_or(b, "initial", 0.5 * (lo + hi), k)};
  };
  auto frees = [&](std::initializer_list<const char*> k) { only_keys(free, k, family + " free"); };
  auto fixed = [&](std::initializer_list<const char*> k) { only_keys(params, k, family + " params"); };

  if (family == "pareto1") {
    frees({"beta"});
    fixed({});
    return pareto_family(region, box("beta"), mode);
  }
  if (family == "exponential_logscale") {
    frees({"psi"});
    fixed({});
    return exponential_family(region, box("psi"), mode);
  }
  if (family == "gaussian_tail") {
    frees({"beta"});
    fixed({"center"});
    return gaussian_tail_family(region, box("beta"), number_or(params, "center", -1.0, family), mode);
  }
  if (family == "power_law_shifted") {
    frees({"alpha"});
    fixed({"shift"});
    return power_law_family(region, box("alpha"), number_or(params, "shift", 1.0, family), mode);
  }
  if (family == "truncated_gamma") {
    frees({"rate", "shape"});
    fixed({});
    return truncated_gamma_family(region, box("rate"), box("shape"), mode);
  }
  if (family == "truncated_gaussian") {
    frees({"mu", "sigma"});
    fixed({});
    return truncated_gaussian_family(region, box("mu"), box("sigma"), mode);
  }
  fail(ErrorCode::ConfigError, "family '" + family + "' has no parametric form");
}

namespace {

struct Context {
  const Options& opts;
  const AnalysisConfig& cfg;
  std::uint64_t seed;
  DensityModel signal;
};

json base_report(const Context& ctx) {
  json j;
  j["mode"] = mode_name(ctx.cfg.mode);
  j["seed"] = ctx.seed;
  j["config"] = ctx.cfg.raw;
  json inputs;
  inputs["physics"] = ctx.opts.physics ? json(ctx.opts.physics->string()) : json(nullptr);
  inputs["background"] = ctx.opts.background ? json(ctx.opts.background->string()) : json(nullptr);
  j["inputs"] = inputs;
  return j;
}

void write_report(const Context& ctx, const json& j) {
  write_text(ctx.opts.out / "report.json", j.dump(2) + "\n");
}

std::vector<double> physics_sample(const Context& ctx) {
  if (!ctx.opts.physics) fail(ErrorCode::ConfigError, "this mode needs --physics");
  return read_events(*ctx.opts.physics, ctx.cfg.transform, ctx.cfg.region);
}

void run_with_background(const Context& ctx) {
  if (!ctx.opts.background) fail(ErrorCode::ConfigError, "mode with_background needs --background");
  const auto& decl = member(ctx.cfg.raw, "proposal", "config");
  const auto xs = physics_sample(ctx);
  const auto ys = read_events(*ctx.opts.background, ctx.cfg.transform, ctx.cfg.region);
  json j = base_report(ctx);
  if (is_parametric(decl)) {
    const auto family = build_family(decl, ctx.cfg.region);
    const auto a = analyze_z2(ctx.signal, family, xs, ys, ctx.cfg.level);
    j.update(report_json(a.report));
    j["beta_hat"] = vector_json(a.mle.beta_hat);
    j["param_names"] = family.param_names();
    j["mle_at_boundary"] = a.mle.at_boundary;
    j["observed_info"] = matrix_json(a.mle.observed_info);
    j["theta_hat"] = a.estimate.theta_hat;
    j["delta_hat"] = a.estimate.delta_hat;
    j["s_norm"] = a.estimate.s_norm;
    j["n"] = a.estimate.n;
    j["m"] = a.estimate.m;
  } else {
    const auto g = build_density(decl, ctx.cfg.region, &ctx.signal);
    const auto geom = score_geometry(ctx.signal, g);
    const auto est = estimate_two_sample(geom, xs, ys);
    j.update(report_json(test_z1(est, ctx.cfg.level)));
    j["theta_hat"] = est.theta_hat;
    j["delta_hat"] = est.delta_hat;
    j["s_norm"] = est.s_norm;
    j["n"] = est.n;
    j["m"] = est.m;
  }
  write_report(ctx, j);
}

ParametricProposal q_family_of(const Context& ctx) {
  const auto& decl = member(ctx.cfg.raw, "proposal", "config");
  if (!is_parametric(decl)) {
    fail(ErrorCode::ConfigError, "this mode needs a parametric baseline proposal (with 'free')");
  }
  return build_family(decl, ctx.cfg.region);
}

json signal_region_json(const Context& ctx) {
  if (!ctx.cfg.raw.contains("epsilon")) return nullptr;
  const auto sr = signal_region(ctx.signal, number(ctx.cfg.raw, "epsilon", "config"));
  return {{"mu_s", sr.mu_s}, {"d_eps", sr.d_eps}, {"epsilon", sr.epsilon},
          {"lo", sr.lo()}, {"hi", sr.hi()}};
}

json theta0_json(const Theta0Estimate& e) {
  return {{"theta0_hat", e.theta0_hat},  {"sigma2_theta0", e.sigma2_theta0},
          {"alpha_hat", vector_json(e.alpha_hat)}, {"lambda", e.lambda_star},
          {"n", e.n},                    {"s_norm", e.s_norm}};
}

void run_no_background(const Context& ctx) {
  const auto q = q_family_of(ctx);
  const auto bump = parse_bump(member(ctx.cfg.raw, "bump", "config"), "bump");
  const double lambda = number(ctx.cfg.raw, "lambda", "config");
  const auto xs = physics_sample(ctx);
  const auto est = estimate_theta0(ctx.signal, q, lambda, bump, xs);
  json j = base_report(ctx);
  j.update(report_json(test_z3(est, ctx.cfg.level)));
  j.update(theta0_json(est));
  j["signal_region"] = signal_region_json(ctx);
  write_report(ctx, j);
}

std::vector<double> x_grid_of(const Context& ctx) {
  const auto& r = ctx.cfg.region;
  std::size_t points = 201;
  double lo = r.lo, hi = r.hi;
  if (ctx.cfg.raw.contains("x_grid")) {
    const auto& g = ctx.cfg.raw.at("x_grid");
    if (g.is_array()) return numbers(ctx.cfg.raw, "x_grid", "config");
    only_keys(g, {"lo", "hi", "points"}, "x_grid");
    lo = number_or(g, "lo", lo, "x_grid");
    hi = number_or(g, "hi", hi, "x_grid");
    if (g.contains("points")) points = count(g, "points", "x_grid");
  }
  if (points < 2) fail(ErrorCode::ConfigError, "x_grid needs at least two points");
  std::vector<double> xs(points);
  for (std::size_t i = 0; i < points; ++i) {
    xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return xs;
}

void run_sensitivity(const Context& ctx) {
  const auto q = q_family_of(ctx);
  const auto bump = parse_bump(member(ctx.cfg.raw, "bump", "config"), "bump");
  const auto lambdas = numbers(ctx.cfg.raw, "lambdas", "config");
  const auto xs = physics_sample(ctx);
  const auto grid = sensitivity_scan(ctx.signal, q, bump, lambdas, xs, x_grid_of(ctx), ctx.cfg.level);

  std::string curves = "x";
  for (double l : grid.lambdas) curves += ",lambda_" + fmt17(l);
  curves += "\n";
  for (std::size_t i = 0; i < grid.x_grid.size(); ++i) {
    curves += fmt17(grid.x_grid[i]);
    for (const auto& c : grid.curves) curves += "," + fmt17(c[i]);
    curves += "\n";
  }
  write_text(ctx.opts.out / "sensitivity_curves.csv", curves);

  std::string table = "lambda,theta0_hat,sigma_theta0,z3,p_value\n";
  json entries = json::array();
  for (std::size_t k = 0; k < grid.lambdas.size(); ++k) {
    const auto& e = grid.estimates[k];
    const auto& r = grid.reports[k];
    table += fmt17(grid.lambdas[k]) + "," + fmt17(e.theta0_hat) + "," +
             fmt17(std::sqrt(e.sigma2_theta0)) + "," + fmt17(r.statistic) + "," +
             fmt17(r.p_value) + "\n";
    json entry = report_json(r);
    entry.update(theta0_json(e));
    entries.push_back(entry);
  }
  write_text(ctx.opts.out / "sensitivity_reports.csv", table);

  json j = base_report(ctx);
  j["method"] = "Z3";
  j["alpha_hat"] = vector_json(grid.alpha_hat);
  j["reports"] = entries;
  j["signal_region"] = signal_region_json(ctx);
  write_report(ctx, j);
}

void run_lrt(const Context& ctx) {
  const auto& raw = ctx.cfg.raw;
  const auto g_tilde = build_density(member(raw, "proposal", "config"), ctx.cfg.region, &ctx.signal);
  const auto xs = physics_sample(ctx);
  const auto fit = fit_lrt(ctx.signal, g_tilde, xs);
  json j = base_report(ctx);
  j["method"] = "LRT";
  j["estimate"] = fit.eta_tilde_hat;
  j["estimate_clipped"] = fit.eta_tilde_hat_c;
  j["std_error"] = nullptr;
  j["statistic"] = fit.lrt_stat;
  const double p = 1.0 - chi2bar01_cdf(fit.lrt_stat);
  j["p_value"] = p;
  j["p_value_display"] = format_p_value(p);
  j["ci"] = {nullptr, nullptr};
  j["level"] = ctx.cfg.level;
  j["critical_value"] = chi2bar01_quantile(1.0 - ctx.cfg.level);
  j["loglik_at_0"] = fit.loglik_at_0;
  j["loglik_at_c"] = fit.loglik_at_c;
  j["diagnostics"] = fit.boundary_flag ? json::array({"boundary_flag"}) : json::array();
  if (raw.contains("lrt")) {
    const auto& block = raw.at("lrt");
    only_keys(block, {"f_b"}, "lrt");
    if (block.contains("f_b")) {
      j["delta_tilde"] = delta_tilde(ctx.signal, g_tilde,
                                     build_density(block.at("f_b"), ctx.cfg.region, &ctx.signal));
    }
  }
  write_report(ctx, j);
}

std::string safe_label(const std::string& label) {
  std::string out;
  for (char c : label) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "scenario" : out;
}

void run_simulate(const Context& ctx) {
  const auto& block = member(ctx.cfg.raw, "simulate", "config");
  only_keys(block, {"background", "replicates", "spool_statistics", "scenarios"}, "simulate");
  const auto f_b = build_density(member(block, "background", "simulate"), ctx.cfg.region, &ctx.signal);
  const std::size_t replicates = count(block, "replicates", "simulate");
  const bool spool = block.value("spool_statistics", false);
  const auto& list = member(block, "scenarios", "simulate");
  if (!list.is_array()) fail(ErrorCode::ConfigError, "simulate.scenarios must be an array");

  std::vector<McScenario> scenarios;
  std::set<std::string> labels;
  for (std::size_t k = 0; k < list.size(); ++k) {
    const auto& s = list[k];
    const std::string where = "scenario " + std::to_string(k);
    only_keys(s, {"label", "method", "eta", "n", "m", "proposal", "lambda", "bump"}, where);
    McScenario sc{.label = text_or(s, "label", "scenario" + std::to_string(k), where),
                  .signal = ctx.signal,
                  .background = f_b,
                  .eta = number_or(s, "eta", 0.0, where),
                  .n = count(s, "n", where),
                  .m = s.contains("m") ? std::optional<std::size_t>(count(s, "m", where)) : std::nullopt,
                  .config = LrtConfig{f_b},
                  .replicates = replicates,
                  .level = ctx.cfg.level,
                  .seed = ctx.seed,
                  .keep_statistics = spool};
    if (!labels.insert(safe_label(sc.label)).second) {
      fail(ErrorCode::ConfigError, where + ": duplicate label '" + sc.label + "'");
    }
    const auto method = method_from_string(text(s, "method", where));
    const auto& prop = member(s, "proposal", where);
    switch (method) {
      case Method::Z1:
        sc.config = Z1Config{build_density(prop, ctx.cfg.region, &ctx.signal)};
        break;
      case Method::Z2:
        sc.config = Z2Config{build_family(prop, ctx.cfg.region)};
        break;
      case Method::Z3:
        sc.config = Z3Config{build_family(prop, ctx.cfg.region),
                             parse_bump(member(s, "bump", where), where + " bump"),
                             number(s, "lambda", where)};
        break;
      case Method::LRT:
        sc.config = LrtConfig{build_density(prop, ctx.cfg.region, &ctx.signal)};
        break;
    }
    try {
      sc.validate();
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, where + ": " + e.what());
    }
    scenarios.push_back(std::move(sc));
  }

  const auto summaries = run_grid(scenarios, ctx.opts.workers);

  std::string table =
      "label,method,eta,n,m,lambda,replicates,successes,failures,rejection_rate,mc_se,"
      "mean_estimate,var_estimate,mean_plugin_variance,q50,q90,q95,q99\n";
  json rows = json::array();
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const auto& sc = scenarios[k];
    const auto& s = summaries[k];
    const double lambda = std::holds_alternative<Z3Config>(sc.config)
                              ? std::get<Z3Config>(sc.config).lambda
                              : std::nan("");
    table += sc.label + "," + std::string(to_string(sc.method())) + "," + fmt17(sc.eta) + "," +
             std::to_string(sc.n) + "," + (sc.m ? std::to_string(*sc.m) : std::string()) + "," +
             (std::isnan(lambda) ? std::string() : fmt17(lambda)) + "," +
             std::to_string(s.replicates) + "," + std::to_string(s.successes) + "," +
             std::to_string(s.failures) + "," + fmt17(s.rejection_rate) + "," + fmt17(s.mc_se) +
             "," + fmt17(s.mean_estimate) + "," + fmt17(s.var_estimate) + "," +
             fmt17(s.mean_plugin_variance);
    for (const auto& [prob, v] : s.statistic_quantiles) table += "," + fmt17(v);
    table += "\n";

    json row = {{"label", sc.label},
                {"method", std::string(to_string(sc.method()))},
                {"replicates", s.replicates},
                {"successes", s.successes},
                {"failures", s.failures},
                {"failure_codes", s.failure_codes},
                {"rejection_rate", s.rejection_rate},
                {"mc_se", s.mc_se},
                {"mean_estimate", s.mean_estimate},
                {"var_estimate", s.var_estimate},
                {"mean_plugin_variance", s.mean_plugin_variance}};
    json q = json::object();
    for (const auto& [prob, v] : s.statistic_quantiles) q[fmt17(prob)] = number_or_null(v);
    row["statistic_quantiles"] = q;
    rows.push_back(row);

    if (spool) {
      std::string flat;
      for (double v : s.statistics) flat += fmt17(v) + "\n";
      write_text(ctx.opts.out / ("statistics_" + safe_label(sc.label) + ".txt"), flat);
    }
  }
  write_text(ctx.opts.out / "mc_grid.csv", table);
  json j = base_report(ctx);
  j["method"] = "simulate";
  j["scenarios"] = rows;
  write_report(ctx, j);
}

}  // namespace

void run(const Options& opts) {
  const auto cfg = load_config(opts.config);
  if (opts.background && cfg.mode != Mode::with_background) {
    fail(ErrorCode::ConfigError, "--background is only used by mode with_background");
  }
  std::error_code ec;
  fs::create_directories(opts.out, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create output directory " + opts.out.string());
  const Context ctx{opts, cfg, opts.seed.value_or(cfg.seed),
                    build_density(member(cfg.raw, "signal", "config"), cfg.region)};
  switch (cfg.mode) {
    case Mode::with_background: run_with_background(ctx); break;
    case Mode::no_background: run_no_background(ctx); break;
    case Mode::sensitivity: run_sensitivity(ctx); break;
    case Mode::lrt: run_lrt(ctx); break;
    case Mode::simulate: run_simulate(ctx); break;
  }
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
      return 2;
    case ErrorCode::ParseError:
    case ErrorCode::EmptyFile:
    case ErrorCode::ValueOutsideRegion:
    case ErrorCode::IoError:
    case ErrorCode::ObservationOutsideRegion:
      return 3;
    default:
      return 4;
  }
}

int main(int argc, char** argv) {
  CLI::App app{"Signal-fraction inference for bump hunting"};
  Options opts;
  std::string physics, background;
  std::uint64_t seed = 0;
  std::string out = ".";
  app.add_option("--config", opts.config, "analysis config (JSON)")->required();
  auto* phys_opt = app.add_option("--physics", physics, "physics event file");
  auto* bkg_opt = app.add_option("--background", background, "background-only event file");
  auto* seed_opt = app.add_option("--seed", seed, "seed overriding the config");
  app.add_option("--workers", opts.workers, "Monte Carlo worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (*phys_opt) opts.physics = physics;
  if (*bkg_opt) opts.background = background;
  if (*seed_opt) opts.seed = seed;
  opts.out = out;
  try {
    run(opts);
  } catch (const Error& e) {
    std::cerr << "error " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error Internal: " << e.what() << "\n";
    return 5;
  }
  return 0;
}

}  // namespace sigdet::cli
