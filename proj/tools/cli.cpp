#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "acceptance/criteria.hpp"
#include "mmv/averaging.hpp"
#include "mmv/config.hpp"
#include "mmv/diagnostics.hpp"
#include "mmv/frozen.hpp"
#include "mmv/iteration.hpp"
#include "mmv/manifest.hpp"
#include "mmv/measure_io.hpp"
#include "mmv/parallel.hpp"
#include "mmv/stats.hpp"

namespace mmv::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Common {
  std::string config;
  int threads = 0;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

// Everything a subcommand needs; it appends the files it wrote to outputs.
struct Context {
  RunConfig rc;
  fs::path dir;
  std::vector<std::string> outputs;
  ordered_json summary = ordered_json::object();

  std::string path(const std::string& name) {
    fs::create_directories(dir);
    outputs.push_back(name);
    return (dir / name).string();
  }
  void write_json(const std::string& name, const ordered_json& j) {
    std::ofstream out(path(name));
    if (!out) throw RuntimeFailure("cannot write " + (dir / name).string());
    out << j.dump(2) << '\n';
  }
  ConfigBlock experiment() {
    return ConfigBlock(&rc.experiment, "/experiment", &rc.echo["experiment"]);
  }
};

ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

std::vector<double> record_times(ConfigBlock& e, const SimConfig& sim) {
  const std::vector<double> record = e.numbers("record", {});
  const double every = e.number("record_every", sim.T);
  if (!record.empty()) return record;
  if (!(every > 0.0)) e.fail("record_every", "must be positive");
  const double r = every / sim.h_slow;
  if (std::abs(r - std::round(r)) > 1e-9 * std::max(1.0, r)) {
    e.fail("record_every", "must be a multiple of sim.h_slow");
  }
  const auto stride = static_cast<std::size_t>(std::llround(r));
  std::vector<double> out;
  const std::size_t K = sim.steps();
  for (std::size_t k = 0; k <= K; k += stride) out.push_back(sim.time_of(k));
  if (out.back() != sim.time_of(K)) out.push_back(sim.time_of(K));
  return out;
}

ordered_json moments_json(const EmpiricalMeasure& mu) {
  const auto m = mean_of(mu);
  std::vector<double> var;
  for (int c = 0; c < mu.dim(); ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double d = mu.atom(i)[static_cast<std::size_t>(c)] - m[static_cast<std::size_t>(c)];
      s += mu.weight(i) * d * d;
    }
    var.push_back(s);
  }
  return {{"mean", m}, {"var", var}};
}

void write_trajectory(Context& ctx, const std::string& stem, const Trajectory& traj) {
  write_trajectory_csv(ctx.path(stem + ".csv"), traj);
  if (ctx.rc.output.json()) {
    ordered_json rows = ordered_json::array();
    for (const auto& s : traj) {
      rows.push_back({{"t", s.t}, {"slow", moments_json(s.slow)}, {"fast", moments_json(s.fast)}});
    }
    ctx.write_json(stem + "_moments.json", rows);
  }
}

AveragedModel averaged_model(const RunConfig& rc) {
  AveragedModel a;
  a.model = rc.model;
  a.cfg = rc.averaged;
  a.variant = rc.variant;
  return a;
}

int cmd_simulate(Context& ctx) {
  ConfigBlock e = ctx.experiment();
  const auto record = record_times(e, ctx.rc.sim);
  e.finish();
  const Trajectory traj = simulate(ctx.rc.model, ctx.rc.sim, nullptr, record);
  write_trajectory(ctx, "trajectory", traj);
  ctx.summary["snapshots"] = traj.size();
  ctx.summary["final_slow"] = moments_json(traj.back().slow);
  return ExitCode::ok;
}

int cmd_avg(Context& ctx) {
  const RunConfig& rc = ctx.rc;
  ConfigBlock e = ctx.experiment();
  const bool table = e.flag("table", true);
  const bool trajectory = e.flag("trajectory", true);
  const auto record = record_times(e, rc.sim);
  std::vector<double> pts = e.numbers("points", {-2.0, -1.0, 0.0, 1.0, 2.0});
  const auto d1 = static_cast<std::size_t>(rc.model.d1);
  if (pts.empty() || pts.size() % d1 != 0) e.fail("points", "length must be a positive multiple of d1");
  const bool has_mu = e.has("mu");
  EmpiricalMeasure mu;
  if (has_mu) mu = read_measure(e.child("mu"), rc.model.d1);
  e.finish();
  if (!has_mu) mu = sampler_law(rc.sim.initial_slow, rc.sim.seed);
  if (table) {
    std::vector<std::vector<double>> x;
    for (std::size_t i = 0; i < pts.size(); i += d1) {
      x.emplace_back(pts.begin() + static_cast<std::ptrdiff_t>(i),
                     pts.begin() + static_cast<std::ptrdiff_t>(i + d1));
    }
    const auto evals = averaged_coefficients(rc.model, mu, x, rc.frozen, rc.variant);
    write_averaged_table(ctx.path("averaged_table.csv"), evals, rc.variant, mu);
    ctx.summary["table_points"] = evals.size();
  }
  if (trajectory) {
    const Trajectory traj = simulate_averaged(averaged_model(rc), rc.sim, record);
    write_trajectory(ctx, "averaged_trajectory", traj);
    ctx.summary["final_slow"] = moments_json(traj.back().slow);
  }
  ctx.summary["variant"] = variant_name(rc.variant);
  return ExitCode::ok;
}

int cmd_frozen(Context& ctx) {
  const RunConfig& rc = ctx.rc;
  ConfigBlock e = ctx.experiment();
  const std::string mode = e.choice("mode", "pooled", {"pooled", "recursive", "slot"});
  if (!e.has("mu")) e.fail("mu", "required key is missing");
  const EmpiricalMeasure mu = read_measure(e.child("mu"), rc.model.d1);
  const int steps = e.integer("steps", 0);
  const bool fresh = e.flag("fresh_seeds", false);
  const bool has_nu = e.has("nu");
  EmpiricalMeasure nu;
  if (has_nu) nu = read_measure(e.child("nu"), rc.model.d2);
  e.finish();
  if (mode != "slot" && has_nu) throw ConfigError("/experiment/nu", "only used with mode 'slot'");

  InvariantFamily fam;
  if (mode == "pooled") {
    fam = solve_frozen_pooled(rc.model, mu, rc.frozen);
  } else if (mode == "slot") {
    fam = solve_frozen_slot(rc.model, mu, has_nu ? &nu : nullptr, mu, rc.frozen);
  } else {
    RecursionReport rep = run_recursion(rc.model, mu, rc.frozen, steps, fresh);
    ordered_json it = ordered_json::array();
    for (std::size_t n = 0; n < rep.iterates.size(); ++n) {
      it.push_back({{"n", n + 1},
                    {"pooled_mean", rep.iterates[n].pooled_mean},
                    {"pooled_m2", rep.iterates[n].pooled_m2},
                    {"distance", rep.distances[n]}});
    }
    ctx.write_json("recursion.json", {{"iterates", it},
                                      {"contraction_ratio", json_number(rep.contraction_ratio)},
                                      {"contracting", rep.contracting},
                                      {"converged", rep.converged}});
    fam = std::move(rep.iterates.back());
  }
  const fs::path fam_dir = ctx.dir / "family";
  fs::create_directories(fam_dir);
  write_family(fam, fam_dir.string());
  std::vector<std::string> names;
  for (const auto& f : fs::directory_iterator(fam_dir)) names.push_back(f.path().filename().string());
  std::sort(names.begin(), names.end());
  for (const auto& n : names) ctx.outputs.push_back("family/" + n);
  ctx.summary["pooled_mean"] = fam.pooled_mean;
  ctx.summary["nonstationary"] = fam.diag.nonstationary;
  return ExitCode::ok;
}

ordered_json iteration_json(const IterationRun& run) {
  ordered_json rows = ordered_json::array();
  for (const auto& s : run.states) {
    if (s.n == 0) continue;
    rows.push_back({{"n", s.n},
                    {"sup_w2_slow", s.sup_w2_slow},
                    {"sup_rhoV_fast", s.sup_rho_fast},
                    {"metric", s.metric},
                    {"contraction_ratio", json_number(s.contraction_ratio)}});
  }
  return rows;
}

int cmd_iterate(Context& ctx) {
  const RunConfig& rc = ctx.rc;
  ConfigBlock e = ctx.experiment();
  const std::string kind = e.choice("kind", "both", {"full", "averaged", "both"});
  IterationConfig it;
  it.n_max = e.integer("n_max", it.n_max);
  it.tol = e.number("tol", it.tol);
  it.record = record_times(e, rc.sim);
  it.kappa = e.number("kappa", it.kappa);
  it.p = e.number("p", it.p);
  it.family_atoms = e.count("family_atoms", it.family_atoms);
  const std::vector<double> eps = e.numbers("eps_list", {rc.sim.epsilon});
  e.finish();
  try {
    it.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& err) {
    throw ConfigError("/experiment", err.what());
  }
  for (std::size_t i = 1; i < eps.size(); ++i) {
    if (!(eps[i] < eps[i - 1])) throw ConfigError("/experiment/eps_list", "must be strictly decreasing");
  }

  std::vector<IterationRun> full;
  if (kind != "averaged") {
    for (double ep : eps) {
      SimConfig sim = rc.sim;
      sim.epsilon = ep;
      full.push_back(iterate_full(rc.model, sim, it));
      const std::string stem = eps.size() == 1 ? "iteration_full" : fmt::format("iteration_full_eps{}", ep);
      ctx.write_json(stem + ".json", {{"kind", "full"},
                                      {"eps", ep},
                                      {"converged", full.back().converged},
                                      {"metrics", iteration_json(full.back())}});
    }
  }
  if (kind != "full") {
    const IterationRun av = iterate_averaged(averaged_model(rc), rc.sim, it);
    ctx.write_json("iteration_averaged.json",
                   {{"kind", "averaged"}, {"converged", av.converged}, {"metrics", iteration_json(av)}});
    if (kind == "both") {
      const CrossReport cr = cross_validate(full, av, eps, it.p);
      ordered_json rows = ordered_json::array();
      for (const auto& r : cr.rows) {
        rows.push_back({{"eps", r.eps}, {"n", r.n}, {"w2_slow", r.w2_slow}, {"rho_fast", r.rho_fast}});
      }
      std::vector<bool> uniform(cr.uniform_in_n.begin(), cr.uniform_in_n.end());
      std::vector<bool> decays(cr.decays_in_eps.begin(), cr.decays_in_eps.end());
      ctx.write_json("cross.json", {{"rows", rows}, {"uniform_in_n", uniform}, {"decays_in_eps", decays}});
      ctx.summary["uniform_in_n"] = uniform;
    }
  }
  return ExitCode::ok;
}

RateConfig read_rate(ConfigBlock& e, std::size_t default_seeds) {
  RateConfig rc;
  rc.eps_list = e.numbers("eps_list", {0.1, 0.05, 0.02, 0.01});
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 1; i <= default_seeds; ++i) seeds.push_back(i);
  rc.seeds = e.seeds("seeds", seeds);
  rc.target = e.number("target", rc.target);
  rc.band_lo = e.number("band_lo", rc.band_lo);
  rc.band_hi = e.number("band_hi", rc.band_hi);
  rc.floor_factor = e.number("floor_factor", rc.floor_factor);
  rc.batches = e.count("batches", rc.batches);
  rc.floor_seeds = e.count("floor_seeds", rc.floor_seeds);
  return rc;
}

template <class F>
void validated(const std::string& pointer, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& err) {
    throw ConfigError(pointer, err.what());
  }
}

void write_rate(Context& ctx, const std::string& stem, const RateReport& r) {
  std::string json_path, csv_path;
  if (ctx.rc.output.json()) json_path = ctx.path(stem + ".json");
  if (ctx.rc.output.csv()) csv_path = ctx.path(stem + ".csv");
  write_rate_report(json_path, csv_path, r);
  ctx.summary[stem] = {{"slope", json_number(r.slope)}, {"pass", r.pass}};
}

int cmd_rates(Context& ctx) {
  const RunConfig& rc = ctx.rc;
  ConfigBlock e = ctx.experiment();
  const std::vector<std::string> kinds = {"strong", "weak", "fast", "fluctuation"};
  const std::string def = std::find(kinds.begin(), kinds.end(), rc.experiment_name) != kinds.end()
                              ? rc.experiment_name
                              : "strong";
  const std::string kind = e.choice("kind", def, kinds);
  const AveragedModel avg = averaged_model(rc);

  if (kind == "strong" || kind == "weak") {
    RateConfig rate = read_rate(e, 16);
    const bool crn = kind == "strong" ? e.flag("crn", true) : true;
    std::vector<std::string> phis;
    if (kind == "weak") phis = e.texts("phi", {"mean", "second_moment"});
    e.finish();
    validated("/experiment", [&] { rate.validate(); });
    std::vector<TestFunction> fns;
    for (std::size_t i = 0; i < phis.size(); ++i) {
      validated(fmt::format("/experiment/phi/{}", i), [&] { fns.push_back(TestFunction::parse(phis[i])); });
    }
    const SweepData sweep = run_sweep(rc.model, avg, rc.sim, rate, crn);
    if (kind == "strong") {
      write_rate(ctx, "rate_strong", strong_rate(sweep, rate));
    } else {
      for (const auto& phi : fns) write_rate(ctx, "rate_weak_" + phi.name(), weak_rate(sweep, rate, phi));
    }
    return ExitCode::ok;
  }
  if (kind == "fluctuation") {
    FluctuationConfig fc;
    fc.rate = read_rate(e, 8);
    fc.centering_tol = e.number("centering_tol", fc.centering_tol);
    fc.probe_atoms = e.count("probe_atoms", fc.probe_atoms);
    e.finish();
    fc.frozen = rc.frozen;
    validated("/experiment", [&] { fc.rate.validate(); });
    PathFunctional f;
    validated("/model", [&] { f = linear_slice_residual(rc.model); });
    write_rate(ctx, "rate_fluctuation", fluctuation_estimate(rc.model, rc.sim, f, fc));
    return ExitCode::ok;
  }
  FastLimitConfig fc;
  fc.eps_list = e.numbers("eps_list", {0.1, 0.05, 0.02, 0.01});
  fc.seeds = e.seeds("seeds", {1, 2, 3, 4, 5, 6, 7, 8});
  fc.max_atoms = e.count("max_atoms", fc.max_atoms);
  fc.p = e.number("p", fc.p);
  fc.cells = e.integer("cells", fc.cells);
  fc.transient_eps = e.number("transient_eps", fc.transient_eps);
  fc.horizon = e.number("horizon", fc.horizon);
  fc.floor_factor = e.number("floor_factor", fc.floor_factor);
  fc.max_mass = e.number("max_mass", fc.max_mass);
  e.finish();
  fc.frozen = rc.frozen;
  validated("/experiment", [&] { fc.validate(); });
  const FastLimitErrorReport rep = fast_limit_error(rc.model, avg, rc.sim, fc);
  if (ctx.rc.output.json()) {
    ordered_json terminal = ordered_json::array();
    for (std::size_t i = 0; i < rep.eps.size(); ++i) {
      terminal.push_back({{"eps", rep.eps[i]}, {"median", rep.median[i]}, {"rho", rep.rho[i]}});
    }
    ctx.write_json("fast_limit.json", {{"terminal", terminal},
                                       {"decreasing", rep.decreasing},
                                       {"s", rep.s},
                                       {"rhoV", rep.rho_t},
                                       {"mass", rep.mass_t},
                                       {"floor", rep.floor},
                                       {"fit", {rep.fit_begin, rep.fit_end}},
                                       {"gamma_hat", json_number(rep.gamma_hat)},
                                       {"fit_ok", rep.fit_ok}});
  }
  if (ctx.rc.output.csv()) {
    std::ofstream out(ctx.path("fast_limit_transient.csv"));
    out << "s,rhoV,mass\n";
    for (std::size_t i = 0; i < rep.s.size(); ++i) {
      out << format_double(rep.s[i]) << ',' << format_double(rep.rho_t[i]) << ','
          << format_double(rep.mass_t[i]) << '\n';
    }
  }
  ctx.summary["decreasing"] = rep.decreasing;
  ctx.summary["gamma_hat"] = json_number(rep.gamma_hat);
  return ExitCode::ok;
}

int cmd_wrong_limit(Context& ctx) {
  const RunConfig& rc = ctx.rc;
  if (rc.model.name != "nu_only_drift") {
    throw ConfigError("/model/builtin", "demo-wrong-limit runs on the nu_only_drift builtin");
  }
  ConfigBlock e = ctx.experiment();
  WrongLimitConfig wc;
  auto param = [&](const char* k, double def) {
    const auto it = rc.model.params.find(k);
    return it == rc.model.params.end() ? def : it->second;
  };
  wc.a = param("a", wc.a);
  wc.c = param("c", wc.c);
  wc.kappa0 = param("kappa0", wc.kappa0);
  wc.g0 = param("g0", wc.g0);
  wc.sigma0 = param("sigma0", wc.sigma0);
  wc.eps = rc.sim.epsilon;
  wc.N = rc.sim.N;
  wc.T = rc.sim.T;
  wc.h = rc.sim.h_slow;
  wc.atoms = e.numbers("atoms", wc.atoms);
  wc.seeds = e.seeds("seeds", wc.seeds);
  const std::string phi = e.text("phi", wc.phi.name());
  e.finish();
  validated("/experiment/phi", [&] { wc.phi = TestFunction::parse(phi); });
  wc.averaged = rc.averaged;
  WrongLimitReport r;
  validated("/experiment", [&] { r = wrong_limit_demo(wc); });
  ctx.write_json("wrong_limit.json", {{"phi", wc.phi.name()},
                                      {"d_correct", r.d_correct},
                                      {"d_naive", r.d_naive},
                                      {"stderr", r.stderr_mc},
                                      {"phi_full", r.phi_full},
                                      {"phi_correct", r.phi_correct},
                                      {"phi_naive", r.phi_naive},
                                      {"drift_gap", r.drift_gap},
                                      {"degenerate", r.degenerate},
                                      {"pass", r.pass}});
  ctx.summary["pass"] = r.pass;
  return ExitCode::ok;
}

int cmd_ergodicity(Context& ctx) {
  const RunConfig& rc = ctx.rc;
  ConfigBlock e = ctx.experiment();
  const auto d1 = static_cast<std::size_t>(rc.model.d1), d2 = static_cast<std::size_t>(rc.model.d2);
  const std::vector<double> x = e.numbers("x", std::vector<double>(d1, 0.0));
  if (x.size() != d1) e.fail("x", "length must equal d1");
  const bool has_mu = e.has("mu"), has_nu = e.has("nu");
  EmpiricalMeasure mu, nu;
  if (has_mu) mu = read_measure(e.child("mu"), rc.model.d1);
  if (has_nu) nu = read_measure(e.child("nu"), rc.model.d2);
  const std::vector<double> y0 = e.numbers("y0", std::vector<double>(d2, 5.0));
  if (y0.size() != d2) e.fail("y0", "length must equal d2");
  const std::size_t cloud = e.count("cloud", 16384);
  ErgodicityConfig ec;
  ec.s_min = e.number("s_min", ec.s_min);
  ec.s_max = e.number("s_max", ec.s_max);
  ec.grid = e.integer("grid", ec.grid);
  ec.h_fast = e.number("h_fast", ec.h_fast);
  ec.seed = e.seed("seed", ec.seed);
  ec.floor_factor = e.number("floor_factor", ec.floor_factor);
  ec.max_mass = e.number("max_mass", ec.max_mass);
  e.finish();
  if (cloud < 2) throw ConfigError("/experiment/cloud", "must be at least 2");
  if (!has_mu) mu = EmpiricalMeasure::point(x);
  // Default nu slot: the pooled invariant law at mu.
  if (!has_nu) nu = solve_frozen_pooled(rc.model, mu, rc.frozen).pooled;
  std::vector<double> coords;
  for (std::size_t i = 0; i < cloud; ++i) coords.insert(coords.end(), y0.begin(), y0.end());
  const auto fit = ergodicity_fit(rc.model, x, mu, nu, EmpiricalMeasure::uniform(rc.model.d2, coords), ec);
  if (rc.output.json()) {
    ctx.write_json("ergodicity.json", {{"gamma_hat", fit.gamma_hat},
                                       {"c_hat", fit.c_hat},
                                       {"noise_floor", fit.noise_floor},
                                       {"fit", {fit.fit_begin, fit.fit_end}}});
  }
  if (rc.output.csv()) {
    std::ofstream out(ctx.path("ergodicity.csv"));
    out << "s,rhoV,mass,fitted\n";
    for (std::size_t i = 0; i < fit.s.size(); ++i) {
      out << format_double(fit.s[i]) << ',' << format_double(fit.rho[i]) << ','
          << format_double(fit.mass[i]) << ',' << (i >= fit.fit_begin && i < fit.fit_end ? 1 : 0) << '\n';
    }
  }
  ctx.summary["gamma_hat"] = fit.gamma_hat;
  return ExitCode::ok;
}

int cmd_check(Context& ctx) {
  const RunConfig& rc = ctx.rc;
  ConfigBlock e = ctx.experiment();
  ProbePlan plan;
  plan.points = e.integer("points", plan.points);
  plan.x_max = e.number("x_max", plan.x_max);
  plan.y_max = e.number("y_max", plan.y_max);
  plan.atoms = e.integer("atoms", plan.atoms);
  plan.atom_range = e.number("atom_range", plan.atom_range);
  plan.q = e.numbers("q", plan.q);
  plan.tolerance = e.number("tolerance", plan.tolerance);
  plan.seed = e.seed("seed", plan.seed);
  e.finish();
  const auto dis = check_dissipativity(rc.model, plan);
  const auto lip = check_measure_lipschitz(rc.model, plan);
  const bool pass = dis.pass && dis.nondegenerate && lip.pass;
  ctx.write_json("check.json", {{"model", rc.model.name},
                                {"dissipativity",
                                 {{"pass", dis.pass},
                                  {"worst_margin", dis.worst_margin},
                                  {"worst_q", dis.worst_q},
                                  {"worst_y", dis.worst_y},
                                  {"evaluated", dis.evaluated}}},
                                {"nondegeneracy",
                                 {{"pass", dis.nondegenerate}, {"margin", dis.nondegeneracy_margin}}},
                                {"lipschitz",
                                 {{"pass", lip.pass},
                                  {"worst_ratio", lip.worst_ratio},
                                  {"kappa", lip.kappa},
                                  {"evaluated", lip.evaluated}}},
                                {"pass", pass}});
  ctx.summary["pass"] = pass;
  return pass ? ExitCode::ok : ExitCode::validation;
}

int resolve_threads(const Common& c) {
  if (c.threads > 0) return c.threads;
  if (const char* env = std::getenv("MMV_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    throw ValidationError(std::string("MMV_THREADS must be a positive integer, got '") + env + "'");
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

int run_experiment(const std::string& name, const Common& c, const std::function<int(Context&)>& body,
                   std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  Context ctx;
  ctx.rc = load_config(c.config);
  if (c.seed_set) {
    ctx.rc.sim.seed = c.seed;
    ctx.rc.echo["sim"]["seed"] = c.seed;
  }
  ctx.dir = c.out.empty() ? fs::path(ctx.rc.output.dir) : fs::path(c.out);
  const int code = body(ctx);
  fs::create_directories(ctx.dir);
  ManifestInput m;
  m.subcommand = name;
  m.config = ctx.rc.echo;
  m.seed = ctx.rc.sim.seed;
  m.outputs = ctx.outputs;
  m.summary = ctx.summary;
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(ctx.dir.string(), m);
  out << fmt::format("{}: wrote {} file(s) to {}\n", name, ctx.outputs.size() + 1, ctx.dir.string());
  return code;
}

int run_selftest(const std::string& suite_name, const std::string& out_dir, std::ostream& out) {
  const auto ids = acceptance::suite(suite_name);
  fs::path dir = out_dir;
  bool temp = false;
  if (dir.empty()) {
    dir = fs::temp_directory_path() / fmt::format("mmv-selftest-{}", std::hash<std::thread::id>{}(std::this_thread::get_id()) ^ static_cast<std::size_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
    temp = true;
  }
  fs::create_directories(dir);
  const int threads = thread_count();
  acceptance::Options opts;
  opts.work_dir = (dir / "work").string();
  opts.cli = [](const std::vector<std::string>& args) {
    std::ostringstream sink;
    return run(args, sink, sink);
  };
  bool all = true;
  ordered_json results = ordered_json::array();
  for (int id : ids) {
    const auto r = acceptance::run_criterion(id, opts);
    set_thread_count(threads);
    all = all && r.pass;
    out << acceptance::format_line(r) << fmt::format(" ({:.1f}s)", r.seconds) << '\n' << std::flush;
    results.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}, {"data", r.data}});
  }
  fs::remove_all(dir / "work");
  if (temp) {
    fs::remove_all(dir);
  } else {
    std::ofstream(dir / "selftest.json") << ordered_json{{"suite", suite_name}, {"results", results}}.dump(2) << '\n';
  }
  out << (all ? "selftest: all criteria passed\n" : "selftest: FAILED\n");
  return all ? ExitCode::ok : ExitCode::criterion_failed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Slow-fast McKean-Vlasov particle simulation and averaging diagnostics", "mmv"};
  app.require_subcommand(1);
  Common common;
  std::string suite = "oracle";

  using Body = std::function<int(Context&)>;
  const std::vector<std::tuple<std::string, std::string, Body>> experiments = {
      {"simulate", "coupled slow-fast particle run", cmd_simulate},
      {"frozen", "invariant family of the frozen fast equation", cmd_frozen},
      {"avg", "averaged coefficient table and averaged trajectory", cmd_avg},
      {"iterate", "non-autonomous iteration, full and averaged", cmd_iterate},
      {"rates", "strong, weak, fast-limit or fluctuation rate sweep", cmd_rates},
      {"demo-wrong-limit", "correct against naive averaged limit", cmd_wrong_limit},
      {"ergodicity", "relaxation rate of the frozen fast equation", cmd_ergodicity},
      {"check", "probe the model's dissipativity and Lipschitz assumptions", cmd_check},
  };
  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("--config", common.config, "JSON run configuration");
    if (need_config) opt->required();
    sub->add_option("--threads", common.threads, "worker threads (default: MMV_THREADS, then all cores)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seed", common.seed, "override sim.seed")
        ->each([&](const std::string&) { common.seed_set = true; });
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help, body] : experiments) subs.push_back(app.add_subcommand(name, help));
  for (auto* s : subs) add_common(s, true);
  CLI::App* self = app.add_subcommand("selftest", "run acceptance criteria");
  add_common(self, false);
  self->add_option("--suite", suite, "oracle, all, or a comma-separated list of criteria");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      for (auto* s : app.get_subcommands()) out << s->help();
      return ExitCode::ok;
    }
    err << "mmv: " << e.what() << '\n';
    return ExitCode::validation;
  }

  try {
    set_thread_count(resolve_threads(common));
    if (self->parsed()) return run_selftest(suite, common.out, out);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i]->parsed()) {
        return run_experiment(std::get<0>(experiments[i]), common, std::get<2>(experiments[i]), out);
      }
    }
    err << "mmv: no subcommand\n";
    return ExitCode::validation;
  } catch (const ValidationError& e) {
    err << "mmv: " << e.what() << '\n';
    return ExitCode::validation;
  } catch (const std::exception& e) {
    err << "mmv: " << e.what() << '\n';
    return ExitCode::runtime;
  }
}

}  // namespace mmv::cli
