#include "criteria.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "dsl_oracle.hpp"
#include "mmv/diagnostics.hpp"
#include "mmv/error.hpp"
#include "mmv/frozen.hpp"
#include "mmv/iteration.hpp"
#include "mmv/stats.hpp"

namespace mmv::acceptance {

namespace {

namespace fs = std::filesystem;

// linear_ou constants shared by the oracle checks.
constexpr double kA = 2.0, kC = 1.0, kKappa0 = 0.5;
const double kG0 = std::sqrt(2.0);

ModelSpec linear(double kappa0 = kKappa0, double b0 = 1.0) {
  return builtin("linear_ou", {{"a", kA},
                               {"c", kC},
                               {"kappa0", kappa0},
                               {"g0", kG0},
                               {"b0", b0},
                               {"b1", 1.0},
                               {"b2", 0.0},
                               {"sigma0", 1.0}});
}

// Affine fixed point of the pooled fast law at mu = delta_x.
double fixed_point_mean(double x) { return kC * x / (kA - kKappa0); }
// Stationary variance of the OU slice, continuous and Euler-Maruyama.
double ou_var() { return kG0 * kG0 / (2.0 * kA); }
double em_var(double h) { return kG0 * kG0 * h / (1.0 - (1.0 - kA * h) * (1.0 - kA * h)); }

AveragedModel averaged(const ModelSpec& m) {
  AveragedModel a;
  a.model = m;
  a.cfg.K_micro = 8;
  a.cfg.frozen.h_fast = 0.1;
  return a;
}

SimConfig sweep_sim(double xi) {
  SimConfig c;
  c.N = 2048;
  c.h_slow = 0.01;
  c.T = 1.0;
  c.eta_fast = 0.1;
  c.initial_slow = SamplerSpec::point({xi});
  return c;
}

const std::vector<double> kEps = {0.1, 0.05, 0.02, 0.01};

std::vector<std::uint64_t> seed_range(std::uint64_t n) {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 1; i <= n; ++i) s.push_back(i);
  return s;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + fmt::format("{:.4g}", x);
  return "[" + out + "]";
}

Result frozen_fixed_point() {
  Result r;
  FrozenConfig c;
  c.K = 4096;
  c.burn_in = 4.0;
  c.avg_window = 16.0;
  c.h_fast = 1e-3;
  const auto fam = solve_frozen_pooled(linear(), EmpiricalMeasure::point(1.0), c);
  const double m = fam.pooled_mean[0];
  const double v = fam.slice_m2[0][0] - fam.slice_mean[0][0] * fam.slice_mean[0][0];
  const double dm = std::abs(m - fixed_point_mean(1.0)), dv = std::abs(v - ou_var());
  r.pass = dm <= 0.02 && dv <= 0.04;
  r.detail = fmt::format("mean {:.4f} (|err| {:.4f} <= 0.02), slice var {:.4f} (|err| {:.4f} <= 0.04)",
                         m, dm, v, dv);
  r.data = {{"mean", m}, {"var", v}};
  return r;
}

Result recursion_geometry() {
  Result r;
  FrozenConfig c;
  c.K = 4096;
  c.burn_in = 4.0;
  c.avg_window = 16.0;
  c.h_fast = 1e-3;
  c.seed = 5;
  const auto rep = run_recursion(linear(), EmpiricalMeasure::point(1.0), c, 4);
  // m_n = (c + kappa0 m_{n-1}) / a from m_0 = 0.
  double m_or = 0.0, worst = 0.0;
  std::vector<double> means;
  for (int n = 0; n < 3; ++n) {
    m_or = (kC * 1.0 + kKappa0 * m_or) / kA;
    means.push_back(rep.iterates[static_cast<std::size_t>(n)].pooled_mean[0]);
    worst = std::max(worst, std::abs(means.back() - m_or));
  }
  const double ratio = rep.contraction_ratio;
  r.pass = worst <= 0.02 && ratio >= 0.15 && ratio <= 0.40;
  r.detail = fmt::format("means {} max |err| {:.4f} <= 0.02, contraction ratio {:.3f} in [0.15, 0.40]",
                         fmt_list(means), worst, ratio);
  r.data = {{"means", means}, {"ratio", ratio}};
  return r;
}

Result uniform_moments() {
  Result r;
  FrozenConfig c;
  c.K = 1024;
  c.burn_in = 4.0;
  c.avg_window = 16.0;
  c.h_fast = 0.01;
  c.seed = 3;
  const auto rep = run_recursion(linear(), EmpiricalMeasure::point(1.0), c, 20, true);
  const double mbar = fixed_point_mean(1.0);
  const double steady = mbar * mbar + em_var(c.h_fast);
  std::vector<double> m2;
  for (const auto& it : rep.iterates) m2.push_back(second_moment(it.pooled));
  const double sup = *std::max_element(m2.begin(), m2.end());
  const std::vector<double> tail(m2.begin() + 4, m2.end());  // n >= 5
  const double tau = kendall_tau(tail);
  r.pass = m2.size() == 20 && sup <= 1.2 * steady && tau <= 0.3;
  r.detail = fmt::format("sup second moment {:.4f} <= {:.4f} (1.2 x steady {:.4f}), Kendall tau {:.3f} <= 0.3",
                         sup, 1.2 * steady, steady, tau);
  r.data = {{"second_moments", m2}, {"steady", steady}, {"tau", tau}};
  return r;
}

Result strong_rate_check() {
  Result r;
  const auto m = linear();
  RateConfig rc;
  rc.eps_list = kEps;
  rc.seeds = seed_range(16);
  const auto rep = strong_rate(m, averaged(m), sweep_sim(0.0), rc, true);
  r.pass = rep.in_band && !rep.floor_limited;
  r.detail = fmt::format("slope {:.3f} +/- {:.3f} in [0.7, 1.3], errors {}", rep.slope, rep.halfwidth,
                         fmt_list(rep.errors));
  r.data = {{"slope", rep.slope}, {"errors", rep.errors}, {"used", rep.used}};
  return r;
}

Result weak_rate_check() {
  Result r;
  const auto m = linear();
  RateConfig rc;
  rc.eps_list = kEps;
  rc.seeds = seed_range(16);
  rc.band_lo = 0.65;
  rc.band_hi = 1.35;
  const auto sweep = run_sweep(m, averaged(m), sweep_sim(10.0), rc, true);
  r.pass = true;
  for (const char* phi : {"mean", "second_moment"}) {
    const auto rep = weak_rate(sweep, rc, TestFunction::parse(phi));
    r.pass = r.pass && rep.in_band && !rep.floor_limited;
    r.detail += fmt::format("{}{} slope {:.3f}", r.detail.empty() ? "" : ", ", phi, rep.slope);
    r.data[phi] = {{"slope", rep.slope}, {"errors", rep.errors}};
  }
  r.detail += " in [0.65, 1.35]";
  return r;
}

Result fast_limit_check() {
  Result r;
  FastLimitConfig fc;
  fc.eps_list = kEps;
  fc.seeds = seed_range(8);
  fc.frozen.h_fast = 0.1;
  fc.frozen.K = 64;
  fc.max_atoms = 256;
  FastLimitErrorReport rep;
  {
    // Slow mean at its neutral point keeps the slow velocity small at T.
    const auto m = linear(kKappa0, 2.0 / 3.0);
    auto sim = sweep_sim(100.0);
    sim.N = 8192;
    sim.initial_fast = SamplerSpec::point({0.0});
    fast_limit_terminal(m, averaged(m), sim, fc, rep);
  }
  {
    const auto m = linear();
    auto sim = sweep_sim(0.0);
    sim.N = 8192;
    sim.initial_fast = SamplerSpec::point({2.0});
    auto fc2 = fc;
    fc2.seeds = {1, 2};
    fast_limit_transient(m, averaged(m), sim, fc2, rep);
  }
  const bool b_ok = rep.fit_ok && rep.gamma_hat >= 1.0 && rep.gamma_hat <= 3.0;
  r.pass = rep.decreasing && b_ok;
  r.detail = fmt::format("(a) medians {} strictly decreasing: {}; (b) gamma {:.3f} in [1.0, 3.0]",
                         fmt_list(rep.median), rep.decreasing ? "yes" : "no", rep.gamma_hat);
  r.data = {{"median", rep.median}, {"gamma_hat", rep.gamma_hat}};
  return r;
}

Result wrong_limit_check() {
  Result r;
  WrongLimitConfig wc;
  wc.averaged.K_micro = 8;
  wc.averaged.frozen.h_fast = 0.1;
  const auto rep = wrong_limit_demo(wc);
  const double se = rep.stderr_mc;
  const bool sep = rep.d_naive >= 5.0 * std::max(rep.d_correct, se);
  const bool close = rep.d_correct <= 2.0 * se + 0.02;
  r.pass = !rep.degenerate && sep && close;
  r.detail = fmt::format("D_naive {:.4f} >= 5 max(D_correct {:.4f}, se {:.4f}); D_correct <= {:.4f}",
                         rep.d_naive, rep.d_correct, se, 2.0 * se + 0.02);
  r.data = {{"d_naive", rep.d_naive}, {"d_correct", rep.d_correct}, {"stderr", se}};
  return r;
}

Result fluctuation_check() {
  Result r;
  const auto m = linear();
  auto sim = sweep_sim(0.0);
  sim.initial_slow = SamplerSpec::gauss({0.0}, {1.0});
  FluctuationConfig fc;
  fc.rate.eps_list = kEps;
  fc.rate.seeds = seed_range(8);
  fc.frozen.h_fast = 0.1;
  fc.frozen.K = 256;
  const auto rep = fluctuation_estimate(m, sim, linear_slice_residual(m), fc);
  r.pass = rep.in_band && !rep.floor_limited;
  r.detail = fmt::format("slope {:.3f} in [0.7, 1.3], errors {}", rep.slope, fmt_list(rep.errors));
  r.data = {{"slope", rep.slope}, {"errors", rep.errors}};
  return r;
}

Result ergodic_decay() {
  Result r;
  ErgodicityConfig ec;
  const std::vector<double> y0(16384, 5.0);
  const auto fit = ergodicity_fit(linear(), {1.0}, EmpiricalMeasure::point(1.0),
                                  EmpiricalMeasure::point(fixed_point_mean(1.0)),
                                  EmpiricalMeasure::uniform(1, y0), ec);
  r.pass = fit.fit_end >= fit.fit_begin + 3 && fit.gamma_hat >= 1.2 && fit.gamma_hat <= 2.8;
  r.detail = fmt::format("gamma {:.3f} in [1.2, 2.8] over {} points", fit.gamma_hat,
                         fit.fit_end - fit.fit_begin);
  r.data = {{"gamma_hat", fit.gamma_hat}};
  return r;
}

Result poisson_cell() {
  Result r;
  PoissonConfig pc;
  pc.n_paths = 65536;
  FrozenConfig fz;
  fz.K = 512;
  fz.h_fast = 0.01;
  fz.burn_in = 4.0;
  fz.avg_window = 16.0;
  fz.seed = 5;
  const double mbar = fixed_point_mean(1.0);
  const auto res = solve_poisson(
      linear(), [&](const double* y) { return y[0] - mbar; }, {1.0}, EmpiricalMeasure::point(1.0),
      {mbar + 1.0}, fz, pc);
  // U(y) = (y - m) / a for the OU slice.
  const double exact = 1.0 / kA;
  r.pass = std::abs(res.value - exact) <= 0.03;
  r.detail = fmt::format("U(m+1) {:.4f} (se {:.4f}), |err| {:.4f} <= 0.03", res.value, res.std_error,
                         std::abs(res.value - exact));
  r.data = {{"value", res.value}, {"stderr", res.std_error}};
  return r;
}

Result mollification() {
  Result r;
  MollifierConfig mc;
  const auto rep = mollifier_rate(mc);
  r.pass = rep.slope <= -0.8;
  r.detail = fmt::format("slope {:.3f} <= -0.8, errors {}", rep.slope, fmt_list(rep.errors));
  r.data = {{"slope", rep.slope}, {"errors", rep.errors}};
  return r;
}

Result iteration_uniformity() {
  Result r;
  const auto m = linear();
  SimConfig cfg;
  cfg.N = 2048;
  cfg.h_slow = 0.01;
  cfg.T = 1.0;
  cfg.epsilon = 0.05;
  cfg.seed = 1;
  cfg.initial_slow = SamplerSpec::gauss({1.0}, {0.5});
  IterationConfig it;
  it.n_max = 8;
  for (int j = 0; j <= 10; ++j) it.record.push_back(0.1 * j);
  auto avg = averaged(m);
  avg.cfg.frozen.K = 64;
  const auto full = iterate_full(m, cfg, it);
  const auto av = iterate_averaged(avg, cfg, it);
  const auto rep = cross_validate({full}, av, {cfg.epsilon});
  std::vector<double> w2;
  for (const auto& row : rep.rows) w2.push_back(row.w2_slow);
  const double worst = *std::max_element(w2.begin(), w2.end());
  r.pass = w2.size() == 8 && worst <= 2.0 * w2.front();
  r.detail = fmt::format("W2 by n {}, max {:.4f} <= 2 x {:.4f}", fmt_list(w2), worst, w2.front());
  r.data = {{"w2", w2}};
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Byte comparison of every output except the manifest, whose wall time differs.
bool same_outputs(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
  std::size_t nb = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(b)) ++nb;
  if (names.size() != nb) {
    why = "different file sets";
    return false;
  }
  for (const auto& n : names) {
    if (n == "manifest.json") {
      const auto ja = nlohmann::json::parse(slurp(a / n)), jb = nlohmann::json::parse(slurp(b / n));
      if (ja["outputs"] != jb["outputs"]) {
        why = "manifest hashes differ";
        return false;
      }
      continue;
    }
    if (!fs::exists(b / n) || slurp(a / n) != slurp(b / n)) {
      why = n + " differs";
      return false;
    }
  }
  return true;
}

Result determinism(const Options& opts) {
  Result r;
  if (!opts.cli) {
    r.detail = "no command-line runner available";
    return r;
  }
  const fs::path root = fs::path(opts.work_dir) / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  nlohmann::ordered_json cfg = {
      {"model",
       {{"builtin", "linear_ou"},
        {"params",
         {{"a", 2.0}, {"c", 1.0}, {"kappa0", 0.5}, {"g0", kG0}, {"b0", 1.0}, {"b1", 1.0}, {"b2", 0.0},
          {"sigma0", 1.0}}}}},
      {"sim",
       {{"epsilon", 0.05},
        {"N", 3000},
        {"T", 0.2},
        {"seed", 42},
        {"initial_slow", {{"kind", "gauss"}, {"mean", {1.0}}, {"sd", {0.5}}}}}},
      {"frozen", {{"K", 64}}},
      {"averaged", {{"K_micro", 4}}},
      {"experiment", {{"record_every", 0.05}}}};
  const fs::path cfg_path = root / "config.json";
  std::ofstream(cfg_path) << cfg.dump(2);
  auto cfg_frozen = cfg;
  cfg_frozen["experiment"] = {{"mu", {{"atoms", {-1.0, 0.0, 0.5, 2.0}}}}, {"mode", "recursive"},
                              {"steps", 2}};
  const fs::path cfg_frozen_path = root / "config_frozen.json";
  std::ofstream(cfg_frozen_path) << cfg_frozen.dump(2);

  bool ok = true;
  std::string why;
  for (const std::string cmd : {"simulate", "avg", "frozen"}) {
    const std::string path = (cmd == "frozen" ? cfg_frozen_path : cfg_path).string();
    std::vector<fs::path> dirs;
    for (int threads : {1, 2, 8}) {
      const fs::path out = root / fmt::format("{}_{}", cmd, threads);
      const int code = opts.cli({cmd, "--config", path, "--threads", std::to_string(threads),
                                 "--out", out.string()});
      if (code != 0) {
        ok = false;
        why = fmt::format("{} exited with {} at {} threads", cmd, code, threads);
        break;
      }
      dirs.push_back(out);
    }
    if (!ok) break;
    for (std::size_t i = 1; i < dirs.size() && ok; ++i) {
      if (!same_outputs(dirs[0], dirs[i], why)) {
        ok = false;
        why = cmd + ": " + why;
      }
    }
    if (!ok) break;
  }

  // Random expressions: print/parse round trip and compiled against reference.
  std::mt19937_64 g(13);
  std::normal_distribution<double> z(0.0, 1.5);
  int failures = 0, evaluated = 0;
  for (int i = 0; i < 10000; ++i) {
    const CoeffExpr e{dsl_oracle::random_expr(g, 1 + i % 8, 2, 2), 2, 2};
    const std::string text = print_coeff(e);
    const CoeffExpr back = parse_coeff(text, 2, 2);
    if (!(back.root == e.root) || print_coeff(back) != text) {
      ++failures;
      continue;
    }
    std::vector<double> mu_c(6), nu_c(8), x{z(g), z(g)}, y{z(g), z(g)};
    for (auto& v : mu_c) v = z(g);
    for (auto& v : nu_c) v = z(g);
    const auto mu = EmpiricalMeasure::uniform(2, mu_c);
    const auto nu = EmpiricalMeasure::uniform(2, nu_c);
    const MeasureView vmu(mu), vnu(nu);
    const CompiledCoeff c(back);
    bool ref_failed = false, got_failed = false;
    double ref = 0.0, got = 0.0;
    try {
      ref = dsl_oracle::reference_eval(e.root, x, y, mu, nu);
    } catch (const EvalError&) {
      ref_failed = true;
    }
    try {
      got = c.eval({x.data(), y.data(), &vmu, &vnu});
    } catch (const EvalError&) {
      got_failed = true;
    }
    if (ref_failed != got_failed) {
      ++failures;
    } else if (!ref_failed) {
      ++evaluated;
      if (std::abs(got - ref) > 1e-9 * (1.0 + std::abs(ref))) ++failures;
    }
  }
  r.pass = ok && failures == 0;
  r.detail = fmt::format("outputs at 1/2/8 threads {}; DSL property suite {} failures of 10000 ({} evaluated)",
                         ok ? "byte-identical" : "differ (" + why + ")", failures, evaluated);
  r.data = {{"identical", ok}, {"dsl_failures", failures}};
  return r;
}

}  // namespace

std::string criterion_name(int id) {
  static const char* names[] = {"",
                                "frozen fixed point",
                                "recursion geometry",
                                "uniform moments",
                                "strong rate",
                                "weak rate",
                                "fast-motion limit",
                                "wrong limit",
                                "fluctuation estimate",
                                "ergodic decay",
                                "Poisson cell problem",
                                "mollification decay",
                                "iteration uniformity",
                                "engineering determinism"};
  require(id >= 1 && id <= kCriteria, "unknown criterion " + std::to_string(id));
  return names[id];
}

std::vector<int> suite(const std::string& name) {
  if (name == "oracle") return {1, 2, 3, 9, 10};
  if (name == "all") {
    std::vector<int> all;
    for (int i = 1; i <= kCriteria; ++i) all.push_back(i);
    return all;
  }
  std::vector<int> ids;
  std::stringstream ss(name);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    require(!tok.empty() && end && *end == '\0' && v >= 1 && v <= kCriteria,
            "unknown suite or criterion '" + tok + "'");
    ids.push_back(static_cast<int>(v));
  }
  require(!ids.empty(), "empty suite");
  return ids;
}

Result run_criterion(int id, const Options& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Result r;
  try {
    switch (id) {
      case 1: r = frozen_fixed_point(); break;
      case 2: r = recursion_geometry(); break;
      case 3: r = uniform_moments(); break;
      case 4: r = strong_rate_check(); break;
      case 5: r = weak_rate_check(); break;
      case 6: r = fast_limit_check(); break;
      case 7: r = wrong_limit_check(); break;
      case 8: r = fluctuation_check(); break;
      case 9: r = ergodic_decay(); break;
      case 10: r = poisson_cell(); break;
      case 11: r = mollification(); break;
      case 12: r = iteration_uniformity(); break;
      case 13: r = determinism(opts); break;
      default: throw ValidationError("unknown criterion " + std::to_string(id));
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.id = id;
  r.name = criterion_name(id);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string format_line(const Result& r) {
  return fmt::format("criterion {} {}: {} {}", r.id, r.name, r.pass ? "PASS" : "FAIL", r.detail);
}

}  // namespace mmv::acceptance
