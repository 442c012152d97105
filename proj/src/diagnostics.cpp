#include "mmv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include <nlohmann/json.hpp>

#include "mmv/error.hpp"
#include "mmv/measure_io.hpp"
#include "mmv/model.hpp"
#include "mmv/rng.hpp"
#include "mmv/stats.hpp"

namespace mmv {

double TestFunction::operator()(const EmpiricalMeasure& mu) const {
  switch (kind) {
    case Kind::mean:
      return mean_of(mu)[0];
    case Kind::second_moment:
      return second_moment(mu);
    case Kind::tanh_mean: {
      double s = 0.0;
      for (std::size_t i = 0; i < mu.size(); ++i) s += mu.weight(i) * std::tanh(mu.atom(i)[0]);
      return s;
    }
    case Kind::w2_reference:
      require(!reference.empty(), "w2_reference test function needs a reference measure");
      return w2_distance(mu, reference);
    case Kind::constant:
      return 1.0;
  }
  return 0.0;
}

std::string TestFunction::name() const {
  switch (kind) {
    case Kind::mean: return "mean";
    case Kind::second_moment: return "second_moment";
    case Kind::tanh_mean: return "tanh_mean";
    case Kind::w2_reference: return "w2_reference";
    case Kind::constant: return "constant";
  }
  return "unknown";
}

TestFunction TestFunction::parse(const std::string& name) {
  TestFunction f;
  if (name == "mean") f.kind = Kind::mean;
  else if (name == "second_moment") f.kind = Kind::second_moment;
  else if (name == "tanh_mean") f.kind = Kind::tanh_mean;
  else if (name == "w2_reference") f.kind = Kind::w2_reference;
  else if (name == "constant") f.kind = Kind::constant;
  else throw ValidationError("unknown test function '" + name + "'");
  return f;
}

void RateConfig::validate() const {
  require(eps_list.size() >= 3, "a rate sweep needs at least 3 eps values");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    require(eps_list[i] > 0.0 && eps_list[i] <= 1.0, "eps values must lie in (0, 1]");
    if (i > 0) require(eps_list[i] < eps_list[i - 1], "eps list must be strictly decreasing");
  }
  require(seeds.size() >= 2, "a rate sweep needs at least 2 seeds");
  require(band_lo <= band_hi, "accept band is empty");
  require(floor_factor >= 0.0, "floor_factor must be >= 0");
  require(batches >= 2, "at least 2 jackknife batches are required");
}

namespace {

using Estimator = std::function<std::vector<double>(const std::vector<std::size_t>&)>;

void fit_rate(RateReport& r, const Estimator& est, std::size_t n_seeds, std::size_t batches,
              double floor_factor) {
  const std::size_t m = r.x.size();
  r.used.assign(m, false);
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = r.errors[i];
    r.used[i] = std::isfinite(e) && e > 0.0 && e > floor_factor * r.floor[i];
    if (r.used[i]) {
      lx.push_back(std::log(r.x[i]));
      ly.push_back(std::log(e));
    }
  }
  if (lx.size() < 2) {
    r.floor_limited = true;
    r.in_band = false;
    r.pass = false;
    return;
  }
  const LineFit fit = fit_line(lx, ly);
  r.slope = fit.slope;
  r.intercept = fit.intercept;

  const std::size_t B = std::min(batches, n_seeds);
  std::vector<double> reps;
  if (B >= 2) {
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < n_seeds; ++i) {
        if (i % B != b) idx.push_back(i);
      }
      const auto e = est(idx);
      std::vector<double> jx, jy;
      for (std::size_t i = 0; i < m; ++i) {
        if (r.used[i] && e[i] > 0.0) {
          jx.push_back(std::log(r.x[i]));
          jy.push_back(std::log(e[i]));
        }
      }
      if (jx.size() >= 2) reps.push_back(fit_line(jx, jy).slope);
    }
  }
  r.halfwidth = reps.size() >= 2 ? 2.0 * jackknife_se(reps) : std::numeric_limits<double>::quiet_NaN();
  r.in_band = r.slope >= r.band_lo && r.slope <= r.band_hi;
  const bool target_in_ci = std::isfinite(r.halfwidth) && std::abs(r.slope - r.target) <= r.halfwidth;
  r.pass = r.in_band || target_in_ci;
}

RateReport base_report(const std::string& name, const RateConfig& rc) {
  RateReport r;
  r.experiment = name;
  r.x = rc.eps_list;
  r.target = rc.target;
  r.band_lo = rc.band_lo;
  r.band_hi = rc.band_hi;
  return r;
}

double mean_sq_pathwise(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  require(a.coords().size() == b.coords().size(), "coupled clouds have different sizes");
  const auto& x = a.coords();
  const auto& y = b.coords();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s / static_cast<double>(a.size());
}

double param(const ModelSpec& m, const std::string& key) {
  const auto it = m.params.find(key);
  require(it != m.params.end(), "model '" + m.name + "' has no parameter '" + key + "'");
  return it->second;
}

}  // namespace

void write_rate_report(const std::string& json_path, const std::string& csv_path,
                       const RateReport& r) {
  nlohmann::ordered_json j;
  j["experiment"] = r.experiment;
  j[r.x_name] = r.x;
  j["errors"] = r.errors;
  j["stderr"] = r.stderrs;
  j["floor"] = r.floor;
  j["used"] = r.used;
  j["slope"] = r.slope;
  j["halfwidth"] = r.halfwidth;
  j["target"] = r.target;
  j["band"] = {r.band_lo, r.band_hi};
  j["floor_limited"] = r.floor_limited;
  j["pass"] = r.pass;
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw RuntimeFailure("cannot write " + json_path);
    out << j.dump(2) << '\n';
  }
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw RuntimeFailure("cannot write " + csv_path);
    out << r.x_name << ",error,stderr,floor,used\n";
    for (std::size_t i = 0; i < r.x.size(); ++i) {
      out << format_double(r.x[i]) << ',' << format_double(r.errors[i]) << ','
          << format_double(r.stderrs[i]) << ',' << format_double(r.floor[i]) << ','
          << (r.used[i] ? 1 : 0) << '\n';
    }
  }
}

SweepData run_sweep(const ModelSpec& model, const AveragedModel& avg, const SimConfig& base,
                    const RateConfig& rc, bool crn) {
  rc.validate();
  base.validate();
  SweepData sw;
  sw.eps = rc.eps_list;
  sw.seeds = rc.seeds;
  sw.crn = crn;
  sw.full.assign(sw.eps.size(), {});
  const std::vector<double> rec = {base.T};
  for (std::size_t i = 0; i < rc.seeds.size(); ++i) {
    SimConfig cfg = base;
    cfg.seed = rc.seeds[i];
    SimConfig acfg = cfg;
    if (!crn) acfg.seed = splitmix64(rc.seeds[i] ^ 0xC0FFEEu);
    sw.averaged.push_back(simulate_averaged(avg, acfg, rec).back());
    if (i < rc.floor_seeds) {
      AveragedModel other = avg;
      other.cfg.micro_seed = splitmix64(acfg.seed + 0x51EDu);
      const Snapshot rep = simulate_averaged(other, acfg, rec).back();
      sw.averaged_floor.push_back(0.5 * mean_sq_pathwise(sw.averaged.back().slow, rep.slow));
    }
    for (std::size_t e = 0; e < sw.eps.size(); ++e) {
      SimConfig c = cfg;
      c.epsilon = sw.eps[e];
      sw.full[e].push_back(simulate(model, c, nullptr, rec).back());
    }
  }
  return sw;
}

RateReport strong_rate(const SweepData& sw, const RateConfig& rc) {
  RateReport r = base_report("strong", rc);
  r.x = sw.eps;
  const std::size_t S = sw.seeds.size(), E = sw.eps.size();
  std::vector<std::vector<double>> err(E, std::vector<double>(S));
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t i = 0; i < S; ++i) err[e][i] = mean_sq_pathwise(sw.full[e][i].slow, sw.averaged[i].slow);
  }
  const Estimator est = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> out(E, 0.0);
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t i : idx) out[e] += err[e][i];
      out[e] /= static_cast<double>(idx.size());
    }
    return out;
  };
  std::vector<std::size_t> all(S);
  for (std::size_t i = 0; i < S; ++i) all[i] = i;
  r.errors = est(all);
  const double floor = sw.averaged_floor.empty() ? 0.0 : mean(sw.averaged_floor);
  for (std::size_t e = 0; e < E; ++e) {
    r.stderrs.push_back(sample_sd(err[e]) / std::sqrt(static_cast<double>(S)));
    r.floor.push_back(floor);
  }
  fit_rate(r, est, S, rc.batches, rc.floor_factor);
  return r;
}

RateReport strong_rate(const ModelSpec& model, const AveragedModel& avg, const SimConfig& base,
                       const RateConfig& rc, bool crn) {
  return strong_rate(run_sweep(model, avg, base, rc, crn), rc);
}

RateReport weak_rate(const SweepData& sw, const RateConfig& rc, const TestFunction& phi) {
  RateReport r = base_report("weak_" + phi.name(), rc);
  r.x = sw.eps;
  const std::size_t S = sw.seeds.size(), E = sw.eps.size();
  require(S >= 2, "weak rate needs at least 2 seeds");
  std::vector<double> pa(S);
  std::vector<std::vector<double>> pf(E, std::vector<double>(S));
  for (std::size_t i = 0; i < S; ++i) pa[i] = phi(sw.averaged[(i + 1) % S].slow);
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t i = 0; i < S; ++i) pf[e][i] = phi(sw.full[e][i].slow);
  }
  const Estimator est = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> out(E);
    for (std::size_t e = 0; e < E; ++e) {
      double d = 0.0;
      for (std::size_t i : idx) d += pf[e][i] - pa[i];
      out[e] = std::abs(d / static_cast<double>(idx.size()));
    }
    return out;
  };
  std::vector<std::size_t> all(S);
  for (std::size_t i = 0; i < S; ++i) all[i] = i;
  r.errors = est(all);
  // Replicates of one configuration: full runs at the first eps, adjacent seeds.
  double rep = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    const double d = pf[0][i] - pf[0][(i + 1) % S];
    rep += d * d;
  }
  const double floor = std::sqrt(rep / static_cast<double>(S)) / std::sqrt(static_cast<double>(S));
  for (std::size_t e = 0; e < E; ++e) {
    std::vector<double> d(S);
    for (std::size_t i = 0; i < S; ++i) d[i] = pf[e][i] - pa[i];
    r.stderrs.push_back(sample_sd(d) / std::sqrt(static_cast<double>(S)));
    r.floor.push_back(floor);
  }
  fit_rate(r, est, S, rc.batches, rc.floor_factor);
  return r;
}

RateReport weak_rate(const ModelSpec& model, const AveragedModel& avg, const SimConfig& base,
                     const RateConfig& rc, const TestFunction& phi) {
  return weak_rate(run_sweep(model, avg, base, rc, true), rc, phi);
}

void FastLimitConfig::validate() const {
  require(!eps_list.empty(), "fast limit sweep needs eps values");
  for (std::size_t i = 1; i < eps_list.size(); ++i) {
    require(eps_list[i] < eps_list[i - 1], "eps list must be strictly decreasing");
  }
  require(!seeds.empty(), "fast limit sweep needs seeds");
  require(transient_eps > 0.0 && transient_eps <= 1.0, "transient_eps must lie in (0, 1]");
  require(horizon > 0.0, "transient horizon must be positive");
  require(cells >= 0, "cells must be >= 0");
  frozen.validate();
}

namespace {

Binning bins_for(const FastLimitConfig& fc, const std::vector<const EmpiricalMeasure*>& ms,
                 std::size_t n) {
  Binning b = fixed_binning(ms, n);
  if (fc.cells > 0) b.cells = fc.cells;
  return b;
}

}  // namespace

void fast_limit_terminal(const ModelSpec& model, const AveragedModel& avg, const SimConfig& base,
                         const FastLimitConfig& fc, FastLimitErrorReport& rep) {
  fc.validate();
  base.validate();
  const WeightFunction V{fc.p};
  rep.eps = fc.eps_list;
  rep.rho.assign(fc.eps_list.size(), {});

  // (a) t = T across eps.
  for (std::uint64_t seed : fc.seeds) {
    SimConfig cfg = base;
    cfg.seed = seed;
    const Trajectory bar = simulate_averaged(avg, cfg, {cfg.T});
    FrozenConfig fz = fc.frozen;
    fz.seed = splitmix64(seed ^ fc.frozen.seed);
    const EmpiricalMeasure ref = fast_limit(bar, model, fz, fc.max_atoms).nu[0];
    for (std::size_t e = 0; e < fc.eps_list.size(); ++e) {
      SimConfig c = cfg;
      c.epsilon = fc.eps_list[e];
      const Snapshot snap = simulate(model, c, nullptr, {c.T}).back();
      const Binning bins = bins_for(fc, {&snap.fast, &ref}, snap.fast.size());
      rep.rho[e].push_back(binned_tv(snap.fast, ref, V, bins).weighted);
    }
  }
  for (const auto& r : rep.rho) rep.median.push_back(median(r));
  rep.decreasing = rep.median.size() >= 2;
  for (std::size_t e = 1; e < rep.median.size(); ++e) {
    rep.decreasing = rep.decreasing && rep.median[e] < rep.median[e - 1];
  }
}

void fast_limit_transient(const ModelSpec& model, const AveragedModel& avg, const SimConfig& base,
                          const FastLimitConfig& fc, FastLimitErrorReport& rep) {
  fc.validate();
  base.validate();
  const WeightFunction V{fc.p};
  SimConfig cfg = base;
  cfg.epsilon = fc.transient_eps;
  const auto n_nodes = static_cast<std::size_t>(std::floor(fc.horizon * fc.transient_eps / cfg.h_slow + 1e-9));
  require(n_nodes >= 3 && n_nodes <= cfg.steps(), "transient window must span at least 3 slow steps");
  std::vector<double> nodes;
  for (std::size_t k = 0; k <= n_nodes; ++k) nodes.push_back(cfg.time_of(k));
  rep.s.assign(nodes.size(), 0.0);
  rep.rho_t.assign(nodes.size(), 0.0);
  rep.mass_t.assign(nodes.size(), 0.0);
  Binning bins;
  for (std::size_t si = 0; si < fc.seeds.size(); ++si) {
    cfg.seed = fc.seeds[si];
    const Trajectory full = simulate(model, cfg, nullptr, nodes);
    const Trajectory bar = simulate_averaged(avg, cfg, nodes);
    FrozenConfig fz = fc.frozen;
    fz.seed = splitmix64(cfg.seed ^ fc.frozen.seed);
    const FastLimit fl = fast_limit(bar, model, fz, fc.max_atoms);
    if (si == 0) {
      std::vector<const EmpiricalMeasure*> ms;
      for (const auto& sn : full) ms.push_back(&sn.fast);
      for (const auto& nu : fl.nu) ms.push_back(&nu);
      bins = bins_for(fc, ms, full.back().fast.size());
      SimConfig other = cfg;
      other.seed = splitmix64(cfg.seed + 0xF100u);
      const Snapshot rep_snap = simulate(model, other, nullptr, {nodes.back()}).back();
      rep.replicate_floor = binned_tv(full.back().fast, rep_snap.fast, V, bins).weighted;
      rep.floor = rep.replicate_floor;
    }
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const TvEstimate tv = binned_tv(full[k].fast, fl.nu[k], V, bins);
      rep.rho_t[k] += tv.weighted / static_cast<double>(fc.seeds.size());
      rep.mass_t[k] += tv.mass / static_cast<double>(fc.seeds.size());
    }
  }
  for (std::size_t k = 0; k < nodes.size(); ++k) rep.s[k] = nodes[k] / fc.transient_eps;
  // The eps-dependent plateau left after relaxation also bounds the fit.
  const std::size_t tail = std::max<std::size_t>(1, nodes.size() / 3);
  rep.plateau = median(std::vector<double>(rep.rho_t.end() - static_cast<std::ptrdiff_t>(tail), rep.rho_t.end()));
  rep.floor = std::max(rep.floor, rep.plateau);
  std::size_t b = 0;
  while (b < nodes.size() && rep.mass_t[b] >= fc.max_mass) ++b;
  std::size_t e = b;
  while (e < nodes.size() && rep.rho_t[e] > fc.floor_factor * rep.floor) ++e;
  rep.fit_begin = b;
  rep.fit_end = e;
  if (e >= b + 3) {
    std::vector<double> xs(rep.s.begin() + static_cast<std::ptrdiff_t>(b),
                           rep.s.begin() + static_cast<std::ptrdiff_t>(e));
    std::vector<double> ys;
    for (std::size_t k = b; k < e; ++k) ys.push_back(std::log(rep.rho_t[k]));
    rep.gamma_hat = -fit_line(xs, ys).slope;
    rep.fit_ok = rep.gamma_hat > 0.0;
  }
}

FastLimitErrorReport fast_limit_error(const ModelSpec& model, const AveragedModel& avg,
                                      const SimConfig& base, const FastLimitConfig& fc) {
  FastLimitErrorReport rep;
  fast_limit_terminal(model, avg, base, fc, rep);
  fast_limit_transient(model, avg, base, fc, rep);
  return rep;
}

PathFunctional linear_slice_residual(const ModelSpec& m) {
  require(m.name == "linear_ou", "linear_slice_residual needs the linear_ou model");
  const double a = param(m, "a"), c = param(m, "c"), k0 = param(m, "kappa0");
  require(a - k0 != 0.0, "linear_slice_residual needs a != kappa0");
  return [a, c, k0](const double* x, const double* y, std::size_t n, const MeasureView& mu,
                    double* out) {
    const double mbar = c * mu.moments().mean.at(0) / (a - k0);
    for (std::size_t i = 0; i < n; ++i) out[i] = y[i] - (c * x[i] + k0 * mbar) / a;
  };
}

RateReport fluctuation_estimate(const ModelSpec& model, const SimConfig& base,
                                const PathFunctional& f, const FluctuationConfig& fc) {
  const RateConfig& rc = fc.rate;
  rc.validate();
  base.validate();
  // Centering at three probe times along a pilot trajectory.
  {
    SimConfig pilot = base;
    pilot.seed = rc.seeds.front();
    pilot.epsilon = rc.eps_list.front();
    const std::size_t K = pilot.steps();
    std::vector<double> probes;
    for (std::size_t k : {K / 4, K / 2, K}) probes.push_back(pilot.time_of(k));
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
    const Trajectory traj = simulate(model, pilot, nullptr, probes);
    for (const auto& snap : traj) {
      const EmpiricalMeasure& mu = snap.slow;
      const EmpiricalMeasure atoms =
          mu.size() > fc.probe_atoms ? resample(mu, fc.probe_atoms, pilot.seed) : mu;
      // The nu slot is the fast law the system actually carries at this time.
      const InvariantFamily fam = solve_frozen_slot(model, mu, &snap.fast, atoms, fc.frozen);
      const MeasureView mv(mu);
      const auto d1 = static_cast<std::size_t>(model.d1);
      for (std::size_t j = 0; j < atoms.size(); ++j) {
        const EmpiricalMeasure& sl = fam.slices[j];
        std::vector<double> xr(sl.size() * d1), vals(sl.size());
        for (std::size_t i = 0; i < sl.size(); ++i) {
          std::copy(atoms.atom(j).begin(), atoms.atom(j).end(), xr.begin() + static_cast<std::ptrdiff_t>(i * d1));
        }
        f(xr.data(), sl.coords().data(), sl.size(), mv, vals.data());
        double s = 0.0;
        for (std::size_t i = 0; i < sl.size(); ++i) s += sl.weight(i) * vals[i];
        if (std::abs(s) > fc.centering_tol) {
          throw ValidationError("fluctuation functional is not centered at t = " +
                                format_double(snap.t) + ": slice mean " + format_double(s));
        }
      }
    }
  }

  RateReport r = base_report("fluctuation", rc);
  const std::size_t S = rc.seeds.size(), E = rc.eps_list.size();
  std::vector<std::vector<double>> val(E, std::vector<double>(S));
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t i = 0; i < S; ++i) {
      SimConfig cfg = base;
      cfg.epsilon = rc.eps_list[e];
      cfg.seed = rc.seeds[i];
      std::vector<double> integral(cfg.N, 0.0);
      StepExtras ex;
      ex.path_fn = &f;
      ex.integral = &integral;
      simulate(model, cfg, nullptr, {cfg.T}, ex);
      double s = 0.0;
      for (double v : integral) s += v * v;
      val[e][i] = s / static_cast<double>(integral.size());
    }
  }
  const Estimator est = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> out(E, 0.0);
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t i : idx) out[e] += val[e][i];
      out[e] /= static_cast<double>(idx.size());
    }
    return out;
  };
  std::vector<std::size_t> all(S);
  for (std::size_t i = 0; i < S; ++i) all[i] = i;
  r.errors = est(all);
  for (std::size_t e = 0; e < E; ++e) {
    r.stderrs.push_back(sample_sd(val[e]) / std::sqrt(static_cast<double>(S)));
    r.floor.push_back(r.stderrs.back());
  }
  fit_rate(r, est, S, rc.batches, rc.floor_factor);
  return r;
}

WrongLimitReport wrong_limit_demo(const WrongLimitConfig& wc) {
  require(!wc.atoms.empty(), "wrong-limit demo needs initial atoms");
  require(wc.seeds.size() >= 2, "wrong-limit demo needs at least 2 seeds");
  const ModelSpec model = builtin("nu_only_drift", {{"a", wc.a},
                                                    {"c", wc.c},
                                                    {"kappa0", wc.kappa0},
                                                    {"g0", wc.g0},
                                                    {"sigma0", wc.sigma0}});
  SimConfig cfg;
  cfg.epsilon = wc.eps;
  cfg.N = wc.N;
  cfg.T = wc.T;
  cfg.h_slow = wc.h;
  cfg.initial_slow = SamplerSpec::from_measure(EmpiricalMeasure::uniform(1, wc.atoms));
  cfg.validate();

  AveragedModel correct{model, wc.averaged, Variant::correct};
  AveragedModel naive{model, wc.averaged, Variant::naive};

  WrongLimitReport rep;
  const double m0 = mmv::mean(wc.atoms);
  const double mbar0 = wc.a - wc.kappa0 != 0.0 ? wc.c * m0 / (wc.a - wc.kappa0) : 0.0;
  for (double x : wc.atoms) {
    rep.drift_gap = std::max(rep.drift_gap, std::abs((wc.c * x + wc.kappa0 * mbar0) / wc.a - mbar0));
  }
  rep.degenerate = rep.drift_gap <= 1e-12;

  const std::size_t S = wc.seeds.size();
  std::vector<double> dc(S), dn(S), pf(S), pc(S), pn(S), vf(S), vc(S), vn(S);
  auto var = [](const EmpiricalMeasure& m) {
    const double e = mean_of(m)[0];
    return second_moment(m) - e * e;
  };
  for (std::size_t i = 0; i < S; ++i) {
    SimConfig c = cfg;
    c.seed = wc.seeds[i];
    const EmpiricalMeasure xf = simulate(model, c, nullptr, {c.T}).back().slow;
    SimConfig ca = c;
    ca.seed = splitmix64(wc.seeds[i] ^ 0x77AAu);
    const EmpiricalMeasure xc = simulate_averaged(correct, ca, {c.T}).back().slow;
    const EmpiricalMeasure xn = simulate_averaged(naive, ca, {c.T}).back().slow;
    pf[i] = wc.phi(xf);
    pc[i] = wc.phi(xc);
    pn[i] = wc.phi(xn);
    vf[i] = var(xf);
    vc[i] = var(xc);
    vn[i] = var(xn);
    dc[i] = pf[i] - pc[i];
    dn[i] = pf[i] - pn[i];
  }
  rep.phi_full = mmv::mean(pf);
  rep.phi_correct = mmv::mean(pc);
  rep.phi_naive = mmv::mean(pn);
  rep.var_full = mmv::mean(vf);
  rep.var_correct = mmv::mean(vc);
  rep.var_naive = mmv::mean(vn);
  rep.d_correct = std::abs(mmv::mean(dc));
  rep.d_naive = std::abs(mmv::mean(dn));
  rep.stderr_mc = std::max(sample_sd(dc), sample_sd(dn)) / std::sqrt(static_cast<double>(S));
  rep.pass = !rep.degenerate && rep.d_naive >= 5.0 * std::max(rep.d_correct, rep.stderr_mc);
  return rep;
}

std::vector<EmpiricalMeasure> default_mollifier_probes(std::uint64_t seed) {
  const std::size_t m = 4096;
  const Stream stream(seed, StreamTag::probe);
  std::vector<EmpiricalMeasure> out;
  const double centers[] = {-1.5, -0.5, 0.0, 0.7, 2.0};
  for (std::size_t k = 0; k < 5; ++k) {
    std::vector<double> z(m);
    stream.normals(k, 0, m, 1, z.data());
    for (double& v : z) v = centers[k] + 0.5 * v;
    out.push_back(EmpiricalMeasure::uniform(1, std::move(z)));
  }
  return out;
}

RateReport mollifier_rate(const MollifierConfig& mc) {
  require(mc.n_list.size() >= 2, "mollifier sweep needs at least 2 values of n");
  for (std::size_t i = 1; i < mc.n_list.size(); ++i) {
    require(mc.n_list[i] > mc.n_list[i - 1], "n list must be strictly increasing");
  }
  const auto probes = mc.probes.empty() ? default_mollifier_probes(mc.seed) : mc.probes;
  auto f = [&](const EmpiricalMeasure& mu) {
    switch (mc.fn) {
      case MollifierConfig::Fn::total_mass: {
        double s = 0.0;
        for (double w : mu.weights()) s += w;
        return s;
      }
      case MollifierConfig::Fn::mean:
        return mean_of(mu)[0];
      case MollifierConfig::Fn::tanh_mean:
        return TestFunction{TestFunction::Kind::tanh_mean, {}}(mu);
    }
    return 0.0;
  };
  RateReport r;
  r.experiment = "mollifier";
  r.x_name = "n";
  r.target = mc.target;
  r.band_lo = -std::numeric_limits<double>::infinity();
  r.band_hi = mc.band_hi;
  for (int n : mc.n_list) {
    double sup = 0.0;
    for (const auto& mu : probes) {
      sup = std::max(sup, std::abs(f(mollify_measure(mu, n, mc.kernel, mc.seed)) - f(mu)));
    }
    r.x.push_back(static_cast<double>(n));
    r.errors.push_back(sup);
    r.stderrs.push_back(0.0);
    r.floor.push_back(1e-14);
  }
  fit_rate(r, [&](const std::vector<std::size_t>&) { return r.errors; }, 1, 1, 1.0);
  return r;
}

}  // namespace mmv
