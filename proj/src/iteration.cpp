#include "mmv/iteration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "mmv/error.hpp"

namespace mmv {

void IterationConfig::validate() const {
  require(n_max >= 0, "n_max must be >= 0");
  require(std::isfinite(tol) && tol >= 0.0, "iteration tol must be >= 0");
  require(p >= 1.0, "rho_V exponent must be >= 1");
  require(family_atoms >= 1, "family_atoms must be positive");
  require(std::is_sorted(record.begin(), record.end()), "iteration record grid must be increasing");
}

namespace {

std::vector<double> record_grid(const SimConfig& cfg, const IterationConfig& it) {
  auto r = it.record.empty() ? full_grid(cfg) : it.record;
  require(!r.empty() && r.front() == 0.0, "iteration record grid must start at 0");
  require(std::abs(r.back() - cfg.T) <= 1e-9 * std::max(1.0, cfg.T),
          "iteration record grid must end at T");
  for (double t : r) step_index(cfg, t);
  return r;
}

// Constant start: iterate 0 has X = xi and Y = eta for all t.
Trajectory constant_start(const ModelSpec& model, const SimConfig& cfg,
                          const std::vector<double>& record) {
  const SlowFastEnsemble ens = initial_ensemble(model, cfg);
  const EmpiricalMeasure x0 = EmpiricalMeasure::uniform(model.d1, ens.X);
  const EmpiricalMeasure y0 = EmpiricalMeasure::uniform(model.d2, ens.Y);
  Trajectory traj;
  for (double t : record) traj.push_back(Snapshot{t, x0, y0});
  return traj;
}

void finish_metrics(IterationRun& run, double kappa_weight, double tol) {
  IterationState& s = run.states.back();
  s.metric = s.sup_w2_slow + kappa_weight * s.sup_rho_fast;
  if (s.n >= 2) {
    const double prev = run.states[run.states.size() - 2].metric;
    s.contraction_ratio = prev > 0.0 ? s.metric / prev : std::numeric_limits<double>::infinity();
  } else {
    s.contraction_ratio = std::numeric_limits<double>::quiet_NaN();
  }
  if (tol > 0.0 && s.n >= 1 && s.metric < tol) run.converged = true;
}

bool same_coords(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  return a.coords() == b.coords() && a.weights() == b.weights();
}

}  // namespace

IterationRun iterate_full(const ModelSpec& model, const SimConfig& cfg, const IterationConfig& it) {
  model.validate();
  cfg.validate();
  it.validate();
  const auto record = record_grid(cfg, it);
  const WeightFunction V{it.p};

  IterationRun run;
  IterationState s0;
  s0.traj = constant_start(model, cfg, record);
  s0.contraction_ratio = std::numeric_limits<double>::quiet_NaN();
  run.states.push_back(std::move(s0));
  for (int n = 1; n <= it.n_max && !run.converged; ++n) {
    const IterationState& prev = run.states.back();
    IterationState s;
    s.n = n;
    s.flow = flow_from(prev.traj);
    s.traj = simulate(model, cfg, &s.flow, record);
    for (std::size_t k = 0; k < s.traj.size(); ++k) {
      s.sup_w2_slow = std::max(s.sup_w2_slow, w2_distance(s.traj[k].slow, prev.traj[k].slow));
      s.sup_rho_fast =
          std::max(s.sup_rho_fast, weighted_tv_distance(s.traj[k].fast, prev.traj[k].fast, V));
    }
    run.states.push_back(std::move(s));
    finish_metrics(run, 1.0, it.tol);
  }
  return run;
}

IterationRun iterate_averaged(const AveragedModel& avg, const SimConfig& cfg,
                              const IterationConfig& it) {
  const ModelSpec& model = avg.model;
  model.validate();
  cfg.validate();
  avg.cfg.validate();
  it.validate();
  const auto record = record_grid(cfg, it);
  const WeightFunction V{it.p};
  const double kappa = it.kappa >= 0.0 ? it.kappa : model.meta.kappa;
  const FrozenConfig& fcfg = avg.cfg.frozen;

  IterationRun run;
  IterationState s0;
  s0.traj = constant_start(model, cfg, record);
  for (const auto& snap : s0.traj) s0.families.push_back(snap.fast);
  s0.contraction_ratio = std::numeric_limits<double>::quiet_NaN();
  run.states.push_back(std::move(s0));

  for (int n = 1; n <= it.n_max && !run.converged; ++n) {
    const IterationState& prev = run.states.back();
    IterationState s;
    s.n = n;
    std::vector<EmpiricalMeasure> mu_prev, zeta_prev = prev.families;
    for (const auto& snap : prev.traj) mu_prev.push_back(snap.slow);
    s.flow = DistributionFlow(record, mu_prev, zeta_prev);

    // (a) averaged trajectory in the frozen flow.
    AveragedRunOptions opts;
    opts.flow = &s.flow;
    s.traj = simulate_averaged(avg, cfg, record, opts);

    // (b) recursive family at every node: slots from iterate n-1, mixed over
    // the current slow law. Repeated nodes are solved once.
    for (std::size_t k = 0; k < record.size(); ++k) {
      const EmpiricalMeasure& x_law = s.traj[k].slow;
      if (k > 0 && same_coords(mu_prev[k], mu_prev[k - 1]) &&
          same_coords(zeta_prev[k], zeta_prev[k - 1]) &&
          same_coords(x_law, s.traj[k - 1].slow)) {
        s.families.push_back(s.families.back());
        continue;
      }
      const EmpiricalMeasure atoms = x_law.size() > it.family_atoms
                                         ? resample(x_law, it.family_atoms, fcfg.seed)
                                         : x_law;
      s.families.push_back(solve_frozen_slot(model, mu_prev[k], &zeta_prev[k], atoms, fcfg).pooled);
    }

    for (std::size_t k = 0; k < record.size(); ++k) {
      s.sup_w2_slow = std::max(s.sup_w2_slow, w2_distance(s.traj[k].slow, prev.traj[k].slow));
      s.sup_rho_fast =
          std::max(s.sup_rho_fast, weighted_tv_distance(s.families[k], prev.families[k], V));
    }
    run.states.push_back(std::move(s));
    finish_metrics(run, kappa, it.tol);
  }
  return run;
}

CrossReport cross_validate(const std::vector<IterationRun>& full_per_eps, const IterationRun& avg,
                           const std::vector<double>& eps_list, double p) {
  require(full_per_eps.size() == eps_list.size(), "one full iteration run per eps is required");
  const WeightFunction V{p};
  CrossReport rep;
  const std::size_t n_avg = avg.states.size();
  std::size_t n_common = n_avg;
  for (const auto& run : full_per_eps) n_common = std::min(n_common, run.states.size());
  std::vector<std::vector<double>> w2(eps_list.size());
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    for (std::size_t n = 1; n < n_common; ++n) {
      const Snapshot& f = full_per_eps[e].states[n].traj.back();
      const Snapshot& a = avg.states[n].traj.back();
      CrossRow row;
      row.eps = eps_list[e];
      row.n = static_cast<int>(n);
      row.w2_slow = w2_distance(f.slow, a.slow);
      row.rho_fast = weighted_tv_distance(f.fast, a.fast, V);
      w2[e].push_back(row.w2_slow);
      rep.rows.push_back(row);
    }
    bool ok = !w2[e].empty();
    for (double v : w2[e]) ok = ok && v <= 2.0 * w2[e].front();
    rep.uniform_in_n.push_back(ok);
  }
  // eps_list is expected in decreasing order.
  for (std::size_t n = 0; n + 1 < n_common; ++n) {
    bool ok = eps_list.size() >= 2;
    for (std::size_t e = 1; e < eps_list.size(); ++e) ok = ok && w2[e][n] < w2[e - 1][n];
    rep.decays_in_eps.push_back(ok);
  }
  return rep;
}

void write_iteration_report(const std::string& path, const IterationRun& run,
                            const std::string& kind) {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["converged"] = run.converged;
  auto& arr = j["metrics"] = nlohmann::ordered_json::array();
  for (const auto& s : run.states) {
    if (s.n == 0) continue;
    nlohmann::ordered_json m;
    m["n"] = s.n;
    m["sup_w2_slow"] = s.sup_w2_slow;
    m["sup_rhoV_fast"] = s.sup_rho_fast;
    m["metric"] = s.metric;
    if (std::isfinite(s.contraction_ratio)) {
      m["contraction_ratio"] = s.contraction_ratio;
    } else {
      m["contraction_ratio"] = nullptr;
    }
    arr.push_back(std::move(m));
  }
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace mmv
