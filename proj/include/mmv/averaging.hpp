#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mmv/engine.hpp"
#include "mmv/frozen.hpp"
#include "mmv/model.hpp"

namespace mmv {

enum class Variant { correct, naive };

std::string variant_name(Variant v);

struct AveragedConfig {
  FrozenConfig frozen;           // h_fast and burn-in defaults for micro-solves
  std::size_t K_micro = 16;      // micro particles per slow particle
  double micro_burn = 1.0;       // fast time relaxed before averaging, per slow step
  double micro_window = 1.0;     // fast time averaged per slow step
  double init_burn = 0.0;        // initial micro relaxation; 0: frozen burn-in default
  // Micro-solve slots are refreshed when W2(mu_now, mu_at_last_refresh)
  // exceeds refresh * (scale of mu_at_last_refresh). 0 refreshes every step;
  // infinity freezes the slots after the initial relaxation.
  double refresh = 0.05;
  // Seed of the micro streams; 0 uses the run seed.
  std::uint64_t micro_seed = 0;

  void validate() const;
};

struct AveragedModel {
  ModelSpec model;
  AveragedConfig cfg;
  Variant variant = Variant::correct;

  int d1() const { return model.d1; }
};

struct AveragedEval {
  std::vector<double> x;
  std::vector<double> bbar;
  std::vector<double> sigmabar;   // d1 x d1
  std::vector<double> b_stderr;   // naive i.i.d. standard error over slice atoms
};

// b-bar and sigma-bar at x_points for the law mu. Atoms of mu use their
// slices; other points use a tagged slice solved against the pooled law.
std::vector<AveragedEval> averaged_coefficients(const ModelSpec& model, const EmpiricalMeasure& mu,
                                                const std::vector<std::vector<double>>& x_points,
                                                const FrozenConfig& cfg, Variant variant);

// CSV: x1..xd, bbar1..bbard, sigmabar entries (row-major), variant, mu_hash.
void write_averaged_table(const std::string& path, const std::vector<AveragedEval>& evals,
                          Variant variant, const EmpiricalMeasure& mu);

struct AveragedRunOptions {
  // When set, micro-solves and coefficients read (mu, nu) from this flow
  // instead of the live slow law and pooled micro law.
  const DistributionFlow* flow = nullptr;
};

// Particle simulation of the averaged equation. Slow noise and initial slow
// particles use the same streams as the full system. Snapshot.fast holds the
// pooled micro ensemble at the node (slices at the recorded slow particles).
Trajectory simulate_averaged(const AveragedModel& avg, const SimConfig& cfg,
                             const std::vector<double>& record,
                             const AveragedRunOptions& opts = {});

struct CoupledPair {
  Trajectory full;
  Trajectory averaged;
};

// Full system and averaged equation with common slow noise and initial slow
// particles; the fast noise of the two runs is independent.
CoupledPair coupled_pair_simulate(const ModelSpec& model, const AveragedModel& avg,
                                  const SimConfig& cfg, const std::vector<double>& record,
                                  const StepExtras& extras = {});

struct FastLimit {
  std::vector<double> t;
  std::vector<EmpiricalMeasure> nu;
};

// Pooled invariant law at each recorded slow law. max_atoms > 0 resamples the
// slow law to that many atoms first.
FastLimit fast_limit(const Trajectory& avg_traj, const ModelSpec& model, const FrozenConfig& cfg,
                     std::size_t max_atoms = 0);

}  // namespace mmv
