#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mmv/averaging.hpp"
#include "mmv/engine.hpp"
#include "mmv/frozen.hpp"

namespace mmv {

struct IterationConfig {
  int n_max = 8;
  double tol = 0.0;             // stop once the combined metric drops below; 0 never stops
  std::vector<double> record;   // flow nodes; empty selects every slow step
  double kappa = -1.0;          // weight of the fast metric; < 0 selects meta.kappa
  double p = 2.0;               // rho_V weight exponent
  std::size_t family_atoms = 256;  // slow atoms per frozen solve in the averaged recursion

  void validate() const;
};

struct IterationState {
  int n = 0;
  DistributionFlow flow;   // laws of iterate n - 1 read by this iterate (empty for n = 0)
  Trajectory traj;         // recorded (slow, fast) laws of iterate n
  // Averaged runs only: pooled recursive family zeta_n at each node.
  std::vector<EmpiricalMeasure> families;
  double sup_w2_slow = 0.0;
  double sup_rho_fast = 0.0;
  double metric = 0.0;
  double contraction_ratio = 0.0;  // metric_n / metric_{n-1}; NaN for n < 2
};

struct IterationRun {
  std::vector<IterationState> states;  // states[0] is the constant-flow start
  bool converged = false;
};

// Sequence of non-autonomous particle systems, iterate n reading the recorded
// laws of iterate n - 1. All iterates share cfg.seed.
IterationRun iterate_full(const ModelSpec& model, const SimConfig& cfg, const IterationConfig& it);

// Averaged counterpart: the recursive frozen family zeta_n and the averaged
// trajectory driven by (L(Xbar^{n-1}), zeta_{n-1}).
IterationRun iterate_averaged(const AveragedModel& avg, const SimConfig& cfg,
                              const IterationConfig& it);

struct CrossRow {
  double eps = 0.0;
  int n = 0;
  double w2_slow = 0.0;   // W2 of the slow laws at the final node
  double rho_fast = 0.0;  // rho_V of the fast laws at the final node
};

struct CrossReport {
  std::vector<CrossRow> rows;
  // Per eps: max over n of w2_slow within 2x of the n = 1 value.
  std::vector<bool> uniform_in_n;
  // Per n >= 1: w2_slow decreasing as eps decreases.
  std::vector<bool> decays_in_eps;
};

CrossReport cross_validate(const std::vector<IterationRun>& full_per_eps, const IterationRun& avg,
                           const std::vector<double>& eps_list, double p = 2.0);

void write_iteration_report(const std::string& path, const IterationRun& run,
                            const std::string& kind);

}  // namespace mmv
