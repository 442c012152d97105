#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmv/engine.hpp"
#include "mmv/measure.hpp"
#include "mmv/model.hpp"

namespace mmv {

struct FrozenConfig {
  std::size_t K = 64;          // fast particles per slice
  double burn_in = 0.0;        // fast time; 0 selects 8 / (C1 / 2)
  double avg_window = 0.0;     // fast time; 0 selects 4 * burn_in
  double picard_tol = 1e-2;
  int picard_max = 20;
  double h_fast = 0.1;
  std::uint64_t seed = 1;
  // Snapshots kept per slice over the window (moments use every step).
  std::size_t snapshots = 16;
  // Starting law of the fast particles; also the recursion's zeta_0.
  SamplerSpec initial = SamplerSpec::point({0.0});

  void validate() const;
  double burn_in_for(const ModelSpec& m) const;
  double window_for(const ModelSpec& m) const;
};

struct FamilyDiagnostics {
  double burn_in = 0.0;
  double avg_window = 0.0;
  double gamma_hat = 0.0;   // prior C1 / 2 unless a fit was supplied
  double residual = 0.0;    // rho_V(pooled at window start, at window end)
  bool nonstationary = false;
  std::size_t steps = 0;
};

struct InvariantFamily {
  EmpiricalMeasure mu;
  std::vector<EmpiricalMeasure> slices;
  EmpiricalMeasure pooled;
  // Window averages over every fast step, per slice and pooled.
  std::vector<std::vector<double>> slice_mean;
  std::vector<std::vector<double>> slice_m2;
  std::vector<double> pooled_mean;
  std::vector<double> pooled_m2;  // per coordinate
  FamilyDiagnostics diag;
};

// Frozen fast dynamics for the atoms of `atoms` (each replicated K times),
// with the mu slot fixed at mu_slot. nu_fixed == nullptr makes the nu slot the
// live weight-pooled law of all fast particles (self-consistent system);
// otherwise every slice is an ordinary SDE driven by the fixed nu.
InvariantFamily solve_frozen_slot(const ModelSpec& model, const EmpiricalMeasure& mu_slot,
                                  const EmpiricalMeasure* nu_fixed,
                                  const EmpiricalMeasure& atoms, const FrozenConfig& cfg);

InvariantFamily solve_frozen_pooled(const ModelSpec& model, const EmpiricalMeasure& mu,
                                    const FrozenConfig& cfg);

// One recursion step with the nu slot frozen at prev->pooled, or at zeta_0
// (the law of cfg.initial) when prev is null.
InvariantFamily solve_frozen_recursive(const ModelSpec& model, const EmpiricalMeasure& mu,
                                       const InvariantFamily* prev, const FrozenConfig& cfg);

// Law of a sampler as a measure: exact for points, 4096 draws otherwise.
EmpiricalMeasure sampler_law(const SamplerSpec& s, std::uint64_t seed);

struct RecursionReport {
  std::vector<InvariantFamily> iterates;  // zeta_1 .. zeta_n
  std::vector<double> distances;          // rho_V(pooled_n, pooled_{n-1}), pooled_0 = zeta_0
  double contraction_ratio = 0.0;         // median of distances[n+1] / distances[n], n >= 1
  bool contracting = true;
  bool converged = false;                 // some distance fell below picard_tol
};

// Runs n recursion steps (n <= 0: until picard_tol or picard_max). With
// fresh_seeds each step draws new noise, otherwise every step reuses cfg.seed.
RecursionReport run_recursion(const ModelSpec& model, const EmpiricalMeasure& mu,
                              const FrozenConfig& cfg, int n, bool fresh_seeds = false);

struct ErgodicityConfig {
  double s_min = 0.02;
  double s_max = 6.0;
  int grid = 40;
  double h_fast = 0.01;
  std::uint64_t seed = 1;
  double floor_factor = 3.0;  // fit only where rho_V > floor_factor * floor
  double max_mass = 1.0;      // and where the unweighted mass is below this
};

struct ErgodicityFit {
  double gamma_hat = 0.0;
  double c_hat = 0.0;
  double noise_floor = 0.0;
  std::vector<double> s;
  std::vector<double> rho;
  std::vector<double> mass;
  std::size_t fit_begin = 0, fit_end = 0;  // [begin, end) of the fitted points
};

// Fast SDE with both slots frozen, started from y0_cloud, compared with its
// stationary law on a log-spaced grid.
ErgodicityFit ergodicity_fit(const ModelSpec& model, const std::vector<double>& x,
                             const EmpiricalMeasure& mu, const EmpiricalMeasure& nu_frozen,
                             const EmpiricalMeasure& y0_cloud, const ErgodicityConfig& cfg);

using FastFunction = std::function<double(const double* y)>;

struct PoissonConfig {
  double T_max = 0.0;     // 0: ln(1e3) / gamma
  double gamma = 0.0;     // 0: C1 / 2
  std::size_t n_paths = 8192;
  double h_fast = 0.01;
  double centering_tol = 0.05;
  std::uint64_t seed = 1;
};

struct PoissonResult {
  double value = 0.0;
  double std_error = 0.0;
  double T_max = 0.0;
  double centering = 0.0;  // integral of f against the estimated slice
};

// Integral over [0, T_max] of E f(Y_s) for the frozen equation at (x, mu)
// started at y, with nu frozen at the pooled invariant law of mu.
PoissonResult solve_poisson(const ModelSpec& model, const FastFunction& f,
                            const std::vector<double>& x, const EmpiricalMeasure& mu,
                            const std::vector<double>& y, const FrozenConfig& frozen,
                            const PoissonConfig& cfg);

// mu.csv, slice_<j>.csv, pooled.csv, diag.json under dir.
void write_family(const InvariantFamily& fam, const std::string& dir);

}  // namespace mmv
