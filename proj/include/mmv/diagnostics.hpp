#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mmv/averaging.hpp"
#include "mmv/engine.hpp"
#include "mmv/frozen.hpp"
#include "mmv/measure.hpp"

namespace mmv {

struct TestFunction {
  enum class Kind { mean, second_moment, tanh_mean, w2_reference, constant };
  Kind kind = Kind::mean;
  EmpiricalMeasure reference;  // w2_reference only

  double operator()(const EmpiricalMeasure& mu) const;
  std::string name() const;
  static TestFunction parse(const std::string& name);
};

struct RateConfig {
  std::vector<double> eps_list;       // strictly decreasing, at least 3 entries
  std::vector<std::uint64_t> seeds;
  double target = 1.0;
  double band_lo = 0.7;
  double band_hi = 1.3;
  double floor_factor = 2.0;          // points below floor_factor * floor are not fitted
  std::size_t batches = 8;            // jackknife groups over seeds
  std::size_t floor_seeds = 4;        // seeds spent on noise-floor replicates

  void validate() const;
};

struct RateReport {
  std::string experiment;
  std::string x_name = "eps";
  std::vector<double> x;
  std::vector<double> errors;
  std::vector<double> stderrs;
  std::vector<double> floor;
  std::vector<bool> used;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double halfwidth = std::numeric_limits<double>::quiet_NaN();
  double target = 1.0;
  double band_lo = 0.0;
  double band_hi = 0.0;
  bool floor_limited = false;
  bool in_band = false;
  bool pass = false;
};

void write_rate_report(const std::string& json_path, const std::string& csv_path,
                       const RateReport& r);

// Terminal laws of the full system per (eps, seed) and of the averaged system
// per seed. With crn the averaged run of seed i shares its slow noise and
// initial draw with the full runs of seed i.
struct SweepData {
  std::vector<double> eps;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<Snapshot>> full;  // [eps][seed]
  std::vector<Snapshot> averaged;           // [seed]
  // Per floor seed: E|Xbar - Xbar'|^2 / 2 for two averaged runs that differ
  // only in their micro streams.
  std::vector<double> averaged_floor;
  bool crn = true;
};

SweepData run_sweep(const ModelSpec& model, const AveragedModel& avg, const SimConfig& base,
                    const RateConfig& rc, bool crn = true);

// E|X^eps_T - Xbar_T|^2 over particles and seeds.
RateReport strong_rate(const SweepData& sweep, const RateConfig& rc);
RateReport strong_rate(const ModelSpec& model, const AveragedModel& avg, const SimConfig& base,
                       const RateConfig& rc, bool crn = true);

// |phi(L(X^eps_T)) - phi(L(Xbar_T))| with the full run of seed i paired with
// the averaged run of the next seed, so the two legs never share noise.
RateReport weak_rate(const SweepData& sweep, const RateConfig& rc, const TestFunction& phi);
RateReport weak_rate(const ModelSpec& model, const AveragedModel& avg, const SimConfig& base,
                     const RateConfig& rc, const TestFunction& phi);

struct FastLimitConfig {
  std::vector<double> eps_list;
  std::vector<std::uint64_t> seeds;
  std::size_t max_atoms = 256;   // slow atoms per frozen solve of the limit law
  double p = 2.0;
  int cells = 16;
  double transient_eps = 0.05;
  double horizon = 5.0;          // transient window in units of eps
  double floor_factor = 3.0;
  double max_mass = 1.0;         // points with larger binned mass are saturated
  FrozenConfig frozen;

  void validate() const;
};

struct FastLimitErrorReport {
  std::vector<double> eps;
  std::vector<std::vector<double>> rho;   // [eps][seed] at t = T
  std::vector<double> median;             // [eps]
  bool decreasing = false;
  // Transient regime at eps = transient_eps, averaged over seeds.
  std::vector<double> s;                  // t / eps
  std::vector<double> rho_t;
  std::vector<double> mass_t;
  double replicate_floor = 0.0;  // rho_V between two replicates at the last node
  double plateau = 0.0;          // median rho_V over the last third of the window
  double floor = 0.0;            // larger of the two
  std::size_t fit_begin = 0;
  std::size_t fit_end = 0;
  double gamma_hat = std::numeric_limits<double>::quiet_NaN();
  bool fit_ok = false;
};

// Both regimes with one base configuration.
FastLimitErrorReport fast_limit_error(const ModelSpec& model, const AveragedModel& avg,
                                      const SimConfig& base, const FastLimitConfig& fc);
// Regime (a): rho_V at t = T per eps and seed; fills eps, rho, median, decreasing.
void fast_limit_terminal(const ModelSpec& model, const AveragedModel& avg, const SimConfig& base,
                         const FastLimitConfig& fc, FastLimitErrorReport& rep);
// Regime (b): rho_V against t / eps at transient_eps; fills the transient fields.
void fast_limit_transient(const ModelSpec& model, const AveragedModel& avg, const SimConfig& base,
                          const FastLimitConfig& fc, FastLimitErrorReport& rep);

struct FluctuationConfig {
  RateConfig rate;
  double centering_tol = 0.05;
  std::size_t probe_atoms = 32;
  FrozenConfig frozen;
};

// f(x, mu, y) = y - m(x, mu) for linear_ou, with the closed-form slice mean
// m(x, mu) = (c x + kappa0 mbar) / a and mbar = c mean(mu) / (a - kappa0).
PathFunctional linear_slice_residual(const ModelSpec& linear_ou);

// E|int_0^T f(X_s, Y_s) ds|^2 per eps. The centering of f against the frozen
// family is checked at three probe times first.
RateReport fluctuation_estimate(const ModelSpec& model, const SimConfig& base,
                                const PathFunctional& f, const FluctuationConfig& fc);

struct WrongLimitConfig {
  double a = 2.0;
  double c = 1.0;
  double kappa0 = 0.25;
  double g0 = 1.4142135623730951;
  double sigma0 = 1.0;
  std::vector<double> atoms = {-1.0, 1.0};
  double eps = 0.01;
  std::size_t N = 4096;
  double T = 1.0;
  double h = 0.01;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8};
  TestFunction phi{TestFunction::Kind::second_moment, {}};
  AveragedConfig averaged;
};

struct WrongLimitReport {
  double d_correct = 0.0;
  double d_naive = 0.0;
  double stderr_mc = 0.0;
  double phi_full = 0.0;
  double phi_correct = 0.0;
  double phi_naive = 0.0;
  double var_full = 0.0;
  double var_correct = 0.0;
  double var_naive = 0.0;
  double drift_gap = 0.0;   // max over atoms of |naive - correct| drift at t = 0
  bool degenerate = false;
  bool pass = false;
};

WrongLimitReport wrong_limit_demo(const WrongLimitConfig& wc);

struct MollifierConfig {
  enum class Fn { total_mass, mean, tanh_mean };
  Fn fn = Fn::tanh_mean;
  std::vector<int> n_list = {2, 4, 8, 16, 32};
  KernelSpec kernel;
  std::vector<EmpiricalMeasure> probes;   // empty selects default_mollifier_probes
  std::uint64_t seed = 1;
  double target = -1.0;
  double band_hi = -0.8;
};

std::vector<EmpiricalMeasure> default_mollifier_probes(std::uint64_t seed);

// sup over probes of |f(mu * rho^n) - f(mu)| against n.
RateReport mollifier_rate(const MollifierConfig& mc);

}  // namespace mmv
