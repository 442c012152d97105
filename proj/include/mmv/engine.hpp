#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "mmv/measure.hpp"
#include "mmv/model.hpp"
#include "mmv/rng.hpp"

namespace mmv {

// Per-coordinate initial laws, or resampling from a given measure.
struct SamplerSpec {
  enum class Kind { point, gauss, uniform, measure };
  Kind kind = Kind::point;
  std::vector<double> a;  // point value, gauss mean, uniform low
  std::vector<double> b;  // gauss sd, uniform high
  std::shared_ptr<const EmpiricalMeasure> source;

  static SamplerSpec point(std::vector<double> v);
  static SamplerSpec gauss(std::vector<double> mean, std::vector<double> sd);
  static SamplerSpec uniform(std::vector<double> lo, std::vector<double> hi);
  static SamplerSpec from_measure(EmpiricalMeasure m);

  int dim() const;
  void validate(int expected_dim, const char* what) const;
  // out[i*dim ..] for particles first .. first+count-1.
  void sample(const Stream& stream, std::uint32_t first, std::size_t count,
              double* out) const;
  // Mean of the law (exact, not sampled).
  std::vector<double> mean() const;
};

struct SimConfig {
  double epsilon = 0.1;
  double h_slow = 0.01;
  double eta_fast = 0.1;
  std::size_t N = 1024;
  double T = 1.0;
  std::uint64_t seed = 1;
  SamplerSpec initial_slow = SamplerSpec::point({0.0});
  SamplerSpec initial_fast = SamplerSpec::point({0.0});

  void validate() const;
  std::size_t steps() const;   // T / h_slow
  std::size_t n_sub() const;   // ceil(h / (eps * eta))
  double time_of(std::size_t step) const { return static_cast<double>(step) * h_slow; }
};

struct SlowFastEnsemble {
  int d1 = 1;
  int d2 = 1;
  std::size_t step = 0;
  double t = 0.0;
  std::vector<double> X;  // N x d1
  std::vector<double> Y;  // N x d2
  std::size_t size() const { return d1 == 0 ? 0 : X.size() / static_cast<std::size_t>(d1); }
};

// Measure flows sampled on a time grid, read piecewise constant and
// left-continuous: time t uses the first node t_k >= t.
class DistributionFlow {
 public:
  DistributionFlow() = default;
  DistributionFlow(std::vector<double> times, std::vector<EmpiricalMeasure> mu,
                   std::vector<EmpiricalMeasure> nu);
  static DistributionFlow constant(double T, EmpiricalMeasure mu, EmpiricalMeasure nu);

  bool empty() const { return !data_ || data_->times.empty(); }
  std::size_t size() const { return data_ ? data_->times.size() : 0; }
  const std::vector<double>& times() const { return data_->times; }
  std::size_t node_at(double t) const;
  const EmpiricalMeasure& mu(std::size_t k) const { return data_->mu[k]; }
  const EmpiricalMeasure& nu(std::size_t k) const { return data_->nu[k]; }
  const MeasureView& mu_view(std::size_t k) const { return data_->mu_view[k]; }
  const MeasureView& nu_view(std::size_t k) const { return data_->nu_view[k]; }

 private:
  struct Data {
    std::vector<double> times;
    std::vector<EmpiricalMeasure> mu, nu;
    std::vector<MeasureView> mu_view, nu_view;
  };
  std::shared_ptr<const Data> data_;
};

struct Snapshot {
  double t = 0.0;
  EmpiricalMeasure slow;
  EmpiricalMeasure fast;
};

using Trajectory = std::vector<Snapshot>;

// f(x, mu, y) evaluated per particle at fast-substep resolution.
using PathFunctional =
    std::function<void(const double* x, const double* y, std::size_t n,
                       const MeasureView& mu, double* out)>;

struct StepExtras {
  // When set, integral[i] accumulates the trapezoidal time integral of f
  // along particle i's path.
  const PathFunctional* path_fn = nullptr;
  std::vector<double>* integral = nullptr;
};

SlowFastEnsemble initial_ensemble(const ModelSpec& model, const SimConfig& cfg);

void step_coupled(const ModelSpec& model, SlowFastEnsemble& ens, const SimConfig& cfg,
                  const StepExtras& extras = {});
void step_nonautonomous(const ModelSpec& model, const DistributionFlow& flow,
                        SlowFastEnsemble& ens, const SimConfig& cfg,
                        const StepExtras& extras = {});

// Runs to the last record time. flow == nullptr selects the coupled system.
Trajectory simulate(const ModelSpec& model, const SimConfig& cfg,
                    const DistributionFlow* flow, const std::vector<double>& record,
                    const StepExtras& extras = {});

// All multiples of h_slow in [0, T].
std::vector<double> full_grid(const SimConfig& cfg);
std::size_t step_index(const SimConfig& cfg, double t);

// Flow of recorded (slow, fast) laws, usable as a frozen flow.
DistributionFlow flow_from(const Trajectory& traj);

// Threshold above which a coordinate counts as blown up.
inline constexpr double kBlowUp = 1e8;

namespace detail {
// out_i = scale * S_i z_i for d x d matrices S (S_stride = 0 means shared).
void apply_diffusion(const double* S, std::size_t S_stride, const double* z,
                     std::size_t n, int d, double scale, double* out);
void check_finite(const std::vector<double>& v, int dim, double t, const char* where);
}  // namespace detail

}  // namespace mmv
