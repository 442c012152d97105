#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mmv {

// Weighted atom cloud in R^dim. Coordinates are stored row-major
// (atom i occupies coords[i*dim .. i*dim+dim-1]).
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;
  EmpiricalMeasure(int dim, std::vector<double> coords,
                   std::vector<double> weights);

  static EmpiricalMeasure uniform(int dim, std::vector<double> coords);
  static EmpiricalMeasure point(std::vector<double> x);
  static EmpiricalMeasure point(double x) { return point(std::vector<double>{x}); }

  int dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  bool empty() const { return weights_.empty(); }

  std::span<const double> atom(std::size_t i) const {
    return {coords_.data() + i * static_cast<std::size_t>(dim_),
            static_cast<std::size_t>(dim_)};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& coords() const { return coords_; }
  const std::vector<double>& weights() const { return weights_; }
  // True when every weight is bitwise equal to 1/size().
  bool equal_weights() const { return equal_weights_; }

 private:
  int dim_ = 0;
  std::vector<double> coords_;
  std::vector<double> weights_;
  bool equal_weights_ = false;
};

struct Moments {
  std::vector<double> mean;
  std::vector<double> var;
  double m2 = 0.0;  // sum w |x|^2
};

// Weights may be empty, meaning uniform weights over the atoms.
Moments compute_moments(int dim, std::span<const double> coords,
                        std::span<const double> weights);

// Non-owning view of an atom cloud plus its cached moments. This is the form
// in which measures are handed to coefficient functions; the referenced
// storage must outlive the view.
class MeasureView {
 public:
  MeasureView() = default;
  explicit MeasureView(const EmpiricalMeasure& m);
  MeasureView(int dim, std::span<const double> coords,
              std::span<const double> weights);

  int dim() const { return dim_; }
  std::size_t size() const {
    return dim_ == 0 ? 0 : coords_.size() / static_cast<std::size_t>(dim_);
  }
  std::span<const double> coords() const { return coords_; }
  std::span<const double> weights() const { return weights_; }
  double weight(std::size_t i) const {
    return weights_.empty() ? 1.0 / static_cast<double>(size()) : weights_[i];
  }
  std::span<const double> atom(std::size_t i) const {
    return coords_.subspan(i * static_cast<std::size_t>(dim_),
                           static_cast<std::size_t>(dim_));
  }
  const Moments& moments() const { return moments_; }
  EmpiricalMeasure to_measure() const;

 private:
  int dim_ = 0;
  std::span<const double> coords_;
  std::span<const double> weights_;
  Moments moments_;
};

struct WeightFunction {
  double p = 2.0;
  double operator()(std::span<const double> y) const;
};

// Empty lo/hi and cells == 0 select the defaults: union support padded by 10%
// per axis and ceil(2 n^{1/3}) cells per axis clamped to [16, 256], n being
// the larger atom count. Atoms outside an explicit box fall in the edge cells.
struct Binning {
  std::vector<double> lo;
  std::vector<double> hi;
  int cells = 0;
};

struct TvEstimate {
  double weighted = 0.0;  // sum (1 + V(center)) |nu1(cell) - nu2(cell)|
  double mass = 0.0;      // sum |nu1(cell) - nu2(cell)|
  int cells = 0;          // per axis
};

struct W2Result {
  double value = 0.0;
  bool approximate = false;
};

W2Result w2(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2);
double w2_distance(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2);

// Fixed box over the union of the given measures, padded 10%, with the
// default cell count for n atoms.
Binning fixed_binning(const std::vector<const EmpiricalMeasure*>& ms, std::size_t n);

TvEstimate binned_tv(const EmpiricalMeasure& nu1, const EmpiricalMeasure& nu2,
                     const WeightFunction& v, const Binning& bins = {});
double weighted_tv_distance(const EmpiricalMeasure& nu1,
                            const EmpiricalMeasure& nu2,
                            const WeightFunction& v, const Binning& bins = {});

struct KernelSpec {
  enum class Kind { gaussian, uniform_ball };
  Kind kind = Kind::gaussian;
  double scale = 1.0;  // standard deviation, or ball radius
};

EmpiricalMeasure mollify_measure(const EmpiricalMeasure& mu, int n,
                                 const KernelSpec& kernel, std::uint64_t seed);

struct MixtureComponent {
  const EmpiricalMeasure* measure;
  double weight;
};

EmpiricalMeasure mixture(const std::vector<MixtureComponent>& family);

double second_moment(const EmpiricalMeasure& mu);
std::vector<double> mean_of(const EmpiricalMeasure& mu);

// (1 - s) mu1 + s mu2
EmpiricalMeasure convex_combination(const EmpiricalMeasure& mu1,
                                    const EmpiricalMeasure& mu2, double s);

using MeasureFunctional = std::function<double(const EmpiricalMeasure&)>;

// Difference quotient along the segment from mu1 towards mu2, centred at
// mu1 + theta (mu2 - mu1): [f(mu1 + 2 theta D) - f(mu1)] / (2 theta).
double lfd_estimate(const MeasureFunctional& f, const EmpiricalMeasure& mu1,
                    const EmpiricalMeasure& mu2, double theta_step);

// Weight-proportional systematic resampling to m equally weighted atoms.
EmpiricalMeasure resample(const EmpiricalMeasure& mu, std::size_t m,
                          std::uint64_t seed);

// Kuhn-Munkres on a dense n x n cost matrix (row-major); returns the column
// assigned to each row.
std::vector<int> hungarian(const std::vector<double>& cost, int n);

}  // namespace mmv
