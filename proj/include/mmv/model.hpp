#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmv/coeff_expr.hpp"
#include "mmv/measure.hpp"

namespace mmv {

// Batched coefficient callables. Point i reads x[i*d1 ..], y[i*d2 ..] and
// writes its value (vector, or row-major matrix) to out[i*rows*cols ..].
using DriftFn = std::function<void(const double* x, const double* y,
                                   std::size_t n, const MeasureView& mu,
                                   const MeasureView& nu, double* out)>;
// The slow diffusion has no y slot.
using SigmaFn = std::function<void(const double* x, std::size_t n,
                                   const MeasureView& mu, const MeasureView& nu,
                                   double* out)>;

struct RegularityMeta {
  double alpha = 1.0;
  double beta = 1.0;
  double C1 = 1.0;
  double C2 = 0.0;
  double C3 = 0.0;
  double kappa = 0.0;
  double p = 2.0;
  double varrho = 1.0;
  double k = 0.0;

  void validate() const;
};

struct ModelSpec {
  std::string name;
  int d1 = 1;
  int d2 = 1;
  DriftFn b;       // d1
  SigmaFn sigma;   // d1 x d1
  DriftFn F;       // d2
  DriftFn G;       // d2 x d2
  RegularityMeta meta;
  // Builtin parameters or DSL sources, echoed into run manifests.
  std::map<std::string, double> params;
  std::map<std::string, std::vector<std::string>> sources;
  // Set when sigma or G ignore all arguments; the engine then evaluates once.
  bool sigma_constant = false;
  bool G_constant = false;

  void validate() const;

  // Single-point conveniences.
  std::vector<double> eval_b(const std::vector<double>& x, const MeasureView& mu,
                             const std::vector<double>& y, const MeasureView& nu) const;
  std::vector<double> eval_sigma(const std::vector<double>& x, const MeasureView& mu,
                                 const MeasureView& nu) const;
  std::vector<double> eval_F(const std::vector<double>& x, const MeasureView& mu,
                             const std::vector<double>& y, const MeasureView& nu) const;
  std::vector<double> eval_G(const std::vector<double>& x, const MeasureView& mu,
                             const std::vector<double>& y, const MeasureView& nu) const;
};

// Model from DSL sources: b has d1 rows, sigma d1 x d1, F d2, G d2 x d2.
struct DslModelSource {
  int d1 = 1;
  int d2 = 1;
  std::vector<std::string> b;
  std::vector<std::vector<std::string>> sigma;
  std::vector<std::string> F;
  std::vector<std::vector<std::string>> G;
};

ModelSpec model_from_dsl(const DslModelSource& src, const RegularityMeta& meta);

using ParamMap = std::map<std::string, double>;

std::vector<std::string> builtin_names();

// Parameters for a builtin are validated strictly: every required one must be
// present and unknown ones are rejected. meta, when given, replaces the
// builtin's derived constants.
ModelSpec builtin(const std::string& name, const ParamMap& params,
                  const std::optional<RegularityMeta>& meta = std::nullopt);

struct ProbePlan {
  int points = 256;
  double x_max = 5.0;
  double y_max = 10.0;
  int atoms = 8;
  double atom_range = 5.0;
  std::vector<double> q = {2.0};
  double tolerance = 0.05;  // relative slack for the Lipschitz check
  std::uint64_t seed = 20240611;
};

struct DissipativityReport {
  bool pass = true;
  double worst_margin = -1e300;  // max of LHS - RHS over probes
  double worst_q = 2.0;
  std::vector<double> worst_y;
  int evaluated = 0;
  // (H1) on the probe set only: min over probes of
  // lambda_min(G G^T) - varrho (1 + |y|)^{-k}.
  double nondegeneracy_margin = 1e300;
  bool nondegenerate = true;
};

struct LipschitzReport {
  bool pass = true;
  double worst_ratio = 0.0;
  double kappa = 0.0;
  int evaluated = 0;
};

DissipativityReport check_dissipativity(const ModelSpec& model,
                                        const ProbePlan& plan = {});
LipschitzReport check_measure_lipschitz(const ModelSpec& model,
                                        const ProbePlan& plan = {});

// Smallest eigenvalue of a symmetric n x n matrix (cyclic Jacobi).
double min_symmetric_eigenvalue(std::vector<double> a, int n);

}  // namespace mmv
