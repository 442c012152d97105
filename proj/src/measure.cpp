#include "mmv/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "mmv/error.hpp"
#include "mmv/rng.hpp"
#include "mmv/simd/kernels.hpp"

namespace mmv {
namespace {

double neumaier_sum(std::span<const double> v) {
  double sum = 0.0, c = 0.0;
  for (double x : v) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      c += (sum - t) + x;
    } else {
      c += (x - t) + sum;
    }
    sum = t;
  }
  return sum + c;
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(int dim, std::vector<double> coords,
                                   std::vector<double> weights)
    : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
  require(dim_ >= 1, "measure dimension must be positive");
  require(!weights_.empty(), "empty measure");
  require(coords_.size() == weights_.size() * static_cast<std::size_t>(dim_),
          "measure has " + std::to_string(weights_.size()) + " weights but " +
              std::to_string(coords_.size()) + " coordinates for dim " +
              std::to_string(dim_));
  for (double c : coords_) require(std::isfinite(c), "non-finite atom coordinate");
  for (double w : weights_) {
    require(std::isfinite(w) && w >= 0.0, "weights must be finite and non-negative");
  }
  const double total = neumaier_sum(weights_);
  require(std::abs(total - 1.0) <= 1e-12,
          "weights sum to " + std::to_string(total) + ", expected 1");
  equal_weights_ = std::all_of(weights_.begin(), weights_.end(),
                               [&](double w) { return w == weights_[0]; });
}

EmpiricalMeasure EmpiricalMeasure::uniform(int dim, std::vector<double> coords) {
  require(dim >= 1, "measure dimension must be positive");
  const std::size_t n = coords.size() / static_cast<std::size_t>(dim);
  require(n > 0, "empty measure");
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  return EmpiricalMeasure(dim, std::move(coords), std::move(w));
}

EmpiricalMeasure EmpiricalMeasure::point(std::vector<double> x) {
  const int d = static_cast<int>(x.size());
  return EmpiricalMeasure(d, std::move(x), {1.0});
}

Moments compute_moments(int dim, std::span<const double> coords,
                        std::span<const double> weights) {
  Moments m;
  const auto d = static_cast<std::size_t>(dim);
  if (d == 0 || coords.empty()) return m;
  const std::size_t n = coords.size() / d;
  const auto& k = simd::kernels();
  const double* w = weights.empty() ? nullptr : weights.data();
  m.mean.resize(d);
  m.var.resize(d);
  std::vector<double> column;
  for (std::size_t c = 0; c < d; ++c) {
    const double* v = coords.data();
    if (d > 1) {
      column.resize(n);
      for (std::size_t i = 0; i < n; ++i) column[i] = coords[i * d + c];
      v = column.data();
    }
    const simd::Sums3 s = k.weighted_sums(v, w, n);
    const double mean = s.first / s.weight;
    const double second = s.second / s.weight;
    m.mean[c] = mean;
    m.var[c] = std::max(second - mean * mean, 0.0);
    m.m2 += second;
  }
  return m;
}

MeasureView::MeasureView(const EmpiricalMeasure& m)
    : MeasureView(m.dim(), m.coords(), m.weights()) {}

MeasureView::MeasureView(int dim, std::span<const double> coords,
                         std::span<const double> weights)
    : dim_(dim),
      coords_(coords),
      weights_(weights),
      moments_(compute_moments(dim, coords, weights)) {}

EmpiricalMeasure MeasureView::to_measure() const {
  std::vector<double> c(coords_.begin(), coords_.end());
  if (weights_.empty()) return EmpiricalMeasure::uniform(dim_, std::move(c));
  return EmpiricalMeasure(dim_, std::move(c),
                          std::vector<double>(weights_.begin(), weights_.end()));
}

double WeightFunction::operator()(std::span<const double> y) const {
  double r2 = 0.0;
  for (double v : y) r2 += v * v;
  if (p == 2.0) return 1.0 + r2;
  return 1.0 + std::pow(std::sqrt(r2), p);
}

namespace {

double w2_sorted_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  const std::size_t n1 = a.size(), n2 = b.size();
  std::vector<std::size_t> i1(n1), i2(n2);
  std::iota(i1.begin(), i1.end(), 0);
  std::iota(i2.begin(), i2.end(), 0);
  const auto& x = a.coords();
  const auto& y = b.coords();
  std::sort(i1.begin(), i1.end(), [&](auto p, auto q) { return x[p] < x[q]; });
  std::sort(i2.begin(), i2.end(), [&](auto p, auto q) { return y[p] < y[q]; });

  if (a.equal_weights() && b.equal_weights() && n1 == n2) {
    std::vector<double> xs(n1), ys(n2);
    for (std::size_t i = 0; i < n1; ++i) {
      xs[i] = x[i1[i]];
      ys[i] = y[i2[i]];
    }
    const double s = simd::kernels().weighted_sq_diff(xs.data(), ys.data(),
                                                      nullptr, n1);
    return std::sqrt(s / static_cast<double>(n1));
  }

  double cost = 0.0;
  std::size_t i = 0, j = 0;
  double r1 = a.weight(i1[0]), r2 = b.weight(i2[0]);
  while (i < n1 && j < n2) {
    const double d = x[i1[i]] - y[i2[j]];
    if (r1 < r2) {
      cost += r1 * d * d;
      r2 -= r1;
      if (++i < n1) r1 = a.weight(i1[i]);
    } else if (r2 < r1) {
      cost += r2 * d * d;
      r1 -= r2;
      if (++j < n2) r2 = b.weight(i2[j]);
    } else {
      cost += r1 * d * d;
      if (++i < n1) r1 = a.weight(i1[i]);
      if (++j < n2) r2 = b.weight(i2[j]);
    }
  }
  return std::sqrt(std::max(cost, 0.0));
}

double w2_assignment(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  const int n = static_cast<int>(a.size());
  const auto d = static_cast<std::size_t>(a.dim());
  std::vector<double> cost(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = a.atom(i)[c] - b.atom(j)[c];
        s += diff * diff;
      }
      cost[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
  const std::vector<int> match = hungarian(cost, n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += cost[static_cast<std::size_t>(i) * n + match[i]];
  return std::sqrt(total / n);
}

constexpr std::size_t kAssignmentLimit = 512;
constexpr std::uint64_t kW2ResampleSeed = 0x5EED0002ULL;

}  // namespace

std::vector<int> hungarian(const std::vector<double>& cost, int n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur =
            cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> match(n);
  for (int j = 1; j <= n; ++j) match[p[j] - 1] = j - 1;
  return match;
}

W2Result w2(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2) {
  require(!mu1.empty() && !mu2.empty(), "empty measure");
  require(mu1.dim() == mu2.dim(), "dimension mismatch: " +
                                      std::to_string(mu1.dim()) + " vs " +
                                      std::to_string(mu2.dim()));
  if (mu1.dim() == 1) return {w2_sorted_1d(mu1, mu2), false};
  if (mu1.equal_weights() && mu2.equal_weights() && mu1.size() == mu2.size() &&
      mu1.size() <= kAssignmentLimit) {
    return {w2_assignment(mu1, mu2), false};
  }
  const EmpiricalMeasure a = resample(mu1, kAssignmentLimit, kW2ResampleSeed);
  const EmpiricalMeasure b = resample(mu2, kAssignmentLimit, kW2ResampleSeed + 1);
  return {w2_assignment(a, b), true};
}

double w2_distance(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2) {
  return w2(mu1, mu2).value;
}

TvEstimate binned_tv(const EmpiricalMeasure& nu1, const EmpiricalMeasure& nu2,
                     const WeightFunction& v, const Binning& bins) {
  require(!nu1.empty() && !nu2.empty(), "empty measure");
  require(nu1.dim() == nu2.dim(), "dimension mismatch: " +
                                      std::to_string(nu1.dim()) + " vs " +
                                      std::to_string(nu2.dim()));
  require(v.p >= 1.0, "weight exponent p must be >= 1");
  const int dim = nu1.dim();
  const auto d = static_cast<std::size_t>(dim);

  std::vector<double> lo = bins.lo, hi = bins.hi;
  if (lo.empty() && hi.empty()) {
    lo.assign(d, std::numeric_limits<double>::infinity());
    hi.assign(d, -std::numeric_limits<double>::infinity());
    for (const EmpiricalMeasure* m : {&nu1, &nu2}) {
      for (std::size_t i = 0; i < m->size(); ++i) {
        for (std::size_t c = 0; c < d; ++c) {
          lo[c] = std::min(lo[c], m->atom(i)[c]);
          hi[c] = std::max(hi[c], m->atom(i)[c]);
        }
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      const double range = hi[c] - lo[c];
      const double pad = range > 0.0 ? 0.1 * range : 0.5;
      lo[c] -= pad;
      hi[c] += pad;
    }
  }
  require(lo.size() == d && hi.size() == d,
          "binning box must have one bound per axis");
  for (std::size_t c = 0; c < d; ++c) {
    require(std::isfinite(lo[c]) && std::isfinite(hi[c]) && hi[c] > lo[c],
            "degenerate binning: zero-width cells on axis " + std::to_string(c));
  }
  int cells = bins.cells;
  if (cells == 0) {
    const double n = static_cast<double>(std::max(nu1.size(), nu2.size()));
    cells = static_cast<int>(std::ceil(2.0 * std::cbrt(n)));
    cells = std::clamp(cells, 16, 256);
  }
  require(cells >= 1, "cell count must be positive");
  double total_cells = 1.0;
  for (std::size_t c = 0; c < d; ++c) total_cells *= cells;
  require(total_cells < 9.0e18, "binning grid too large for dimension " +
                                    std::to_string(dim));

  std::vector<double> width(d);
  for (std::size_t c = 0; c < d; ++c) width[c] = (hi[c] - lo[c]) / cells;
  auto cell_of = [&](std::span<const double> x) {
    std::uint64_t key = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const double t = std::floor((x[c] - lo[c]) / width[c]);
      const auto k = static_cast<std::uint64_t>(
          std::clamp(t, 0.0, static_cast<double>(cells - 1)));
      key = key * static_cast<std::uint64_t>(cells) + k;
    }
    return key;
  };

  // Cell masses of each input are accumulated separately so identical inputs
  // give exactly zero.
  std::unordered_map<std::uint64_t, std::pair<double, double>> mass;
  mass.reserve(nu1.size() + nu2.size());
  for (std::size_t i = 0; i < nu1.size(); ++i) mass[cell_of(nu1.atom(i))].first += nu1.weight(i);
  for (std::size_t i = 0; i < nu2.size(); ++i) mass[cell_of(nu2.atom(i))].second += nu2.weight(i);

  TvEstimate out;
  out.cells = cells;
  std::vector<double> center(d);
  for (const auto& [key, pm] : mass) {
    const double delta = pm.first - pm.second;
    if (delta == 0.0) continue;
    std::uint64_t rest = key;
    for (std::size_t c = d; c-- > 0;) {
      const auto k = rest % static_cast<std::uint64_t>(cells);
      rest /= static_cast<std::uint64_t>(cells);
      center[c] = lo[c] + (static_cast<double>(k) + 0.5) * width[c];
    }
    const double a = std::abs(delta);
    out.mass += a;
    out.weighted += (1.0 + v(center)) * a;
  }
  return out;
}

double weighted_tv_distance(const EmpiricalMeasure& nu1,
                            const EmpiricalMeasure& nu2,
                            const WeightFunction& v, const Binning& bins) {
  return binned_tv(nu1, nu2, v, bins).weighted;
}

EmpiricalMeasure mollify_measure(const EmpiricalMeasure& mu, int n,
                                 const KernelSpec& kernel, std::uint64_t seed) {
  require(n >= 1, "mollification index n must be >= 1");
  require(kernel.scale > 0.0 && std::isfinite(kernel.scale),
          "kernel scale must be positive");
  const auto d = static_cast<std::size_t>(mu.dim());
  const std::size_t m = mu.size();
  std::vector<double> z(m * d);
  const Stream stream(seed, StreamTag::mollify);
  stream.normals(0, 0, m, mu.dim(), z.data());
  const double bw = kernel.scale / n;
  std::vector<double> coords = mu.coords();
  if (kernel.kind == KernelSpec::Kind::gaussian) {
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] += bw * z[i];
  } else {
    std::vector<double> u(m);
    stream.uniforms(0, 0, m, 1, u.data());
    for (std::size_t i = 0; i < m; ++i) {
      double r2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) r2 += z[i * d + c] * z[i * d + c];
      const double radius = bw * std::pow(u[i], 1.0 / static_cast<double>(d));
      const double scale = r2 > 0.0 ? radius / std::sqrt(r2) : 0.0;
      for (std::size_t c = 0; c < d; ++c) coords[i * d + c] += scale * z[i * d + c];
    }
  }
  return EmpiricalMeasure(mu.dim(), std::move(coords), mu.weights());
}

EmpiricalMeasure mixture(const std::vector<MixtureComponent>& family) {
  require(!family.empty(), "mixture of an empty family");
  const int dim = family.front().measure->dim();
  std::vector<double> ws;
  std::size_t total_atoms = 0;
  for (const auto& comp : family) {
    require(comp.measure->dim() == dim, "mixture components have inconsistent dims");
    require(std::isfinite(comp.weight) && comp.weight >= 0.0,
            "mixture weights must be finite and non-negative");
    ws.push_back(comp.weight);
    if (comp.weight > 0.0) total_atoms += comp.measure->size();
  }
  const double sum = neumaier_sum(ws);
  require(std::abs(sum - 1.0) <= 1e-9,
          "mixture weights sum to " + std::to_string(sum) + ", expected 1");
  std::vector<double> coords, weights;
  coords.reserve(total_atoms * static_cast<std::size_t>(dim));
  weights.reserve(total_atoms);
  for (const auto& comp : family) {
    if (comp.weight == 0.0) continue;
    const double scale = comp.weight / sum;
    coords.insert(coords.end(), comp.measure->coords().begin(),
                  comp.measure->coords().end());
    for (double w : comp.measure->weights()) weights.push_back(scale * w);
  }
  return EmpiricalMeasure(dim, std::move(coords), std::move(weights));
}

double second_moment(const EmpiricalMeasure& mu) {
  return compute_moments(mu.dim(), mu.coords(), mu.weights()).m2;
}

std::vector<double> mean_of(const EmpiricalMeasure& mu) {
  return compute_moments(mu.dim(), mu.coords(), mu.weights()).mean;
}

EmpiricalMeasure convex_combination(const EmpiricalMeasure& mu1,
                                    const EmpiricalMeasure& mu2, double s) {
  require(s >= 0.0 && s <= 1.0, "convex combination parameter must lie in [0, 1]");
  return mixture({{&mu1, 1.0 - s}, {&mu2, s}});
}

double lfd_estimate(const MeasureFunctional& f, const EmpiricalMeasure& mu1,
                    const EmpiricalMeasure& mu2, double theta_step) {
  require(theta_step > 0.0 && theta_step <= 0.5,
          "theta_step must lie in (0, 1/2]");
  require(mu1.dim() == mu2.dim(), "dimension mismatch");
  const double far = f(convex_combination(mu1, mu2, 2.0 * theta_step));
  const double near = f(mu1);
  return (far - near) / (2.0 * theta_step);
}

EmpiricalMeasure resample(const EmpiricalMeasure& mu, std::size_t m,
                          std::uint64_t seed) {
  require(m >= 1, "resample size must be positive");
  const auto d = static_cast<std::size_t>(mu.dim());
  const double u0 = Stream(seed, StreamTag::resample).uniform(0, 0, 0);
  std::vector<double> coords;
  coords.reserve(m * d);
  double cum = mu.weight(0);
  std::size_t j = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double target = (static_cast<double>(k) + u0) / static_cast<double>(m);
    while (target >= cum && j + 1 < mu.size()) cum += mu.weight(++j);
    const auto a = mu.atom(j);
    coords.insert(coords.end(), a.begin(), a.end());
  }
  return EmpiricalMeasure::uniform(mu.dim(), std::move(coords));
}

Binning fixed_binning(const std::vector<const EmpiricalMeasure*>& ms, std::size_t n) {
  const int d = ms.front()->dim();
  Binning b;
  b.lo.assign(static_cast<std::size_t>(d), 1e300);
  b.hi.assign(static_cast<std::size_t>(d), -1e300);
  for (const auto* m : ms) {
    for (std::size_t i = 0; i < m->size(); ++i) {
      const auto a = m->atom(i);
      for (std::size_t c = 0; c < a.size(); ++c) {
        b.lo[c] = std::min(b.lo[c], a[c]);
        b.hi[c] = std::max(b.hi[c], a[c]);
      }
    }
  }
  for (std::size_t c = 0; c < b.lo.size(); ++c) {
    const double span = b.hi[c] - b.lo[c];
    const double pad = span > 0.0 ? 0.1 * span : 0.5;
    b.lo[c] -= pad;
    b.hi[c] += pad;
  }
  const double cells = std::ceil(2.0 * std::cbrt(static_cast<double>(n)));
  b.cells = static_cast<int>(std::clamp(cells, 16.0, 256.0));
  return b;
}

}  // namespace mmv
