#include "mmv/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "mmv/error.hpp"
#include "mmv/rng.hpp"

namespace mmv {

void RegularityMeta::validate() const {
  auto in_holder = [](double v) { return v > 0.0 && v <= 2.0; };
  require(in_holder(alpha), "meta.alpha must lie in (0, 2]");
  require(in_holder(beta), "meta.beta must lie in (0, 2]");
  require(C2 >= 0.0, "meta.C2 must be >= 0");
  require(C1 > C2, fmt::format("meta requires C1 > C2 (got C1={}, C2={})", C1, C2));
  require(C3 >= 0.0, "meta.C3 must be >= 0");
  require(kappa >= 0.0, "meta.kappa must be >= 0");
  require(p >= 1.0, "meta.p must be >= 1");
  require(varrho > 0.0, "meta.varrho must be > 0");
  require(k >= 0.0, "meta.k must be >= 0");
}

void ModelSpec::validate() const {
  require(d1 >= 1 && d2 >= 1, "model dimensions must be positive");
  require(static_cast<bool>(b) && static_cast<bool>(sigma) &&
              static_cast<bool>(F) && static_cast<bool>(G),
          "model is missing a coefficient");
  meta.validate();
}

std::vector<double> ModelSpec::eval_b(const std::vector<double>& x, const MeasureView& mu,
                                      const std::vector<double>& y,
                                      const MeasureView& nu) const {
  std::vector<double> out(static_cast<std::size_t>(d1));
  b(x.data(), y.data(), 1, mu, nu, out.data());
  return out;
}

std::vector<double> ModelSpec::eval_sigma(const std::vector<double>& x, const MeasureView& mu,
                                          const MeasureView& nu) const {
  std::vector<double> out(static_cast<std::size_t>(d1 * d1));
  sigma(x.data(), 1, mu, nu, out.data());
  return out;
}

std::vector<double> ModelSpec::eval_F(const std::vector<double>& x, const MeasureView& mu,
                                      const std::vector<double>& y,
                                      const MeasureView& nu) const {
  std::vector<double> out(static_cast<std::size_t>(d2));
  F(x.data(), y.data(), 1, mu, nu, out.data());
  return out;
}

std::vector<double> ModelSpec::eval_G(const std::vector<double>& x, const MeasureView& mu,
                                      const std::vector<double>& y,
                                      const MeasureView& nu) const {
  std::vector<double> out(static_cast<std::size_t>(d2 * d2));
  G(x.data(), y.data(), 1, mu, nu, out.data());
  return out;
}

namespace {

struct CompiledRows {
  std::vector<CompiledCoeff> parts;
  bool constant = true;
};

CompiledRows compile_all(const std::vector<std::string>& srcs, int d1, int d2,
                         bool allow_y, const std::string& what) {
  CompiledRows r;
  for (std::size_t i = 0; i < srcs.size(); ++i) {
    try {
      r.parts.emplace_back(parse_coeff(srcs[i], d1, d2, ParseOptions{allow_y}));
    } catch (const ParseError& e) {
      throw ParseError(fmt::format("{}[{}]: {}", what, i, e.what()), e.line(), e.column());
    }
    r.constant = r.constant && r.parts.back().is_constant();
  }
  return r;
}

std::vector<std::string> flatten(const std::vector<std::vector<std::string>>& m,
                                 int rows, const std::string& what) {
  require(static_cast<int>(m.size()) == rows,
          fmt::format("{} must have {} rows", what, rows));
  std::vector<std::string> flat;
  for (const auto& row : m) {
    require(static_cast<int>(row.size()) == rows,
            fmt::format("{} must be {} x {}", what, rows, rows));
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return flat;
}

DriftFn make_dsl_fn(std::shared_ptr<const CompiledRows> rows) {
  return [rows](const double* x, const double* y, std::size_t n, const MeasureView& mu,
                const MeasureView& nu, double* out) {
    const std::size_t k = rows->parts.size();
    for (std::size_t c = 0; c < k; ++c) rows->parts[c].eval_batch(x, y, n, mu, nu, out + c, k);
  };
}

}  // namespace

ModelSpec model_from_dsl(const DslModelSource& src, const RegularityMeta& meta) {
  require(src.d1 >= 1 && src.d2 >= 1, "model dimensions must be positive");
  require(static_cast<int>(src.b.size()) == src.d1,
          fmt::format("b must have {} components", src.d1));
  require(static_cast<int>(src.F.size()) == src.d2,
          fmt::format("F must have {} components", src.d2));
  const auto sigma_src = flatten(src.sigma, src.d1, "sigma");
  const auto G_src = flatten(src.G, src.d2, "G");

  auto b = std::make_shared<const CompiledRows>(compile_all(src.b, src.d1, src.d2, true, "b"));
  auto s = std::make_shared<const CompiledRows>(
      compile_all(sigma_src, src.d1, src.d2, false, "sigma"));
  auto f = std::make_shared<const CompiledRows>(compile_all(src.F, src.d1, src.d2, true, "F"));
  auto g = std::make_shared<const CompiledRows>(compile_all(G_src, src.d1, src.d2, true, "G"));

  ModelSpec m;
  m.name = "dsl";
  m.d1 = src.d1;
  m.d2 = src.d2;
  m.b = make_dsl_fn(b);
  m.F = make_dsl_fn(f);
  m.G = make_dsl_fn(g);
  auto sig = make_dsl_fn(s);
  m.sigma = [sig](const double* x, std::size_t n, const MeasureView& mu, const MeasureView& nu,
                  double* out) { sig(x, nullptr, n, mu, nu, out); };
  m.sigma_constant = s->constant;
  m.G_constant = g->constant;
  m.meta = meta;
  m.sources["b"] = src.b;
  m.sources["sigma"] = sigma_src;
  m.sources["F"] = src.F;
  m.sources["G"] = G_src;
  m.validate();
  return m;
}

namespace {

struct ParamReader {
  const std::string& model;
  const ParamMap& params;
  std::set<std::string> used;

  double get(const std::string& key) {
    used.insert(key);
    const auto it = params.find(key);
    require(it != params.end(),
            fmt::format("model '{}' requires parameter '{}'", model, key));
    require(std::isfinite(it->second),
            fmt::format("model '{}' parameter '{}' must be finite", model, key));
    return it->second;
  }
  double get_or(const std::string& key, double fallback) {
    used.insert(key);
    const auto it = params.find(key);
    if (it == params.end()) return fallback;
    require(std::isfinite(it->second),
            fmt::format("model '{}' parameter '{}' must be finite", model, key));
    return it->second;
  }
  void finish() const {
    for (const auto& [key, value] : params) {
      require(used.count(key) == 1,
              fmt::format("model '{}' has no parameter '{}'", model, key));
    }
  }
};

double mean0(const MeasureView& m) { return m.moments().mean.at(0); }

struct LinearFast {
  double a, c, kappa0, g0;
};

LinearFast read_linear_fast(ParamReader& r) {
  return {r.get("a"), r.get("c"), r.get("kappa0"), r.get("g0")};
}

void attach_linear_fast(ModelSpec& m, const LinearFast& f) {
  m.F = [f](const double* x, const double* y, std::size_t n, const MeasureView&,
            const MeasureView& nu, double* out) {
    const double drift_nu = f.kappa0 * mean0(nu);
    for (std::size_t i = 0; i < n; ++i) out[i] = (-f.a * y[i] + f.c * x[i]) + drift_nu;
  };
  m.G = [g0 = f.g0](const double*, const double*, std::size_t n, const MeasureView&,
                    const MeasureView&, double* out) { std::fill(out, out + n, g0); };
  m.G_constant = true;
}

// Dissipativity constants for the linear fast equation with |x| <= 5:
// 2 F y + G^2 <= -a y^2 + (2 kappa0^2 / a) |nu|_2^2 + g0^2 + 50 c^2 / a.
RegularityMeta linear_fast_meta(const LinearFast& f) {
  RegularityMeta meta;
  meta.C1 = f.a;
  meta.C2 = f.a > 0.0 ? 2.0 * f.kappa0 * f.kappa0 / f.a : 0.0;
  meta.C3 = f.a > 0.0 ? f.g0 * f.g0 + 50.0 * f.c * f.c / f.a : 0.0;
  meta.kappa = std::abs(f.kappa0);
  meta.varrho = f.g0 * f.g0;
  meta.p = 2.0;
  return meta;
}

SigmaFn constant_sigma(double s) {
  return [s](const double*, std::size_t n, const MeasureView&, const MeasureView&,
             double* out) { std::fill(out, out + n, s); };
}

ModelSpec make_linear_ou(ParamReader& r) {
  ModelSpec m;
  const double b0 = r.get("b0"), b1 = r.get("b1"), b2 = r.get("b2");
  const double s0 = r.get("sigma0");
  const LinearFast f = read_linear_fast(r);
  m.b = [b0, b1, b2](const double* x, const double* y, std::size_t n, const MeasureView&,
                     const MeasureView& nu, double* out) {
    const double drift_nu = b2 * mean0(nu);
    for (std::size_t i = 0; i < n; ++i) out[i] = (-b0 * x[i] + b1 * y[i]) + drift_nu;
  };
  m.sigma = constant_sigma(s0);
  m.sigma_constant = true;
  attach_linear_fast(m, f);
  m.meta = linear_fast_meta(f);
  return m;
}

ModelSpec make_nu_only_drift(ParamReader& r) {
  ModelSpec m;
  const double s0 = r.get_or("sigma0", 1.0);
  const LinearFast f = read_linear_fast(r);
  m.b = [](const double*, const double*, std::size_t n, const MeasureView&,
           const MeasureView& nu, double* out) { std::fill(out, out + n, mean0(nu)); };
  m.sigma = constant_sigma(s0);
  m.sigma_constant = true;
  attach_linear_fast(m, f);
  m.meta = linear_fast_meta(f);
  return m;
}

ModelSpec make_doublewell(ParamReader& r) {
  ModelSpec m;
  const double b1 = r.get("b1"), b2 = r.get("b2"), s0 = r.get("sigma0");
  const LinearFast f = read_linear_fast(r);
  m.b = [b1, b2](const double* x, const double* y, std::size_t n, const MeasureView&,
                 const MeasureView& nu, double* out) {
    const double drift_nu = b2 * mean0(nu);
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = x[i];
      out[i] = ((xi - xi * xi * xi) + b1 * y[i]) + drift_nu;
    }
  };
  m.sigma = constant_sigma(s0);
  m.sigma_constant = true;
  attach_linear_fast(m, f);
  m.meta = linear_fast_meta(f);
  return m;
}

// b = -x + m0 mean(mu) + sin(y) + b2 tanh(mean(nu))
// sigma = sigma0 (1 + 0.25 tanh(mean(nu))^2)
// F = -a y + c sin(x) + kappa0 tanh(mean(nu)),  G = g0
ModelSpec make_smooth_bench(ParamReader& r) {
  ModelSpec m;
  const double m0 = r.get("m0"), b2 = r.get("b2"), s0 = r.get("sigma0");
  const double a = r.get("a"), c = r.get("c"), kappa0 = r.get("kappa0"), g0 = r.get("g0");
  m.b = [m0, b2](const double* x, const double* y, std::size_t n, const MeasureView& mu,
                 const MeasureView& nu, double* out) {
    const double shift = m0 * mean0(mu) + b2 * std::tanh(mean0(nu));
    for (std::size_t i = 0; i < n; ++i) out[i] = (-x[i] + std::sin(y[i])) + shift;
  };
  m.sigma = [s0](const double*, std::size_t n, const MeasureView&, const MeasureView& nu,
                 double* out) {
    const double t = std::tanh(mean0(nu));
    std::fill(out, out + n, s0 * (1.0 + 0.25 * t * t));
  };
  m.F = [a, c, kappa0](const double* x, const double* y, std::size_t n, const MeasureView&,
                       const MeasureView& nu, double* out) {
    const double drift_nu = kappa0 * std::tanh(mean0(nu));
    for (std::size_t i = 0; i < n; ++i) out[i] = (-a * y[i] + c * std::sin(x[i])) + drift_nu;
  };
  m.G = [g0](const double*, const double*, std::size_t n, const MeasureView&,
             const MeasureView&, double* out) { std::fill(out, out + n, g0); };
  m.G_constant = true;
  // 2 F y + G^2 <= -a y^2 + 2 (c^2 + kappa0^2) / a + g0^2
  RegularityMeta meta;
  meta.C1 = a;
  meta.C2 = 0.0;
  meta.C3 = a > 0.0 ? g0 * g0 + 2.0 * (c * c + kappa0 * kappa0) / a : 0.0;
  meta.kappa = std::abs(kappa0);
  meta.varrho = g0 * g0;
  m.meta = meta;
  return m;
}

}  // namespace

std::vector<std::string> builtin_names() {
  return {"linear_ou", "doublewell_slow_linear_fast", "nu_only_drift", "smooth_bench"};
}

ModelSpec builtin(const std::string& name, const ParamMap& params,
                  const std::optional<RegularityMeta>& meta) {
  ParamReader r{name, params, {}};
  ModelSpec m;
  if (name == "linear_ou") {
    m = make_linear_ou(r);
  } else if (name == "nu_only_drift") {
    m = make_nu_only_drift(r);
  } else if (name == "doublewell_slow_linear_fast") {
    m = make_doublewell(r);
  } else if (name == "smooth_bench") {
    m = make_smooth_bench(r);
  } else {
    throw ValidationError("unknown builtin model '" + name + "'");
  }
  r.finish();
  m.name = name;
  m.d1 = 1;
  m.d2 = 1;
  m.params = params;
  if (meta) m.meta = *meta;
  m.validate();
  return m;
}

double min_symmetric_eigenvalue(std::vector<double> a, int n) {
  auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (at(p, q) == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  double mn = at(0, 0);
  for (int i = 1; i < n; ++i) mn = std::min(mn, at(i, i));
  return mn;
}

namespace {

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

constexpr std::uint64_t kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                                     41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};

struct Probe {
  std::vector<double> x, y;
  EmpiricalMeasure mu, nu, nu2;
};

class ProbeSource {
 public:
  ProbeSource(const ModelSpec& m, const ProbePlan& plan)
      : m_(m), plan_(plan), stream_(plan.seed, StreamTag::probe) {
    require(plan.points >= 1 && plan.atoms >= 1, "probe plan needs points and atoms");
    require(m.d1 + m.d2 <= static_cast<int>(std::size(kPrimes)),
            "probe plan supports d1 + d2 <= 24");
  }

  Probe at(int i) const {
    Probe p;
    const auto idx = static_cast<std::uint64_t>(i) + 1;
    for (int c = 0; c < m_.d1; ++c) {
      p.x.push_back((2.0 * radical_inverse(idx, kPrimes[c]) - 1.0) * plan_.x_max);
    }
    const double yscale = plan_.y_max / std::sqrt(static_cast<double>(m_.d2));
    for (int c = 0; c < m_.d2; ++c) {
      p.y.push_back((2.0 * radical_inverse(idx, kPrimes[m_.d1 + c]) - 1.0) * yscale);
    }
    p.mu = cloud(i, 0, m_.d1);
    p.nu = cloud(i, 1, m_.d2);
    p.nu2 = cloud(i, 2, m_.d2);
    return p;
  }

 private:
  EmpiricalMeasure cloud(int i, int slot, int dim) const {
    const auto n = static_cast<std::size_t>(plan_.atoms);
    std::vector<double> u(n * static_cast<std::size_t>(dim));
    stream_.uniforms(static_cast<std::uint64_t>(i) * 4 + slot, 0, n, dim, u.data());
    for (double& v : u) v = (2.0 * v - 1.0) * plan_.atom_range;
    return EmpiricalMeasure::uniform(dim, std::move(u));
  }

  const ModelSpec& m_;
  const ProbePlan& plan_;
  Stream stream_;
};

}  // namespace

DissipativityReport check_dissipativity(const ModelSpec& model, const ProbePlan& plan) {
  model.validate();
  require(!plan.q.empty(), "probe plan needs at least one q");
  const ProbeSource src(model, plan);
  DissipativityReport rep;
  const auto& meta = model.meta;
  for (int i = 0; i < plan.points; ++i) {
    const Probe p = src.at(i);
    const MeasureView mu(p.mu), nu(p.nu);
    const auto F = model.eval_F(p.x, mu, p.y, nu);
    const auto G = model.eval_G(p.x, mu, p.y, nu);
    double fy = 0.0, y2 = 0.0, g2 = 0.0;
    for (int c = 0; c < model.d2; ++c) {
      fy += F[c] * p.y[c];
      y2 += p.y[c] * p.y[c];
    }
    for (double g : G) g2 += g * g;
    const double rhs = -meta.C1 * y2 + meta.C2 * nu.moments().m2 + meta.C3;
    for (double q : plan.q) {
      const double margin = (2.0 * fy + (q - 1.0) * g2) - rhs;
      if (margin > rep.worst_margin) {
        rep.worst_margin = margin;
        rep.worst_q = q;
        rep.worst_y = p.y;
      }
      ++rep.evaluated;
    }
    // G G^T
    const int n = model.d2;
    std::vector<double> ggt(static_cast<std::size_t>(n * n), 0.0);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        for (int k = 0; k < n; ++k) ggt[r * n + c] += G[r * n + k] * G[c * n + k];
    const double floor = meta.varrho * std::pow(1.0 + std::sqrt(y2), -meta.k);
    rep.nondegeneracy_margin =
        std::min(rep.nondegeneracy_margin, min_symmetric_eigenvalue(ggt, n) - floor);
  }
  rep.pass = rep.worst_margin <= 0.0;
  rep.nondegenerate = rep.nondegeneracy_margin >= -1e-12;
  return rep;
}

LipschitzReport check_measure_lipschitz(const ModelSpec& model, const ProbePlan& plan) {
  model.validate();
  const ProbeSource src(model, plan);
  LipschitzReport rep;
  rep.kappa = model.meta.kappa;
  const WeightFunction v{model.meta.p};
  for (int i = 0; i < plan.points; ++i) {
    const Probe p = src.at(i);
    const MeasureView mu(p.mu), nu1(p.nu), nu2(p.nu2);
    const auto F1 = model.eval_F(p.x, mu, p.y, nu1), F2 = model.eval_F(p.x, mu, p.y, nu2);
    const auto G1 = model.eval_G(p.x, mu, p.y, nu1), G2 = model.eval_G(p.x, mu, p.y, nu2);
    double df = 0.0, dg = 0.0;
    for (std::size_t c = 0; c < F1.size(); ++c) df += (F1[c] - F2[c]) * (F1[c] - F2[c]);
    for (std::size_t c = 0; c < G1.size(); ++c) dg += (G1[c] - G2[c]) * (G1[c] - G2[c]);
    const double num = std::sqrt(df) + std::sqrt(dg);
    const double den = weighted_tv_distance(p.nu, p.nu2, v);
    if (den > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, num / den);
    ++rep.evaluated;
  }
  rep.pass = rep.worst_ratio <= rep.kappa * (1.0 + plan.tolerance);
  return rep;
}

}  // namespace mmv
