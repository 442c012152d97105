#include "mmv/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmv/error.hpp"
#include "mmv/parallel.hpp"
#include "mmv/simd/kernels.hpp"

namespace mmv {

SamplerSpec SamplerSpec::point(std::vector<double> v) {
  SamplerSpec s;
  s.kind = Kind::point;
  s.a = std::move(v);
  return s;
}

SamplerSpec SamplerSpec::gauss(std::vector<double> mean, std::vector<double> sd) {
  SamplerSpec s;
  s.kind = Kind::gauss;
  s.a = std::move(mean);
  s.b = std::move(sd);
  return s;
}

SamplerSpec SamplerSpec::uniform(std::vector<double> lo, std::vector<double> hi) {
  SamplerSpec s;
  s.kind = Kind::uniform;
  s.a = std::move(lo);
  s.b = std::move(hi);
  return s;
}

SamplerSpec SamplerSpec::from_measure(EmpiricalMeasure m) {
  SamplerSpec s;
  s.kind = Kind::measure;
  s.source = std::make_shared<const EmpiricalMeasure>(std::move(m));
  return s;
}

int SamplerSpec::dim() const {
  if (kind == Kind::measure) return source ? source->dim() : 0;
  return static_cast<int>(a.size());
}

void SamplerSpec::validate(int expected_dim, const char* what) const {
  const std::string w(what);
  if (kind == Kind::measure) {
    require(source != nullptr && !source->empty(), w + ": sampler measure is empty");
  } else {
    require(!a.empty(), w + ": sampler has no coordinates");
    for (double v : a) require(std::isfinite(v), w + ": non-finite sampler parameter");
  }
  require(dim() == expected_dim, w + ": sampler dimension " + std::to_string(dim()) +
                                     " does not match model dimension " +
                                     std::to_string(expected_dim));
  if (kind == Kind::gauss) {
    require(b.size() == a.size(), w + ": gauss needs one sd per coordinate");
    for (double v : b) require(std::isfinite(v) && v >= 0.0, w + ": sd must be >= 0");
  }
  if (kind == Kind::uniform) {
    require(b.size() == a.size(), w + ": uniform needs one upper bound per coordinate");
    for (std::size_t c = 0; c < a.size(); ++c) {
      require(std::isfinite(b[c]) && b[c] >= a[c], w + ": uniform needs lo <= hi");
    }
  }
}

void SamplerSpec::sample(const Stream& stream, std::uint32_t first, std::size_t count,
                         double* out) const {
  const int d = dim();
  const auto ud = static_cast<std::size_t>(d);
  switch (kind) {
    case Kind::point:
      for (std::size_t i = 0; i < count; ++i) {
        std::copy(a.begin(), a.end(), out + i * ud);
      }
      break;
    case Kind::gauss:
      stream.normals(0, first, count, d, out);
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t c = 0; c < ud; ++c) out[i * ud + c] = a[c] + b[c] * out[i * ud + c];
      }
      break;
    case Kind::uniform:
      stream.uniforms(0, first, count, d, out);
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t c = 0; c < ud; ++c) {
          out[i * ud + c] = a[c] + (b[c] - a[c]) * out[i * ud + c];
        }
      }
      break;
    case Kind::measure: {
      const auto& w = source->weights();
      std::vector<double> cum(w.size());
      double acc = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) cum[j] = (acc += w[j]);
      std::vector<double> u(count);
      stream.uniforms(0, first, count, 1, u.data());
      for (std::size_t i = 0; i < count; ++i) {
        const double target = u[i] * acc;
        auto it = std::upper_bound(cum.begin(), cum.end(), target);
        std::size_t j = static_cast<std::size_t>(it - cum.begin());
        if (j >= w.size()) j = w.size() - 1;
        while (w[j] == 0.0 && j > 0) --j;
        const auto at = source->atom(j);
        std::copy(at.begin(), at.end(), out + i * ud);
      }
      break;
    }
  }
}

std::vector<double> SamplerSpec::mean() const {
  switch (kind) {
    case Kind::point:
    case Kind::gauss:
      return a;
    case Kind::uniform: {
      std::vector<double> m(a.size());
      for (std::size_t c = 0; c < a.size(); ++c) m[c] = 0.5 * (a[c] + b[c]);
      return m;
    }
    case Kind::measure:
      return mean_of(*source);
  }
  return {};
}

namespace {

bool is_multiple(double t, double h) {
  const double r = t / h;
  return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, std::abs(r));
}

}  // namespace

void SimConfig::validate() const {
  require(std::isfinite(epsilon) && epsilon > 0.0 && epsilon <= 1.0,
          "epsilon must lie in (0, 1]");
  require(std::isfinite(h_slow) && h_slow > 0.0, "h_slow must be positive");
  require(std::isfinite(eta_fast) && eta_fast > 0.0 && eta_fast <= 1.0,
          "eta_fast must lie in (0, 1]");
  require(std::isfinite(T) && T > 0.0, "T must be positive");
  require(h_slow <= T * (1.0 + 1e-12), "h_slow must not exceed T");
  require(is_multiple(T, h_slow), "T must be an integer multiple of h_slow");
  require(N >= 2, "N must be at least 2");
  require(N <= 0x7FFFFFFFu, "N is too large");
}

std::size_t SimConfig::steps() const {
  return static_cast<std::size_t>(std::llround(T / h_slow));
}

std::size_t SimConfig::n_sub() const {
  const double r = h_slow / (epsilon * eta_fast);
  const double n = std::ceil(r - 1e-9 * std::max(1.0, r));
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

DistributionFlow::DistributionFlow(std::vector<double> times,
                                   std::vector<EmpiricalMeasure> mu,
                                   std::vector<EmpiricalMeasure> nu) {
  require(!times.empty(), "distribution flow has no time nodes");
  require(mu.size() == times.size() && nu.size() == times.size(),
          "distribution flow needs one (mu, nu) pair per node");
  for (std::size_t k = 1; k < times.size(); ++k) {
    require(times[k] > times[k - 1], "flow time nodes must increase");
  }
  auto d = std::make_shared<Data>();
  d->times = std::move(times);
  d->mu = std::move(mu);
  d->nu = std::move(nu);
  for (std::size_t k = 0; k < d->times.size(); ++k) {
    require(d->mu[k].dim() == d->mu[0].dim() && d->nu[k].dim() == d->nu[0].dim(),
            "flow measures change dimension");
  }
  d->mu_view.reserve(d->mu.size());
  d->nu_view.reserve(d->nu.size());
  for (const auto& m : d->mu) d->mu_view.emplace_back(m);
  for (const auto& m : d->nu) d->nu_view.emplace_back(m);
  data_ = std::move(d);
}

DistributionFlow DistributionFlow::constant(double T, EmpiricalMeasure mu,
                                            EmpiricalMeasure nu) {
  require(T > 0.0, "constant flow needs T > 0");
  EmpiricalMeasure mu2 = mu, nu2 = nu;
  return DistributionFlow({0.0, T}, {std::move(mu), std::move(mu2)},
                          {std::move(nu), std::move(nu2)});
}

std::size_t DistributionFlow::node_at(double t) const {
  if (empty()) throw RuntimeFailure("distribution flow is empty");
  const auto& ts = data_->times;
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  if (t < ts.front() - tol || t > ts.back() + tol) {
    throw RuntimeFailure("distribution flow does not cover t=" + std::to_string(t) +
                         " (range " + std::to_string(ts.front()) + " .. " +
                         std::to_string(ts.back()) + ")");
  }
  auto it = std::lower_bound(ts.begin(), ts.end(), t - tol);
  if (it == ts.end()) --it;
  return static_cast<std::size_t>(it - ts.begin());
}

namespace detail {

void apply_diffusion(const double* S, std::size_t S_stride, const double* z,
                     std::size_t n, int d, double scale, double* out) {
  const auto ud = static_cast<std::size_t>(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* Si = S + i * S_stride;
    const double* zi = z + i * ud;
    double* oi = out + i * ud;
    for (std::size_t r = 0; r < ud; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < ud; ++c) acc += Si[r * ud + c] * zi[c];
      oi[r] = scale * acc;
    }
  }
}

void check_finite(const std::vector<double>& v, int dim, double t, const char* where) {
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (!std::isfinite(v[j]) || std::abs(v[j]) > kBlowUp) {
      throw BlowUpError(t, j / static_cast<std::size_t>(dim), where);
    }
  }
}

}  // namespace detail

SlowFastEnsemble initial_ensemble(const ModelSpec& model, const SimConfig& cfg) {
  cfg.validate();
  cfg.initial_slow.validate(model.d1, "initial_slow");
  cfg.initial_fast.validate(model.d2, "initial_fast");
  SlowFastEnsemble e;
  e.d1 = model.d1;
  e.d2 = model.d2;
  e.X.resize(cfg.N * static_cast<std::size_t>(model.d1));
  e.Y.resize(cfg.N * static_cast<std::size_t>(model.d2));
  const Stream s1(cfg.seed, StreamTag::init_slow), s2(cfg.seed, StreamTag::init_fast);
  parallel_for(cfg.N, [&](std::size_t b, std::size_t end) {
    const auto first = static_cast<std::uint32_t>(b);
    cfg.initial_slow.sample(s1, first, end - b, e.X.data() + b * e.d1);
    cfg.initial_fast.sample(s2, first, end - b, e.Y.data() + b * e.d2);
  }, 256);
  return e;
}

namespace {

struct SlotSource {
  const DistributionFlow* flow = nullptr;
  const MeasureView& mu(double t, const MeasureView& own) const {
    return flow ? flow->mu_view(flow->node_at(t)) : own;
  }
  const MeasureView& nu(double t, const MeasureView& own) const {
    return flow ? flow->nu_view(flow->node_at(t)) : own;
  }
};

void advance(const ModelSpec& model, const SlotSource& slots, SlowFastEnsemble& ens,
             const SimConfig& cfg, const StepExtras& extras) {
  const std::size_t N = ens.size();
  const int d1 = ens.d1, d2 = ens.d2;
  const auto u1 = static_cast<std::size_t>(d1), u2 = static_cast<std::size_t>(d2);
  require(ens.Y.size() == N * u2, "ensemble slow and fast sizes differ");
  if (slots.flow) {
    if (slots.flow->empty()) throw RuntimeFailure("distribution flow is empty");
    require(slots.flow->mu(0).dim() == d1 && slots.flow->nu(0).dim() == d2,
            "flow dimensions do not match the model");
  }
  const std::size_t k = ens.step;
  const double h = cfg.h_slow;
  const double t0 = cfg.time_of(k);
  const std::size_t nsub = cfg.n_sub();
  const double delta = h / static_cast<double>(nsub);
  const double fast_h = delta / cfg.epsilon;
  const double fast_scale = std::sqrt(fast_h);
  const auto& kern = simd::kernels();
  const Stream slow_stream(cfg.seed, StreamTag::slow);
  const Stream fast_stream(cfg.seed, StreamTag::fast);

  const MeasureView mu_own(d1, ens.X, {});
  std::vector<double> b_acc(N * u1, 0.0);
  std::vector<double> Ynext(ens.Y.size());
  const bool path = extras.path_fn != nullptr && extras.integral != nullptr;
  std::vector<double> f_left, f_right;
  if (path) {
    require(extras.integral->size() == N, "path integral buffer has the wrong size");
    f_left.resize(N);
    f_right.resize(N);
  }

  // Slow diffusion is read at the start of the step.
  const MeasureView nu_start(d2, ens.Y, {});
  const MeasureView& mu0 = slots.mu(t0, mu_own);
  const MeasureView& nu0 = slots.nu(t0, nu_start);
  std::vector<double> sig;
  std::size_t sig_stride = u1 * u1;
  if (model.sigma_constant) {
    sig.resize(u1 * u1);
    model.sigma(ens.X.data(), 1, mu0, nu0, sig.data());
    sig_stride = 0;
  } else {
    sig.resize(N * u1 * u1);
    parallel_for(N, [&](std::size_t b, std::size_t e) {
      model.sigma(ens.X.data() + b * u1, e - b, mu0, nu0, sig.data() + b * u1 * u1);
    });
  }
  if (path) {
    extras.path_fn->operator()(ens.X.data(), ens.Y.data(), N, mu0, f_left.data());
  }

  for (std::size_t s = 0; s < nsub; ++s) {
    const double ts = t0 + static_cast<double>(s) * delta;
    const MeasureView nu_own(d2, ens.Y, {});
    const MeasureView& mu = slots.mu(ts, mu_own);
    const MeasureView& nu = slots.nu(ts, nu_own);
    const std::uint64_t gstep = static_cast<std::uint64_t>(k) * nsub + s;
    std::vector<double> Gc;
    if (model.G_constant) {
      Gc.resize(u2 * u2);
      model.G(ens.X.data(), ens.Y.data(), 1, mu, nu, Gc.data());
    }
    parallel_for(N, [&](std::size_t b, std::size_t e) {
      const std::size_t n = e - b;
      std::vector<double> buf(n * u1), drift(n * u2), noise(n * u2), z(n * u2);
      model.b(ens.X.data() + b * u1, ens.Y.data() + b * u2, n, mu, nu, buf.data());
      kern.accumulate(b_acc.data() + b * u1, buf.data(), n * u1);
      model.F(ens.X.data() + b * u1, ens.Y.data() + b * u2, n, mu, nu, drift.data());
      fast_stream.normals(gstep, static_cast<std::uint32_t>(b), n, d2, z.data());
      if (model.G_constant) {
        detail::apply_diffusion(Gc.data(), 0, z.data(), n, d2, fast_scale, noise.data());
      } else {
        std::vector<double> Gm(n * u2 * u2);
        model.G(ens.X.data() + b * u1, ens.Y.data() + b * u2, n, mu, nu, Gm.data());
        detail::apply_diffusion(Gm.data(), u2 * u2, z.data(), n, d2, fast_scale,
                                noise.data());
      }
      std::copy(ens.Y.begin() + static_cast<std::ptrdiff_t>(b * u2),
                ens.Y.begin() + static_cast<std::ptrdiff_t>(e * u2),
                Ynext.begin() + static_cast<std::ptrdiff_t>(b * u2));
      kern.euler_update(Ynext.data() + b * u2, drift.data(), noise.data(), fast_h,
                        n * u2);
    });
    ens.Y.swap(Ynext);
    detail::check_finite(ens.Y, d2, ts + delta, "fast variable");
    if (path) {
      // X is frozen over the slow step; the right endpoint still reads X_k.
      const MeasureView& mu_r = slots.mu(ts + delta, mu_own);
      extras.path_fn->operator()(ens.X.data(), ens.Y.data(), N, mu_r, f_right.data());
      auto& I = *extras.integral;
      for (std::size_t i = 0; i < N; ++i) I[i] += 0.5 * delta * (f_left[i] + f_right[i]);
      f_left.swap(f_right);
    }
  }

  std::vector<double> Xnext(ens.X.size());
  const double inv = 1.0 / static_cast<double>(nsub);
  const double slow_scale = std::sqrt(h);
  parallel_for(N, [&](std::size_t b, std::size_t e) {
    const std::size_t n = e - b;
    std::vector<double> z(n * u1), noise(n * u1);
    double* acc = b_acc.data() + b * u1;
    if (nsub > 1) {
      for (std::size_t j = 0; j < n * u1; ++j) acc[j] *= inv;
    }
    slow_stream.normals(k, static_cast<std::uint32_t>(b), n, d1, z.data());
    detail::apply_diffusion(sig.data() + (sig_stride ? b * sig_stride : 0), sig_stride,
                            z.data(), n, d1, slow_scale, noise.data());
    std::copy(ens.X.begin() + static_cast<std::ptrdiff_t>(b * u1),
              ens.X.begin() + static_cast<std::ptrdiff_t>(e * u1),
              Xnext.begin() + static_cast<std::ptrdiff_t>(b * u1));
    kern.euler_update(Xnext.data() + b * u1, acc, noise.data(), h, n * u1);
  });
  ens.X.swap(Xnext);
  ens.step = k + 1;
  ens.t = cfg.time_of(k + 1);
  detail::check_finite(ens.X, d1, ens.t, "slow variable");
}

}  // namespace

void step_coupled(const ModelSpec& model, SlowFastEnsemble& ens, const SimConfig& cfg,
                  const StepExtras& extras) {
  advance(model, SlotSource{}, ens, cfg, extras);
}

void step_nonautonomous(const ModelSpec& model, const DistributionFlow& flow,
                        SlowFastEnsemble& ens, const SimConfig& cfg,
                        const StepExtras& extras) {
  advance(model, SlotSource{&flow}, ens, cfg, extras);
}

std::vector<double> full_grid(const SimConfig& cfg) {
  std::vector<double> g(cfg.steps() + 1);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = cfg.time_of(k);
  return g;
}

std::size_t step_index(const SimConfig& cfg, double t) {
  require(std::isfinite(t) && t >= -1e-12 && t <= cfg.T * (1.0 + 1e-9) + 1e-12,
          "record time " + std::to_string(t) + " outside [0, T]");
  require(is_multiple(t, cfg.h_slow),
          "record time " + std::to_string(t) + " is not a multiple of h_slow");
  return static_cast<std::size_t>(std::llround(t / cfg.h_slow));
}

Trajectory simulate(const ModelSpec& model, const SimConfig& cfg,
                    const DistributionFlow* flow, const std::vector<double>& record,
                    const StepExtras& extras) {
  model.validate();
  require(!record.empty(), "record grid is empty");
  std::vector<std::size_t> steps;
  for (double t : record) steps.push_back(step_index(cfg, t));
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());

  SlowFastEnsemble ens = initial_ensemble(model, cfg);
  Trajectory out;
  out.reserve(steps.size());
  std::size_t next = 0;
  auto snap = [&] {
    out.push_back(Snapshot{ens.t, EmpiricalMeasure::uniform(ens.d1, ens.X),
                           EmpiricalMeasure::uniform(ens.d2, ens.Y)});
  };
  if (steps[next] == 0) {
    snap();
    ++next;
  }
  while (next < steps.size()) {
    if (flow) {
      step_nonautonomous(model, *flow, ens, cfg, extras);
    } else {
      step_coupled(model, ens, cfg, extras);
    }
    if (ens.step == steps[next]) {
      snap();
      ++next;
    }
  }
  return out;
}

DistributionFlow flow_from(const Trajectory& traj) {
  std::vector<double> t;
  std::vector<EmpiricalMeasure> mu, nu;
  for (const auto& s : traj) {
    t.push_back(s.t);
    mu.push_back(s.slow);
    nu.push_back(s.fast);
  }
  return DistributionFlow(std::move(t), std::move(mu), std::move(nu));
}

}  // namespace mmv
