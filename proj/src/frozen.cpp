#include "mmv/frozen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mmv/error.hpp"
#include "mmv/measure_io.hpp"
#include "mmv/parallel.hpp"
#include "mmv/simd/kernels.hpp"

namespace mmv {

void FrozenConfig::validate() const {
  require(K >= 16, "K must be at least 16");
  require(std::isfinite(burn_in) && burn_in >= 0.0, "burn_in must be positive");
  require(std::isfinite(avg_window) && avg_window >= 0.0, "avg_window must be positive");
  require(std::isfinite(picard_tol) && picard_tol > 0.0, "picard_tol must be positive");
  require(picard_max >= 1, "picard_max must be at least 1");
  require(std::isfinite(h_fast) && h_fast > 0.0, "h_fast must be positive");
  require(snapshots >= 1, "snapshots must be at least 1");
}

double FrozenConfig::burn_in_for(const ModelSpec& m) const {
  return burn_in > 0.0 ? burn_in : 8.0 / (m.meta.C1 / 2.0);
}

double FrozenConfig::window_for(const ModelSpec& m) const {
  return avg_window > 0.0 ? avg_window : 4.0 * burn_in_for(m);
}

namespace {

std::size_t steps_for(double time, double h) {
  const double r = time / h;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(r - 1e-9 * std::max(1.0, r))));
}

// Atom order by coordinates, then weight; ties keep input order.
std::vector<std::size_t> canonical_order(const EmpiricalMeasure& m) {
  std::vector<std::size_t> idx(m.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto pa = m.atom(a), pb = m.atom(b);
    for (std::size_t c = 0; c < pa.size(); ++c) {
      if (pa[c] != pb[c]) return pa[c] < pb[c];
    }
    return m.weight(a) < m.weight(b);
  });
  return idx;
}

EmpiricalMeasure reorder(const EmpiricalMeasure& m, const std::vector<std::size_t>& idx) {
  std::vector<double> c, w;
  c.reserve(m.coords().size());
  for (std::size_t i : idx) {
    const auto a = m.atom(i);
    c.insert(c.end(), a.begin(), a.end());
    w.push_back(m.weight(i));
  }
  return EmpiricalMeasure(m.dim(), std::move(c), std::move(w));
}

EmpiricalMeasure canonical(const EmpiricalMeasure& m) { return reorder(m, canonical_order(m)); }

}  // namespace

InvariantFamily solve_frozen_slot(const ModelSpec& model, const EmpiricalMeasure& mu_slot,
                                  const EmpiricalMeasure* nu_fixed,
                                  const EmpiricalMeasure& atoms, const FrozenConfig& cfg) {
  model.validate();
  cfg.validate();
  const int d1 = model.d1, d2 = model.d2;
  const auto u1 = static_cast<std::size_t>(d1), u2 = static_cast<std::size_t>(d2);
  require(mu_slot.dim() == d1 && atoms.dim() == d1, "frozen solver: mu has the wrong dimension");
  if (nu_fixed) require(nu_fixed->dim() == d2, "frozen solver: nu has the wrong dimension");
  cfg.initial.validate(d2, "frozen initial law");

  const auto order = canonical_order(atoms);
  const std::size_t J = atoms.size(), K = cfg.K, P = J * K;
  require(P <= 0x7FFFFFFFu, "frozen solver: too many particles");

  const EmpiricalMeasure mu_sorted = canonical(mu_slot);
  const MeasureView mu_view(mu_sorted);
  const EmpiricalMeasure nu_sorted = nu_fixed ? canonical(*nu_fixed) : EmpiricalMeasure();
  const MeasureView nu_fixed_view = nu_fixed ? MeasureView(nu_sorted) : MeasureView();

  std::vector<double> xrep(P * u1), wts(P);
  for (std::size_t r = 0; r < J; ++r) {
    const auto a = atoms.atom(order[r]);
    const double w = atoms.weight(order[r]) / static_cast<double>(K);
    for (std::size_t k = 0; k < K; ++k) {
      std::copy(a.begin(), a.end(), xrep.begin() + static_cast<std::ptrdiff_t>((r * K + k) * u1));
      wts[r * K + k] = w;
    }
  }

  std::vector<double> Y(P * u2), Ynext(P * u2);
  const Stream init_stream(cfg.seed, StreamTag::frozen, 1);
  const Stream noise_stream(cfg.seed, StreamTag::frozen, 0);
  parallel_for(P, [&](std::size_t b, std::size_t e) {
    cfg.initial.sample(init_stream, static_cast<std::uint32_t>(b), e - b, Y.data() + b * u2);
  }, 256);

  const double burn = cfg.burn_in_for(model), window = cfg.window_for(model);
  const double h = cfg.h_fast, sq = std::sqrt(h);
  const std::size_t n_burn = steps_for(burn, h), n_win = steps_for(window, h);
  const std::size_t S = std::min(cfg.snapshots, n_win);
  const std::size_t stride = n_win / S;
  std::vector<std::vector<double>> snaps(J);
  for (auto& s : snaps) s.reserve(S * K * u2);
  std::vector<double> sum1(J * u2, 0.0), sum2(J * u2, 0.0);
  std::vector<double> start_cloud;
  const auto& kern = simd::kernels();

  std::vector<double> Gc;
  for (std::size_t step = 0; step < n_burn + n_win; ++step) {
    const MeasureView nu_live = nu_fixed ? MeasureView() : MeasureView(d2, Y, wts);
    const MeasureView& nu = nu_fixed ? nu_fixed_view : nu_live;
    if (model.G_constant && Gc.empty()) {
      Gc.resize(u2 * u2);
      model.G(xrep.data(), Y.data(), 1, mu_view, nu, Gc.data());
    }
    parallel_for(P, [&](std::size_t b, std::size_t e) {
      const std::size_t n = e - b;
      std::vector<double> drift(n * u2), z(n * u2), noise(n * u2);
      model.F(xrep.data() + b * u1, Y.data() + b * u2, n, mu_view, nu, drift.data());
      noise_stream.normals(step, static_cast<std::uint32_t>(b), n, d2, z.data());
      if (model.G_constant) {
        detail::apply_diffusion(Gc.data(), 0, z.data(), n, d2, sq, noise.data());
      } else {
        std::vector<double> Gm(n * u2 * u2);
        model.G(xrep.data() + b * u1, Y.data() + b * u2, n, mu_view, nu, Gm.data());
        detail::apply_diffusion(Gm.data(), u2 * u2, z.data(), n, d2, sq, noise.data());
      }
      std::copy(Y.begin() + static_cast<std::ptrdiff_t>(b * u2),
                Y.begin() + static_cast<std::ptrdiff_t>(e * u2),
                Ynext.begin() + static_cast<std::ptrdiff_t>(b * u2));
      kern.euler_update(Ynext.data() + b * u2, drift.data(), noise.data(), h, n * u2);
    });
    Y.swap(Ynext);
    detail::check_finite(Y, d2, static_cast<double>(step + 1) * h, "frozen fast variable");
    if (step + 1 == n_burn) start_cloud = Y;
    if (step >= n_burn) {
      const std::size_t w = step - n_burn;
      for (std::size_t r = 0; r < J; ++r) {
        for (std::size_t k = 0; k < K; ++k) {
          const double* y = Y.data() + (r * K + k) * u2;
          for (std::size_t c = 0; c < u2; ++c) {
            sum1[r * u2 + c] += y[c];
            sum2[r * u2 + c] += y[c] * y[c];
          }
        }
      }
      if ((w + 1) % stride == 0 && (w + 1) / stride <= S) {
        for (std::size_t r = 0; r < J; ++r) {
          snaps[r].insert(snaps[r].end(), Y.begin() + static_cast<std::ptrdiff_t>(r * K * u2),
                          Y.begin() + static_cast<std::ptrdiff_t>((r + 1) * K * u2));
        }
      }
    }
  }

  InvariantFamily fam;
  fam.mu = atoms;
  fam.slices.resize(J);
  fam.slice_mean.assign(J, std::vector<double>(u2));
  fam.slice_m2.assign(J, std::vector<double>(u2));
  fam.pooled_mean.assign(u2, 0.0);
  fam.pooled_m2.assign(u2, 0.0);
  const double denom = static_cast<double>(K) * static_cast<double>(n_win);
  std::vector<MixtureComponent> comps;
  for (std::size_t r = 0; r < J; ++r) {
    const std::size_t j = order[r];
    fam.slices[j] = EmpiricalMeasure::uniform(d2, std::move(snaps[r]));
    for (std::size_t c = 0; c < u2; ++c) {
      fam.slice_mean[j][c] = sum1[r * u2 + c] / denom;
      fam.slice_m2[j][c] = sum2[r * u2 + c] / denom;
      fam.pooled_mean[c] += atoms.weight(j) * fam.slice_mean[j][c];
      fam.pooled_m2[c] += atoms.weight(j) * fam.slice_m2[j][c];
    }
  }
  for (std::size_t r = 0; r < J; ++r) {
    comps.push_back({&fam.slices[order[r]], atoms.weight(order[r])});
  }
  fam.pooled = mixture(comps);
  fam.diag.burn_in = burn;
  fam.diag.avg_window = window;
  fam.diag.gamma_hat = model.meta.C1 / 2.0;
  fam.diag.steps = n_burn + n_win;
  const EmpiricalMeasure a(d2, std::move(start_cloud), wts);
  const EmpiricalMeasure b(d2, Y, wts);
  fam.diag.residual = weighted_tv_distance(a, b, WeightFunction{model.meta.p});
  fam.diag.nonstationary = fam.diag.residual > 10.0 * cfg.picard_tol;
  return fam;
}

InvariantFamily solve_frozen_pooled(const ModelSpec& model, const EmpiricalMeasure& mu,
                                    const FrozenConfig& cfg) {
  return solve_frozen_slot(model, mu, nullptr, mu, cfg);
}

EmpiricalMeasure sampler_law(const SamplerSpec& s, std::uint64_t seed) {
  if (s.kind == SamplerSpec::Kind::point) return EmpiricalMeasure::point(s.a);
  if (s.kind == SamplerSpec::Kind::measure) return *s.source;
  const std::size_t n = 4096;
  std::vector<double> c(n * static_cast<std::size_t>(s.dim()));
  s.sample(Stream(seed, StreamTag::frozen, 2), 0, n, c.data());
  return EmpiricalMeasure::uniform(s.dim(), std::move(c));
}

InvariantFamily solve_frozen_recursive(const ModelSpec& model, const EmpiricalMeasure& mu,
                                       const InvariantFamily* prev, const FrozenConfig& cfg) {
  if (prev) {
    require(prev->mu.dim() == mu.dim(), "previous family has a different dimension");
    return solve_frozen_slot(model, mu, &prev->pooled, mu, cfg);
  }
  const EmpiricalMeasure zeta0 = sampler_law(cfg.initial, cfg.seed);
  return solve_frozen_slot(model, mu, &zeta0, mu, cfg);
}

RecursionReport run_recursion(const ModelSpec& model, const EmpiricalMeasure& mu,
                              const FrozenConfig& cfg, int n, bool fresh_seeds) {
  RecursionReport rep;
  const int limit = n > 0 ? n : cfg.picard_max;
  const WeightFunction V{model.meta.p};
  EmpiricalMeasure prev_pooled = sampler_law(cfg.initial, cfg.seed);
  for (int i = 1; i <= limit; ++i) {
    FrozenConfig c = cfg;
    if (fresh_seeds) c.seed = splitmix64(cfg.seed + static_cast<std::uint64_t>(i));
    const InvariantFamily* prev = rep.iterates.empty() ? nullptr : &rep.iterates.back();
    InvariantFamily fam = solve_frozen_recursive(model, mu, prev, c);
    rep.distances.push_back(weighted_tv_distance(fam.pooled, prev_pooled, V));
    prev_pooled = fam.pooled;
    rep.iterates.push_back(std::move(fam));
    if (rep.distances.back() < cfg.picard_tol) {
      rep.converged = true;
      if (n <= 0) break;
    }
  }
  std::vector<double> ratios;
  for (std::size_t i = 2; i < rep.distances.size(); ++i) {
    if (rep.distances[i - 1] > 0.0) ratios.push_back(rep.distances[i] / rep.distances[i - 1]);
  }
  if (ratios.empty() && rep.distances.size() == 2 && rep.distances[0] > 0.0) {
    ratios.push_back(rep.distances[1] / rep.distances[0]);
  }
  if (!ratios.empty()) {
    std::sort(ratios.begin(), ratios.end());
    const std::size_t m = ratios.size();
    rep.contraction_ratio =
        m % 2 ? ratios[m / 2] : 0.5 * (ratios[m / 2 - 1] + ratios[m / 2]);
    rep.contracting = rep.contraction_ratio < 1.0;
  }
  return rep;
}

namespace {

// Fast SDE with both slots frozen; advances cloud Y (n x d2) by `steps`.
struct FrozenSde {
  const ModelSpec& model;
  std::vector<double> xrep;
  MeasureView mu, nu;
  double h;
  Stream stream;

  void advance(std::vector<double>& Y, std::size_t first_step, std::size_t steps) const {
    const int d2 = model.d2;
    const auto u1 = static_cast<std::size_t>(model.d1), u2 = static_cast<std::size_t>(d2);
    const std::size_t n = Y.size() / u2;
    const double sq = std::sqrt(h);
    const auto& kern = simd::kernels();
    std::vector<double> Yn(Y.size());
    for (std::size_t s = 0; s < steps; ++s) {
      parallel_for(n, [&](std::size_t b, std::size_t e) {
        const std::size_t m = e - b;
        std::vector<double> drift(m * u2), z(m * u2), noise(m * u2), Gm(m * u2 * u2);
        model.F(xrep.data() + b * u1, Y.data() + b * u2, m, mu, nu, drift.data());
        model.G(xrep.data() + b * u1, Y.data() + b * u2, m, mu, nu, Gm.data());
        stream.normals(first_step + s, static_cast<std::uint32_t>(b), m, d2, z.data());
        detail::apply_diffusion(Gm.data(), u2 * u2, z.data(), m, d2, sq, noise.data());
        std::copy(Y.begin() + static_cast<std::ptrdiff_t>(b * u2),
                  Y.begin() + static_cast<std::ptrdiff_t>(e * u2),
                  Yn.begin() + static_cast<std::ptrdiff_t>(b * u2));
        kern.euler_update(Yn.data() + b * u2, drift.data(), noise.data(), h, m * u2);
      });
      Y.swap(Yn);
      detail::check_finite(Y, d2, static_cast<double>(first_step + s + 1) * h,
                           "frozen fast variable");
    }
  }
};

}  // namespace

ErgodicityFit ergodicity_fit(const ModelSpec& model, const std::vector<double>& x,
                             const EmpiricalMeasure& mu, const EmpiricalMeasure& nu_frozen,
                             const EmpiricalMeasure& y0_cloud, const ErgodicityConfig& cfg) {
  model.validate();
  require(static_cast<int>(x.size()) == model.d1, "ergodicity: x has the wrong dimension");
  require(y0_cloud.dim() == model.d2 && nu_frozen.dim() == model.d2,
          "ergodicity: fast measures have the wrong dimension");
  require(cfg.s_min > 0.0 && cfg.s_max > cfg.s_min && cfg.grid >= 3,
          "ergodicity: bad time grid");
  const std::size_t n = y0_cloud.size();
  const WeightFunction V{model.meta.p};

  // Stationary reference and an independent stationary cloud of the same size.
  FrozenConfig fc;
  fc.K = std::max<std::size_t>(n, 16);
  fc.h_fast = cfg.h_fast;
  fc.seed = splitmix64(cfg.seed ^ 0xE4D0u);
  fc.initial = SamplerSpec::from_measure(y0_cloud);
  fc.avg_window = fc.burn_in_for(model);
  const EmpiricalMeasure xpt = EmpiricalMeasure::point(x);
  const InvariantFamily ref_fam = solve_frozen_slot(model, mu, &nu_frozen, xpt, fc);
  const EmpiricalMeasure& ref = ref_fam.slices[0];

  FrozenSde sde{model, {}, MeasureView(mu), MeasureView(nu_frozen), cfg.h_fast,
                Stream(cfg.seed, StreamTag::ergodic)};
  for (std::size_t i = 0; i < n; ++i) sde.xrep.insert(sde.xrep.end(), x.begin(), x.end());

  std::vector<double> other = y0_cloud.coords();
  FrozenSde indep = sde;
  indep.stream = Stream(splitmix64(cfg.seed + 17), StreamTag::ergodic);
  indep.advance(other, 0, steps_for(ref_fam.diag.burn_in + ref_fam.diag.avg_window, cfg.h_fast));
  const EmpiricalMeasure other_m = EmpiricalMeasure::uniform(model.d2, std::move(other));
  const Binning bins = fixed_binning({&ref, &y0_cloud}, n);

  ErgodicityFit fit;
  fit.noise_floor = binned_tv(other_m, ref, V, bins).weighted;

  std::vector<double> Y = y0_cloud.coords();
  std::size_t done = 0;
  const double ratio = std::log(cfg.s_max / cfg.s_min) / (cfg.grid - 1);
  for (int g = 0; g < cfg.grid; ++g) {
    const double s = cfg.s_min * std::exp(ratio * g);
    const std::size_t target = static_cast<std::size_t>(std::llround(s / cfg.h_fast));
    if (target <= done && g > 0) continue;
    sde.advance(Y, done, target - done);
    done = target;
    const EmpiricalMeasure cur(model.d2, Y, y0_cloud.weights());
    const TvEstimate tv = binned_tv(cur, ref, V, bins);
    fit.s.push_back(static_cast<double>(done) * cfg.h_fast);
    fit.rho.push_back(tv.weighted);
    fit.mass.push_back(tv.mass);
  }

  // First contiguous run of points below the saturation mass and above the floor.
  std::size_t b = 0;
  while (b < fit.s.size() && fit.mass[b] >= cfg.max_mass) ++b;
  std::size_t e = b;
  while (e < fit.s.size() && fit.rho[e] > cfg.floor_factor * fit.noise_floor) ++e;
  fit.fit_begin = b;
  fit.fit_end = e;
  if (e < b + 3) {
    throw RuntimeFailure("ergodicity fit: no decaying region above the noise floor");
  }
  double ms = 0.0, ml = 0.0;
  const double m = static_cast<double>(e - b);
  for (std::size_t i = b; i < e; ++i) {
    ms += fit.s[i];
    ml += std::log(fit.rho[i]);
  }
  ms /= m;
  ml /= m;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = b; i < e; ++i) {
    sxy += (fit.s[i] - ms) * (std::log(fit.rho[i]) - ml);
    sxx += (fit.s[i] - ms) * (fit.s[i] - ms);
  }
  const double slope = sxy / sxx;
  fit.gamma_hat = -slope;
  fit.c_hat = std::exp(ml - slope * ms);
  if (!(fit.gamma_hat > 0.0)) {
    throw RuntimeFailure("ergodicity fit: fitted rate is not positive");
  }
  return fit;
}

PoissonResult solve_poisson(const ModelSpec& model, const FastFunction& f,
                            const std::vector<double>& x, const EmpiricalMeasure& mu,
                            const std::vector<double>& y, const FrozenConfig& frozen,
                            const PoissonConfig& cfg) {
  model.validate();
  require(static_cast<int>(x.size()) == model.d1, "poisson: x has the wrong dimension");
  require(static_cast<int>(y.size()) == model.d2, "poisson: y has the wrong dimension");
  require(cfg.n_paths >= 2 && cfg.h_fast > 0.0, "poisson: bad path settings");
  const auto u2 = static_cast<std::size_t>(model.d2);

  const InvariantFamily fam = solve_frozen_pooled(model, mu, frozen);
  const InvariantFamily slice =
      solve_frozen_slot(model, mu, &fam.pooled, EmpiricalMeasure::point(x), frozen);
  const EmpiricalMeasure& z = slice.slices[0];
  double centering = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) centering += z.weight(i) * f(z.atom(i).data());

  PoissonResult res;
  res.centering = centering;
  if (std::abs(centering) > cfg.centering_tol) {
    throw ValidationError("poisson: f is not centered (integral against the slice is " +
                          std::to_string(centering) + ")");
  }
  const double gamma = cfg.gamma > 0.0 ? cfg.gamma : model.meta.C1 / 2.0;
  res.T_max = cfg.T_max > 0.0 ? cfg.T_max : std::log(1e3) / gamma;
  const std::size_t steps = steps_for(res.T_max, cfg.h_fast);
  res.T_max = static_cast<double>(steps) * cfg.h_fast;

  const std::size_t n = cfg.n_paths;
  FrozenSde sde{model, {}, MeasureView(mu), MeasureView(fam.pooled), cfg.h_fast,
                Stream(cfg.seed, StreamTag::poisson)};
  for (std::size_t i = 0; i < n; ++i) sde.xrep.insert(sde.xrep.end(), x.begin(), x.end());
  std::vector<double> Y(n * u2);
  for (std::size_t i = 0; i < n; ++i) std::copy(y.begin(), y.end(), Y.begin() + static_cast<std::ptrdiff_t>(i * u2));
  std::vector<double> I(n, 0.0), prev(n);
  for (std::size_t i = 0; i < n; ++i) prev[i] = f(Y.data() + i * u2);
  for (std::size_t s = 0; s < steps; ++s) {
    sde.advance(Y, s, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double cur = f(Y.data() + i * u2);
      I[i] += 0.5 * cfg.h_fast * (prev[i] + cur);
      prev[i] = cur;
    }
  }
  double m = 0.0;
  for (double v : I) m += v;
  m /= static_cast<double>(n);
  double var = 0.0;
  for (double v : I) var += (v - m) * (v - m);
  var /= static_cast<double>(n - 1);
  res.value = m;
  res.std_error = std::sqrt(var / static_cast<double>(n));
  return res;
}

void write_family(const InvariantFamily& fam, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_measure_csv(dir + "/mu.csv", fam.mu);
  for (std::size_t j = 0; j < fam.slices.size(); ++j) {
    write_measure_csv(dir + "/slice_" + std::to_string(j) + ".csv", fam.slices[j]);
  }
  write_measure_csv(dir + "/pooled.csv", fam.pooled);
  nlohmann::ordered_json d;
  d["burn_in"] = fam.diag.burn_in;
  d["avg_window"] = fam.diag.avg_window;
  d["gamma_hat"] = fam.diag.gamma_hat;
  d["residual"] = fam.diag.residual;
  d["nonstationary"] = fam.diag.nonstationary;
  d["pooled_mean"] = fam.pooled_mean;
  d["pooled_m2"] = fam.pooled_m2;
  std::ofstream out(dir + "/diag.json");
  require(static_cast<bool>(out), "cannot write " + dir + "/diag.json");
  out << d.dump(2) << "\n";
}

}  // namespace mmv
