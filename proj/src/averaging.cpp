#include "mmv/averaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mmv/error.hpp"
#include "mmv/hash.hpp"
#include "mmv/measure_io.hpp"
#include "mmv/parallel.hpp"
#include "mmv/simd/kernels.hpp"

namespace mmv {

std::string variant_name(Variant v) { return v == Variant::correct ? "correct" : "naive"; }

void AveragedConfig::validate() const {
  frozen.validate();
  require(K_micro >= 1, "K_micro must be positive");
  require(std::isfinite(micro_burn) && micro_burn >= 0.0, "micro_burn must be >= 0");
  require(std::isfinite(micro_window) && micro_window > 0.0, "micro_window must be positive");
  require(std::isfinite(init_burn) && init_burn >= 0.0, "init_burn must be >= 0");
  require(!std::isnan(refresh) && refresh >= 0.0, "refresh threshold must be >= 0");
}

namespace {

std::size_t steps_for(double time, double h) {
  if (time <= 0.0) return 0;
  const double r = time / h;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(r - 1e-9 * std::max(1.0, r))));
}

std::size_t atom_index(const EmpiricalMeasure& mu, const std::vector<double>& x) {
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const auto a = mu.atom(j);
    if (std::equal(a.begin(), a.end(), x.begin(), x.end())) return j;
  }
  return mu.size();
}

double measure_scale(const MeasureView& v) {
  double s = 0.0;
  for (double x : v.moments().var) s += x;
  return s > 0.0 ? std::sqrt(s) : 1.0;
}

}  // namespace

std::vector<AveragedEval> averaged_coefficients(const ModelSpec& model, const EmpiricalMeasure& mu,
                                                const std::vector<std::vector<double>>& x_points,
                                                const FrozenConfig& cfg, Variant variant) {
  model.validate();
  require(mu.dim() == model.d1, "averaged coefficients: mu has the wrong dimension");
  const auto u1 = static_cast<std::size_t>(model.d1);
  const InvariantFamily fam = solve_frozen_pooled(model, mu, cfg);
  const MeasureView mu_view(mu), pooled_view(fam.pooled);
  std::vector<AveragedEval> out;
  for (const auto& x : x_points) {
    require(x.size() == u1, "averaged coefficients: x has the wrong dimension");
    const std::size_t j = atom_index(mu, x);
    EmpiricalMeasure tagged;
    const EmpiricalMeasure* slice = nullptr;
    if (j < mu.size()) {
      slice = &fam.slices[j];
    } else {
      tagged = solve_frozen_slot(model, mu, &fam.pooled, EmpiricalMeasure::point(x), cfg).slices[0];
      slice = &tagged;
    }
    const MeasureView slice_view(*slice);
    const MeasureView& nu = variant == Variant::correct ? pooled_view : slice_view;
    const std::size_t n = slice->size();
    std::vector<double> xrep(n * u1), vals(n * u1);
    for (std::size_t i = 0; i < n; ++i) std::copy(x.begin(), x.end(), xrep.begin() + static_cast<std::ptrdiff_t>(i * u1));
    model.b(xrep.data(), slice->coords().data(), n, mu_view, nu, vals.data());
    AveragedEval ev;
    ev.x = x;
    ev.bbar.assign(u1, 0.0);
    ev.b_stderr.assign(u1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < u1; ++c) ev.bbar[c] += slice->weight(i) * vals[i * u1 + c];
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < u1; ++c) {
        const double d = vals[i * u1 + c] - ev.bbar[c];
        ev.b_stderr[c] += slice->weight(i) * d * d;
      }
    }
    for (double& s : ev.b_stderr) s = std::sqrt(s / static_cast<double>(n));
    ev.sigmabar.resize(u1 * u1);
    model.sigma(x.data(), 1, mu_view, nu, ev.sigmabar.data());
    out.push_back(std::move(ev));
  }
  return out;
}

void write_averaged_table(const std::string& path, const std::vector<AveragedEval>& evals,
                          Variant variant, const EmpiricalMeasure& mu) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  const std::size_t d = evals.empty() ? 1 : evals.front().x.size();
  const std::string hash = measure_hash(mu);
  for (std::size_t c = 1; c <= d; ++c) out << (d == 1 ? "x" : "x" + std::to_string(c)) << ',';
  for (std::size_t c = 1; c <= d; ++c) out << (d == 1 ? "bbar" : "bbar" + std::to_string(c)) << ',';
  for (std::size_t r = 1; r <= d; ++r) {
    for (std::size_t c = 1; c <= d; ++c) {
      out << (d == 1 ? "sigmabar" : "sigmabar" + std::to_string(r) + std::to_string(c)) << ',';
    }
  }
  out << "variant,mu_hash\n";
  for (const auto& e : evals) {
    for (double v : e.x) out << format_double(v) << ',';
    for (double v : e.bbar) out << format_double(v) << ',';
    for (double v : e.sigmabar) out << format_double(v) << ',';
    out << variant_name(variant) << ',' << hash << '\n';
  }
}

Trajectory simulate_averaged(const AveragedModel& avg, const SimConfig& cfg,
                             const std::vector<double>& record, const AveragedRunOptions& opts) {
  const ModelSpec& model = avg.model;
  const AveragedConfig& ac = avg.cfg;
  model.validate();
  cfg.validate();
  ac.validate();
  cfg.initial_slow.validate(model.d1, "initial_slow");
  cfg.initial_fast.validate(model.d2, "initial_fast");
  require(!record.empty(), "record grid is empty");
  const DistributionFlow* flow = opts.flow;
  if (flow) {
    if (flow->empty()) throw RuntimeFailure("distribution flow is empty");
    require(flow->mu(0).dim() == model.d1 && flow->nu(0).dim() == model.d2,
            "flow dimensions do not match the model");
  }
  std::vector<std::size_t> rec;
  for (double t : record) rec.push_back(step_index(cfg, t));
  std::sort(rec.begin(), rec.end());
  rec.erase(std::unique(rec.begin(), rec.end()), rec.end());

  const int d1 = model.d1, d2 = model.d2;
  const auto u1 = static_cast<std::size_t>(d1), u2 = static_cast<std::size_t>(d2);
  const std::size_t N = cfg.N, Km = ac.K_micro, P = N * Km;
  require(P <= 0x7FFFFFFFu, "too many micro particles");
  const double hf = ac.frozen.h_fast, sqf = std::sqrt(hf);
  const std::size_t n_init = steps_for(ac.init_burn > 0.0 ? ac.init_burn : ac.frozen.burn_in_for(model), hf);
  const std::size_t n_mb = steps_for(ac.micro_burn, hf), n_mw = steps_for(ac.micro_window, hf);
  const auto& kern = simd::kernels();
  const std::uint64_t micro_seed = ac.micro_seed != 0 ? ac.micro_seed : cfg.seed;

  std::vector<double> X(N * u1), Y(P * u2), Yn(P * u2), xrep(P * u1);
  {
    const Stream s1(cfg.seed, StreamTag::init_slow), s2(micro_seed, StreamTag::micro_init);
    parallel_for(N, [&](std::size_t b, std::size_t e) {
      cfg.initial_slow.sample(s1, static_cast<std::uint32_t>(b), e - b, X.data() + b * u1);
    }, 256);
    parallel_for(P, [&](std::size_t b, std::size_t e) {
      cfg.initial_fast.sample(s2, static_cast<std::uint32_t>(b), e - b, Y.data() + b * u2);
    }, 256);
  }
  const Stream micro_stream(micro_seed, StreamTag::micro);
  const Stream slow_stream(cfg.seed, StreamTag::slow);
  std::uint64_t micro_counter = 0;

  // Slot state for the refresh rule.
  EmpiricalMeasure mu_ref, nu_ref;
  bool have_ref = false;

  std::vector<double> b_acc(N * u1);
  std::vector<double> Gc;

  // One micro step. nu_fixed == nullptr uses the live pooled law.
  auto micro_step = [&](const MeasureView& mu, const MeasureView* nu_fixed, bool accumulate) {
    const MeasureView live = nu_fixed ? MeasureView() : MeasureView(d2, Y, {});
    const MeasureView& nu = nu_fixed ? *nu_fixed : live;
    const std::uint64_t step = micro_counter++;
    if (model.G_constant && Gc.empty()) {
      Gc.resize(u2 * u2);
      model.G(xrep.data(), Y.data(), 1, mu, nu, Gc.data());
    }
    parallel_for(N, [&](std::size_t b, std::size_t e) {
      const std::size_t p0 = b * Km, m = (e - b) * Km;
      const double* xp = xrep.data() + p0 * u1;
      const double* yp = Y.data() + p0 * u2;
      std::vector<double> drift(m * u2), z(m * u2), noise(m * u2);
      if (accumulate) {
        std::vector<double> bv(m * u1);
        if (avg.variant == Variant::correct) {
          model.b(xp, yp, m, mu, nu, bv.data());
        } else {
          for (std::size_t i = b; i < e; ++i) {
            const std::size_t off = (i - b) * Km;
            const MeasureView slice(d2, std::span<const double>(yp + off * u2, Km * u2), {});
            model.b(xp + off * u1, yp + off * u2, Km, mu, slice, bv.data() + off * u1);
          }
        }
        for (std::size_t i = b; i < e; ++i) {
          for (std::size_t k = 0; k < Km; ++k) {
            const double* v = bv.data() + ((i - b) * Km + k) * u1;
            for (std::size_t c = 0; c < u1; ++c) b_acc[i * u1 + c] += v[c] / static_cast<double>(Km);
          }
        }
      }
      model.F(xp, yp, m, mu, nu, drift.data());
      micro_stream.normals(step, static_cast<std::uint32_t>(p0), m, d2, z.data());
      if (model.G_constant) {
        detail::apply_diffusion(Gc.data(), 0, z.data(), m, d2, sqf, noise.data());
      } else {
        std::vector<double> Gm(m * u2 * u2);
        model.G(xp, yp, m, mu, nu, Gm.data());
        detail::apply_diffusion(Gm.data(), u2 * u2, z.data(), m, d2, sqf, noise.data());
      }
      std::copy(yp, yp + m * u2, Yn.begin() + static_cast<std::ptrdiff_t>(p0 * u2));
      kern.euler_update(Yn.data() + p0 * u2, drift.data(), noise.data(), hf, m * u2);
    });
    Y.swap(Yn);
  };

  auto fill_xrep = [&] {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t k = 0; k < Km; ++k) {
        std::copy(X.begin() + static_cast<std::ptrdiff_t>(i * u1),
                  X.begin() + static_cast<std::ptrdiff_t>((i + 1) * u1),
                  xrep.begin() + static_cast<std::ptrdiff_t>((i * Km + k) * u1));
      }
    }
  };

  Trajectory out;
  std::size_t next = 0;
  const std::size_t last = rec.back();
  for (std::size_t k = 0; k <= last; ++k) {
    const double t = cfg.time_of(k);
    const EmpiricalMeasure mu_now = EmpiricalMeasure::uniform(d1, X);
    // Slots for this step: (mu, fixed nu or live), and whether to refresh.
    const MeasureView* mu_slot = nullptr;
    const MeasureView* nu_slot = nullptr;
    MeasureView mu_now_view(mu_now), mu_ref_view, nu_ref_view;
    bool refresh_now = false;
    if (flow) {
      const std::size_t node = flow->node_at(t);
      mu_slot = &flow->mu_view(node);
      nu_slot = &flow->nu_view(node);
    } else if (ac.refresh == 0.0) {
      mu_slot = &mu_now_view;
    } else {
      if (!have_ref) {
        refresh_now = true;
      } else if (std::isfinite(ac.refresh)) {
        const MeasureView ref_view(mu_ref);
        refresh_now = w2_distance(mu_now, mu_ref) > ac.refresh * measure_scale(ref_view);
      }
      if (refresh_now) {
        mu_slot = &mu_now_view;
      } else {
        mu_ref_view = MeasureView(mu_ref);
        nu_ref_view = MeasureView(nu_ref);
        mu_slot = &mu_ref_view;
        nu_slot = &nu_ref_view;
      }
    }

    fill_xrep();
    const std::size_t burn = k == 0 ? n_init + n_mb : n_mb;
    for (std::size_t s = 0; s < burn; ++s) micro_step(*mu_slot, nu_slot, false);
    detail::check_finite(Y, d2, t, "micro fast variable");
    if (k == rec[next]) {
      out.push_back(Snapshot{t, mu_now, EmpiricalMeasure::uniform(d2, Y)});
      ++next;
    }
    if (k == last) break;

    std::fill(b_acc.begin(), b_acc.end(), 0.0);
    for (std::size_t s = 0; s < n_mw; ++s) micro_step(*mu_slot, nu_slot, true);
    detail::check_finite(Y, d2, t, "micro fast variable");
    if (refresh_now) {
      mu_ref = mu_now;
      nu_ref = EmpiricalMeasure::uniform(d2, Y);
      have_ref = true;
    }

    const MeasureView live_end = nu_slot ? MeasureView() : MeasureView(d2, Y, {});
    const MeasureView& nu_end = nu_slot ? *nu_slot : live_end;
    std::vector<double> Xn(X.size());
    const double h = cfg.h_slow, sq = std::sqrt(h);
    const double inv = 1.0 / static_cast<double>(n_mw);
    parallel_for(N, [&](std::size_t b, std::size_t e) {
      const std::size_t n = e - b;
      std::vector<double> sig(n * u1 * u1), z(n * u1), noise(n * u1);
      if (avg.variant == Variant::correct) {
        model.sigma(X.data() + b * u1, n, *mu_slot, nu_end, sig.data());
      } else {
        for (std::size_t i = b; i < e; ++i) {
          const MeasureView slice(d2, std::span<const double>(Y.data() + i * Km * u2, Km * u2), {});
          model.sigma(X.data() + i * u1, 1, *mu_slot, slice, sig.data() + (i - b) * u1 * u1);
        }
      }
      double* acc = b_acc.data() + b * u1;
      for (std::size_t j = 0; j < n * u1; ++j) acc[j] *= inv;
      slow_stream.normals(k, static_cast<std::uint32_t>(b), n, d1, z.data());
      detail::apply_diffusion(sig.data(), u1 * u1, z.data(), n, d1, sq, noise.data());
      std::copy(X.begin() + static_cast<std::ptrdiff_t>(b * u1),
                X.begin() + static_cast<std::ptrdiff_t>(e * u1),
                Xn.begin() + static_cast<std::ptrdiff_t>(b * u1));
      kern.euler_update(Xn.data() + b * u1, acc, noise.data(), h, n * u1);
    });
    X.swap(Xn);
    detail::check_finite(X, d1, cfg.time_of(k + 1), "averaged slow variable");
  }
  return out;
}

CoupledPair coupled_pair_simulate(const ModelSpec& model, const AveragedModel& avg,
                                  const SimConfig& cfg, const std::vector<double>& record,
                                  const StepExtras& extras) {
  require(avg.d1() == model.d1, "averaged model and model have different slow dimensions");
  CoupledPair pair;
  pair.full = simulate(model, cfg, nullptr, record, extras);
  pair.averaged = simulate_averaged(avg, cfg, record);
  return pair;
}

FastLimit fast_limit(const Trajectory& avg_traj, const ModelSpec& model, const FrozenConfig& cfg,
                     std::size_t max_atoms) {
  require(!avg_traj.empty(), "fast limit of an empty trajectory");
  FastLimit fl;
  for (std::size_t k = 0; k < avg_traj.size(); ++k) {
    const EmpiricalMeasure& mu = avg_traj[k].slow;
    const EmpiricalMeasure mu_used =
        max_atoms > 0 && mu.size() > max_atoms ? resample(mu, max_atoms, cfg.seed + k) : mu;
    fl.t.push_back(avg_traj[k].t);
    fl.nu.push_back(solve_frozen_pooled(model, mu_used, cfg).pooled);
  }
  return fl;
}

}  // namespace mmv
