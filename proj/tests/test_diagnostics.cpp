#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmv/diagnostics.hpp"
#include "mmv/error.hpp"
#include "mmv/stats.hpp"

using mmv::EmpiricalMeasure;
using mmv::TestFunction;

namespace {

mmv::ModelSpec linear(double kappa0 = 0.5, double c = 1.0) {
  return mmv::builtin("linear_ou", {{"a", 2.0},
                                    {"c", c},
                                    {"kappa0", kappa0},
                                    {"g0", std::sqrt(2.0)},
                                    {"b0", 1.0},
                                    {"b1", 1.0},
                                    {"b2", 0.0},
                                    {"sigma0", 1.0}});
}

mmv::AveragedModel averaged(const mmv::ModelSpec& m) {
  mmv::AveragedModel a;
  a.model = m;
  a.cfg.K_micro = 8;
  a.cfg.frozen.h_fast = 0.1;
  return a;
}

mmv::SimConfig small_sim() {
  mmv::SimConfig c;
  c.N = 256;
  c.T = 0.5;
  c.h_slow = 0.01;
  c.initial_slow = mmv::SamplerSpec::point({1.0});
  return c;
}

mmv::RateConfig small_rate() {
  mmv::RateConfig rc;
  rc.eps_list = {0.2, 0.1, 0.05};
  rc.seeds = {1, 2, 3, 4};
  rc.batches = 4;
  rc.floor_seeds = 2;
  return rc;
}

std::vector<double> loo_means(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  std::vector<double> out;
  for (double x : v) out.push_back((s - x) / static_cast<double>(v.size() - 1));
  return out;
}

}  // namespace

TEST(Stats, FitLineExact) {
  const auto f = mmv::fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_THROW(mmv::fit_line({1, 1}, {0, 1}), mmv::ValidationError);
}

TEST(Stats, MedianAndSd) {
  EXPECT_EQ(mmv::median({3, 1, 2}), 2.0);
  EXPECT_EQ(mmv::median({4, 1, 3, 2}), 2.5);
  EXPECT_NEAR(mmv::sample_sd({1, 2, 3, 4}), std::sqrt(5.0 / 3.0), 1e-14);
  EXPECT_EQ(mmv::sample_sd({7}), 0.0);
}

TEST(Stats, KendallTau) {
  EXPECT_EQ(mmv::kendall_tau({1, 2, 3, 4}), 1.0);
  EXPECT_EQ(mmv::kendall_tau({4, 3, 2, 1}), -1.0);
  // 6 pairs: 5 concordant, 1 discordant
  EXPECT_NEAR(mmv::kendall_tau({1, 3, 2, 4}), (5.0 - 1.0) / 6.0, 1e-14);
}

TEST(Stats, JackknifeOfMeanIsClassicalStderr) {
  const std::vector<double> v = {0.3, 1.7, -0.4, 2.2, 0.9, 1.1};
  const double se = mmv::sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
  EXPECT_NEAR(mmv::jackknife_se(loo_means(v)), se, 1e-12);
}

TEST(RateConfig, Validation) {
  auto rc = small_rate();
  EXPECT_NO_THROW(rc.validate());
  rc.eps_list = {0.1, 0.05};
  EXPECT_THROW(rc.validate(), mmv::ValidationError);
  rc.eps_list = {0.1, 0.1, 0.05};
  EXPECT_THROW(rc.validate(), mmv::ValidationError);
  rc.eps_list = {2.0, 0.1, 0.05};
  EXPECT_THROW(rc.validate(), mmv::ValidationError);
  rc = small_rate();
  rc.seeds = {1};
  EXPECT_THROW(rc.validate(), mmv::ValidationError);
}

TEST(TestFunction, ValuesAndNames) {
  const auto mu = EmpiricalMeasure::uniform(1, {0.0, 2.0});
  EXPECT_EQ(TestFunction::parse("mean")(mu), 1.0);
  EXPECT_EQ(TestFunction::parse("second_moment")(mu), 2.0);
  EXPECT_NEAR(TestFunction::parse("tanh_mean")(mu), std::tanh(2.0) / 2.0, 1e-15);
  EXPECT_EQ(TestFunction::parse("constant")(mu), TestFunction::parse("constant")(
                                                     EmpiricalMeasure::point(5.0)));
  for (const char* n : {"mean", "second_moment", "tanh_mean", "constant"}) {
    EXPECT_EQ(TestFunction::parse(n).name(), n);
  }
  EXPECT_THROW(TestFunction::parse("median"), mmv::ValidationError);
}

TEST(RateSweep, StrongErrorShrinksAndCrnHelps) {
  const auto m = linear();
  const auto rc = small_rate();
  const auto crn = mmv::run_sweep(m, averaged(m), small_sim(), rc, true);
  const auto ind = mmv::run_sweep(m, averaged(m), small_sim(), rc, false);
  ASSERT_EQ(crn.full.size(), 3u);
  ASSERT_EQ(crn.full[0].size(), 4u);
  ASSERT_EQ(crn.averaged.size(), 4u);
  const auto rs = mmv::strong_rate(crn, rc);
  const auto ri = mmv::strong_rate(ind, rc);
  ASSERT_EQ(rs.errors.size(), 3u);
  EXPECT_GT(rs.errors[0], rs.errors[2]);
  for (std::size_t e = 0; e < 3; ++e) EXPECT_LT(rs.errors[e], ri.errors[e]);
  EXPECT_GT(rs.slope, 0.0);
  EXPECT_EQ(rs.x, rc.eps_list);
}

TEST(RateSweep, ConstantTestFunctionIsFloorLimited) {
  const auto m = linear();
  const auto rc = small_rate();
  const auto sweep = mmv::run_sweep(m, averaged(m), small_sim(), rc);
  const auto r = mmv::weak_rate(sweep, rc, TestFunction::parse("constant"));
  for (double e : r.errors) EXPECT_EQ(e, 0.0);
  EXPECT_TRUE(r.floor_limited);
  EXPECT_FALSE(r.pass);
}

TEST(RateSweep, WeakMeanErrorMatchesDirectComputation) {
  const auto m = linear();
  const auto rc = small_rate();
  const auto sweep = mmv::run_sweep(m, averaged(m), small_sim(), rc);
  const auto r = mmv::weak_rate(sweep, rc, TestFunction::parse("mean"));
  const std::size_t S = rc.seeds.size();
  for (std::size_t e = 0; e < rc.eps_list.size(); ++e) {
    double d = 0;
    for (std::size_t i = 0; i < S; ++i) {
      d += mmv::mean_of(sweep.full[e][i].slow)[0] - mmv::mean_of(sweep.averaged[(i + 1) % S].slow)[0];
    }
    EXPECT_NEAR(r.errors[e], std::abs(d / static_cast<double>(S)), 1e-12);
  }
}

TEST(RateReport, Files) {
  mmv::RateReport r;
  r.experiment = "strong";
  r.x = {0.1, 0.05, 0.02};
  r.errors = {1e-2, 5e-3, 2e-3};
  r.stderrs = {1e-4, 1e-4, 1e-4};
  r.floor = {1e-5, 1e-5, 1e-5};
  r.used = {true, true, false};
  r.slope = 1.0;
  r.halfwidth = 0.1;
  r.band_lo = 0.7;
  r.band_hi = 1.3;
  r.pass = true;
  const auto dir = std::filesystem::temp_directory_path() / "mmv_rate_report";
  std::filesystem::create_directories(dir);
  mmv::write_rate_report((dir / "r.json").string(), (dir / "r.csv").string(), r);
  std::ifstream jf(dir / "r.json");
  const auto j = nlohmann::json::parse(jf);
  EXPECT_EQ(j["experiment"], "strong");
  EXPECT_EQ(j["eps"].size(), 3u);
  EXPECT_EQ(j["used"][2], false);
  EXPECT_EQ(j["band"][0], 0.7);
  EXPECT_EQ(j["pass"], true);
  std::ifstream cf(dir / "r.csv");
  std::string header;
  std::getline(cf, header);
  EXPECT_EQ(header, "eps,error,stderr,floor,used");
  std::filesystem::remove_all(dir);
}

TEST(Mollifier, TotalMassIsExact) {
  mmv::MollifierConfig mc;
  mc.fn = mmv::MollifierConfig::Fn::total_mass;
  const auto r = mmv::mollifier_rate(mc);
  for (double e : r.errors) EXPECT_LE(e, 1e-12);
  EXPECT_TRUE(r.floor_limited);
}

TEST(Mollifier, MeanErrorIsExactlyFirstOrder) {
  // With shared kernel draws the mean moves by scale/n times the draw mean.
  mmv::MollifierConfig mc;
  mc.fn = mmv::MollifierConfig::Fn::mean;
  mc.probes = {EmpiricalMeasure::uniform(1, {0.0, 1.0, -2.0, 0.5, 3.0, 1.5, -1.0, 2.0})};
  const auto r = mmv::mollifier_rate(mc);
  EXPECT_NEAR(r.slope, -1.0, 1e-9);
  for (std::size_t i = 1; i < r.errors.size(); ++i) {
    EXPECT_NEAR(r.errors[i] * r.x[i], r.errors[0] * r.x[0], 1e-12);
  }
}

TEST(Mollifier, TanhMeanDecaysAtLeastFirstOrder) {
  mmv::MollifierConfig mc;
  const auto r = mmv::mollifier_rate(mc);
  EXPECT_LE(r.slope, -0.8);
  EXPECT_TRUE(r.pass);
}

TEST(Fluctuation, ZeroFunctionalGivesZero) {
  const auto m = linear();
  mmv::FluctuationConfig fc;
  fc.rate = small_rate();
  fc.frozen.K = 64;
  fc.frozen.h_fast = 0.1;
  const mmv::PathFunctional zero = [](const double*, const double*, std::size_t n,
                                      const mmv::MeasureView&, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
  };
  const auto r = mmv::fluctuation_estimate(m, small_sim(), zero, fc);
  for (double e : r.errors) EXPECT_EQ(e, 0.0);
  EXPECT_TRUE(r.floor_limited);
}

TEST(Fluctuation, UncenteredFunctionalIsRejected) {
  const auto m = linear();
  mmv::FluctuationConfig fc;
  fc.rate = small_rate();
  fc.frozen.K = 64;
  fc.frozen.h_fast = 0.1;
  const mmv::PathFunctional shifted = [](const double*, const double* y, std::size_t n,
                                         const mmv::MeasureView&, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = y[i] + 1.0;
  };
  EXPECT_THROW(mmv::fluctuation_estimate(m, small_sim(), shifted, fc), mmv::ValidationError);
}

TEST(Fluctuation, SliceResidualIsCenteredAndShrinks) {
  const auto m = linear();
  mmv::FluctuationConfig fc;
  fc.rate = small_rate();
  fc.rate.eps_list = {0.1, 0.05, 0.025};
  fc.frozen.K = 512;
  fc.frozen.h_fast = 0.05;
  auto sim = small_sim();
  sim.N = 2048;
  sim.initial_slow = mmv::SamplerSpec::gauss({0.0}, {1.0});
  const auto r = mmv::fluctuation_estimate(m, sim, mmv::linear_slice_residual(m), fc);
  EXPECT_GT(r.errors[0], r.errors[2]);
  EXPECT_THROW(mmv::linear_slice_residual(mmv::builtin(
                   "nu_only_drift", {{"a", 2.0}, {"c", 1.0}, {"kappa0", 0.5}, {"g0", 1.0}})),
               mmv::ValidationError);
}

TEST(WrongLimit, SeparatesVariantsAtSmallScale) {
  mmv::WrongLimitConfig wc;
  wc.N = 512;
  wc.eps = 0.02;
  wc.seeds = {1, 2, 3};
  wc.averaged.K_micro = 8;
  wc.averaged.frozen.h_fast = 0.1;
  const auto r = mmv::wrong_limit_demo(wc);
  EXPECT_FALSE(r.degenerate);
  EXPECT_GT(r.drift_gap, 0.1);
  EXPECT_GT(r.d_naive, 5.0 * r.d_correct);
}

TEST(WrongLimit, NoSlowCouplingIsDegenerate) {
  mmv::WrongLimitConfig wc;
  wc.c = 0.0;
  wc.N = 128;
  wc.eps = 0.05;
  wc.seeds = {1, 2};
  wc.averaged.K_micro = 4;
  wc.averaged.frozen.h_fast = 0.1;
  const auto r = mmv::wrong_limit_demo(wc);
  EXPECT_TRUE(r.degenerate);
  EXPECT_FALSE(r.pass);
}

TEST(FastLimit, SmallSweepShape) {
  const auto m = linear();
  mmv::FastLimitConfig fc;
  fc.eps_list = {0.2, 0.05};
  fc.seeds = {1, 2};
  fc.max_atoms = 32;
  fc.frozen.K = 32;
  fc.frozen.h_fast = 0.1;
  auto sim = small_sim();
  sim.N = 512;
  const auto rep = mmv::fast_limit_error(m, averaged(m), sim, fc);
  ASSERT_EQ(rep.rho.size(), 2u);
  ASSERT_EQ(rep.rho[0].size(), 2u);
  ASSERT_EQ(rep.median.size(), 2u);
  for (const auto& row : rep.rho) {
    for (double v : row) EXPECT_TRUE(std::isfinite(v) && v >= 0.0);
  }
  ASSERT_FALSE(rep.s.empty());
  EXPECT_EQ(rep.s.front(), 0.0);
  EXPECT_NEAR(rep.s.back(), fc.horizon, 0.2 + 1e-12);
  EXPECT_EQ(rep.s.size(), rep.rho_t.size());
  EXPECT_GE(rep.floor, rep.replicate_floor);
  EXPECT_GE(rep.floor, rep.plateau);
  fc.eps_list = {0.05, 0.2};
  EXPECT_THROW(fc.validate(), mmv::ValidationError);
}
