#include <gtest/gtest.h>

#include <cmath>

#include "mmv/model.hpp"

using mmv::EmpiricalMeasure;
using mmv::MeasureView;

namespace {

mmv::ParamMap linear_params() {
  return {{"a", 2.0},  {"c", 1.0},  {"kappa0", 0.5}, {"g0", std::sqrt(2.0)},
          {"b0", 1.0}, {"b1", 1.0}, {"b2", 0.0},     {"sigma0", 1.0}};
}

}  // namespace

TEST(Builtin, LinearOuCoefficients) {
  const auto m = mmv::builtin("linear_ou", linear_params());
  const auto mu = EmpiricalMeasure::point(0.7), nu = EmpiricalMeasure::point(-1.5);
  const MeasureView vmu(mu), vnu(nu);
  EXPECT_DOUBLE_EQ(m.eval_b({2.0}, vmu, {3.0}, vnu)[0], -2.0 + 3.0);
  EXPECT_DOUBLE_EQ(m.eval_sigma({2.0}, vmu, vnu)[0], 1.0);
  EXPECT_DOUBLE_EQ(m.eval_F({2.0}, vmu, {3.0}, vnu)[0], -6.0 + 2.0 + 0.5 * -1.5);
  EXPECT_DOUBLE_EQ(m.eval_G({2.0}, vmu, {3.0}, vnu)[0], std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(m.meta.C1, 2.0);
  EXPECT_DOUBLE_EQ(m.meta.C2, 0.25);
  EXPECT_TRUE(m.sigma_constant);
}

TEST(Builtin, RegistryErrors) {
  EXPECT_THROW(mmv::builtin("nope", {}), mmv::ValidationError);
  auto p = linear_params();
  p.erase("g0");
  EXPECT_THROW(mmv::builtin("linear_ou", p), mmv::ValidationError);
  p = linear_params();
  p["extra"] = 1.0;
  EXPECT_THROW(mmv::builtin("linear_ou", p), mmv::ValidationError);
}

TEST(Builtin, NuOnlyDriftReadsNuOnly) {
  const auto m = mmv::builtin("nu_only_drift", {{"a", 1.0}, {"c", 0.5}, {"kappa0", 0.0}, {"g0", 1.0}});
  const auto nu = EmpiricalMeasure::uniform(1, {1.0, 3.0});
  const auto mu1 = EmpiricalMeasure::point(-4.0), mu2 = EmpiricalMeasure::point(9.0);
  const MeasureView vnu(nu), v1(mu1), v2(mu2);
  EXPECT_EQ(m.eval_b({5.0}, v1, {7.0}, vnu)[0], 2.0);
  EXPECT_EQ(m.eval_b({-3.0}, v2, {-1.0}, vnu)[0], 2.0);
}

TEST(Builtin, AllBuiltinsEvaluate) {
  const std::map<std::string, mmv::ParamMap> params = {
      {"linear_ou", linear_params()},
      {"nu_only_drift", {{"a", 1.0}, {"c", 0.5}, {"kappa0", 0.2}, {"g0", 1.0}, {"sigma0", 0.5}}},
      {"doublewell_slow_linear_fast",
       {{"a", 1.0}, {"c", 0.5}, {"kappa0", 0.2}, {"g0", 1.0}, {"b1", 1.0}, {"b2", 0.1}, {"sigma0", 0.5}}},
      {"smooth_bench",
       {{"a", 1.0}, {"c", 0.5}, {"kappa0", 0.2}, {"g0", 1.0}, {"m0", 0.3}, {"b2", 0.5}, {"sigma0", 0.5}}}};
  for (const auto& name : mmv::builtin_names()) {
    const auto m = mmv::builtin(name, params.at(name));
    const auto mu = EmpiricalMeasure::point(0.2), nu = EmpiricalMeasure::point(0.4);
    const MeasureView vmu(mu), vnu(nu);
    EXPECT_TRUE(std::isfinite(m.eval_b({0.3}, vmu, {0.1}, vnu)[0])) << name;
    const auto rep = mmv::check_dissipativity(m);
    EXPECT_TRUE(rep.pass) << name << " margin " << rep.worst_margin;
    EXPECT_TRUE(rep.nondegenerate) << name;
    EXPECT_TRUE(mmv::check_measure_lipschitz(m).pass) << name;
  }
}

TEST(Meta, RejectsC1NotAboveC2) {
  mmv::RegularityMeta meta;
  meta.C1 = 1.0;
  meta.C2 = 1.0;
  EXPECT_THROW(meta.validate(), mmv::ValidationError);
  EXPECT_THROW(mmv::builtin("linear_ou", linear_params(), meta), mmv::ValidationError);
  meta.C2 = 0.5;
  meta.alpha = 2.5;
  EXPECT_THROW(meta.validate(), mmv::ValidationError);
}

// 2 F y + |G|^2 = -4 y^2 + 2 <= -3.9 y^2 + 2.1 at every point.
TEST(Dissipativity, LinearOuPassesWithClaimedConstants) {
  auto p = linear_params();
  p["c"] = 0.0;
  p["kappa0"] = 0.0;
  mmv::RegularityMeta meta;
  meta.C1 = 3.9;
  meta.C2 = 0.0;
  meta.C3 = 2.1;
  meta.varrho = 2.0;
  const auto m = mmv::builtin("linear_ou", p, meta);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    mmv::ProbePlan plan;
    plan.seed = seed;
    plan.y_max = 50.0;
    const auto rep = mmv::check_dissipativity(m, plan);
    EXPECT_TRUE(rep.pass);
    EXPECT_LE(rep.worst_margin, -0.1);
    EXPECT_EQ(rep.evaluated, 256);
  }
}

TEST(Dissipativity, AntiDissipativeFails) {
  mmv::DslModelSource src;
  src.b = {"0"};
  src.sigma = {{"1"}};
  src.F = {"y[0]"};
  src.G = {{"1"}};
  mmv::RegularityMeta meta;
  meta.C1 = 1.0;
  meta.C3 = 1.0;
  const auto m = mmv::model_from_dsl(src, meta);
  const auto rep = mmv::check_dissipativity(m);
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.worst_margin, 0.0);
  EXPECT_GT(std::abs(rep.worst_y[0]), 5.0);
}

TEST(MeasureLipschitz, Examples) {
  mmv::DslModelSource src;
  src.b = {"0"};
  src.sigma = {{"1"}};
  src.F = {"-y[0]"};
  src.G = {{"1"}};
  mmv::RegularityMeta meta;
  meta.kappa = 1e-6;
  auto rep = mmv::check_measure_lipschitz(mmv::model_from_dsl(src, meta));
  EXPECT_EQ(rep.worst_ratio, 0.0);
  EXPECT_TRUE(rep.pass);

  src.F = {"-y[0] + 0.7 * mean(nu)[0]"};
  meta.kappa = 0.7;
  rep = mmv::check_measure_lipschitz(mmv::model_from_dsl(src, meta));
  EXPECT_TRUE(rep.pass);
  EXPECT_GT(rep.worst_ratio, 0.0);

  src.F = {"-y[0]"};
  src.G = {{"1 + 100 * m2(nu)"}};
  meta.kappa = 1e-3;
  rep = mmv::check_measure_lipschitz(mmv::model_from_dsl(src, meta));
  EXPECT_FALSE(rep.pass);
}

// On point masses the weighted distance is (1 + V(a)) + (1 + V(b)), which
// dominates |a - b|, so kappa >= kappa0 suffices.
TEST(MeasureLipschitz, PointMassPairsOracle) {
  const auto m = mmv::builtin("linear_ou", linear_params());
  const auto mu = EmpiricalMeasure::point(0.0);
  const MeasureView vmu(mu);
  const mmv::WeightFunction v{2.0};
  for (double a : {-3.0, -0.5, 0.0, 1.0}) {
    for (double b : {-2.0, 0.25, 4.0}) {
      if (a == b) continue;
      const auto na = EmpiricalMeasure::point(a), nb = EmpiricalMeasure::point(b);
      const MeasureView va(na), vb(nb);
      const double num = std::abs(m.eval_F({0.0}, vmu, {1.0}, va)[0] - m.eval_F({0.0}, vmu, {1.0}, vb)[0]);
      EXPECT_NEAR(num, 0.5 * std::abs(a - b), 1e-12);
      const double exact = (2.0 + a * a) + (2.0 + b * b);
      EXPECT_LE(num, m.meta.kappa * exact);
      mmv::Binning grid{{std::min(a, b) - 0.5}, {std::max(a, b) + 0.5}, 1000};
      EXPECT_NEAR(mmv::weighted_tv_distance(na, nb, v, grid), exact, 0.02 * exact);
    }
  }
}

TEST(DslModel, ShapesAndSources) {
  mmv::DslModelSource src;
  src.d1 = 2;
  src.d2 = 1;
  src.b = {"-x[0] + y[0]", "-x[1] + mean(mu)[0]"};
  src.sigma = {{"1", "0"}, {"0", "1 + 0.1 * tanh(mean(nu)[0])"}};
  src.F = {"-y[0] + x[1]"};
  src.G = {{"1"}};
  mmv::RegularityMeta meta;
  const auto m = mmv::model_from_dsl(src, meta);
  const auto mu = EmpiricalMeasure::uniform(2, {1.0, 2.0, 3.0, 4.0});
  const auto nu = EmpiricalMeasure::point(0.0);
  const MeasureView vmu(mu), vnu(nu);
  const auto b = m.eval_b({1.0, 2.0}, vmu, {0.5}, vnu);
  EXPECT_DOUBLE_EQ(b[0], -0.5);
  EXPECT_DOUBLE_EQ(b[1], 0.0);
  const auto s = m.eval_sigma({1.0, 2.0}, vmu, vnu);
  EXPECT_EQ(s.size(), 4u);
  EXPECT_DOUBLE_EQ(s[3], 1.0);
  EXPECT_FALSE(m.sigma_constant);
  EXPECT_TRUE(m.G_constant);

  src.sigma = {{"y[0]", "0"}, {"0", "1"}};
  EXPECT_THROW(mmv::model_from_dsl(src, meta), mmv::ParseError);
  src.sigma = {{"1"}};
  EXPECT_THROW(mmv::model_from_dsl(src, meta), mmv::ValidationError);
}

TEST(Eigen, MinEigenvalue) {
  EXPECT_NEAR(mmv::min_symmetric_eigenvalue({2, 1, 1, 2}, 2), 1.0, 1e-12);
  EXPECT_NEAR(mmv::min_symmetric_eigenvalue({4, 0, 0, 0, 3, 0, 0, 0, 5}, 3), 3.0, 1e-12);
}
