#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mmv/error.hpp"
#include "mmv/measure.hpp"
#include "mmv/measure_io.hpp"
#include "oracles.hpp"

using mmv::EmpiricalMeasure;

namespace {

EmpiricalMeasure random_1d(std::mt19937_64& g, std::size_t n, bool weighted) {
  std::normal_distribution<double> z(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> x(n), w(n);
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = z(g);
    w[i] = weighted ? u(g) : 1.0;
    s += w[i];
  }
  for (auto& v : w) v /= s;
  if (!weighted) return EmpiricalMeasure::uniform(1, x);
  double t = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) t += w[i];
  w[n - 1] = 1.0 - t;
  return EmpiricalMeasure(1, x, w);
}

std::vector<oracle::Atom1> atoms(const EmpiricalMeasure& m) {
  std::vector<oracle::Atom1> out;
  for (std::size_t i = 0; i < m.size(); ++i) out.push_back({m.atom(i)[0], m.weight(i)});
  return out;
}

}  // namespace

TEST(EmpiricalMeasure, RejectsBadInput) {
  EXPECT_THROW(EmpiricalMeasure(1, {}, {}), mmv::ValidationError);
  EXPECT_THROW(EmpiricalMeasure(1, {0.0, 1.0}, {0.5, 0.4}), mmv::ValidationError);
  EXPECT_THROW(EmpiricalMeasure(1, {0.0, NAN}, {0.5, 0.5}), mmv::ValidationError);
  EXPECT_THROW(EmpiricalMeasure(2, {0.0, 1.0, 2.0}, {1.0}), mmv::ValidationError);
  EXPECT_THROW(EmpiricalMeasure(1, {0.0, 1.0}, {1.5, -0.5}), mmv::ValidationError);
}

TEST(W2, Examples) {
  EXPECT_EQ(mmv::w2_distance(EmpiricalMeasure::point(0.0), EmpiricalMeasure::point(0.0)), 0.0);
  EXPECT_DOUBLE_EQ(mmv::w2_distance(EmpiricalMeasure::point(0.0), EmpiricalMeasure::point(1.0)), 1.0);
  const auto a = EmpiricalMeasure::uniform(1, {0.0, 2.0});
  const auto b = EmpiricalMeasure::uniform(1, {1.0, 3.0});
  // Both couplings: sorted pairs cost 1, crossed pairs cost (1 + 9)/2 = 5.
  EXPECT_DOUBLE_EQ(mmv::w2_distance(a, b), 1.0);
  EXPECT_THROW(mmv::w2_distance(a, EmpiricalMeasure::point({0.0, 0.0})), mmv::ValidationError);
}

TEST(W2, MatchesQuantileOracle) {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_1d(g, 1 + trial % 17, trial % 2 == 0);
    const auto b = random_1d(g, 1 + trial % 13, trial % 3 == 0);
    EXPECT_NEAR(mmv::w2_distance(a, b), oracle::w2_quantile(atoms(a), atoms(b)), 1e-10);
  }
}

TEST(W2, SortedRmsForEqualClouds) {
  std::mt19937_64 g(2);
  const auto a = random_1d(g, 1000, false);
  const auto b = random_1d(g, 1000, false);
  std::vector<double> x(a.coords()), y(b.coords());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  EXPECT_NEAR(mmv::w2_distance(a, b), std::sqrt(s / 1000.0), 1e-13);
}

TEST(W2, SymmetryAndTriangle) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_1d(g, 1 + trial % 11, trial % 2 == 0);
    const auto b = random_1d(g, 1 + trial % 7, trial % 3 == 0);
    const auto c = random_1d(g, 1 + trial % 5, trial % 5 == 0);
    const double ab = mmv::w2_distance(a, b), ba = mmv::w2_distance(b, a);
    EXPECT_NEAR(ab, ba, 1e-10);
    EXPECT_LE(ab, mmv::w2_distance(a, c) + mmv::w2_distance(c, b) + 1e-10);
  }
}

TEST(W2, ZeroAfterMergingDuplicates) {
  const EmpiricalMeasure a(1, {1.0, 1.0, 2.0}, {0.25, 0.25, 0.5});
  const auto b = EmpiricalMeasure::uniform(1, {2.0, 1.0});
  EXPECT_EQ(mmv::w2_distance(a, b), 0.0);
}

TEST(W2, AssignmentMatchesBruteForce) {
  std::mt19937_64 g(4);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + trial % 6;
    std::vector<std::vector<double>> pa(n, std::vector<double>(2)), pb = pa;
    std::vector<double> ca, cb;
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        pa[i][c] = z(g);
        pb[i][c] = z(g) + 1.0;
        ca.push_back(pa[i][c]);
        cb.push_back(pb[i][c]);
      }
    }
    const auto r = mmv::w2(EmpiricalMeasure::uniform(2, ca), EmpiricalMeasure::uniform(2, cb));
    EXPECT_FALSE(r.approximate);
    EXPECT_NEAR(r.value, oracle::w2_bruteforce(pa, pb), 1e-12);
  }
}

TEST(W2, LargeMultiDimIsFlagged) {
  std::vector<double> c(2 * 600);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::sin(0.37 * i);
  const auto a = EmpiricalMeasure::uniform(2, c);
  const auto r = mmv::w2(a, a);
  EXPECT_TRUE(r.approximate);
  EXPECT_NEAR(r.value, 0.0, 0.1);
}

TEST(WeightedTv, Examples) {
  const mmv::WeightFunction v{2.0};
  std::mt19937_64 g(5);
  const auto nu = random_1d(g, 50, true);
  EXPECT_EQ(mmv::weighted_tv_distance(nu, nu, v), 0.0);
  // Cell centres at 0, 1, 2, 3: |nu1 - nu2| puts mass 1 at 0 and at 3.
  mmv::Binning b{{-0.5}, {3.5}, 4};
  EXPECT_DOUBLE_EQ(mmv::weighted_tv_distance(EmpiricalMeasure::point(0.0),
                                             EmpiricalMeasure::point(3.0), v, b),
                   (1 + 1) + (1 + 10));
  EXPECT_THROW(mmv::weighted_tv_distance(nu, nu, v, mmv::Binning{{1.0}, {1.0}, 4}),
               mmv::ValidationError);
  EXPECT_THROW(mmv::weighted_tv_distance(nu, EmpiricalMeasure::point({0.0, 0.0}), v),
               mmv::ValidationError);
}

TEST(WeightedTv, DisjointSupportsGiveTwiceTheWeightScale) {
  const mmv::WeightFunction v{2.0};
  const auto a = EmpiricalMeasure::uniform(1, {-1.0, -0.9});
  const auto b = EmpiricalMeasure::uniform(1, {0.9, 1.0});
  const auto r = mmv::binned_tv(a, b, v);
  EXPECT_DOUBLE_EQ(r.mass, 2.0);
  EXPECT_GT(r.weighted, 2.0 * 2.0 * 0.9);
}

TEST(WeightedTv, TriangleOnCommonGrid) {
  const mmv::WeightFunction v{3.0};
  std::mt19937_64 g(6);
  const mmv::Binning grid{{-10.0}, {10.0}, 40};
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_1d(g, 30, true), b = random_1d(g, 20, false),
               c = random_1d(g, 25, true);
    EXPECT_LE(mmv::weighted_tv_distance(a, b, v, grid),
              mmv::weighted_tv_distance(a, c, v, grid) +
                  mmv::weighted_tv_distance(c, b, v, grid) + 1e-12);
  }
}

// Merging cells can only cancel mass, so on nested grids the unweighted
// estimate grows (never shrinks) as the grid is refined.
TEST(WeightedTv, RefinementNeverLowersUnweightedMass) {
  const mmv::WeightFunction v{2.0};
  std::mt19937_64 g(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_1d(g, 40, true), b = random_1d(g, 40, false);
    double prev = 0.0;
    for (int cells : {4, 8, 16, 32, 64, 128}) {
      const auto r = mmv::binned_tv(a, b, v, mmv::Binning{{-12.0}, {12.0}, cells});
      EXPECT_GE(r.mass, prev - 1e-12);
      prev = r.mass;
    }
  }
}

TEST(WeightedTv, DefaultCellCount) {
  const mmv::WeightFunction v{2.0};
  std::vector<double> x(8000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(double(i));
  const auto a = EmpiricalMeasure::uniform(1, x);
  EXPECT_EQ(mmv::binned_tv(a, a, v).cells, 40);
  EXPECT_EQ(mmv::binned_tv(EmpiricalMeasure::point(0.0), EmpiricalMeasure::point(1.0), v).cells, 16);
}

TEST(Mixture, MomentIdentityAndMass) {
  std::mt19937_64 g(8);
  const auto a = random_1d(g, 10, true), b = random_1d(g, 7, false), c = random_1d(g, 3, true);
  const auto m = mmv::mixture({{&a, 0.2}, {&b, 0.5}, {&c, 0.3}});
  double mass = 0;
  for (double w : m.weights()) mass += w;
  EXPECT_NEAR(mass, 1.0, 1e-12);
  auto direct_m2 = [](const EmpiricalMeasure& mu) {
    double s = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) s += mu.weight(i) * mu.atom(i)[0] * mu.atom(i)[0];
    return s;
  };
  EXPECT_NEAR(mmv::second_moment(m),
              0.2 * direct_m2(a) + 0.5 * direct_m2(b) + 0.3 * direct_m2(c), 1e-12);
  EXPECT_EQ(m.size(), 20u);
}

TEST(Mixture, SmallCases) {
  const auto a = EmpiricalMeasure::point(1.0), b = EmpiricalMeasure::point(4.0);
  const auto one = mmv::mixture({{&a, 1.0}});
  EXPECT_EQ(one.coords(), a.coords());
  const auto two = mmv::mixture({{&a, 0.5}, {&b, 0.5}});
  EXPECT_EQ(two.size(), 2u);
  EXPECT_DOUBLE_EQ(two.weight(1), 0.5);
  const auto p2 = EmpiricalMeasure::point({0.0, 0.0});
  EXPECT_THROW(mmv::mixture({{&a, 0.5}, {&p2, 0.5}}), mmv::ValidationError);
  EXPECT_THROW(mmv::mixture({{&a, 0.5}, {&b, 0.6}}), mmv::ValidationError);
}

TEST(SecondMoment, Examples) {
  EXPECT_EQ(mmv::second_moment(EmpiricalMeasure::point(0.0)), 0.0);
  EXPECT_EQ(mmv::second_moment(EmpiricalMeasure::point(3.0)), 9.0);
  EXPECT_EQ(mmv::second_moment(EmpiricalMeasure::uniform(1, {1.0, -1.0})), 1.0);
}

TEST(Lfd, Examples) {
  const auto d0 = EmpiricalMeasure::point(0.0);
  const auto d1 = EmpiricalMeasure::point(1.0);
  const auto d2 = EmpiricalMeasure::point(2.0);
  for (double theta : {0.5, 0.1, 1e-3}) {
    EXPECT_NEAR(mmv::lfd_estimate(mmv::second_moment, d0, d1, theta), 1.0, 1e-12);
    EXPECT_NEAR(mmv::lfd_estimate([](const EmpiricalMeasure&) { return 3.0; }, d0, d1, theta),
                0.0, 1e-15);
    EXPECT_NEAR(mmv::lfd_estimate([](const EmpiricalMeasure& m) { return mmv::mean_of(m)[0]; },
                                  d0, d2, theta),
                2.0, 1e-12);
  }
  EXPECT_THROW(mmv::lfd_estimate(mmv::second_moment, d0, d1, 0.0), mmv::ValidationError);
  EXPECT_THROW(mmv::lfd_estimate(mmv::second_moment, d0, d1, 0.6), mmv::ValidationError);
}

// Nonlinear functional: the quotient approaches the derivative along the
// segment, here d/ds (mean of (1-s) d0 + s d1)^2 at s = theta.
TEST(Lfd, SmoothNonlinearFunctional) {
  const auto d0 = EmpiricalMeasure::point(0.0);
  const auto d1 = EmpiricalMeasure::point(1.0);
  auto f = [](const EmpiricalMeasure& m) {
    const double e = mmv::mean_of(m)[0];
    return e * e;
  };
  const double theta = 1e-3;
  EXPECT_NEAR(mmv::lfd_estimate(f, d0, d1, theta), 2.0 * theta, 1e-12);
}

TEST(Mollify, DeterministicWeightsKept) {
  const EmpiricalMeasure mu(1, {0.0, 1.0, 5.0}, {0.2, 0.3, 0.5});
  const mmv::KernelSpec k;
  const auto a = mmv::mollify_measure(mu, 3, k, 9), b = mmv::mollify_measure(mu, 3, k, 9);
  EXPECT_EQ(a.coords(), b.coords());
  EXPECT_EQ(a.weights(), mu.weights());
  EXPECT_THROW(mmv::mollify_measure(mu, 0, k, 9), mmv::ValidationError);
}

TEST(Mollify, PointMassGivesKernelCloud) {
  std::vector<double> zeros(20000, 0.0);
  const auto mu = EmpiricalMeasure::uniform(1, zeros);
  const auto m = mmv::mollify_measure(mu, 1, mmv::KernelSpec{mmv::KernelSpec::Kind::gaussian, 1.5}, 3);
  const auto mom = mmv::compute_moments(1, m.coords(), m.weights());
  EXPECT_NEAR(mom.mean[0], 0.0, 5 * 1.5 / std::sqrt(20000.0));
  EXPECT_NEAR(std::sqrt(mom.var[0]), 1.5, 0.05);
}

TEST(Mollify, W2DecaysLikeOneOverN) {
  std::mt19937_64 g(10);
  const auto mu = random_1d(g, 400, true);
  const mmv::KernelSpec k{mmv::KernelSpec::Kind::gaussian, 1.0};
  double prev_median = INFINITY;
  for (int n : {1, 2, 4, 8, 16}) {
    std::vector<double> d;
    for (std::uint64_t seed = 0; seed < 32; ++seed) {
      const double w = mmv::w2_distance(mu, mmv::mollify_measure(mu, n, k, seed));
      // Atom-to-atom pairing is a coupling, so W2 is bounded by the RMS shift,
      // whose expectation is sd / n.
      EXPECT_LE(w, 2.0 / n);
      d.push_back(w);
    }
    std::nth_element(d.begin(), d.begin() + 16, d.end());
    EXPECT_LT(d[16], prev_median);
    prev_median = d[16];
  }
}

TEST(MeasureCsv, RoundTripIsExact) {
  std::mt19937_64 g(11);
  const auto mu = random_1d(g, 37, true);
  std::stringstream ss;
  mmv::write_measure_csv(ss, mu);
  const auto back = mmv::read_measure_csv(ss, "mem");
  EXPECT_EQ(back.coords(), mu.coords());
  for (std::size_t i = 0; i < mu.size(); ++i) EXPECT_NEAR(back.weight(i), mu.weight(i), 1e-15);
}

TEST(MeasureCsv, RenormalizesOrRejects) {
  std::stringstream ok("w,x1,x2\n0.5,1,2\n0.5000000001,3,4\n");
  const auto m = mmv::read_measure_csv(ok, "ok");
  EXPECT_EQ(m.dim(), 2);
  EXPECT_NEAR(m.weight(0) + m.weight(1), 1.0, 1e-15);
  std::stringstream bad("w,x1\n0.5,1\n0.6,3\n");
  EXPECT_THROW(mmv::read_measure_csv(bad, "bad"), mmv::ValidationError);
  std::stringstream header("w,y1\n1,0\n");
  EXPECT_THROW(mmv::read_measure_csv(header, "hdr"), mmv::ValidationError);
  std::stringstream text("w,x1\n1,abc\n");
  EXPECT_THROW(mmv::read_measure_csv(text, "txt"), mmv::ValidationError);
}
