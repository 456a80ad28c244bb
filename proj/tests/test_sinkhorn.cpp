#include "cisi/errors.hpp"
#include "cisi/sinkhorn.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace cisi {
namespace {

using testing::exact_wasserstein;
using testing::finite_difference_check;
using testing::random_matrix;

TEST(Sinkhorn, SinglePointsCostIsSquaredDistance) {
  Matrix a(1, 2), b(1, 2);
  a << 0.0, 0.0;
  b << 3.0, 4.0;
  for (double eps : {1e-3, 0.1, 1.0, 10.0}) {
    EXPECT_NEAR(sinkhorn_wasserstein(a, b, eps, 5), 25.0, 1e-12) << "eps " << eps;
  }
}

TEST(Sinkhorn, IdenticalSetsOnlyCarryEntropicBias) {
  std::mt19937_64 rng(1);
  for (double eps : {0.01, 0.1, 0.5}) {
    const Matrix a = random_matrix(7, 3, rng);
    const double v = sinkhorn_wasserstein(a, a, eps, 2000);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, eps * std::log(7.0 * 7.0)) << "eps " << eps;
    EXPECT_NEAR(exact_wasserstein(a, a), 0.0, 1e-15);
  }
}

TEST(Sinkhorn, SymmetricInItsArguments) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_matrix(5 + trial % 3, 4, rng);
    const Matrix b = random_matrix(6, 4, rng, 1.5);
    EXPECT_NEAR(sinkhorn_wasserstein(a, b, 0.1, 50), sinkhorn_wasserstein(b, a, 0.1, 50), 1e-10);
  }
}

TEST(Sinkhorn, TranslationStrictlyIncreasesCost) {
  std::mt19937_64 rng(3);
  const Matrix a = random_matrix(8, 2, rng);
  const Matrix b = random_matrix(9, 2, rng);
  double previous = -1.0;
  for (double shift : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    Matrix moved = b;
    moved.col(0).array() += shift;
    const double v = sinkhorn_wasserstein(a, moved, 0.1, 50);
    EXPECT_GT(v, previous) << "shift " << shift;
    previous = v;
  }
}

TEST(Sinkhorn, NearExactAssignmentForFourPoints) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_matrix(4, 2, rng);
    const Matrix b = random_matrix(4, 2, rng);
    const double exact = exact_wasserstein(a, b);
    EXPECT_NEAR(sinkhorn_wasserstein(a, b, 1e-3, 500), exact, 0.05 * exact) << "trial " << trial;
  }
}

TEST(Sinkhorn, PlanHasUniformMarginals) {
  std::mt19937_64 rng(5);
  const Matrix a = random_matrix(5, 3, rng);
  const Matrix b = random_matrix(4, 3, rng);
  const Matrix p = sinkhorn_plan(a, b, 0.5, 500);
  EXPECT_TRUE(p.rowwise().sum().isApprox(Vector::Constant(5, 0.2), 1e-9));
  EXPECT_TRUE(p.colwise().sum().isApprox(RowVector::Constant(4, 0.25), 1e-12));
}

TEST(Sinkhorn, EmptyGroupIsContractError) {
  EXPECT_THROW(sinkhorn_wasserstein(Matrix(0, 2), Matrix::Ones(2, 2), 0.1, 5), ContractError);
}

TEST(Sinkhorn, DimensionMismatchIsShapeError) {
  EXPECT_THROW(sinkhorn_wasserstein(Matrix::Ones(2, 3), Matrix::Ones(2, 2), 0.1, 5), ShapeError);
}

TEST(Sinkhorn, NonFinitePointsAreNumericError) {
  Matrix a = Matrix::Ones(2, 2);
  a(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(sinkhorn_wasserstein(a, Matrix::Ones(2, 2), 0.1, 5), NumericError);
}

TEST(Sinkhorn, BadSettingsAreConfigErrors) {
  EXPECT_THROW(sinkhorn_wasserstein(Matrix::Ones(2, 2), Matrix::Ones(2, 2), 0.0, 5), ConfigError);
  EXPECT_THROW(sinkhorn_wasserstein(Matrix::Ones(2, 2), Matrix::Ones(2, 2), 0.1, 0), ConfigError);
}

TEST(Sinkhorn, TapeValueMatchesPlainValue) {
  std::mt19937_64 rng(6);
  const Matrix a = random_matrix(5, 3, rng);
  const Matrix b = random_matrix(7, 3, rng);
  Tape tape;
  Var v = sinkhorn_wasserstein(tape, tape.parameter(a), tape.parameter(b), 0.1, 30);
  EXPECT_EQ(tape.scalar(v), sinkhorn_wasserstein(a, b, 0.1, 30));
}

RepGroup group(int pattern, Matrix points) {
  return {TreatmentPattern(3, static_cast<std::uint32_t>(pattern)), std::move(points)};
}

TEST(BalancingPenalty, OneEligibleGroupIsZero) {
  std::vector<RepGroup> g{group(1, Matrix::Random(4, 2)), group(2, Matrix::Random(1, 2))};
  EXPECT_EQ(balancing_penalty(g, {}), 0.0);
  std::vector<RepGroup> none;
  EXPECT_EQ(balancing_penalty(none, {}), 0.0);
}

TEST(BalancingPenalty, TwoGroupsGiveTheirDistance) {
  std::mt19937_64 rng(7);
  const Matrix a = random_matrix(4, 3, rng);
  const Matrix b = random_matrix(6, 3, rng);
  std::vector<RepGroup> g{group(0, a), group(5, b)};
  EXPECT_EQ(balancing_penalty(g, {}), sinkhorn_wasserstein(a, b, 0.1, 50));
}

TEST(BalancingPenalty, ThreeGroupsAverageTheirPairs) {
  std::mt19937_64 rng(8);
  const Matrix a = random_matrix(4, 3, rng);
  const Matrix b = random_matrix(6, 3, rng, 2.0);
  const Matrix c = random_matrix(3, 3, rng, 0.5);
  std::vector<RepGroup> g{group(0, a), group(3, b), group(7, c), group(6, random_matrix(1, 3, rng))};
  const double d12 = sinkhorn_wasserstein(a, b, 0.1, 50);
  const double d13 = sinkhorn_wasserstein(a, c, 0.1, 50);
  const double d23 = sinkhorn_wasserstein(b, c, 0.1, 50);
  EXPECT_NEAR(balancing_penalty(g, {}), (d12 + d13 + d23) / 3.0, 1e-14);
}

TEST(BalancingPenaltyProperty, NonNegativeAndSymmetric) {
  for (int trial = 0; trial < 30; ++trial) {
    std::mt19937_64 rng(100 + trial);
    std::uniform_int_distribution<int> size(1, 9);
    const Matrix a = random_matrix(size(rng), 4, rng, 0.3 + trial % 5);
    const Matrix b = random_matrix(size(rng), 4, rng);
    EXPECT_GE(sinkhorn_wasserstein(a, b, 0.1, 50), 0.0);
    EXPECT_NEAR(sinkhorn_wasserstein(a, b, 0.1, 50), sinkhorn_wasserstein(b, a, 0.1, 50), 1e-10);
    std::vector<RepGroup> g{group(1, a), group(2, b), group(4, random_matrix(3, 4, rng))};
    EXPECT_GE(balancing_penalty(g, {}), 0.0);
  }
}

TEST(BalancingPenalty, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  std::vector<Matrix> points{random_matrix(4, 3, rng), random_matrix(5, 3, rng),
                             random_matrix(3, 3, rng)};
  auto build = [&](Tape& t, std::vector<Var>& vars) {
    std::vector<RepGroupVar> g;
    for (std::size_t i = 0; i < points.size(); ++i) {
      vars.push_back(t.parameter(points[i]));
      g.push_back({TreatmentPattern(3, static_cast<std::uint32_t>(i + 1)), vars.back()});
    }
    return balancing_penalty(t, g, {});
  };
  Tape tape;
  std::vector<Var> vars;
  Grad grad = tape.backward(build(tape, vars));
  auto loss = [&] {
    Tape t;
    std::vector<Var> v;
    return t.scalar(build(t, v));
  };
  std::vector<Matrix*> ptrs;
  for (auto& p : points) ptrs.push_back(&p);
  auto res = finite_difference_check(ptrs, {grad.begin(), grad.end()}, loss);
  EXPECT_LE(res.max_rel, 1e-3) << "group " << res.slot << " entry " << res.entry;
}

}  // namespace
}  // namespace cisi
