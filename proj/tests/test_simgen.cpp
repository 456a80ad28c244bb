#include "cisi/errors.hpp"
#include "cisi/simgen.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <set>

namespace cisi {
namespace {

Vector row(const Matrix& m, Index i) { return m.row(i).transpose(); }

TEST(DrawSpec, ScenarioConstants) {
  const ScenarioSpec s1 = draw_spec(1, 10, 1);
  EXPECT_EQ(s1.interaction, 1);
  EXPECT_EQ(s1.delta, 1.0);
  EXPECT_EQ(s1.lambda, 1.0);
  const ScenarioSpec s2 = draw_spec(2, 10, 1);
  EXPECT_EQ(s2.interaction, 1);
  EXPECT_EQ(s2.delta, 0.2);
  EXPECT_EQ(s2.lambda, 0.1);
  const ScenarioSpec s3 = draw_spec(3, 10, 1);
  EXPECT_EQ(s3.interaction, 0);
  EXPECT_EQ(s3.delta, 1.0);
  EXPECT_EQ(s3.lambda, 1.0);
  EXPECT_EQ(s1.treatments, 3);
}

TEST(DrawSpec, InvalidScenarioIsConfigError) {
  EXPECT_THROW(draw_spec(4, 10, 1), ConfigError);
  EXPECT_THROW(draw_spec(0, 10, 1), ConfigError);
  EXPECT_THROW(draw_spec(1, 0, 1), ConfigError);
}

TEST(DrawSpec, WeightsInUnitInterval) {
  for (int scenario : {1, 2, 3}) {
    const ScenarioSpec s = draw_spec(scenario, 10, 77);
    EXPECT_LE(s.treatment_weights.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_LE(s.outcome_weights.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_EQ(s.treatment_weights.rows(), 3);
    EXPECT_EQ(s.treatment_weights.cols(), s.true_dim());
    if (scenario == 2) {
      EXPECT_LE(s.proxy_normal.cwiseAbs().maxCoeff(), 1.0);
      EXPECT_LE(s.proxy_uniform.cwiseAbs().maxCoeff(), 1.0);
      EXPECT_LE(s.proxy_binary.cwiseAbs().maxCoeff(), 1.0);
    } else {
      EXPECT_LE(s.normal_means.cwiseAbs().maxCoeff(), 1.0);
      EXPECT_EQ(s.normal_means.size(), 15);
    }
  }
}

TEST(DrawSpec, Deterministic) {
  const nlohmann::json a = draw_spec(2, 10, 5);
  const nlohmann::json b = draw_spec(2, 10, 5);
  EXPECT_EQ(a, b);
  const nlohmann::json c = draw_spec(2, 10, 6);
  EXPECT_NE(a, c);
}

TEST(OutcomeFunction, UntreatedIsBaselinePlusTwo) {
  const ScenarioSpec s = draw_spec(1, 10, 3);
  const SimDataset d = generate(draw_spec(1, 5, 3));
  for (Index i = 0; i < 5; ++i) {
    const Vector x = row(d.x_true, i);
    EXPECT_NEAR(outcome_function(x, TreatmentPattern::zeros(3), s), s.outcome_weights.dot(x) + 2.0,
                1e-14);
  }
}

TEST(OutcomeFunction, HandValuesAtZero) {
  for (int scenario : {1, 3}) {
    const ScenarioSpec s = draw_spec(scenario, 10, 3);
    const Vector zero = Vector::Zero(45);
    EXPECT_DOUBLE_EQ(outcome_function(zero, TreatmentPattern::from_bits({1, 0, 0}), s), 3.0);
  }
  const ScenarioSpec s1 = draw_spec(1, 10, 3);
  EXPECT_NEAR(outcome_function(Vector::Zero(45), TreatmentPattern::from_bits({1, 1, 1}), s1), 5.1,
              1e-14);
  const ScenarioSpec s3 = draw_spec(3, 10, 3);
  EXPECT_NEAR(outcome_function(Vector::Zero(45), TreatmentPattern::from_bits({1, 1, 1}), s3), 5.0,
              1e-14);
}

TEST(OutcomeFunction, ShortVectorIsShapeError) {
  const ScenarioSpec s = draw_spec(1, 10, 3);
  EXPECT_THROW(outcome_function(Vector::Zero(6), TreatmentPattern::zeros(3), s), ShapeError);
}

TEST(Selection, IndicatorThreshold) {
  Vector x(2);
  x << 1.5, 0.5;
  EXPECT_EQ(selection_indicator(x), 1);
  x << 0.0, 0.0;
  EXPECT_EQ(selection_indicator(x), 0);
  x << 0.5, 0.5;
  EXPECT_EQ(selection_indicator(x), 0);
}

TEST(TreatmentProbabilities, ZeroWeightsSelectedUnit) {
  ScenarioSpec s = draw_spec(1, 10, 3);
  s.treatment_weights.setZero();
  Matrix x = Matrix::Zero(1, 45);
  x(0, 0) = 1.0;
  x(0, 1) = 1.0;
  const Matrix p = treatment_probabilities(x, s);
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(p(0, k), 0.1192, 5e-5);
}

TEST(AssignTreatments, EmpiricalRatesMatchProbabilities) {
  const SimDataset base = generate(draw_spec(1, 1000000, 11));
  const Matrix p = treatment_probabilities(base.x_true, base.spec);
  std::mt19937_64 rng(99);
  const Matrix t = assign_treatments(base.x_true, base.spec, rng);
  for (Index k = 0; k < 3; ++k) {
    EXPECT_NEAR(t.col(k).mean(), p.col(k).mean(), 0.002) << "treatment " << k + 1;
  }
  EXPECT_GT(p.minCoeff(), 0.0);
  EXPECT_LT(p.maxCoeff(), 1.0);
}

TEST(Generate, ScenarioOneShapesAndBlocks) {
  const SimDataset d = generate(draw_spec(1, 100, 4));
  EXPECT_EQ(d.x_observed.rows(), 100);
  EXPECT_EQ(d.x_observed.cols(), 45);
  EXPECT_EQ(d.t.rows(), 100);
  EXPECT_EQ(d.t.cols(), 3);
  EXPECT_EQ(d.x_observed, d.x_true);
  const Matrix uniform = d.x_true.middleCols(15, 15);
  EXPECT_LE(uniform.cwiseAbs().maxCoeff(), 1.0);
  const Matrix binary = d.x_true.rightCols(15);
  EXPECT_TRUE((binary.array() == 0.0 || binary.array() == 1.0).all());
  EXPECT_TRUE((d.t.array() == 0.0 || d.t.array() == 1.0).all());
  EXPECT_TRUE(d.y.allFinite());
}

TEST(Generate, ScenarioTwoShapes) {
  const SimDataset d = generate(draw_spec(2, 100, 4));
  EXPECT_EQ(d.x_observed.rows(), 100);
  EXPECT_EQ(d.x_observed.cols(), 30);
  EXPECT_EQ(d.x_true.cols(), 10);
  const Matrix binary = d.x_observed.rightCols(10);
  EXPECT_TRUE((binary.array() == 0.0 || binary.array() == 1.0).all());
}

TEST(Generate, NormalBlockCentredOnDrawnMeans) {
  const SimDataset d = generate(draw_spec(1, 20000, 12));
  for (Index j = 0; j < 15; ++j) {
    EXPECT_NEAR(d.x_true.col(j).mean(), d.spec.normal_means(j), 0.05) << j;
  }
}

TEST(Generate, Deterministic) {
  for (int scenario : {1, 2, 3}) {
    const SimDataset a = generate(draw_spec(scenario, 200, 8));
    const SimDataset b = generate(draw_spec(scenario, 200, 8));
    EXPECT_EQ(a.x_observed, b.x_observed);
    EXPECT_EQ(a.t, b.t);
    EXPECT_EQ(a.y, b.y);
  }
}

TEST(Generate, UnitNoiseVariance) {
  const SimDataset d = generate(draw_spec(1, 100000, 13));
  const Dataset obs = d.observed();
  Vector resid(d.y.size());
  for (Index i = 0; i < d.y.size(); ++i) {
    resid(i) = d.y(i) - outcome_function(row(d.x_true, i), obs.pattern(i), d.spec);
  }
  const double var = (resid.array() - resid.mean()).square().mean();
  EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(Generate, EveryPatternAppearsAtFullSize) {
  for (int scenario : {1, 2, 3}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const SimDataset d = generate(draw_spec(scenario, 50000, seed));
      const auto idx = d.observed().pattern_indices();
      EXPECT_EQ(std::set<std::uint32_t>(idx.begin(), idx.end()).size(), 8u)
          << "scenario " << scenario << " seed " << seed;
    }
  }
}

TEST(Generate, MismatchedConstantsAreConfigError) {
  ScenarioSpec s = draw_spec(1, 10, 1);
  s.interaction = 0;
  EXPECT_THROW(generate(s), ConfigError);
}

TEST(ScenarioSpecJson, RoundTripRegeneratesIdenticalData) {
  for (int scenario : {1, 2, 3}) {
    const ScenarioSpec s = draw_spec(scenario, 50, 21);
    const ScenarioSpec back = nlohmann::json::parse(nlohmann::json(s).dump()).get<ScenarioSpec>();
    EXPECT_EQ(generate(back).y, generate(s).y);
  }
}

}  // namespace
}  // namespace cisi
