#include "cisi/simgen.hpp"

#include "cisi/errors.hpp"
#include "cisi/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace cisi {

namespace {

enum Stream : std::uint64_t { kSpecStream = 1, kCovariateStream = 2, kTreatmentStream = 3,
                              kNoiseStream = 4 };

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Matrix uniform_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  }
  return m;
}

std::vector<double> to_vec(const Matrix& m) {
  std::vector<double> v;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  }
  return v;
}

Matrix from_vec(const nlohmann::json& j, Index rows, Index cols) {
  auto v = j.get<std::vector<double>>();
  if (static_cast<Index>(v.size()) != rows * cols) {
    throw ConfigError("scenario json: array length mismatch");
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

void apply_scenario_constants(ScenarioSpec& s) {
  switch (s.scenario) {
    case 1: s.interaction = 1; s.delta = 1.0; s.lambda = 1.0; break;
    case 2: s.interaction = 1; s.delta = 0.2; s.lambda = 0.1; break;
    case 3: s.interaction = 0; s.delta = 1.0; s.lambda = 1.0; break;
    default: throw ConfigError("scenario must be 1, 2 or 3");
  }
}

}  // namespace

Index ScenarioSpec::true_dim() const { return scenario == 2 ? kLatentDim : 3 * kBlockWidth; }

Index ScenarioSpec::observed_dim() const {
  return scenario == 2 ? 3 * kLatentDim : 3 * kBlockWidth;
}

ScenarioSpec draw_spec(int scenario, Index n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample size must be positive");
  ScenarioSpec s;
  s.scenario = scenario;
  s.n = n;
  s.seed = seed;
  apply_scenario_constants(s);

  std::mt19937_64 rng(derive_seed(seed, kSpecStream));
  const Index d = s.true_dim();
  s.treatment_weights = uniform_matrix(s.treatments, d, rng);
  s.outcome_weights = uniform_matrix(d, 1, rng).col(0);
  if (scenario == 2) {
    s.proxy_normal = uniform_matrix(kLatentDim, kLatentDim, rng);
    s.proxy_uniform = uniform_matrix(kLatentDim, kLatentDim, rng);
    s.proxy_binary = uniform_matrix(kLatentDim, kLatentDim, rng);
  } else {
    s.normal_means = uniform_matrix(kBlockWidth, 1, rng).col(0);
  }
  return s;
}

double outcome_function(const Eigen::Ref<const Vector>& x, const TreatmentPattern& t,
                        const ScenarioSpec& spec) {
  if (x.size() < 7) throw ShapeError("outcome function needs at least 7 true covariates");
  if (x.size() != spec.outcome_weights.size()) {
    throw ShapeError("outcome function: covariate length " + std::to_string(x.size()) +
                     " does not match w_x length " + std::to_string(spec.outcome_weights.size()));
  }
  if (t.size() != 3) throw ContractError("outcome function is defined for three treatments");
  const double t1 = t.active(1) ? 1.0 : 0.0;
  const double t2 = t.active(2) ? 1.0 : 0.0;
  const double t3 = t.active(3) ? 1.0 : 0.0;
  double y = spec.outcome_weights.dot(x);
  y += (x(0) + 1.0) * t1 + 1.2 * (x(1) + 1.0) * t2 + 0.8 * (x(2) + 1.0) * t3;
  const double inter = (x(3) + 0.5) * t1 * t2 - 0.5 * (x(4) + 1.0) * t1 * t3 +
                       0.1 * (x(5) + 1.0) * t2 * t3 + 0.7 * x(6) * t1 * t2 * t3;
  y += spec.interaction * inter;
  return y + 2.0;
}

Vector outcome_rows(const Matrix& x_true, const TreatmentPattern& t,
                        const ScenarioSpec& spec) {
  Vector out(x_true.rows());
  for (Index i = 0; i < x_true.rows(); ++i) {
    out(i) = outcome_function(x_true.row(i).transpose(), t, spec);
  }
  return out;
}

int selection_indicator(const Eigen::Ref<const Vector>& x) {
  if (x.size() < 2) throw ShapeError("selection indicator needs two covariates");
  return x(0) + x(1) > 1.0 ? 1 : 0;
}

Matrix treatment_probabilities(const Matrix& x_true, const ScenarioSpec& spec) {
  if (x_true.cols() != spec.treatment_weights.cols()) {
    throw ShapeError("treatment assignment: covariate width does not match w_t");
  }
  Matrix logits = x_true * spec.treatment_weights.transpose();
  Matrix p(x_true.rows(), spec.treatments);
  for (Index i = 0; i < x_true.rows(); ++i) {
    const int h = selection_indicator(x_true.row(i).transpose());
    for (Index k = 0; k < spec.treatments; ++k) {
      p(i, k) = sigmoid(logits(i, k) - spec.lambda * h - spec.delta);
    }
  }
  return p;
}

Matrix assign_treatments(const Matrix& x_true, const ScenarioSpec& spec, std::mt19937_64& rng) {
  const Matrix p = treatment_probabilities(x_true, spec);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix t(p.rows(), p.cols());
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index k = 0; k < p.cols(); ++k) t(i, k) = u(rng) < p(i, k) ? 1.0 : 0.0;
  }
  return t;
}

SimDataset generate(const ScenarioSpec& spec) {
  ScenarioSpec check = spec;
  apply_scenario_constants(check);
  if (check.interaction != spec.interaction || check.delta != spec.delta ||
      check.lambda != spec.lambda) {
    throw ConfigError("scenario constants (l, delta, lambda) do not match the scenario");
  }
  if (spec.n < 1) throw ConfigError("sample size must be positive");

  SimDataset out;
  out.spec = spec;
  const Index n = spec.n;
  std::mt19937_64 cov_rng(derive_seed(spec.seed, kCovariateStream));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  if (spec.scenario == 2) {
    out.x_true.resize(n, kLatentDim);
    out.x_observed.resize(n, 3 * kLatentDim);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < kLatentDim; ++j) out.x_true(i, j) = normal(cov_rng);
      const Vector z = out.x_true.row(i).transpose();
      for (Index j = 0; j < kLatentDim; ++j) {
        out.x_observed(i, j) = spec.proxy_normal.row(j).dot(z) + normal(cov_rng);
      }
      for (Index j = 0; j < kLatentDim; ++j) {
        out.x_observed(i, kLatentDim + j) = spec.proxy_uniform.row(j).dot(z) + 5.0 * normal(cov_rng);
      }
      for (Index j = 0; j < kLatentDim; ++j) {
        out.x_observed(i, 2 * kLatentDim + j) =
            unit(cov_rng) < sigmoid(spec.proxy_binary.row(j).dot(z)) ? 1.0 : 0.0;
      }
    }
  } else {
    out.x_true.resize(n, 3 * kBlockWidth);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < kBlockWidth; ++j) {
        out.x_true(i, j) = spec.normal_means(j) + normal(cov_rng);
      }
      for (Index j = 0; j < kBlockWidth; ++j) out.x_true(i, kBlockWidth + j) = uniform(cov_rng);
      for (Index j = 0; j < kBlockWidth; ++j) {
        out.x_true(i, 2 * kBlockWidth + j) = unit(cov_rng) < 0.5 ? 1.0 : 0.0;
      }
    }
    out.x_observed = out.x_true;
  }

  std::mt19937_64 t_rng(derive_seed(spec.seed, kTreatmentStream));
  out.t = assign_treatments(out.x_true, spec, t_rng);

  std::mt19937_64 noise_rng(derive_seed(spec.seed, kNoiseStream));
  out.y.resize(n);
  Dataset view{Matrix(), out.t, Vector()};
  for (Index i = 0; i < n; ++i) {
    const double mean = outcome_function(out.x_true.row(i).transpose(), view.pattern(i), spec);
    out.y(i) = mean + normal(noise_rng);
  }
  return out;
}

void to_json(nlohmann::json& j, const ScenarioSpec& s) {
  j = nlohmann::json{{"scenario", s.scenario},
                     {"n", s.n},
                     {"treatments", s.treatments},
                     {"l", s.interaction},
                     {"delta", s.delta},
                     {"lambda", s.lambda},
                     {"seed", s.seed},
                     {"true_dim", s.true_dim()},
                     {"observed_dim", s.observed_dim()},
                     {"w_t", to_vec(s.treatment_weights)},
                     {"w_x", to_vec(s.outcome_weights)}};
  if (s.scenario == 2) {
    j["w_n"] = to_vec(s.proxy_normal);
    j["w_u"] = to_vec(s.proxy_uniform);
    j["w_b"] = to_vec(s.proxy_binary);
  } else {
    j["c_n"] = to_vec(s.normal_means);
  }
}

void from_json(const nlohmann::json& j, ScenarioSpec& s) {
  try {
    s = ScenarioSpec{};
    s.scenario = j.at("scenario").get<int>();
    s.n = j.at("n").get<Index>();
    s.treatments = j.at("treatments").get<int>();
    s.interaction = j.at("l").get<int>();
    s.delta = j.at("delta").get<double>();
    s.lambda = j.at("lambda").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const Index d = s.true_dim();
    s.treatment_weights = from_vec(j.at("w_t"), s.treatments, d);
    s.outcome_weights = from_vec(j.at("w_x"), d, 1).col(0);
    if (s.scenario == 2) {
      s.proxy_normal = from_vec(j.at("w_n"), kLatentDim, kLatentDim);
      s.proxy_uniform = from_vec(j.at("w_u"), kLatentDim, kLatentDim);
      s.proxy_binary = from_vec(j.at("w_b"), kLatentDim, kLatentDim);
    } else {
      s.normal_means = from_vec(j.at("c_n"), kBlockWidth, 1).col(0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario json: ") + e.what());
  }
}

}  // namespace cisi
