#include "cisi/estimands.hpp"

#include "cisi/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>

namespace cisi {

Vector estimate_mu_hat(const OutcomeFn& mu, const Matrix& x, const TreatmentPattern& t) {
  Vector out = mu(x, t);
  if (out.size() != x.rows()) {
    throw ShapeError("estimate_mu_hat: outcome model returned " + std::to_string(out.size()) +
                     " values for " + std::to_string(x.rows()) + " rows");
  }
  return out;
}

std::vector<std::pair<Subset, int>> inclusion_exclusion_coeffs(const Subset& s) {
  if (s.size() < 2) throw ContractError("inclusion_exclusion_coeffs: |S| must be at least 2");
  const auto size = static_cast<int>(s.size());
  std::vector<std::pair<Subset, int>> out;
  for (std::uint32_t mask = 0; mask < (1u << size); ++mask) {
    Subset q;
    for (int i = 0; i < size; ++i) {
      if (mask & (1u << i)) q.push_back(s[static_cast<std::size_t>(i)]);
    }
    const int sign = ((size - static_cast<int>(q.size())) % 2 == 0) ? 1 : -1;
    out.emplace_back(std::move(q), sign);
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return subset_less(a.first, b.first); });
  return out;
}

double ase(const OutcomeFn& mu, const Matrix& x, int treatments, int k) {
  if (k < 1 || k > treatments) throw ContractError("ase: treatment index out of range");
  if (x.rows() == 0) throw ContractError("ase: no evaluation rows");
  const Vector on = estimate_mu_hat(mu, x, TreatmentPattern::one_hot(treatments, k));
  const Vector off = estimate_mu_hat(mu, x, TreatmentPattern::zeros(treatments));
  return (on - off).mean();
}

double aie(const OutcomeFn& mu, const Matrix& x, int treatments, const Subset& s) {
  if (x.rows() == 0) throw ContractError("aie: no evaluation rows");
  Vector acc = Vector::Zero(x.rows());
  for (const auto& [q, sign] : inclusion_exclusion_coeffs(s)) {
    acc += sign * estimate_mu_hat(mu, x, TreatmentPattern::activate(treatments, q));
  }
  return acc.mean();
}

EffectReport effects_from_pattern_table(const Matrix& mu_by_pattern, int treatments) {
  if (mu_by_pattern.cols() != (Index{1} << treatments)) {
    throw ShapeError("effects: pattern table needs 2^K columns");
  }
  if (mu_by_pattern.rows() == 0) throw ContractError("effects: no evaluation rows");
  EffectReport r;
  r.treatments = treatments;
  r.n_test = mu_by_pattern.rows();
  const Vector& base = mu_by_pattern.col(0);
  for (int k = 1; k <= treatments; ++k) {
    const auto col = TreatmentPattern::one_hot(treatments, k).index();
    r.ase[k] = (mu_by_pattern.col(col) - base).mean();
  }
  for (const Subset& s : subsets_of_size_at_least(treatments, 2)) {
    Vector acc = Vector::Zero(mu_by_pattern.rows());
    for (const auto& [q, sign] : inclusion_exclusion_coeffs(s)) {
      acc += sign * mu_by_pattern.col(TreatmentPattern::activate(treatments, q).index());
    }
    r.aie[s] = acc.mean();
  }
  return r;
}

EffectReport estimate_effects(const OutcomeFn& mu, const Matrix& x, int treatments) {
  const Index patterns = Index{1} << treatments;
  Matrix table(x.rows(), patterns);
  for (Index p = 0; p < patterns; ++p) {
    table.col(p) = estimate_mu_hat(mu, x, TreatmentPattern(treatments, static_cast<std::uint32_t>(p)));
  }
  return effects_from_pattern_table(table, treatments);
}

OutcomeFn oracle_outcome(const ScenarioSpec& spec) {
  return [spec](const Matrix& x, const TreatmentPattern& t) {
    return outcome_rows(x, t, spec);
  };
}

EffectReport true_effects(const ScenarioSpec& spec, const Matrix& x_true) {
  if (x_true.cols() != spec.true_dim()) {
    throw ContractError("true_effects: expected the " + std::to_string(spec.true_dim()) +
                        " true covariates of scenario " + std::to_string(spec.scenario) +
                        ", got " + std::to_string(x_true.cols()) + " columns");
  }
  if (x_true.rows() == 0) throw ContractError("true_effects: no evaluation rows");
  if (spec.treatments != 3) throw ContractError("true_effects: the outcome function has three treatments");
  // Inclusion-exclusion applied symbolically to outcome_function: the
  // baseline cancels and each effect keeps only its own term, so l = 0 gives
  // interaction effects of exactly zero.
  const auto term = [&](Index col, double scale, double shift) {
    return scale * (x_true.col(col).array() + shift).mean();
  };
  const double l = spec.interaction;
  EffectReport r;
  r.treatments = spec.treatments;
  r.n_test = x_true.rows();
  r.ase[1] = term(0, 1.0, 1.0);
  r.ase[2] = term(1, 1.2, 1.0);
  r.ase[3] = term(2, 0.8, 1.0);
  r.aie[{1, 2}] = l * term(3, 1.0, 0.5);
  r.aie[{1, 3}] = l * term(4, -0.5, 1.0);
  r.aie[{2, 3}] = l * term(5, 0.1, 1.0);
  r.aie[{1, 2, 3}] = l * term(6, 0.7, 0.0);
  r.method = "truth";
  r.seed = spec.seed;
  return r;
}

ErrorReport effect_errors(const EffectReport& truth, const EffectReport& estimate) {
  if (truth.ase.size() != estimate.ase.size() || truth.aie.size() != estimate.aie.size()) {
    throw ContractError("effect_errors: reports cover different effects");
  }
  ErrorReport e;
  for (const auto& [k, v] : truth.ase) {
    auto it = estimate.ase.find(k);
    if (it == estimate.ase.end()) throw ContractError("effect_errors: missing ASE key");
    e.ase[k] = std::abs(v - it->second);
  }
  for (const auto& [s, v] : truth.aie) {
    auto it = estimate.aie.find(s);
    if (it == estimate.aie.end()) throw ContractError("effect_errors: missing AIE key");
    e.aie[s] = std::abs(v - it->second);
  }
  return e;
}

void to_json(nlohmann::json& j, const EffectReport& r) {
  nlohmann::json ase = nlohmann::json::object();
  for (const auto& [k, v] : r.ase) ase[std::to_string(k)] = v;
  nlohmann::json aie = nlohmann::json::object();
  for (const auto& [s, v] : r.aie) aie[subset_key(s)] = v;
  j = nlohmann::json{{"treatments", r.treatments}, {"ase", ase},       {"aie", aie},
                     {"n_test", r.n_test},         {"method", r.method}, {"seed", r.seed}};
}

void from_json(const nlohmann::json& j, EffectReport& r) {
  try {
    r = EffectReport{};
    r.treatments = j.at("treatments").get<int>();
    for (const auto& [k, v] : j.at("ase").items()) r.ase[std::stoi(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("aie").items()) r.aie[parse_subset_key(k)] = v.get<double>();
    r.n_test = j.at("n_test").get<Index>();
    r.method = j.value("method", "");
    r.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("effect report json: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const ErrorReport& r) {
  nlohmann::json ase = nlohmann::json::object();
  for (const auto& [k, v] : r.ase) ase[std::to_string(k)] = v;
  nlohmann::json aie = nlohmann::json::object();
  for (const auto& [s, v] : r.aie) aie[subset_key(s)] = v;
  j = nlohmann::json{{"eps_ase", ase}, {"eps_aie", aie}};
}

}  // namespace cisi
