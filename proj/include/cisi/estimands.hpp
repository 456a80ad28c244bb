#pragma once

// Plug-in average single effects (ASE) and average interaction effects (AIE).
//
//   ASE(k) = mean_x [ μ̂(x, t_{+k}) − μ̂(x, 0) ]
//   AIE(S) = mean_x [ Σ_{Q⊆S} (−1)^{|S|−|Q|} μ̂(x, t_{(+Q)}) ],  |S| ≥ 2
//
// Averages run over the rows of the evaluation covariate matrix.

#include "cisi/pattern.hpp"
#include "cisi/simgen.hpp"
#include "cisi/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cisi {

/// μ̂(x, t) for every row of x.
using OutcomeFn = std::function<Vector(const Matrix& x, const TreatmentPattern& t)>;

struct SubsetLess {
  bool operator()(const Subset& a, const Subset& b) const { return subset_less(a, b); }
};

struct EffectReport {
  int treatments = 0;
  std::map<int, double> ase;                // k (1-based) → τ_ASE(k)
  std::map<Subset, double, SubsetLess> aie;  // S, |S| ≥ 2 → τ_AIE(S)
  Index n_test = 0;
  std::string method;
  std::uint64_t seed = 0;
};

struct ErrorReport {
  std::map<int, double> ase;
  std::map<Subset, double, SubsetLess> aie;
};

Vector estimate_mu_hat(const OutcomeFn& mu, const Matrix& x, const TreatmentPattern& t);

/// Sign (−1)^{|S|−|Q|} for every Q ⊆ S, including ∅. Requires |S| ≥ 2.
std::vector<std::pair<Subset, int>> inclusion_exclusion_coeffs(const Subset& s);

double ase(const OutcomeFn& mu, const Matrix& x, int treatments, int k);
double aie(const OutcomeFn& mu, const Matrix& x, int treatments, const Subset& s);

/// All K single effects and 2^K − K − 1 interaction effects, from a table
/// whose column j holds μ̂(x, pattern j) for every row.
EffectReport effects_from_pattern_table(const Matrix& mu_by_pattern, int treatments);
EffectReport estimate_effects(const OutcomeFn& mu, const Matrix& x, int treatments);

/// Ground truth for a simulated scenario: the averages over the rows of x_true
/// of the effects of the noise-free outcome function, expanded in closed form.
EffectReport true_effects(const ScenarioSpec& spec, const Matrix& x_true);
OutcomeFn oracle_outcome(const ScenarioSpec& spec);

/// Elementwise |truth − estimate|. Throws ContractError on key mismatch.
ErrorReport effect_errors(const EffectReport& truth, const EffectReport& estimate);

void to_json(nlohmann::json& j, const EffectReport& r);
void from_json(const nlohmann::json& j, EffectReport& r);
void to_json(nlohmann::json& j, const ErrorReport& r);

}  // namespace cisi
