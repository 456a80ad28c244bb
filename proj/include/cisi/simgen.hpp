#pragma once

// Synthetic benchmarks with three concurrent binary treatments.
//
// Treatment k is drawn as Bern(σ(w_kᵀx_t − λH − δ)) with the discontinuous
// indicator H = 𝕀(x_t⁽¹⁾ + x_t⁽²⁾ > 1), and the outcome is f(x_t, t, l) plus
// unit Gaussian noise.
//
//   scenario 1  x_o = x_t = (15 normal, 15 uniform, 15 binary), l=1, δ=1,   λ=1
//   scenario 2  x_t = z ~ N(0, I₁₀); x_o = 30 noisy proxies of z, l=1, δ=0.2, λ=0.1
//   scenario 3  as scenario 1 with l=0 (no interaction effects)

#include "cisi/dataset.hpp"
#include "cisi/pattern.hpp"
#include "cisi/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <random>

namespace cisi {

inline constexpr int kSimTreatments = 3;
inline constexpr Index kBlockWidth = 15;   // scenario 1/3 block width
inline constexpr Index kLatentDim = 10;    // scenario 2 latent and proxy-block width

struct ScenarioSpec {
  int scenario = 1;
  Index n = 0;
  int treatments = kSimTreatments;
  int interaction = 1;  // l
  double delta = 1.0;
  double lambda = 1.0;
  std::uint64_t seed = 0;

  Matrix treatment_weights;  // K × d_t, row k is w_{t_k}
  Vector outcome_weights;    // w_x, length d_t
  Vector normal_means;       // c_n, scenarios 1/3
  Matrix proxy_normal;       // w_n, scenario 2; row j is w_n⁽ʲ⁾
  Matrix proxy_uniform;      // w_u
  Matrix proxy_binary;       // w_b

  Index true_dim() const;
  Index observed_dim() const;
};

struct SimDataset {
  ScenarioSpec spec;
  Matrix x_observed;
  Matrix x_true;
  Matrix t;
  Vector y;

  Dataset observed() const { return Dataset{x_observed, t, y}; }
};

ScenarioSpec draw_spec(int scenario, Index n, std::uint64_t seed);

/// Noise-free outcome. x_true must have at least 7 entries.
double outcome_function(const Eigen::Ref<const Vector>& x_true, const TreatmentPattern& t,
                        const ScenarioSpec& spec);
/// Row-wise outcome_function for a fixed pattern.
Vector outcome_rows(const Matrix& x_true, const TreatmentPattern& t, const ScenarioSpec& spec);

/// H = 𝕀(x⁽¹⁾ + x⁽²⁾ > 1)
int selection_indicator(const Eigen::Ref<const Vector>& x_true);
/// σ(w_{t_k}ᵀ x − λH − δ) for each unit (rows) and treatment (columns).
Matrix treatment_probabilities(const Matrix& x_true, const ScenarioSpec& spec);
Matrix assign_treatments(const Matrix& x_true, const ScenarioSpec& spec, std::mt19937_64& rng);

/// Deterministic in spec (including spec.seed).
SimDataset generate(const ScenarioSpec& spec);

void to_json(nlohmann::json& j, const ScenarioSpec& spec);
void from_json(const nlohmann::json& j, ScenarioSpec& spec);

}  // namespace cisi
