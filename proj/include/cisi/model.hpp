#pragma once

// CISI-Net and the adapted baselines.
//
//   cisi      y = h([Φ(x) | t_w(t)])          one shared outcome head
//   tarnet    y = h_t(Φ(x))                   one head per treatment pattern
//   cfr_wass  tarnet heads + balancing penalty
//   ncore     y = h_0(Φ(x)) + Σ_{k∈t} h_k(Φ(x)) + Σ_{S⊆t,|S|≥2} g_S(Φ(x))
//
// All methods share the representation network Φ and the training loop:
// mini-batch Adam on L = L_y + α L_Φ + β Σ‖W‖², where L_y is the
// frequency-weighted squared error and L_Φ the mean pairwise Sinkhorn cost
// between the per-pattern representation groups of the batch.

#include "cisi/dataset.hpp"
#include "cisi/neural.hpp"
#include "cisi/pattern.hpp"
#include "cisi/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cisi {

enum class Method { Cisi, Tarnet, CfrWass, Ncore };

std::string method_name(Method m);
/// Accepts "cisi", "tarnet", "cfr-wass"/"cfr_wass", "ncore".
Method parse_method(const std::string& name);

struct TrainConfig {
  double alpha = 0.1;
  double beta = 1e-5;
  double learning_rate = 1e-5;
  Index batch_size = 128;
  int epochs = 30;
  double sinkhorn_eps = 0.1;
  int sinkhorn_iters = 50;
  std::uint64_t seed = 0;
  Index rep_dim = 200;
  Index embed_dim = 5;
  Index width = 200;
  int depth = 3;
  /// cisi only: false feeds the raw treatment vector to the outcome head.
  bool task_embedding = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing fields keep their defaults; unknown fields are a ConfigError.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct ModelBundle {
  Method method = Method::Cisi;
  int treatments = 0;
  Index covariate_dim = 0;
  TrainConfig config;
  MlpParams representation;
  std::optional<MlpParams> embedding;
  std::vector<MlpParams> heads;
  /// tarnet/cfr_wass: the pattern each head serves. ncore: the pattern of the
  /// treatment subset that switches the head on (0 for the base head).
  std::vector<std::uint32_t> head_patterns;

  /// Every trainable matrix, in tape registration order.
  std::vector<Matrix*> parameters();
  std::size_t parameter_count() const;
};

ModelBundle init_model(Method method, Index covariate_dim, int treatments,
                       const TrainConfig& config);

nlohmann::json model_to_json(const ModelBundle& model);
ModelBundle model_from_json(const nlohmann::json& j);

struct Prediction {
  Vector yhat;
  Matrix representation;
};

Prediction forward_mu(const ModelBundle& model, const Matrix& x, const TreatmentPattern& t);
Matrix representation(const ModelBundle& model, const Matrix& x);
Vector predict_from_representation(const ModelBundle& model, const Matrix& rep,
                                   const TreatmentPattern& t);
/// N × 2^K matrix; column j holds μ̂(x, pattern j).
Matrix predict_all_patterns(const ModelBundle& model, const Matrix& x);
/// t_w(t) for a cisi model with a task embedding network.
Vector task_embedding(const ModelBundle& model, const TreatmentPattern& t);

using PatternWeights = std::map<std::uint32_t, double>;

/// w(t) = ½ · (empirical frequency of t)⁻¹ for every pattern present.
PatternWeights pattern_weights(std::span<const std::uint32_t> patterns);
PatternWeights pattern_weights(const Dataset& data);

/// (1/N) Σ w_i (y_i − ŷ_i)²
double weighted_outcome_loss(const Vector& y, const Vector& yhat, const Vector& weights);

struct Batch {
  Matrix x;
  std::vector<std::uint32_t> patterns;
  Vector y;
  int treatments = 0;
};

Batch make_batch(const Dataset& data, std::span<const Index> rows);

struct LossBreakdown {
  double total = 0.0;
  double outcome = 0.0;
  double balance = 0.0;
  double regularization = 0.0;
};

/// α actually applied for a method: config.alpha for cisi and cfr_wass, 0
/// for tarnet and ncore.
double balance_coefficient(Method method, const TrainConfig& config);

LossBreakdown total_loss(const ModelBundle& model, const Batch& batch,
                         const PatternWeights& weights);

struct LossAndGradient {
  LossBreakdown loss;
  Grad grad;  // aligned with model.parameters()
};

LossAndGradient loss_and_gradient(const ModelBundle& model, const Batch& batch,
                                  const PatternWeights& weights);

struct TrainResult {
  ModelBundle model;
  std::vector<LossBreakdown> steps;
};

using EpochCallback = std::function<void(int epoch, const LossBreakdown& epoch_mean)>;

/// Mini-batch Adam over per-epoch shuffles; deterministic given config.seed.
/// Throws NumericError (with the step index) on a non-finite loss.
TrainResult train(const Dataset& data, const TrainConfig& config, Method method,
                  const EpochCallback& on_epoch = {});

}  // namespace cisi
