#pragma once

#include "cisi/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace cisi {

enum class Activation { LeakyRelu, Relu };

inline constexpr double kLeakySlope = 0.01;

/// Fully connected network: affine + activation on each hidden layer, plain
/// affine output layer.
struct MlpParams {
  std::vector<Index> dims;
  Activation activation = Activation::LeakyRelu;
  double slope = kLeakySlope;
  std::vector<Matrix> weights;  // weights[i] is dims[i] × dims[i+1]
  std::vector<Matrix> biases;   // biases[i] is 1 × dims[i+1]

  Index input_dim() const { return dims.front(); }
  Index output_dim() const { return dims.back(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;
};

/// Kaiming-uniform weights (gain matched to the activation), zero biases.
/// A pure function of its arguments.
MlpParams init_mlp(std::span<const Index> dims, Activation activation, std::uint64_t seed,
                   double slope = kLeakySlope);

/// Tape handles for one network's parameters.
struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

MlpVars register_mlp(Tape& tape, const MlpParams& params);
Var mlp_forward(Tape& tape, const MlpParams& params, const MlpVars& vars, Var input);
/// Tape-free evaluation for inference.
Matrix mlp_forward(const MlpParams& params, const Matrix& input);

/// beta * Σ‖W‖² over the given weight handles; biases are never passed in.
Var weight_decay_penalty(Tape& tape, std::span<const Var> weights, double beta);
double weight_decay_penalty(const MlpParams& params, double beta);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

AdamState make_adam(std::span<Matrix* const> params, double learning_rate);

/// One bias-corrected Adam update. grads[i] must match *params[i] in shape.
void adam_step(std::span<Matrix* const> params, const Grad& grads, AdamState& state);

void to_json(nlohmann::json& j, const MlpParams& params);
void from_json(const nlohmann::json& j, MlpParams& params);

}  // namespace cisi
