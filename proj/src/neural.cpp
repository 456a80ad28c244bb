#include "cisi/neural.hpp"

#include "cisi/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <memory>
#include <random>

namespace cisi {

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

MlpParams init_mlp(std::span<const Index> dims, Activation activation, std::uint64_t seed,
                   double slope) {
  if (dims.size() < 2) throw ConfigError("init_mlp: need at least two layer dims");
  for (Index d : dims) {
    if (d <= 0) throw ConfigError("init_mlp: layer dims must be positive");
  }
  if (activation == Activation::LeakyRelu && !(slope > 0.0 && slope < 1.0)) {
    throw ConfigError("init_mlp: leaky relu slope must lie in (0,1)");
  }

  MlpParams p;
  p.dims.assign(dims.begin(), dims.end());
  p.activation = activation;
  p.slope = activation == Activation::Relu ? 0.0 : slope;

  // Kaiming-uniform: bound = gain * sqrt(3 / fan_in), gain = sqrt(2 / (1 + a^2)).
  const double gain = std::sqrt(2.0 / (1.0 + p.slope * p.slope));
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(dims[i]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(dims[i], dims[i + 1]);
    for (Index c = 0; c < w.cols(); ++c) {
      for (Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Matrix::Zero(1, dims[i + 1]));
  }
  return p;
}

MlpVars register_mlp(Tape& tape, const MlpParams& params) {
  MlpVars vars;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    vars.weights.push_back(tape.parameter(params.weights[i]));
    vars.biases.push_back(tape.parameter(params.biases[i]));
  }
  return vars;
}

namespace {

double hidden_slope(const MlpParams& params) {
  return params.activation == Activation::Relu ? 0.0 : params.slope;
}

}  // namespace

Var mlp_forward(Tape& tape, const MlpParams& params, const MlpVars& vars, Var input) {
  if (tape.value(input).cols() != params.input_dim()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(tape.value(input).cols()) +
                     " columns, network expects " + std::to_string(params.input_dim()));
  }
  Var h = input;
  const std::size_t layers = params.layer_count();
  for (std::size_t i = 0; i < layers; ++i) {
    h = tape.add_bias(tape.matmul(h, vars.weights[i]), vars.biases[i]);
    if (i + 1 < layers) h = tape.leaky_relu(h, hidden_slope(params));
  }
  return h;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& input) {
  if (input.cols() != params.input_dim()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(input.cols()) +
                     " columns, network expects " + std::to_string(params.input_dim()));
  }
  Matrix h = input;
  const std::size_t layers = params.layer_count();
  for (std::size_t i = 0; i < layers; ++i) {
    Matrix z(h.rows(), params.weights[i].cols());
    z.noalias() = h * params.weights[i];
    z.rowwise() += params.biases[i].row(0);
    if (i + 1 < layers) {
      const double slope = hidden_slope(params);
      z = z.unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
    }
    h = std::move(z);
  }
  return h;
}

namespace {

// beta * Σ‖W‖² as one node, so the backward pass writes 2βW straight into
// each weight's gradient.
class WeightDecayOp final : public CustomOp {
 public:
  explicit WeightDecayOp(double beta) : beta_(beta) {}

  std::string name() const override { return "weight_decay"; }

  Matrix forward(std::span<const Matrix* const> inputs) override {
    double total = 0.0;
    for (const Matrix* w : inputs) total += w->squaredNorm();
    return Matrix::Constant(1, 1, beta_ * total);
  }

  void backward(const Matrix& upstream, std::span<const Matrix* const> inputs,
                std::span<Matrix* const> input_grads) override {
    const double scale = 2.0 * beta_ * upstream(0, 0);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (input_grads[i]) *input_grads[i] += scale * *inputs[i];
    }
  }

 private:
  double beta_;
};

}  // namespace

Var weight_decay_penalty(Tape& tape, std::span<const Var> weights, double beta) {
  if (beta < 0.0) throw ConfigError("weight_decay_penalty: beta must be nonnegative");
  if (beta == 0.0 || weights.empty()) return tape.scalar_constant(0.0);
  return tape.custom(std::make_unique<WeightDecayOp>(beta),
                     std::vector<Var>(weights.begin(), weights.end()));
}

double weight_decay_penalty(const MlpParams& params, double beta) {
  if (beta < 0.0) throw ConfigError("weight_decay_penalty: beta must be nonnegative");
  double total = 0.0;
  for (const auto& w : params.weights) total += w.squaredNorm();
  return beta * total;
}

AdamState make_adam(std::span<Matrix* const> params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const Matrix* p : params) {
    s.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    s.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return s;
}

void adam_step(std::span<Matrix* const> params, const Grad& grads, AdamState& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw ContractError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols() ||
        state.first_moment[i].rows() != params[i]->rows() ||
        state.first_moment[i].cols() != params[i]->cols()) {
      throw ContractError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double lr = state.learning_rate;
  const double eps = state.epsilon;

  for (std::size_t i = 0; i < params.size(); ++i) {
    double* m = state.first_moment[i].data();
    double* v = state.second_moment[i].data();
    double* w = params[i]->data();
    const double* g = grads[i].data();
    // Scalar loop: the vectorized sqrt path turns an overflowed v into NaN.
    for (Index j = 0; j < params[i]->size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  }
}

void to_json(nlohmann::json& j, const MlpParams& params) {
  j = nlohmann::json::object();
  j["dims"] = params.dims;
  j["activation"] = params.activation == Activation::Relu ? "relu" : "leaky_relu";
  j["slope"] = params.slope;
  auto rows = [](const Matrix& m) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    }
    return flat;
  };
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    j["weights"].push_back(rows(params.weights[i]));
    j["biases"].push_back(rows(params.biases[i]));
  }
}

void from_json(const nlohmann::json& j, MlpParams& params) {
  params = MlpParams{};
  params.dims = j.at("dims").get<std::vector<Index>>();
  const std::string act = j.at("activation").get<std::string>();
  if (act == "relu") {
    params.activation = Activation::Relu;
  } else if (act == "leaky_relu") {
    params.activation = Activation::LeakyRelu;
  } else {
    throw ConfigError("mlp json: unknown activation '" + act + "'");
  }
  params.slope = j.at("slope").get<double>();
  if (params.dims.size() < 2) throw ConfigError("mlp json: need at least two dims");
  const auto& ws = j.at("weights");
  const auto& bs = j.at("biases");
  if (ws.size() + 1 != params.dims.size() || bs.size() + 1 != params.dims.size()) {
    throw ConfigError("mlp json: layer count does not match dims");
  }
  auto fill = [](const nlohmann::json& flat, Index rows, Index cols) {
    auto v = flat.get<std::vector<double>>();
    if (static_cast<Index>(v.size()) != rows * cols) {
      throw ConfigError("mlp json: array length does not match layer dims");
    }
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
    }
    return m;
  };
  for (std::size_t i = 0; i + 1 < params.dims.size(); ++i) {
    params.weights.push_back(fill(ws[i], params.dims[i], params.dims[i + 1]));
    params.biases.push_back(fill(bs[i], 1, params.dims[i + 1]));
  }
}

}  // namespace cisi
