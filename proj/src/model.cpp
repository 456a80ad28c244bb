#include "cisi/model.hpp"

#include "cisi/errors.hpp"
#include "cisi/rng.hpp"
#include "cisi/sinkhorn.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

namespace cisi {

namespace {

constexpr std::uint64_t kShuffleStream = 0xB47C;
constexpr std::uint64_t kNetworkStream = 0x1E7;

std::vector<Index> hidden_dims(Index in, Index width, int depth, Index out) {
  std::vector<Index> dims{in};
  for (int i = 0; i < depth; ++i) dims.push_back(width);
  dims.push_back(out);
  return dims;
}

Matrix pattern_row(const TreatmentPattern& t) {
  auto bits = t.as_row();
  Matrix row(1, static_cast<Index>(bits.size()));
  for (std::size_t j = 0; j < bits.size(); ++j) row(0, static_cast<Index>(j)) = bits[j];
  return row;
}

bool head_active(std::uint32_t head_pattern, std::uint32_t pattern) {
  return (head_pattern & pattern) == head_pattern;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Cisi: return "cisi";
    case Method::Tarnet: return "tarnet";
    case Method::CfrWass: return "cfr-wass";
    case Method::Ncore: return "ncore";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "cisi") return Method::Cisi;
  if (name == "tarnet") return Method::Tarnet;
  if (name == "cfr-wass" || name == "cfr_wass") return Method::CfrWass;
  if (name == "ncore") return Method::Ncore;
  throw ConfigError("unknown method '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
  if (!(beta >= 0.0)) throw ConfigError("beta must be nonnegative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (!(sinkhorn_eps > 0.0)) throw ConfigError("sinkhorn_eps must be positive");
  if (sinkhorn_iters < 1) throw ConfigError("sinkhorn_iters must be positive");
  if (rep_dim < 1 || embed_dim < 1 || width < 1) {
    throw ConfigError("rep_dim, embed_dim and width must be positive");
  }
  if (depth < 0) throw ConfigError("depth must be nonnegative");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"alpha", c.alpha},
                     {"beta", c.beta},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"sinkhorn_eps", c.sinkhorn_eps},
                     {"sinkhorn_iters", c.sinkhorn_iters},
                     {"seed", c.seed},
                     {"rep_dim", c.rep_dim},
                     {"embed_dim", c.embed_dim},
                     {"width", c.width},
                     {"depth", c.depth},
                     {"task_embedding", c.task_embedding}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<Index>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "sinkhorn_eps") c.sinkhorn_eps = value.get<double>();
      else if (key == "sinkhorn_iters") c.sinkhorn_iters = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "rep_dim") c.rep_dim = value.get<Index>();
      else if (key == "embed_dim") c.embed_dim = value.get<Index>();
      else if (key == "width") c.width = value.get<Index>();
      else if (key == "depth") c.depth = value.get<int>();
      else if (key == "task_embedding") c.task_embedding = value.get<bool>();
      else throw ConfigError("unknown config field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
}

std::vector<Matrix*> ModelBundle::parameters() {
  std::vector<Matrix*> out;
  auto add = [&out](MlpParams& p) {
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
      out.push_back(&p.weights[i]);
      out.push_back(&p.biases[i]);
    }
  };
  add(representation);
  if (embedding) add(*embedding);
  for (auto& h : heads) add(h);
  return out;
}

std::size_t ModelBundle::parameter_count() const {
  std::size_t n = representation.parameter_count();
  if (embedding) n += embedding->parameter_count();
  for (const auto& h : heads) n += h.parameter_count();
  return n;
}

ModelBundle init_model(Method method, Index covariate_dim, int treatments,
                       const TrainConfig& config) {
  config.validate();
  if (treatments < 1 || treatments > kMaxTreatments) {
    throw ConfigError("treatment count must be in [1, " + std::to_string(kMaxTreatments) + "]");
  }
  if (covariate_dim < 1) throw ConfigError("covariate dimension must be positive");

  ModelBundle m;
  m.method = method;
  m.treatments = treatments;
  m.covariate_dim = covariate_dim;
  m.config = config;

  std::uint64_t net = 0;
  auto next_seed = [&] { return derive_seed(config.seed, kNetworkStream + net++); };
  const Index p = config.rep_dim;
  const std::uint32_t patterns = 1u << treatments;

  m.representation = init_mlp(hidden_dims(covariate_dim, config.width, config.depth, p),
                              Activation::LeakyRelu, next_seed());
  switch (method) {
    case Method::Cisi: {
      Index head_in = p + treatments;
      if (config.task_embedding) {
        m.embedding = init_mlp(
            hidden_dims(treatments, config.width, config.depth, config.embed_dim),
            Activation::LeakyRelu, next_seed());
        head_in = p + config.embed_dim;
      }
      m.heads.push_back(init_mlp(hidden_dims(head_in, config.width, config.depth, 1),
                                 Activation::LeakyRelu, next_seed()));
      m.head_patterns.push_back(0);
      break;
    }
    case Method::Tarnet:
    case Method::CfrWass:
      for (std::uint32_t t = 0; t < patterns; ++t) {
        m.heads.push_back(init_mlp(hidden_dims(p, config.width, config.depth, 1),
                                   Activation::LeakyRelu, next_seed()));
        m.head_patterns.push_back(t);
      }
      break;
    case Method::Ncore: {
      // Base head, one head per treatment, then one two-layer interaction
      // subnetwork per subset of size ≥ 2.
      m.heads.push_back(init_mlp(hidden_dims(p, config.width, config.depth, 1),
                                 Activation::Relu, next_seed()));
      m.head_patterns.push_back(0);
      for (int k = 1; k <= treatments; ++k) {
        m.heads.push_back(init_mlp(hidden_dims(p, config.width, config.depth, 1),
                                   Activation::Relu, next_seed()));
        m.head_patterns.push_back(TreatmentPattern::one_hot(treatments, k).index());
      }
      for (const Subset& s : subsets_of_size_at_least(treatments, 2)) {
        m.heads.push_back(init_mlp(hidden_dims(p, config.width, 2, 1), Activation::Relu,
                                   next_seed()));
        m.head_patterns.push_back(TreatmentPattern::activate(treatments, s).index());
      }
      break;
    }
  }
  return m;
}

nlohmann::json model_to_json(const ModelBundle& model) {
  nlohmann::json j;
  j["method"] = method_name(model.method);
  j["treatments"] = model.treatments;
  j["covariate_dim"] = model.covariate_dim;
  j["config"] = model.config;
  j["representation"] = model.representation;
  j["embedding"] = model.embedding ? nlohmann::json(*model.embedding) : nlohmann::json(nullptr);
  j["heads"] = model.heads;
  j["head_patterns"] = model.head_patterns;
  return j;
}

ModelBundle model_from_json(const nlohmann::json& j) {
  ModelBundle m;
  try {
    m.method = parse_method(j.at("method").get<std::string>());
    m.treatments = j.at("treatments").get<int>();
    m.covariate_dim = j.at("covariate_dim").get<Index>();
    m.config = j.at("config").get<TrainConfig>();
    m.representation = j.at("representation").get<MlpParams>();
    if (!j.at("embedding").is_null()) m.embedding = j.at("embedding").get<MlpParams>();
    m.heads = j.at("heads").get<std::vector<MlpParams>>();
    m.head_patterns = j.at("head_patterns").get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model json: ") + e.what());
  }
  if (m.heads.size() != m.head_patterns.size() || m.heads.empty()) {
    throw ConfigError("model json: head list is inconsistent");
  }
  if (m.representation.input_dim() != m.covariate_dim) {
    throw ConfigError("model json: representation input does not match covariate_dim");
  }
  return m;
}

Matrix representation(const ModelBundle& model, const Matrix& x) {
  if (x.cols() != model.covariate_dim) {
    throw ShapeError("model expects " + std::to_string(model.covariate_dim) +
                     " covariates, got " + std::to_string(x.cols()));
  }
  return mlp_forward(model.representation, x);
}

Vector task_embedding(const ModelBundle& model, const TreatmentPattern& t) {
  if (model.method != Method::Cisi || !model.embedding) {
    throw ContractError("task_embedding: model has no task embedding network");
  }
  if (t.size() != model.treatments) throw ContractError("task_embedding: pattern length mismatch");
  return mlp_forward(*model.embedding, pattern_row(t)).row(0).transpose();
}

Vector predict_from_representation(const ModelBundle& model, const Matrix& rep,
                                   const TreatmentPattern& t) {
  if (t.size() != model.treatments) {
    throw ContractError("forward_mu: pattern has " + std::to_string(t.size()) +
                        " treatments, model expects " + std::to_string(model.treatments));
  }
  const Index n = rep.rows();
  switch (model.method) {
    case Method::Cisi: {
      Matrix code = model.embedding ? mlp_forward(*model.embedding, pattern_row(t))
                                    : pattern_row(t);
      Matrix input(n, rep.cols() + code.cols());
      input.leftCols(rep.cols()) = rep;
      input.rightCols(code.cols()) = code.replicate(n, 1);
      return mlp_forward(model.heads.front(), input).col(0);
    }
    case Method::Tarnet:
    case Method::CfrWass: {
      for (std::size_t h = 0; h < model.heads.size(); ++h) {
        if (model.head_patterns[h] == t.index()) return mlp_forward(model.heads[h], rep).col(0);
      }
      throw ContractError("forward_mu: no head for pattern " + t.str());
    }
    case Method::Ncore: {
      Vector y = Vector::Zero(n);
      for (std::size_t h = 0; h < model.heads.size(); ++h) {
        if (head_active(model.head_patterns[h], t.index())) {
          y += mlp_forward(model.heads[h], rep).col(0);
        }
      }
      return y;
    }
  }
  return {};
}

Prediction forward_mu(const ModelBundle& model, const Matrix& x, const TreatmentPattern& t) {
  Prediction p;
  p.representation = representation(model, x);
  p.yhat = predict_from_representation(model, p.representation, t);
  return p;
}

Matrix predict_all_patterns(const ModelBundle& model, const Matrix& x) {
  const Matrix rep = representation(model, x);
  const std::uint32_t count = 1u << model.treatments;
  Matrix out(x.rows(), count);
  for (std::uint32_t t = 0; t < count; ++t) {
    out.col(t) = predict_from_representation(model, rep, TreatmentPattern(model.treatments, t));
  }
  return out;
}

PatternWeights pattern_weights(std::span<const std::uint32_t> patterns) {
  if (patterns.empty()) throw ContractError("pattern_weights: no rows");
  std::map<std::uint32_t, std::size_t> counts;
  for (auto p : patterns) ++counts[p];
  PatternWeights w;
  const double n = static_cast<double>(patterns.size());
  for (const auto& [p, c] : counts) w[p] = 0.5 * n / static_cast<double>(c);
  return w;
}

PatternWeights pattern_weights(const Dataset& data) {
  auto idx = data.pattern_indices();
  return pattern_weights(idx);
}

double weighted_outcome_loss(const Vector& y, const Vector& yhat, const Vector& weights) {
  if (y.size() != yhat.size() || y.size() != weights.size()) {
    throw ShapeError("weighted_outcome_loss: lengths differ (" + std::to_string(y.size()) + ", " +
                     std::to_string(yhat.size()) + ", " + std::to_string(weights.size()) + ")");
  }
  if (y.size() == 0) return 0.0;
  return (weights.array() * (y - yhat).array().square()).sum() / static_cast<double>(y.size());
}

Batch make_batch(const Dataset& data, std::span<const Index> rows) {
  Batch b;
  b.treatments = data.treatment_count();
  b.x.resize(static_cast<Index>(rows.size()), data.x.cols());
  b.y.resize(static_cast<Index>(rows.size()));
  b.patterns.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    b.x.row(static_cast<Index>(r)) = data.x.row(rows[r]);
    b.y(static_cast<Index>(r)) = data.y(rows[r]);
    b.patterns[r] = data.pattern(rows[r]).index();
  }
  return b;
}

double balance_coefficient(Method method, const TrainConfig& config) {
  return (method == Method::Cisi || method == Method::CfrWass) ? config.alpha : 0.0;
}

namespace {

struct LossGraph {
  Var total;
  Var outcome;
  Var balance;
  Var regularization;
};

// Builds L = L_y + α L_Φ + β Σ‖W‖² for one batch. Parameters are
// registered in ModelBundle::parameters() order.
LossGraph build_loss(Tape& tape, const ModelBundle& model, const Batch& batch,
                     const PatternWeights& weights) {
  const Index n = batch.x.rows();
  if (n == 0) throw ContractError("loss: empty batch");
  if (batch.treatments != model.treatments) throw ContractError("loss: treatment count mismatch");
  if (batch.x.cols() != model.covariate_dim) {
    throw ShapeError("loss: batch has " + std::to_string(batch.x.cols()) +
                     " covariates, model expects " + std::to_string(model.covariate_dim));
  }

  MlpVars rep_vars = register_mlp(tape, model.representation);
  std::optional<MlpVars> emb_vars;
  if (model.embedding) emb_vars = register_mlp(tape, *model.embedding);
  std::vector<MlpVars> head_vars;
  for (const auto& h : model.heads) head_vars.push_back(register_mlp(tape, h));

  // Rows grouped by observed pattern, groups ordered by pattern index.
  std::map<std::uint32_t, std::vector<Index>> groups;
  Vector w(n);
  for (Index i = 0; i < n; ++i) {
    const auto p = batch.patterns[static_cast<std::size_t>(i)];
    groups[p].push_back(i);
    auto it = weights.find(p);
    if (it == weights.end()) {
      throw ContractError("loss: pattern " + TreatmentPattern(model.treatments, p).str() +
                          " has no training weight");
    }
    w(i) = it->second;
  }

  Var x = tape.constant(batch.x);
  Var rep = mlp_forward(tape, model.representation, rep_vars, x);

  auto group_loss = [&](Var yhat, const std::vector<Index>& rows) {
    Vector yg(static_cast<Index>(rows.size()));
    Vector wg(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      yg(static_cast<Index>(r)) = batch.y(rows[r]);
      wg(static_cast<Index>(r)) = w(rows[r]);
    }
    Var resid = tape.sub(yhat, tape.constant(yg));
    return tape.sum(tape.mul(tape.constant(wg), tape.square(resid)));
  };

  Var outcome_sum;
  switch (model.method) {
    case Method::Cisi: {
      Var code;
      if (model.embedding) {
        // Embed each distinct pattern once, then broadcast to its rows.
        Matrix unique(static_cast<Index>(groups.size()), model.treatments);
        std::vector<Index> slot(static_cast<std::size_t>(n));
        Index u = 0;
        for (const auto& [p, rows] : groups) {
          unique.row(u) = pattern_row(TreatmentPattern(model.treatments, p));
          for (Index r : rows) slot[static_cast<std::size_t>(r)] = u;
          ++u;
        }
        Var emb = mlp_forward(tape, *model.embedding, *emb_vars, tape.constant(std::move(unique)));
        code = tape.gather_rows(emb, std::move(slot));
      } else {
        Matrix raw(n, model.treatments);
        for (Index i = 0; i < n; ++i) {
          raw.row(i) = pattern_row(
              TreatmentPattern(model.treatments, batch.patterns[static_cast<std::size_t>(i)]));
        }
        code = tape.constant(std::move(raw));
      }
      Var yhat = mlp_forward(tape, model.heads.front(), head_vars.front(), tape.concat(rep, code));
      std::vector<Index> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), Index{0});
      outcome_sum = group_loss(yhat, all);
      break;
    }
    case Method::Tarnet:
    case Method::CfrWass:
    case Method::Ncore: {
      outcome_sum = tape.scalar_constant(0.0);
      for (const auto& [p, rows] : groups) {
        Var rg = tape.gather_rows(rep, rows);
        std::optional<Var> yhat;
        for (std::size_t h = 0; h < model.heads.size(); ++h) {
          const bool use = model.method == Method::Ncore ? head_active(model.head_patterns[h], p)
                                                         : model.head_patterns[h] == p;
          if (!use) continue;
          Var out = mlp_forward(tape, model.heads[h], head_vars[h], rg);
          yhat = yhat ? tape.add(*yhat, out) : out;
        }
        if (!yhat) throw ContractError("loss: no head for pattern");
        outcome_sum = tape.add(outcome_sum, group_loss(*yhat, rows));
      }
      break;
    }
  }

  LossGraph g;
  g.outcome = tape.scale(outcome_sum, 1.0 / static_cast<double>(n));

  const double alpha = balance_coefficient(model.method, model.config);
  if (alpha > 0.0) {
    // Cost is the per-dimension mean squared distance, so eps is on the same
    // scale whatever the representation width.
    Var scaled = tape.scale(rep, 1.0 / std::sqrt(static_cast<double>(model.config.rep_dim)));
    std::vector<RepGroupVar> rep_groups;
    for (const auto& [p, rows] : groups) {
      rep_groups.push_back({TreatmentPattern(model.treatments, p), tape.gather_rows(scaled, rows)});
    }
    SinkhornOptions opts;
    opts.eps = model.config.sinkhorn_eps;
    opts.iters = model.config.sinkhorn_iters;
    g.balance = balancing_penalty(tape, rep_groups, opts);
  } else {
    g.balance = tape.scalar_constant(0.0);
  }

  std::vector<Var> weight_vars;
  auto collect = [&weight_vars](const MlpVars& v) {
    weight_vars.insert(weight_vars.end(), v.weights.begin(), v.weights.end());
  };
  collect(rep_vars);
  if (emb_vars) collect(*emb_vars);
  for (const auto& hv : head_vars) collect(hv);
  g.regularization = weight_decay_penalty(tape, weight_vars, model.config.beta);

  g.total = tape.add(tape.add(g.outcome, tape.scale(g.balance, alpha)), g.regularization);
  return g;
}

LossBreakdown read_breakdown(const Tape& tape, const LossGraph& g) {
  return {tape.scalar(g.total), tape.scalar(g.outcome), tape.scalar(g.balance),
          tape.scalar(g.regularization)};
}

}  // namespace

LossBreakdown total_loss(const ModelBundle& model, const Batch& batch,
                         const PatternWeights& weights) {
  Tape tape;
  return read_breakdown(tape, build_loss(tape, model, batch, weights));
}

LossAndGradient loss_and_gradient(const ModelBundle& model, const Batch& batch,
                                  const PatternWeights& weights) {
  Tape tape;
  LossGraph g = build_loss(tape, model, batch, weights);
  LossAndGradient out;
  out.loss = read_breakdown(tape, g);
  out.grad = tape.backward(g.total);
  return out;
}

TrainResult train(const Dataset& data, const TrainConfig& config, Method method,
                  const EpochCallback& on_epoch) {
  data.validate();
  config.validate();
  if (data.size() == 0) throw ContractError("train: empty dataset");

  TrainResult result;
  result.model = init_model(method, data.covariate_dim(), data.treatment_count(), config);
  ModelBundle& model = result.model;
  const PatternWeights weights = pattern_weights(data);
  std::vector<Matrix*> params = model.parameters();
  AdamState adam = make_adam(params, config.learning_rate);

  std::mt19937_64 rng(derive_seed(config.seed, kShuffleStream));
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown sum;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      Batch b = make_batch(data, std::span<const Index>(order.data() + start, stop - start));
      const std::string where = "train: step " + std::to_string(result.steps.size()) +
                                " (epoch " + std::to_string(epoch) + ")";
      LossAndGradient lg;
      try {
        lg = loss_and_gradient(model, b, weights);
      } catch (const NumericError& e) {
        throw NumericError(where + ": " + e.what());
      }
      if (!std::isfinite(lg.loss.total) || !lg.grad.all_finite()) {
        throw NumericError(where + ": non-finite loss");
      }
      adam_step(params, lg.grad, adam);
      result.steps.push_back(lg.loss);
      sum.total += lg.loss.total;
      sum.outcome += lg.loss.outcome;
      sum.balance += lg.loss.balance;
      sum.regularization += lg.loss.regularization;
      ++steps;
    }
    if (on_epoch && steps > 0) {
      const double s = static_cast<double>(steps);
      on_epoch(epoch, {sum.total / s, sum.outcome / s, sum.balance / s, sum.regularization / s});
    }
  }
  return result;
}

}  // namespace cisi
