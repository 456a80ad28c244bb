#include "cisi/tensor.hpp"

#include "cisi/errors.hpp"

#include <sstream>

namespace cisi {

namespace {

enum class Op {
  Constant,
  Parameter,
  MatMul,
  AddBias,
  LeakyRelu,
  Concat,
  GatherRows,
  MeanRows,
  Sum,
  Mean,
  Square,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Custom,
};

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Parameter: return "parameter";
    case Op::MatMul: return "matmul";
    case Op::AddBias: return "add_bias";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Concat: return "concat";
    case Op::GatherRows: return "gather_rows";
    case Op::MeanRows: return "mean_rows";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Square: return "square";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Custom: return "custom";
  }
  return "?";
}

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " and " + shape_str(b));
}

}  // namespace

bool Grad::all_finite() const {
  for (const auto& g : grads_) {
    if (!g.allFinite()) return false;
  }
  return true;
}

struct Tape::Node {
  Op op = Op::Constant;
  std::size_t a = 0;
  std::size_t b = 0;
  double scalar = 0.0;
  bool requires_grad = false;
  Matrix value;
  const Matrix* external = nullptr;
  std::vector<Index> rows;
  std::unique_ptr<CustomOp> custom;
  std::vector<std::size_t> custom_inputs;

  const Matrix& val() const { return external ? *external : value; }
};

Tape::Tape() = default;
Tape::~Tape() = default;
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("tape: unknown variable");
  return nodes_[v.id];
}

const Matrix& Tape::value(Var v) const { return node(v).val(); }

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) {
    throw ContractError("tape: expected a 1x1 value, got " + shape_str(m));
  }
  return m(0, 0);
}

std::size_t Tape::size() const { return nodes_.size(); }

Var Tape::constant(Matrix value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::scalar_constant(double value) {
  return constant(Matrix::Constant(1, 1, value));
}

Var Tape::parameter(const Matrix& value) {
  Node n;
  n.op = Op::Parameter;
  n.external = &value;
  n.requires_grad = true;
  n.scalar = static_cast<double>(parameter_nodes_.size());
  Var v = push(std::move(n));
  parameter_nodes_.push_back(v.id);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.val().cols() != nb.val().rows()) shape_error("matmul", na.val(), nb.val());
  Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value.noalias() = na.val() * nb.val();
  return push(std::move(n));
}

Var Tape::add_bias(Var x, Var bias) {
  const Node& nx = node(x);
  const Node& nb = node(bias);
  if (nb.val().rows() != 1 || nb.val().cols() != nx.val().cols()) {
    shape_error("add_bias", nx.val(), nb.val());
  }
  Node n;
  n.op = Op::AddBias;
  n.a = x.id;
  n.b = bias.id;
  n.requires_grad = nx.requires_grad || nb.requires_grad;
  n.value = nx.val().rowwise() + nb.val().row(0);
  return push(std::move(n));
}

Var Tape::leaky_relu(Var x, double slope) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::LeakyRelu;
  n.a = x.id;
  n.scalar = slope;
  n.requires_grad = nx.requires_grad;
  n.value = nx.val().unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
  return push(std::move(n));
}

Var Tape::relu(Var x) { return leaky_relu(x, 0.0); }

Var Tape::concat(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.val().rows() != nb.val().rows()) shape_error("concat", na.val(), nb.val());
  Node n;
  n.op = Op::Concat;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value.resize(na.val().rows(), na.val().cols() + nb.val().cols());
  n.value << na.val(), nb.val();
  return push(std::move(n));
}

Var Tape::gather_rows(Var x, std::vector<Index> rows) {
  const Node& nx = node(x);
  const Matrix& xv = nx.val();
  Node n;
  n.op = Op::GatherRows;
  n.a = x.id;
  n.requires_grad = nx.requires_grad;
  n.value.resize(static_cast<Index>(rows.size()), xv.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= xv.rows()) {
      throw ShapeError("gather_rows: row index " + std::to_string(rows[r]) +
                       " out of range for " + shape_str(xv));
    }
    n.value.row(static_cast<Index>(r)) = xv.row(rows[r]);
  }
  n.rows = std::move(rows);
  return push(std::move(n));
}

Var Tape::mean_rows(Var x) {
  const Node& nx = node(x);
  if (nx.val().rows() == 0) throw ShapeError("mean_rows: empty input");
  Node n;
  n.op = Op::MeanRows;
  n.a = x.id;
  n.requires_grad = nx.requires_grad;
  n.value = nx.val().colwise().mean();
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::Sum;
  n.a = x.id;
  n.requires_grad = nx.requires_grad;
  n.value = Matrix::Constant(1, 1, nx.val().sum());
  return push(std::move(n));
}

Var Tape::mean(Var x) {
  const Node& nx = node(x);
  if (nx.val().size() == 0) throw ShapeError("mean: empty input");
  Node n;
  n.op = Op::Mean;
  n.a = x.id;
  n.requires_grad = nx.requires_grad;
  n.value = Matrix::Constant(1, 1, nx.val().mean());
  return push(std::move(n));
}

Var Tape::square(Var x) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::Square;
  n.a = x.id;
  n.requires_grad = nx.requires_grad;
  n.value = nx.val().array().square().matrix();
  return push(std::move(n));
}

#define CISI_BINARY_ELEMENTWISE(fn, tag, expr)                                   \
  Var Tape::fn(Var a, Var b) {                                                   \
    const Node& na = node(a);                                                    \
    const Node& nb = node(b);                                                    \
    if (na.val().rows() != nb.val().rows() || na.val().cols() != nb.val().cols()) \
      shape_error(#fn, na.val(), nb.val());                                      \
    Node n;                                                                      \
    n.op = Op::tag;                                                              \
    n.a = a.id;                                                                  \
    n.b = b.id;                                                                  \
    n.requires_grad = na.requires_grad || nb.requires_grad;                      \
    n.value = (expr);                                                            \
    return push(std::move(n));                                                   \
  }

CISI_BINARY_ELEMENTWISE(add, Add, na.val() + nb.val())
CISI_BINARY_ELEMENTWISE(sub, Sub, na.val() - nb.val())
CISI_BINARY_ELEMENTWISE(mul, Mul, na.val().cwiseProduct(nb.val()))

#undef CISI_BINARY_ELEMENTWISE

Var Tape::scale(Var x, double factor) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::Scale;
  n.a = x.id;
  n.scalar = factor;
  n.requires_grad = nx.requires_grad;
  n.value = nx.val() * factor;
  return push(std::move(n));
}

Var Tape::add_scalar(Var x, double addend) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::AddScalar;
  n.a = x.id;
  n.scalar = addend;
  n.requires_grad = nx.requires_grad;
  n.value = (nx.val().array() + addend).matrix();
  return push(std::move(n));
}

Var Tape::custom(std::unique_ptr<CustomOp> op, std::vector<Var> inputs) {
  std::vector<const Matrix*> values;
  Node n;
  n.op = Op::Custom;
  for (Var v : inputs) {
    const Node& ni = node(v);
    values.push_back(&ni.val());
    n.custom_inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || ni.requires_grad;
  }
  n.value = op->forward(values);
  n.custom = std::move(op);
  return push(std::move(n));
}

Grad Tape::backward(Var loss) const {
  const Node& root = node(loss);
  if (root.val().rows() != 1 || root.val().cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + shape_str(root.val()));
  }

  std::vector<Matrix> adj(nodes_.size());
  auto accumulate = [&](std::size_t id, const auto& g) {
    if (!nodes_[id].requires_grad) return;
    if (adj[id].size() == 0) {
      adj[id] = g;
    } else {
      adj[id] += g;
    }
  };
  auto slot = [&](std::size_t id) -> Matrix& {
    if (adj[id].size() == 0) {
      const Matrix& v = nodes_[id].val();
      adj[id] = Matrix::Zero(v.rows(), v.cols());
    }
    return adj[id];
  };

  if (root.requires_grad) adj[loss.id] = Matrix::Ones(1, 1);

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.requires_grad || adj[i].size() == 0) continue;
    const Matrix& g = adj[i];
    // inf * 0 and NaN * 0 are NaN, so the sum is zero exactly when g is finite.
    if ((g.array() * 0.0).sum() != 0.0) {
      throw NumericError("backward: non-finite gradient at node " + std::to_string(i) +
                         " (" + op_name(n.op) +
                         (n.custom ? ":" + n.custom->name() : std::string()) + ")");
    }
    switch (n.op) {
      case Op::Constant:
      case Op::Parameter:
        break;
      case Op::MatMul: {
        const Node& na = nodes_[n.a];
        const Node& nb = nodes_[n.b];
        if (na.requires_grad) slot(n.a).noalias() += g * nb.val().transpose();
        if (nb.requires_grad) slot(n.b).noalias() += na.val().transpose() * g;
        break;
      }
      case Op::AddBias:
        accumulate(n.a, g);
        if (nodes_[n.b].requires_grad) slot(n.b) += g.colwise().sum();
        break;
      case Op::LeakyRelu: {
        const double slope = n.scalar;
        const Matrix& x = nodes_[n.a].val();
        accumulate(n.a, g.binaryExpr(x, [slope](double gv, double xv) {
          return xv >= 0.0 ? gv : slope * gv;
        }));
        break;
      }
      case Op::Concat: {
        const Index left = nodes_[n.a].val().cols();
        const Index right = nodes_[n.b].val().cols();
        accumulate(n.a, g.leftCols(left));
        accumulate(n.b, g.rightCols(right));
        break;
      }
      case Op::GatherRows: {
        if (!nodes_[n.a].requires_grad) break;
        Matrix& dx = slot(n.a);
        for (std::size_t r = 0; r < n.rows.size(); ++r) {
          dx.row(n.rows[r]) += g.row(static_cast<Index>(r));
        }
        break;
      }
      case Op::MeanRows: {
        const Index rows = nodes_[n.a].val().rows();
        if (nodes_[n.a].requires_grad) {
          slot(n.a).rowwise() += g.row(0) / static_cast<double>(rows);
        }
        break;
      }
      case Op::Sum:
        if (nodes_[n.a].requires_grad) slot(n.a).array() += g(0, 0);
        break;
      case Op::Mean:
        if (nodes_[n.a].requires_grad) {
          slot(n.a).array() += g(0, 0) / static_cast<double>(nodes_[n.a].val().size());
        }
        break;
      case Op::Square:
        accumulate(n.a, (2.0 * g.array() * nodes_[n.a].val().array()).matrix());
        break;
      case Op::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::Sub:
        accumulate(n.a, g);
        if (nodes_[n.b].requires_grad) slot(n.b) -= g;
        break;
      case Op::Mul:
        accumulate(n.a, g.cwiseProduct(nodes_[n.b].val()));
        accumulate(n.b, g.cwiseProduct(nodes_[n.a].val()));
        break;
      case Op::Scale:
        accumulate(n.a, g * n.scalar);
        break;
      case Op::AddScalar:
        accumulate(n.a, g);
        break;
      case Op::Custom: {
        std::vector<const Matrix*> values;
        std::vector<Matrix*> grads;
        for (std::size_t id : n.custom_inputs) {
          values.push_back(&nodes_[id].val());
          grads.push_back(nodes_[id].requires_grad ? &slot(id) : nullptr);
        }
        n.custom->backward(g, values, grads);
        break;
      }
    }
  }

  std::vector<Matrix> out;
  out.reserve(parameter_nodes_.size());
  for (std::size_t id : parameter_nodes_) {
    if (adj[id].size() == 0) {
      const Matrix& v = nodes_[id].val();
      out.push_back(Matrix::Zero(v.rows(), v.cols()));
    } else {
      out.push_back(std::move(adj[id]));
    }
  }
  return Grad(std::move(out));
}

}  // namespace cisi
