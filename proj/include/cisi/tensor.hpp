#pragma once

// Define-by-run reverse-mode differentiation over dense double matrices.
//
// A Tape records one forward evaluation. Every operation computes its value
// eagerly and appends a node, so node order is always a topological order.
// Parameters are registered by reference and receive a gradient slot in
// registration order; backward() returns those gradients as a Grad.

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cisi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
  std::size_t id = 0;
};

/// Fused operation with a hand-written adjoint. Used for kernels whose
/// internal iterations would otherwise cost thousands of tape nodes.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual std::string name() const = 0;
  virtual Matrix forward(std::span<const Matrix* const> inputs) = 0;
  /// Accumulates into input_grads. An entry is null when that input does not
  /// require a gradient.
  virtual void backward(const Matrix& upstream,
                        std::span<const Matrix* const> inputs,
                        std::span<Matrix* const> input_grads) = 0;
};

/// Gradients of a scalar loss with respect to every registered parameter, in
/// registration order. Each matrix has the shape of its parameter.
class Grad {
 public:
  Grad() = default;
  explicit Grad(std::vector<Matrix> grads) : grads_(std::move(grads)) {}

  const Matrix& operator[](std::size_t slot) const { return grads_.at(slot); }
  std::size_t size() const { return grads_.size(); }
  bool all_finite() const;

  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::vector<Matrix> grads_;
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(Tape&&) noexcept;
  Tape& operator=(Tape&&) noexcept;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var scalar_constant(double value);
  /// Registers a parameter. `value` is referenced, not copied, and must
  /// outlive the tape.
  Var parameter(const Matrix& value);
  Var parameter(Matrix&&) = delete;
  std::size_t parameter_count() const { return parameter_nodes_.size(); }

  Var matmul(Var a, Var b);
  /// Adds a 1×n bias row to every row of x.
  Var add_bias(Var x, Var bias);
  Var leaky_relu(Var x, double slope);
  Var relu(Var x);
  /// Column-wise concatenation [a | b].
  Var concat(Var a, Var b);
  /// Output row r is row rows[r] of x; rows may repeat.
  Var gather_rows(Var x, std::vector<Index> rows);
  /// Mean over rows: N×c → 1×c.
  Var mean_rows(Var x);
  Var sum(Var x);
  Var mean(Var x);
  Var square(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double factor);
  Var add_scalar(Var x, double addend);
  Var custom(std::unique_ptr<CustomOp> op, std::vector<Var> inputs);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;
  std::size_t size() const;

  /// Reverse accumulation from a 1×1 node. Throws ContractError for a
  /// non-scalar loss and NumericError naming the node if a non-finite
  /// adjoint appears.
  Grad backward(Var loss) const;

 private:
  struct Node;
  Var push(Node node);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> parameter_nodes_;
};

}  // namespace cisi
