#include "cisi/sinkhorn.hpp"

#include "cisi/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace cisi {

namespace {

void check_inputs(const Matrix& a, const Matrix& b, double eps, int iters) {
  if (a.rows() == 0 || b.rows() == 0) {
    throw ContractError("sinkhorn_wasserstein: empty point set");
  }
  if (a.cols() != b.cols()) {
    throw ShapeError("sinkhorn_wasserstein: point dimensions differ (" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
  }
  if (!(eps > 0.0)) throw ConfigError("sinkhorn_wasserstein: eps must be positive");
  if (iters < 1) throw ConfigError("sinkhorn_wasserstein: iters must be positive");
  if (!a.allFinite() || !b.allFinite()) {
    throw NumericError("sinkhorn_wasserstein: non-finite points");
  }
}

// Squared distances summed in the same order for (a, b) and (b, a), so that
// cost(b, a) is exactly the transpose of cost(a, b).
Matrix squared_distances(const Matrix& a, const Matrix& b) {
  const Matrix at = a.transpose();
  const Matrix bt = b.transpose();
  Matrix c(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) c(i, j) = (at.col(i) - bt.col(j)).squaredNorm();
  }
  return c;
}

// One alternating log-domain run on a fixed cost matrix. The first half of the
// sweeps anneal eps geometrically from the largest cost down to the target.
// row_soft[t](i,j) is the softmax over j in the t-th f update, col_soft[t] the
// softmax over i in the t-th g update; f_hist/g_hist hold the potentials
// after each update.
struct SinkhornRun {
  Matrix plan;
  std::vector<double> schedule;
  std::vector<Matrix> row_soft;
  std::vector<Matrix> col_soft;
  std::vector<Vector> f_hist;
  std::vector<Vector> g_hist;
  double start = 0.0;
  Index anneal_steps = 0;
  double value = 0.0;
};

SinkhornRun run_direction(const Matrix& cost, double eps, int iters, bool keep_trace) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  SinkhornRun run;
  run.start = std::max(cost.maxCoeff(), eps);
  run.anneal_steps = iters / 2;
  run.schedule.resize(static_cast<std::size_t>(iters), eps);
  for (Index t = 0; t < run.anneal_steps; ++t) {
    const double frac = static_cast<double>(t) / static_cast<double>(run.anneal_steps);
    run.schedule[static_cast<std::size_t>(t)] = run.start * std::pow(eps / run.start, frac);
  }

  const double log_mu = -std::log(static_cast<double>(n));
  const double log_nu = -std::log(static_cast<double>(m));
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  Vector rmax(n);
  Vector rsum(n);
  RowVector cmax(m);
  RowVector csum(m);
  Matrix z(n, m);
  if (keep_trace) {
    run.row_soft.reserve(static_cast<std::size_t>(iters));
    run.col_soft.reserve(static_cast<std::size_t>(iters));
    run.f_hist.reserve(static_cast<std::size_t>(iters));
    run.g_hist.reserve(static_cast<std::size_t>(iters));
  }

  for (int t = 0; t < iters; ++t) {
    const double e = run.schedule[static_cast<std::size_t>(t)];
    const double inv_e = 1.0 / e;

    // f_i = e log mu - e LSE_j((g_j - C_ij) / e)
    z.noalias() = ((-cost).rowwise() + g.transpose()) * inv_e;
    rmax.noalias() = z.rowwise().maxCoeff();
    z.colwise() -= rmax;
    z = z.array().exp();
    rsum.noalias() = z.rowwise().sum();
    f = e * (log_mu - rmax.array() - rsum.array().log());
    if (keep_trace) run.row_soft.emplace_back(z.array().colwise() / rsum.array());

    // g_j = e log nu - e LSE_i((f_i - C_ij) / e)
    z.noalias() = ((-cost).colwise() + f) * inv_e;
    cmax.noalias() = z.colwise().maxCoeff();
    z.rowwise() -= cmax;
    z = z.array().exp();
    csum.noalias() = z.colwise().sum();
    g = (e * (log_nu - cmax.array() - csum.array().log())).transpose();
    if (keep_trace) run.col_soft.emplace_back(z.array().rowwise() / csum.array());

    if (keep_trace) {
      run.f_hist.push_back(f);
      run.g_hist.push_back(g);
    }
  }

  const double inv_eps = 1.0 / eps;
  z.noalias() = (((-cost).colwise() + f).rowwise() + g.transpose()) * inv_eps;
  run.plan = z.array().exp();
  run.value = run.plan.cwiseProduct(cost).sum();
  return run;
}

// Adjoint of run_direction: d value / d cost, scaled by u.
Matrix direction_adjoint(const SinkhornRun& run, const Matrix& cost, double eps, double u) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  const double inv_eps = 1.0 / eps;
  const int iters = static_cast<int>(run.schedule.size());

  // value = <P, C>, P = exp((f + g - C) / eps)
  Matrix w = u * cost.cwiseProduct(run.plan);
  Vector df = w.rowwise().sum() * inv_eps;
  Vector dg = w.colwise().sum().transpose() * inv_eps;
  Matrix dc = u * run.plan - w * inv_eps;

  double dstart = 0.0;
  const Vector zeros = Vector::Zero(m);
  Matrix shifted(n, m);
  for (int t = iters; t-- > 0;) {
    const auto ti = static_cast<std::size_t>(t);
    const double e = run.schedule[ti];
    const double inv_e = 1.0 / e;
    const Vector& f = run.f_hist[ti];
    const Vector& g = run.g_hist[ti];
    const Vector& g_prev = t > 0 ? run.g_hist[ti - 1] : zeros;
    double de = 0.0;

    // g_j = e log nu - e LSE_i((f_i - C_ij) / e), softmax pi_ij over i.
    const Matrix& pi = run.col_soft[ti];
    shifted.noalias() = (-cost).colwise() + f;
    de += dg.dot(g + pi.cwiseProduct(shifted).colwise().sum().transpose()) * inv_e;
    df.noalias() -= pi * dg;
    dc += pi * dg.asDiagonal();

    // f_i = e log mu - e LSE_j((g_j - C_ij) / e), softmax rho_ij over j.
    const Matrix& rho = run.row_soft[ti];
    shifted.noalias() = (-cost).rowwise() + g_prev.transpose();
    de += df.dot(f + rho.cwiseProduct(shifted).rowwise().sum()) * inv_e;
    dg.noalias() = -(rho.transpose() * df);
    dc += df.asDiagonal() * rho;
    df.setZero();

    if (t < run.anneal_steps) {
      const double frac = static_cast<double>(t) / static_cast<double>(run.anneal_steps);
      dstart += de * (1.0 - frac) * e / run.start;
    }
  }

  if (dstart != 0.0 && run.start > eps) {
    Index r = 0;
    Index c = 0;
    cost.maxCoeff(&r, &c);
    dc(r, c) += dstart;
  }
  return dc;
}

// The value averages the runs on C and on C transposed, so it is exactly
// symmetric in its arguments.
struct SymmetricRun {
  Matrix cost;
  Matrix cost_t;
  SinkhornRun forward;
  SinkhornRun reverse;
  double value = 0.0;
};

SymmetricRun run_sinkhorn(const Matrix& a, const Matrix& b, double eps, int iters,
                          bool keep_trace) {
  check_inputs(a, b, eps, iters);
  SymmetricRun run;
  run.cost = squared_distances(a, b);
  run.cost_t = run.cost.transpose();
  run.forward = run_direction(run.cost, eps, iters, keep_trace);
  run.reverse = run_direction(run.cost_t, eps, iters, keep_trace);
  run.value = 0.5 * (run.forward.value + run.reverse.value);
  if (!std::isfinite(run.value)) throw NumericError("sinkhorn_wasserstein: non-finite cost");
  return run;
}

class SinkhornOp final : public CustomOp {
 public:
  SinkhornOp(double eps, int iters) : eps_(eps), iters_(iters) {}

  std::string name() const override { return "sinkhorn"; }

  Matrix forward(std::span<const Matrix* const> inputs) override {
    run_ = run_sinkhorn(*inputs[0], *inputs[1], eps_, iters_, true);
    return Matrix::Constant(1, 1, run_.value);
  }

  void backward(const Matrix& upstream, std::span<const Matrix* const> inputs,
                std::span<Matrix* const> input_grads) override {
    const double u = 0.5 * upstream(0, 0);
    Matrix dc = direction_adjoint(run_.forward, run_.cost, eps_, u);
    dc += direction_adjoint(run_.reverse, run_.cost_t, eps_, u).transpose();

    // C_ij = |a_i - b_j|^2
    const Matrix& a = *inputs[0];
    const Matrix& b = *inputs[1];
    if (input_grads[0]) {
      Matrix& ga = *input_grads[0];
      ga += 2.0 * (a.array().colwise() * dc.rowwise().sum().array()).matrix();
      ga.noalias() -= 2.0 * dc * b;
    }
    if (input_grads[1]) {
      Matrix& gb = *input_grads[1];
      gb += 2.0 * (b.array().colwise() * dc.colwise().sum().transpose().array()).matrix();
      gb.noalias() -= 2.0 * dc.transpose() * a;
    }
  }

 private:
  double eps_;
  int iters_;
  SymmetricRun run_;
};

}  // namespace

double sinkhorn_wasserstein(const Matrix& a, const Matrix& b, double eps, int iters) {
  return run_sinkhorn(a, b, eps, iters, false).value;
}

Matrix sinkhorn_plan(const Matrix& a, const Matrix& b, double eps, int iters) {
  const SymmetricRun run = run_sinkhorn(a, b, eps, iters, false);
  return 0.5 * (run.forward.plan + run.reverse.plan.transpose());
}

Var sinkhorn_wasserstein(Tape& tape, Var a, Var b, double eps, int iters) {
  return tape.custom(std::make_unique<SinkhornOp>(eps, iters), {a, b});
}

double balancing_penalty(std::span<const RepGroup> groups, const SinkhornOptions& options) {
  std::vector<const RepGroup*> eligible;
  for (const auto& g : groups) {
    if (g.points.rows() >= options.min_group_size && g.points.rows() > 0) eligible.push_back(&g);
  }
  if (eligible.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    for (std::size_t j = i + 1; j < eligible.size(); ++j) {
      total += sinkhorn_wasserstein(eligible[i]->points, eligible[j]->points, options.eps,
                                    options.iters);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

Var balancing_penalty(Tape& tape, std::span<const RepGroupVar> groups,
                      const SinkhornOptions& options) {
  std::vector<Var> eligible;
  for (const auto& g : groups) {
    const Index n = tape.value(g.points).rows();
    if (n >= options.min_group_size && n > 0) eligible.push_back(g.points);
  }
  if (eligible.size() < 2) return tape.scalar_constant(0.0);
  Var total = tape.scalar_constant(0.0);
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    for (std::size_t j = i + 1; j < eligible.size(); ++j) {
      total = tape.add(total, sinkhorn_wasserstein(tape, eligible[i], eligible[j], options.eps,
                                                   options.iters));
      ++pairs;
    }
  }
  return tape.scale(total, 1.0 / static_cast<double>(pairs));
}

}  // namespace cisi
