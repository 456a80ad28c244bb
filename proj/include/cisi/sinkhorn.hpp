#pragma once

#include "cisi/pattern.hpp"
#include "cisi/tensor.hpp"

#include <span>

namespace cisi {

struct SinkhornOptions {
  double eps = 0.1;
  int iters = 50;
  /// Patterns with fewer units than this in the batch are left out of the
  /// pairwise average.
  Index min_group_size = 2;
};

/// Representations of the units whose observed treatment equals `pattern`.
struct RepGroup {
  TreatmentPattern pattern;
  Matrix points;
};

struct RepGroupVar {
  TreatmentPattern pattern;
  Var points;
};

/// Entropic optimal-transport cost between the uniform empirical measures on
/// the rows of `a` and `b`, squared-Euclidean ground cost. Runs `iters`
/// log-domain Sinkhorn sweeps from zero potentials, annealing eps from the
/// largest cost during the first half, and returns <P, C> for the resulting
/// plan P. The result is the mean of the runs on C and on its transpose.
double sinkhorn_wasserstein(const Matrix& a, const Matrix& b, double eps, int iters);

/// Tape version; differentiates through every iteration.
Var sinkhorn_wasserstein(Tape& tape, Var a, Var b, double eps, int iters);

/// Averaged transport plan after `iters` sweeps (rows index a, columns index b).
Matrix sinkhorn_plan(const Matrix& a, const Matrix& b, double eps, int iters);

/// Mean of sinkhorn_wasserstein over all unordered pairs of groups that have
/// at least min_group_size points; 0 when fewer than two such groups exist.
double balancing_penalty(std::span<const RepGroup> groups, const SinkhornOptions& options);
Var balancing_penalty(Tape& tape, std::span<const RepGroupVar> groups,
                      const SinkhornOptions& options);

}  // namespace cisi
