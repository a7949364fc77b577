#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mkl/objective.hpp"

namespace mkl {

struct SolverConfig {
  double tol = 1e-6;      // projected-gradient infinity norm at convergence
  int max_iter = 5000;
  int history = 10;       // curvature pairs kept by the quasi-Newton model
  std::uint64_t seed = 0; // 0: alpha = min(C,1)/2; otherwise a seeded interior start

  void validate() const;
};

struct SolveResult {
  DualPoint point;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double projected_grad_norm = 0.0;
  double duality_gap = std::numeric_limits<double>::quiet_NaN();  // filled by callers
  std::string stop_reason;
  std::vector<double> trace;  // objective after every accepted step, starting point first
};

/// Maximizes the dual over alpha in [0, C]^n (hinge) or R^n (squared), and
/// gamma in R^n when mu > 0, with a limited-memory BFGS model on the free
/// variables and projected backtracking line search.
///
/// Hitting max_iter is reported through `converged = false`. A non-finite
/// objective or gradient throws SolverError naming the iteration.
SolveResult solve(const LabeledProblem& prob, const SolverConfig& cfg = {});

/// Elementwise clamp to [0, c].
Vector project_box(const Vector& alpha, double c);

/// Infinity norm of the gradient projected on the tangent cone of the
/// feasible set: components of alpha sitting on a bound only count when they
/// point into the box.
double projected_gradient_norm(const DualPoint& point, const DualGradient& grad,
                               const LabeledProblem& prob);

}  // namespace mkl
