#pragma once

#include <string>

#include "mkl/kernels.hpp"
#include "mkl/solver.hpp"

namespace mkl {

enum class WeightNormalization { kSumToOne, kRaw };

/// Mixture coefficients theta_m >= 0.
///
/// Block-norm weights are only determined up to a positive constant, so they
/// are stored summing to one together with `scale`, the constant that turns
/// them back into the exact feature-map scaling of the optimality conditions.
/// Elastic-net weights are stored raw with scale 1.
struct KernelWeights {
  Vector theta;
  WeightNormalization normalization = WeightNormalization::kSumToOne;
  double scale = 1.0;

  /// scale * theta
  [[nodiscard]] Vector effective() const { return scale * theta; }
};

/// norms[m] = sqrt(v' K_m v).
struct DualKernelNorms {
  Vector norms;
};

DualKernelNorms kernel_norms(const Vector& v, const KernelSet& kernels);

/// theta_m proportional to norms[m]^((2-p)/(p-1)), summing to one.
///
/// Kernels with zero norm get weight zero whatever the sign of the exponent.
/// Throws ValidationError for p outside (1, inf) or when every norm is zero.
KernelWeights recover_blocknorm(const DualKernelNorms& norms, double p);

/// Solves, for every m,
///   mu theta_m a_m + theta_m^eps (sum_m' theta_m'^(1+eps) n_m'^(1+eps))^(1-eps) = a_m
/// with n_m = norms[m] and a_m = n_m^(1-eps). Returns raw weights whose
/// residuals are at most tol * max(1, a_m).
///
/// For a fixed value T of the coupling sum each equation has a unique root
/// theta_m(T), decreasing in T, so the system collapses to one monotone
/// scalar equation in T which is bracketed and solved in log space.
/// A root below the smallest normal double (tiny eps with very unequal
/// norms) comes back as theta_m = 0 and its residual is not checked.
/// Throws SolverError with the residuals when any other one misses tol.
KernelWeights recover_elasticnet(const DualKernelNorms& norms, double mu, double eps,
                                 double tol = 1e-10, int max_iter = 500);

/// Left minus right hand side of the elastic-net system above, per kernel.
Vector elasticnet_residuals(const Vector& theta, const DualKernelNorms& norms, double mu,
                            double eps);

/// mu == 0: recover_blocknorm(config.p); mu > 0: recover_elasticnet(config.en_eps).
/// Norms are taken of v = alpha o y - gamma.
KernelWeights theta_from_solution(const SolveResult& sol, const LabeledProblem& prob);

std::string to_string(WeightNormalization normalization);

}  // namespace mkl
