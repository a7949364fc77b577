#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mkl/kernels.hpp"

namespace mkl {

struct KernelWeights;

enum class Loss { kHinge, kSquared };

std::string to_string(Loss loss);
Loss parse_loss(const std::string& name);

/// Block-norm exponents 1 and infinity are represented by these two values.
inline constexpr double kMinP = 64.0 / 63.0;
inline constexpr double kMaxP = 64.0;

/// Regularization and loss parameters of one MKL problem.
struct MklConfig {
  double p = 2.0;             // block-norm exponent, in [64/63, 64]
  double mu = 0.0;            // elastic-net weight
  double c = 1.0;             // loss weight
  Loss loss = Loss::kHinge;
  double smooth_eps = 1e-12;  // floor on v'K_m v before the square root
  double en_eps = 0.01;       // exponent offset for elastic-net weight recovery

  /// Throws ValidationError unless every invariant holds.
  void validate() const;
};

/// Clamps p into [64/63, 64], printing a warning to stderr when it moves.
double clamp_p(double p);

/// Variables of the label-substituted dual. gamma is the Moreau-Yosida split
/// variable; it stays identically zero when mu == 0.
struct DualPoint {
  Vector alpha;
  Vector gamma;

  static DualPoint zeros(std::size_t n);
};

/// Kernels, +-1 labels and configuration. The summed kernel is cached.
class LabeledProblem {
 public:
  LabeledProblem(KernelSet kernels, Vector labels, MklConfig config);

  [[nodiscard]] const KernelSet& kernels() const { return kernels_; }
  [[nodiscard]] const Vector& labels() const { return labels_; }
  [[nodiscard]] const MklConfig& config() const { return config_; }
  [[nodiscard]] const Matrix& kernel_sum() const { return kernel_sum_; }
  [[nodiscard]] std::size_t n() const { return kernels_.n(); }
  [[nodiscard]] std::size_t num_kernels() const { return kernels_.size(); }

 private:
  KernelSet kernels_;
  Vector labels_;
  MklConfig config_;
  Matrix kernel_sum_;
};

/// p / (p - 1). Throws ValidationError for p <= 1.
double conjugate_exponent(double p);

/// l_p norm of a vector of nonnegative block norms. Evaluated in the log
/// domain for p >= 16.
double block_norm(std::span<const double> norms, double p);

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Fenchel conjugate of the loss in its first argument.
/// hinge:   t / y on -1 <= t/y <= 0, +inf elsewhere
/// squared: t^2 / 4 + t y
double dual_loss(double t, double y, Loss loss);

/// Everything one evaluation of the dual produces, kept together so that the
/// solver, weight recovery and diagnostics can share the work.
struct DualEvaluation {
  double value = 0.0;
  Vector grad_alpha;
  Vector grad_gamma;            // empty when mu == 0
  Vector v;                     // alpha o y - gamma
  std::vector<Vector> kernel_v; // K_m v
  Vector quad;                  // v' K_m v (unclamped)
  Vector block_norms;           // s_m = sqrt(max(v' K_m v, smooth_eps))
  double block_norm = 0.0;      // ||s||_{p*}
  Vector block_weights;         // (s_m / ||s||)^{p*-2}; 0 where the floor is active
};

/// `with_gradient = false` skips the gradient vectors.
DualEvaluation evaluate_dual(const DualPoint& point, const LabeledProblem& prob,
                             bool with_gradient = true);

/// 1'a - 1/2 ||(sqrt(v'K_m v))_m||_{p*}^2 - 1/(2 mu) g'Kg for the hinge loss,
/// with the loss term generalized through dual_loss for other losses.
double dual_objective(const DualPoint& point, const LabeledProblem& prob);

struct DualGradient {
  Vector alpha;
  Vector gamma;  // empty when mu == 0
};

DualGradient dual_gradient(const DualPoint& point, const LabeledProblem& prob);

/// Primal value at w_m = theta_m sum_i v_i Phi_m(x_i), where theta is taken
/// at its effective scale (KernelWeights::effective()). Everything reduces to
/// Gram entries: ||w_m||^2 = theta_m^2 v'K_m v and f(x_i) = sum_m theta_m (K_m v)_i.
double primal_objective(const KernelWeights& theta, const DualPoint& point,
                        const LabeledProblem& prob);

/// Decision values f(x_i) on the training sample for the given weights.
Vector training_scores(const KernelWeights& theta, const DualPoint& point,
                       const LabeledProblem& prob);

/// v = alpha o y - gamma.
Vector expansion_coefficients(const DualPoint& point, const Vector& labels);

}  // namespace mkl
