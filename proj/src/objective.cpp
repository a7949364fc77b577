#include "mkl/objective.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "mkl/error.hpp"
#include "mkl/text.hpp"
#include "mkl/weights.hpp"

namespace mkl {

std::string to_string(Loss loss) {
  return loss == Loss::kHinge ? "hinge" : "squared";
}

Loss parse_loss(const std::string& name) {
  if (name == "hinge") return Loss::kHinge;
  if (name == "squared") return Loss::kSquared;
  throw ValidationError("unknown loss '" + name + "' (expected hinge or squared)");
}

void MklConfig::validate() const {
  // A relative slack so that 64.0/63.0 computed elsewhere still passes.
  if (!(p >= kMinP * (1 - 1e-15) && p <= kMaxP * (1 + 1e-15)))
    throw ValidationError("p must lie in [64/63, 64], got " + text::format_real(p));
  if (!(mu >= 0.0)) throw ValidationError("mu must be >= 0, got " + text::format_real(mu));
  if (!(c > 0.0) || !std::isfinite(c))
    throw ValidationError("C must be > 0, got " + text::format_real(c));
  if (!(smooth_eps > 0.0))
    throw ValidationError("smooth_eps must be > 0, got " + text::format_real(smooth_eps));
  if (!(en_eps > 0.0 && en_eps < 1.0))
    throw ValidationError("en_eps must lie in (0, 1), got " + text::format_real(en_eps));
}

double clamp_p(double p) {
  const double clamped = std::clamp(p, kMinP, kMaxP);
  if (clamped != p)
    std::clog << "warning: p=" << text::format_real(p) << " clamped to "
              << text::format_real(clamped) << "\n";
  return clamped;
}

DualPoint DualPoint::zeros(std::size_t n) {
  const auto size = static_cast<Eigen::Index>(n);
  return {Vector::Zero(size), Vector::Zero(size)};
}

LabeledProblem::LabeledProblem(KernelSet kernels, Vector labels, MklConfig config)
    : kernels_(std::move(kernels)), labels_(std::move(labels)), config_(config) {
  config_.validate();
  if (static_cast<std::size_t>(labels_.size()) != kernels_.n())
    throw ValidationError("labels have length " + std::to_string(labels_.size()) +
                          " but kernels have n=" + std::to_string(kernels_.n()));
  for (Eigen::Index i = 0; i < labels_.size(); ++i) {
    if (labels_(i) != 1.0 && labels_(i) != -1.0)
      throw ValidationError("label " + std::to_string(i) + " is " + text::format_real(labels_(i)) +
                            ", expected -1 or +1");
  }
  kernel_sum_ = kernels_.sum();
}

double conjugate_exponent(double p) {
  if (!(p > 1.0)) throw ValidationError("conjugate exponent needs p > 1, got " + text::format_real(p));
  if (std::isinf(p)) return 1.0;
  return p / (p - 1.0);
}

double block_norm(std::span<const double> norms, double p) {
  if (!(p >= 1.0)) throw ValidationError("block_norm needs p >= 1");
  double largest = 0.0;
  for (double s : norms) {
    if (!(s >= 0.0)) throw ValidationError("block_norm: negative or NaN entry");
    largest = std::max(largest, s);
  }
  if (largest == 0.0) return 0.0;
  if (std::isinf(largest)) return largest;
  if (p == 1.0) {
    double sum = 0.0;
    for (double s : norms) sum += s;
    return sum;
  }
  if (p < 16.0) {
    double sum = 0.0;
    for (double s : norms) sum += std::pow(s, p);
    return std::pow(sum, 1.0 / p);
  }
  // log S = log max + (1/p) log sum exp(p log(s / max))
  double sum = 0.0;
  for (double s : norms) {
    if (s > 0.0) sum += std::exp(p * std::log(s / largest));
  }
  return largest * std::exp(std::log(sum) / p);
}

double dual_loss(double t, double y, Loss loss) {
  switch (loss) {
    case Loss::kHinge: {
      const double r = t / y;
      return (r >= -1.0 && r <= 0.0) ? r : kInfinity;
    }
    case Loss::kSquared:
      return 0.25 * t * t + t * y;
  }
  return kInfinity;
}

Vector expansion_coefficients(const DualPoint& point, const Vector& labels) {
  Vector v = point.alpha.cwiseProduct(labels);
  if (point.gamma.size() == v.size()) v -= point.gamma;
  return v;
}

namespace {

void check_point(const DualPoint& point, const LabeledProblem& prob) {
  const auto n = static_cast<Eigen::Index>(prob.n());
  if (point.alpha.size() != n)
    throw ValidationError("dual point: alpha has length " + std::to_string(point.alpha.size()) +
                          ", expected " + std::to_string(n));
  if (point.gamma.size() != n && point.gamma.size() != 0)
    throw ValidationError("dual point: gamma has length " + std::to_string(point.gamma.size()) +
                          ", expected " + std::to_string(n));
}

bool uses_gamma(const LabeledProblem& prob) { return prob.config().mu > 0.0; }

}  // namespace

DualEvaluation evaluate_dual(const DualPoint& point, const LabeledProblem& prob,
                             bool with_gradient) {
  check_point(point, prob);
  const MklConfig& cfg = prob.config();
  const Vector& y = prob.labels();
  const std::size_t num = prob.num_kernels();
  const double pstar = conjugate_exponent(cfg.p);

  DualEvaluation ev;
  // With mu == 0 the split variable is pinned to zero whatever was passed in.
  const bool split = uses_gamma(prob) && point.gamma.size() != 0;
  ev.v = point.alpha.cwiseProduct(y);
  if (split) ev.v -= point.gamma;

  ev.kernel_v.resize(num);
  ev.quad.resize(static_cast<Eigen::Index>(num));
  ev.block_norms.resize(static_cast<Eigen::Index>(num));
  for (std::size_t m = 0; m < num; ++m) {
    const auto mi = static_cast<Eigen::Index>(m);
    ev.kernel_v[m].noalias() = prob.kernels()[m].entries() * ev.v;
    ev.quad(mi) = ev.v.dot(ev.kernel_v[m]);
    ev.block_norms(mi) = std::sqrt(std::max(ev.quad(mi), cfg.smooth_eps));
  }
  ev.block_norm = block_norm({ev.block_norms.data(), num}, pstar);

  double loss_term = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double t = -point.alpha(i) * y(i) / cfg.c;
    loss_term -= cfg.c * dual_loss(t, y(i), cfg.loss);
  }

  Vector kgamma;
  double split_term = 0.0;
  if (split) {
    kgamma.noalias() = prob.kernel_sum() * point.gamma;
    split_term = point.gamma.dot(kgamma) / (2.0 * cfg.mu);
  }
  ev.value = loss_term - 0.5 * ev.block_norm * ev.block_norm - split_term;

  ev.block_weights.resize(static_cast<Eigen::Index>(num));
  for (std::size_t m = 0; m < num; ++m) {
    const auto mi = static_cast<Eigen::Index>(m);
    ev.block_weights(mi) = ev.quad(mi) > cfg.smooth_eps
                               ? std::pow(ev.block_norms(mi) / ev.block_norm, pstar - 2.0)
                               : 0.0;
  }
  if (!with_gradient) return ev;

  // d/dv of 1/2 ||s||^2_{p*} = sum_m (s_m/S)^{p*-2} K_m v
  Vector h = Vector::Zero(ev.v.size());
  for (std::size_t m = 0; m < num; ++m) {
    const double w = ev.block_weights(static_cast<Eigen::Index>(m));
    if (w != 0.0) h += w * ev.kernel_v[m];
  }
  ev.grad_alpha = -y.cwiseProduct(h);
  if (cfg.loss == Loss::kHinge) {
    ev.grad_alpha.array() += 1.0;
  } else {
    ev.grad_alpha.array() += 1.0 - point.alpha.array() / (2.0 * cfg.c);
  }
  if (uses_gamma(prob)) {
    ev.grad_gamma = h;
    if (split) ev.grad_gamma -= kgamma / cfg.mu;
  }
  return ev;
}

double dual_objective(const DualPoint& point, const LabeledProblem& prob) {
  return evaluate_dual(point, prob, false).value;
}

DualGradient dual_gradient(const DualPoint& point, const LabeledProblem& prob) {
  auto ev = evaluate_dual(point, prob, true);
  return {std::move(ev.grad_alpha), std::move(ev.grad_gamma)};
}

Vector training_scores(const KernelWeights& theta, const DualPoint& point,
                       const LabeledProblem& prob) {
  check_point(point, prob);
  const Vector eff = theta.effective();
  if (static_cast<std::size_t>(eff.size()) != prob.num_kernels())
    throw ValidationError("weights have " + std::to_string(eff.size()) + " entries for " +
                          std::to_string(prob.num_kernels()) + " kernels");
  const Vector v = expansion_coefficients(point, prob.labels());
  Vector f = Vector::Zero(v.size());
  for (std::size_t m = 0; m < prob.num_kernels(); ++m) {
    const double w = eff(static_cast<Eigen::Index>(m));
    if (w != 0.0) f.noalias() += w * (prob.kernels()[m].entries() * v);
  }
  return f;
}

double primal_objective(const KernelWeights& theta, const DualPoint& point,
                        const LabeledProblem& prob) {
  const MklConfig& cfg = prob.config();
  const Vector eff = theta.effective();
  if ((eff.array() < 0.0).any()) throw ValidationError("primal_objective: negative weight");
  const Vector f = training_scores(theta, point, prob);
  const Vector v = expansion_coefficients(point, prob.labels());
  const Vector& y = prob.labels();

  std::vector<double> wnorm(prob.num_kernels());
  double sq_total = 0.0;
  for (std::size_t m = 0; m < prob.num_kernels(); ++m) {
    const double q = std::max(0.0, v.dot(prob.kernels()[m].entries() * v));
    const double w = eff(static_cast<Eigen::Index>(m));
    wnorm[m] = w * std::sqrt(q);
    sq_total += w * w * q;
  }
  const double bn = block_norm(wnorm, cfg.p);

  double loss = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (cfg.loss == Loss::kHinge) {
      loss += std::max(0.0, 1.0 - y(i) * f(i));
    } else {
      const double r = f(i) - y(i);
      loss += r * r;
    }
  }
  return cfg.c * loss + 0.5 * bn * bn + 0.5 * cfg.mu * sq_total;
}

}  // namespace mkl
