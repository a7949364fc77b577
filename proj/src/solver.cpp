#include "mkl/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <string>

#include "mkl/error.hpp"
#include "mkl/text.hpp"

namespace mkl {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kShrink = 0.5;
constexpr int kMaxBacktracks = 60;
constexpr int kStallWindow = 10;
constexpr double kStallRelChange = 1e-12;

// The solver minimizes F = -dual over x = [alpha; gamma] (gamma only when
// mu > 0) subject to lo <= x <= hi.
class Problem {
 public:
  explicit Problem(const LabeledProblem& prob)
      : prob_(prob), n_(static_cast<Eigen::Index>(prob.n())), split_(prob.config().mu > 0.0) {
    const Eigen::Index dim = split_ ? 2 * n_ : n_;
    lo_ = Vector::Constant(dim, -kInfinity);
    hi_ = Vector::Constant(dim, kInfinity);
    if (prob.config().loss == Loss::kHinge) {
      lo_.head(n_).setZero();
      hi_.head(n_).setConstant(prob.config().c);
    }
  }

  [[nodiscard]] Eigen::Index dim() const { return lo_.size(); }
  [[nodiscard]] const Vector& lo() const { return lo_; }
  [[nodiscard]] const Vector& hi() const { return hi_; }

  [[nodiscard]] DualPoint unpack(const Vector& x) const {
    DualPoint point;
    point.alpha = x.head(n_);
    point.gamma = split_ ? Vector(x.tail(n_)) : Vector::Zero(n_);
    return point;
  }

  [[nodiscard]] Vector pack(const DualPoint& point) const {
    Vector x(dim());
    x.head(n_) = point.alpha;
    if (split_) x.tail(n_) = point.gamma;
    return x;
  }

  // delta > 0 swaps max(q, eps) under each block square root for the smooth
  // upper envelope (q + eps + sqrt((q - eps)^2 + delta^2)) / 2, which stays
  // convex in v and is within delta / 2 of the clamp.
  void set_smoothing(double delta) { delta_ = delta; }

  // Returns F and writes its gradient.
  double eval(const Vector& x, Vector* grad) const {
    auto ev = evaluate_dual(unpack(x), prob_, grad != nullptr);
    if (delta_ > 0.0) soften(ev, grad != nullptr);
    if (grad) {
      grad->resize(dim());
      grad->head(n_) = -ev.grad_alpha;
      if (split_) grad->tail(n_) = -ev.grad_gamma;
    }
    return -ev.value;
  }

  [[nodiscard]] Vector project(const Vector& x) const { return x.cwiseMax(lo_).cwiseMin(hi_); }

  // Tangent-cone projection of the descent direction -g, infinity norm.
  [[nodiscard]] double pg_norm(const Vector& x, const Vector& g) const {
    double norm = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double d = -g(i);
      if (x(i) <= lo_(i)) d = std::max(d, 0.0);
      if (x(i) >= hi_(i)) d = std::min(d, 0.0);
      norm = std::max(norm, std::abs(d));
    }
    return norm;
  }

 private:
  void soften(DualEvaluation& ev, bool with_gradient) const {
    const MklConfig& cfg = prob_.config();
    const double pstar = conjugate_exponent(cfg.p);
    const Eigen::Index num = ev.quad.size();
    Vector s(num);
    Vector slope(num);
    for (Eigen::Index m = 0; m < num; ++m) {
      const double gap = ev.quad(m) - cfg.smooth_eps;
      const double root = std::hypot(gap, delta_);
      s(m) = std::sqrt(0.5 * (ev.quad(m) + cfg.smooth_eps + root));
      slope(m) = 0.5 * (1.0 + gap / root);
    }
    const double norm = block_norm({s.data(), static_cast<std::size_t>(num)}, pstar);
    ev.value += 0.5 * (ev.block_norm - norm) * (ev.block_norm + norm);
    if (!with_gradient) return;
    // clamped minus smoothed d/dv of 1/2 ||s||^2
    Vector diff = Vector::Zero(ev.v.size());
    for (Eigen::Index m = 0; m < num; ++m) {
      const double w = ev.block_weights(m) - std::pow(s(m) / norm, pstar - 2.0) * slope(m);
      diff += w * ev.kernel_v[static_cast<std::size_t>(m)];
    }
    ev.grad_alpha += prob_.labels().cwiseProduct(diff);
    if (split_) ev.grad_gamma -= diff;
  }

  const LabeledProblem& prob_;
  Eigen::Index n_;
  bool split_;
  Vector lo_;
  Vector hi_;
  double delta_ = 0.0;
};

struct CurvaturePair {
  Vector s;
  Vector y;
  double rho;
};

// Two-loop recursion restricted to the coordinates where `mask` is 1: the
// pairs are projected onto that subspace and pairs that lose positive
// curvature there are skipped.
Vector apply_inverse_hessian(const std::deque<CurvaturePair>& pairs, const Vector& mask, Vector q,
                             double fallback_scale) {
  std::vector<double> a(pairs.size(), 0.0);
  std::vector<double> rho(pairs.size(), 0.0);
  double scale = fallback_scale;
  bool have_scale = false;
  for (std::size_t k = pairs.size(); k-- > 0;) {
    const Vector s = pairs[k].s.cwiseProduct(mask);
    const Vector y = pairs[k].y.cwiseProduct(mask);
    const double sy = s.dot(y);
    const double yy = y.squaredNorm();
    if (!(sy > 1e-12 * yy) || yy == 0.0) continue;
    rho[k] = 1.0 / sy;
    if (!have_scale) {
      scale = sy / yy;
      have_scale = true;
    }
    a[k] = rho[k] * s.dot(q);
    q -= a[k] * y;
  }
  q *= scale;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (rho[k] == 0.0) continue;
    const double b = rho[k] * pairs[k].y.cwiseProduct(mask).dot(q);
    q += (a[k] - b) * pairs[k].s.cwiseProduct(mask);
  }
  return q;
}

Vector initial_alpha(const LabeledProblem& prob, const SolverConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(prob.n());
  const double base = std::min(prob.config().c, 1.0);
  if (cfg.seed == 0) return Vector::Constant(n, base / 2.0);
  std::mt19937_64 rng(cfg.seed);
  Vector alpha(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    alpha(i) = base * (0.25 + 0.5 * u);
  }
  return alpha;
}

void require_finite(double value, const Vector& grad, int iteration) {
  if (!std::isfinite(value) || !grad.allFinite())
    throw SolverError("non-finite dual objective or gradient at iteration " +
                      std::to_string(iteration) + " (objective " + text::format_real(-value) + ")");
}

}  // namespace

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw ValidationError("solver tol must be > 0");
  if (max_iter < 1) throw ValidationError("solver max_iter must be >= 1");
  if (history < 1) throw ValidationError("solver history must be >= 1");
}

Vector project_box(const Vector& alpha, double c) {
  if (!(c > 0.0)) throw ValidationError("project_box needs c > 0");
  return alpha.cwiseMax(0.0).cwiseMin(c);
}

double projected_gradient_norm(const DualPoint& point, const DualGradient& grad,
                               const LabeledProblem& prob) {
  const Problem problem(prob);
  Vector g(problem.dim());
  const auto n = static_cast<Eigen::Index>(prob.n());
  g.head(n) = -grad.alpha;
  if (problem.dim() > n) g.tail(n) = -grad.gamma;
  return problem.pg_norm(problem.pack(point), g);
}

namespace {

struct Phase {
  Vector x;
  Vector g;
  double f = 0.0;
  double pg = 0.0;
  int iterations = 0;
  std::string stop_reason;
};

// Projected quasi-Newton descent on F from x for at most `budget` iterations.
// When `trace` is given, -F is appended at the start and after every step.
Phase descend(const Problem& problem, Vector x, const SolverConfig& cfg, int budget,
              std::vector<double>* trace) {
  Phase out;
  Vector g;
  double fx = problem.eval(x, &g);
  require_finite(fx, g, 0);
  std::vector<double> local;
  std::vector<double>& values = trace ? *trace : local;
  const std::size_t first = values.size();
  values.push_back(-fx);

  std::deque<CurvaturePair> pairs;
  double scale = 1.0;
  double pg = problem.pg_norm(x, g);
  int iter = 0;
  out.stop_reason = "max_iter";

  while (true) {
    if (pg <= cfg.tol) {
      out.stop_reason = "projected gradient below tol";
      break;
    }
    if (iter >= budget) break;
    ++iter;
    // Variables within eps of a bound whose gradient pushes them outward are
    // moved by scaled steepest descent; the rest get the quasi-Newton step.
    const double width = (x - problem.project(x - g)).lpNorm<Eigen::Infinity>();
    const double eps = std::min(1e-3, width);
    std::vector<bool> binding(static_cast<std::size_t>(x.size()), false);
    Vector free_grad = g;
    Vector mask = Vector::Ones(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const bool at_lo = x(i) <= problem.lo()(i) + eps && g(i) > 0.0;
      const bool at_hi = x(i) >= problem.hi()(i) - eps && g(i) < 0.0;
      if (at_lo || at_hi) {
        binding[static_cast<std::size_t>(i)] = true;
        free_grad(i) = 0.0;
        mask(i) = 0.0;
      }
    }

    auto direction = [&](bool quasi_newton) {
      const double s0 = pairs.empty() ? std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>()) : scale;
      Vector d = quasi_newton && !pairs.empty() ? Vector(-apply_inverse_hessian(pairs, mask, free_grad, scale))
                                                : Vector(-s0 * free_grad);
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (binding[static_cast<std::size_t>(i)]) d(i) = -s0 * g(i);
      return d;
    };

    bool accepted = false;
    Vector x_new;
    Vector g_new;
    double f_new = 0.0;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      const bool quasi_newton = attempt == 0;
      if (!quasi_newton && pairs.empty()) break;
      Vector d = direction(quasi_newton);
      double free_slope = 0.0;
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (!binding[static_cast<std::size_t>(i)]) free_slope += g(i) * d(i);
      if (!(free_slope <= 0.0)) {
        if (quasi_newton) continue;
        break;
      }

      double t = 1.0;
      for (int bt = 0; bt < kMaxBacktracks; ++bt, t *= kShrink) {
        Vector trial = problem.project(x + t * d);
        const Vector step = trial - x;
        if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
        double predicted = t * free_slope;
        for (Eigen::Index i = 0; i < x.size(); ++i)
          if (binding[static_cast<std::size_t>(i)]) predicted += g(i) * step(i);
        Vector g_trial;
        const double f_trial = problem.eval(trial, &g_trial);
        if (std::isfinite(f_trial) && f_trial <= fx + kArmijo * predicted && f_trial <= fx) {
          x_new = std::move(trial);
          g_new = std::move(g_trial);
          f_new = f_trial;
          accepted = true;
          break;
        }
      }
      if (!accepted) pairs.clear();
    }

    if (!accepted) {
      out.stop_reason = "line search failed";
      break;
    }
    require_finite(f_new, g_new, iter);

    const Vector s = x_new - x;
    const Vector yv = g_new - g;
    const double sy = s.dot(yv);
    const double yy = yv.squaredNorm();
    if (sy > 1e-12 * yy && yy > 0.0) {
      pairs.push_back({s, yv, 1.0 / sy});
      if (pairs.size() > static_cast<std::size_t>(cfg.history)) pairs.pop_front();
      scale = sy / yy;
    }

    x = std::move(x_new);
    g = std::move(g_new);
    fx = f_new;
    pg = problem.pg_norm(x, g);
    values.push_back(-fx);

    const std::size_t len = values.size() - first;
    if (len > kStallWindow && pg > cfg.tol) {
      const double now = values.back();
      const double before = values[values.size() - 1 - kStallWindow];
      if (std::abs(now - before) < kStallRelChange * std::max(1.0, std::abs(now))) {
        out.stop_reason = "objective stalled";
        break;
      }
    }
  }

  out.x = std::move(x);
  out.g = std::move(g);
  out.f = fx;
  out.pg = pg;
  out.iterations = iter;
  return out;
}

}  // namespace

SolveResult solve(const LabeledProblem& prob, const SolverConfig& cfg) {
  cfg.validate();
  Problem problem(prob);

  DualPoint start;
  start.alpha = initial_alpha(prob, cfg);
  start.gamma = Vector::Zero(start.alpha.size());

  SolveResult result;
  Phase best = descend(problem, problem.project(problem.pack(start)), cfg, cfg.max_iter, &result.trace);
  int used = best.iterations;

  // A stall away from tol means the iterate sits on the kink where a block
  // norm meets the floor. Follow the smoothed surrogates down to the clamp
  // and polish from there if that gains anything.
  if (best.pg > cfg.tol && used < cfg.max_iter) {
    const double eps = prob.config().smooth_eps;
    Vector z = best.x;
    for (double delta = 1e-4; delta >= 1e-2 * eps && used < cfg.max_iter; delta *= 1e-2) {
      problem.set_smoothing(delta);
      const Phase stage = descend(problem, z, cfg, cfg.max_iter - used, nullptr);
      used += stage.iterations;
      z = stage.x;
    }
    problem.set_smoothing(0.0);
    if (problem.eval(z, nullptr) < best.f) {
      std::vector<double> trace = result.trace;
      const Phase polish = descend(problem, z, cfg, std::max(0, cfg.max_iter - used), &trace);
      used += polish.iterations;
      if (polish.f < best.f) {
        best = polish;
        result.trace = std::move(trace);
      }
    }
  }

  result.point = problem.unpack(best.x);
  result.objective = -best.f;
  result.iterations = used;
  result.projected_grad_norm = best.pg;
  result.converged = best.pg <= cfg.tol;
  result.stop_reason = best.stop_reason;
  return result;
}

}  // namespace mkl
