#include "mkl/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include <boost/math/tools/toms748_solve.hpp>

#include "mkl/error.hpp"
#include "mkl/text.hpp"

namespace mkl {

namespace {

// Stops once the bracket is a few ulps wide.
boost::math::tools::eps_tolerance<double> bracket_tolerance() {
  return boost::math::tools::eps_tolerance<double>(50);
}

bool all_zero(const Vector& norms) { return (norms.array() == 0.0).all(); }

void check_norms(const Vector& norms) {
  if (norms.size() == 0) throw ValidationError("no kernel norms given");
  for (Eigen::Index m = 0; m < norms.size(); ++m)
    if (!(norms(m) >= 0.0) || !std::isfinite(norms(m)))
      throw ValidationError("kernel norm " + std::to_string(m) + " is " +
                            text::format_real(norms(m)));
}

// Returns u = log theta, the root of mu a e^u + exp(eps u + (1 - eps) log T) - a = 0.
// The left side is increasing in u, and both brackets come from bounding
// each term separately by a (upper) or a/2 (lower).
double solve_single(double a, double mu, double eps, double log_t, std::uintmax_t& budget) {
  if (a == 0.0) return -std::numeric_limits<double>::infinity();
  const double log_a = std::log(a);
  auto f = [&](double u) { return mu * a * std::exp(u) + std::exp(eps * u + (1.0 - eps) * log_t) - a; };
  const double hi = std::min(-std::log(mu), (log_a - (1.0 - eps) * log_t) / eps);
  const double lo = std::min(std::log(0.5 / mu), (std::log(a / 2.0) - (1.0 - eps) * log_t) / eps);
  const double f_hi = f(hi);
  if (f_hi <= 0.0) return hi;
  const double f_lo = f(lo);
  if (f_lo >= 0.0) return lo;
  std::uintmax_t iters = budget;
  const auto [left, right] =
      boost::math::tools::toms748_solve(f, lo, hi, f_lo, f_hi, bracket_tolerance(), iters);
  budget = budget > iters ? budget - iters : 0;
  return 0.5 * (left + right);
}

}  // namespace

std::string to_string(WeightNormalization normalization) {
  return normalization == WeightNormalization::kSumToOne ? "sum_to_one" : "raw";
}

DualKernelNorms kernel_norms(const Vector& v, const KernelSet& kernels) {
  if (static_cast<std::size_t>(v.size()) != kernels.n())
    throw ValidationError("kernel_norms: vector has length " + std::to_string(v.size()) +
                          " but kernels have n=" + std::to_string(kernels.n()));
  DualKernelNorms out;
  out.norms.resize(static_cast<Eigen::Index>(kernels.size()));
  for (std::size_t m = 0; m < kernels.size(); ++m) {
    const double q = v.dot(kernels[m].entries() * v);
    out.norms(static_cast<Eigen::Index>(m)) = std::sqrt(std::max(q, 0.0));
  }
  return out;
}

KernelWeights recover_blocknorm(const DualKernelNorms& norms, double p) {
  check_norms(norms.norms);
  if (!(p > 1.0) || std::isinf(p))
    throw ValidationError("recover_blocknorm needs 1 < p < inf, got " + text::format_real(p));
  if (all_zero(norms.norms)) throw ValidationError("recover_blocknorm: every kernel norm is zero");

  const Vector& s = norms.norms;
  const double pstar = conjugate_exponent(p);
  const double expo = pstar - 2.0;  // == (2 - p) / (p - 1)
  const double largest = s.maxCoeff();

  // Ratios to the largest norm keep every power in range.
  Vector theta = Vector::Zero(s.size());
  for (Eigen::Index m = 0; m < s.size(); ++m)
    if (s(m) > 0.0) theta(m) = std::exp(expo * std::log(s(m) / largest));
  const double total = theta.sum();

  std::vector<double> ratios(static_cast<std::size_t>(s.size()));
  for (Eigen::Index m = 0; m < s.size(); ++m) ratios[static_cast<std::size_t>(m)] = s(m) / largest;
  const double rel_norm = block_norm(ratios, pstar);

  KernelWeights w;
  w.theta = theta / total;
  w.normalization = WeightNormalization::kSumToOne;
  // theta_eff,m = (s_m / ||s||_{p*})^{p*-2}
  w.scale = total * std::exp(-expo * std::log(rel_norm));
  return w;
}

Vector elasticnet_residuals(const Vector& theta, const DualKernelNorms& norms, double mu,
                            double eps) {
  const Vector& n = norms.norms;
  if (theta.size() != n.size()) throw ValidationError("elasticnet_residuals: length mismatch");
  double coupling = 0.0;
  for (Eigen::Index m = 0; m < n.size(); ++m)
    coupling += std::pow(theta(m) * n(m), 1.0 + eps);
  const double outer = std::pow(coupling, 1.0 - eps);
  Vector r(n.size());
  for (Eigen::Index m = 0; m < n.size(); ++m) {
    const double a = std::pow(n(m), 1.0 - eps);
    r(m) = mu * theta(m) * a + std::pow(theta(m), eps) * outer - a;
  }
  return r;
}

KernelWeights recover_elasticnet(const DualKernelNorms& norms, double mu, double eps, double tol,
                                 int max_iter) {
  check_norms(norms.norms);
  if (!(mu > 0.0) || !std::isfinite(mu))
    throw ValidationError("recover_elasticnet needs mu > 0, got " + text::format_real(mu));
  if (!(eps > 0.0 && eps < 1.0))
    throw ValidationError("recover_elasticnet needs eps in (0, 1), got " + text::format_real(eps));
  if (!(tol > 0.0)) throw ValidationError("recover_elasticnet needs tol > 0");
  if (max_iter < 1) throw ValidationError("recover_elasticnet needs max_iter >= 1");
  if (all_zero(norms.norms)) throw ValidationError("recover_elasticnet: every kernel norm is zero");

  const Vector& n = norms.norms;
  const Eigen::Index num = n.size();
  Vector a(num);
  for (Eigen::Index m = 0; m < num; ++m) a(m) = std::pow(n(m), 1.0 - eps);

  std::uintmax_t inner_budget = static_cast<std::uintmax_t>(max_iter) * 200;
  auto log_thetas_at = [&](double log_t) {
    Vector u(num);
    for (Eigen::Index m = 0; m < num; ++m) u(m) = solve_single(a(m), mu, eps, log_t, inner_budget);
    return u;
  };
  // G(T) = log sum_m (theta_m(T) n_m)^(1+eps) - log T, decreasing in T. The
  // sum is formed from logs since theta_m(T) can be far below the double range.
  auto excess = [&](double log_t) {
    const Vector u = log_thetas_at(log_t);
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index m = 0; m < num; ++m)
      if (n(m) > 0.0) top = std::max(top, (1.0 + eps) * (u(m) + std::log(n(m))));
    double sum = 0.0;
    for (Eigen::Index m = 0; m < num; ++m)
      if (n(m) > 0.0) sum += std::exp((1.0 + eps) * (u(m) + std::log(n(m))) - top);
    return top + std::log(sum) - log_t;
  };

  // theta_m <= 1/mu, so G <= 0 at T = sum (n_m/mu)^(1+eps).
  double t_max = 0.0;
  for (Eigen::Index m = 0; m < num; ++m) t_max += std::pow(n(m) / mu, 1.0 + eps);
  double hi = std::log(t_max);
  double g_hi = excess(hi);
  double log_t = hi;
  if (g_hi < 0.0) {
    double lo = hi - 4.0;
    double g_lo = excess(lo);
    for (int expansions = 0; !(g_lo > 0.0); ++expansions) {
      if (expansions >= max_iter)
        throw SolverError("recover_elasticnet: could not bracket the coupling sum");
      lo -= 4.0;
      g_lo = excess(lo);
    }
    std::uintmax_t outer = static_cast<std::uintmax_t>(max_iter);
    const auto [left, right] =
        boost::math::tools::toms748_solve(excess, lo, hi, g_lo, g_hi, bracket_tolerance(), outer);
    log_t = 0.5 * (left + right);
  }

  KernelWeights w;
  // Roots below the normal range are returned as zero and not residual-checked.
  const double log_min = std::log(std::numeric_limits<double>::min());
  const Vector u = log_thetas_at(log_t);
  w.theta = Vector::Zero(num);
  for (Eigen::Index m = 0; m < num; ++m)
    if (u(m) >= log_min) w.theta(m) = std::exp(u(m));
  w.normalization = WeightNormalization::kRaw;
  w.scale = 1.0;

  const Vector r = elasticnet_residuals(w.theta, norms, mu, eps);
  for (Eigen::Index m = 0; m < num; ++m) {
    if (u(m) >= log_min && std::abs(r(m)) > tol * std::max(1.0, a(m))) {
      std::string msg = "recover_elasticnet did not converge; residuals:";
      for (Eigen::Index k = 0; k < num; ++k) msg += " " + text::format_real(r(k));
      throw SolverError(msg);
    }
  }
  return w;
}

KernelWeights theta_from_solution(const SolveResult& sol, const LabeledProblem& prob) {
  const Vector v = expansion_coefficients(sol.point, prob.labels());
  const DualKernelNorms norms = kernel_norms(v, prob.kernels());
  const MklConfig& cfg = prob.config();
  if (cfg.mu == 0.0) return recover_blocknorm(norms, cfg.p);
  return recover_elasticnet(norms, cfg.mu, cfg.en_eps);
}

}  // namespace mkl
