#include <cmath>
#include <cstring>

#include "doctest.h"
#include "mkl/error.hpp"
#include "mkl/solver.hpp"
#include "oracles.hpp"

using namespace mkl;

namespace {

LabeledProblem two_point(double c) {
  Matrix k(2, 2);
  k << 1, -1, -1, 1;  // linear kernel of (1,0) and (-1,0)
  Vector y(2);
  y << 1, -1;
  MklConfig cfg;
  cfg.c = c;
  return LabeledProblem(KernelSet({GramMatrix(k)}, {}), y, cfg);
}

struct Random {
  oracle::DualSpec spec;
  LabeledProblem prob;
};

// full rank unless low_rank is set
Random random_problem(oracle::Rng& rng, double p, double mu, bool hinge = true, bool low_rank = false) {
  const int n = rng.integer(2, 8);
  const int num = rng.integer(1, 3);
  oracle::DualSpec spec;
  for (int m = 0; m < num; ++m) spec.kernels.push_back(oracle::random_psd(rng, n, low_rank ? rng.integer(1, n - 1 > 0 ? n - 1 : 1) : n + 1));
  spec.y = oracle::random_labels(rng, n);
  spec.p = p;
  spec.mu = mu;
  spec.c = rng.uniform(0.2, 2.0);
  spec.hinge = hinge;
  MklConfig cfg;
  cfg.p = p;
  cfg.mu = mu;
  cfg.c = spec.c;
  cfg.loss = hinge ? Loss::kHinge : Loss::kSquared;
  std::vector<GramMatrix> grams(spec.kernels.begin(), spec.kernels.end());
  return {spec, LabeledProblem(KernelSet(grams, {}), spec.y, cfg)};
}

bool bit_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("two-point example") {
  const auto sol = solve(two_point(1.0));
  CHECK(sol.converged);
  CHECK(sol.point.alpha(0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.point.alpha(1) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.objective == doctest::Approx(0.5).epsilon(1e-9));

  // brute-force grid over the box
  oracle::DualSpec spec;
  Matrix k(2, 2);
  k << 1, -1, -1, 1;
  spec.kernels = {k};
  spec.y = Vector(2);
  spec.y << 1, -1;
  CHECK(oracle::grid_maximum(spec, 201) == doctest::Approx(sol.objective).epsilon(1e-9));
}

TEST_CASE("two-point example with an active box") {
  const auto sol = solve(two_point(0.25));
  CHECK(sol.converged);
  CHECK(sol.point.alpha(0) == doctest::Approx(0.25));
  CHECK(sol.point.alpha(1) == doctest::Approx(0.25));
  oracle::DualSpec spec;
  Matrix k(2, 2);
  k << 1, -1, -1, 1;
  spec.kernels = {k};
  spec.y = Vector(2);
  spec.y << 1, -1;
  spec.c = 0.25;
  CHECK(oracle::grid_maximum(spec, 101) == doctest::Approx(sol.objective).epsilon(1e-12));
}

TEST_CASE("project_box") {
  Vector a(3);
  a << -1, 0.5, 7;
  Vector expected(3);
  expected << 0, 0.5, 1;
  CHECK(project_box(a, 1.0) == expected);
  CHECK(project_box(expected, 1.0) == expected);
  CHECK(project_box(Vector::Constant(4, -2.0), 1.0) == Vector::Zero(4));
  CHECK_THROWS_AS(project_box(a, 0.0), ValidationError);
}

TEST_CASE("solver config validation") {
  SolverConfig cfg;
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.max_iter = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.history = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("monotone ascent, feasibility and KKT on random problems") {
  oracle::Rng rng(31);
  const std::vector<double> ps{64.0 / 63.0, 4.0 / 3.0, 2.0, 4.0, 64.0};
  const std::vector<double> mus{0.0, 0.1, 10.0};
  for (int trial = 0; trial < 60; ++trial) {
    const double mu = rng.pick(mus);
    auto rp = random_problem(rng, rng.pick(ps), mu, trial % 5 != 0);
    SolverConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial % 3);
    const auto sol = solve(rp.prob, cfg);
    for (std::size_t k = 1; k < sol.trace.size(); ++k) CHECK(sol.trace[k] >= sol.trace[k - 1]);
    CHECK(sol.objective >= sol.trace.front());
    if (rp.spec.hinge) {
      CHECK(sol.point.alpha.minCoeff() >= 0.0);
      CHECK(sol.point.alpha.maxCoeff() <= rp.spec.c);
    }
    if (mu == 0.0) CHECK(sol.point.gamma.cwiseAbs().maxCoeff() == 0.0);
    if (sol.converged) {
      CHECK(sol.projected_grad_norm <= cfg.tol);
      const auto grad = dual_gradient(sol.point, rp.prob);
      for (int i = 0; i < sol.point.alpha.size(); ++i) {
        const double a = sol.point.alpha(i);
        if (!rp.spec.hinge || (a > 0.0 && a < rp.spec.c)) {
          CHECK(std::abs(grad.alpha(i)) <= cfg.tol);
        } else if (a == 0.0) {
          CHECK(grad.alpha(i) <= cfg.tol);
        } else {
          CHECK(grad.alpha(i) >= -cfg.tol);
        }
      }
      CHECK(projected_gradient_norm(sol.point, grad, rp.prob) == doctest::Approx(sol.projected_grad_norm));
    }
  }
}

TEST_CASE("solver matches the projected-gradient oracle") {
  oracle::Rng rng(32);
  const std::vector<double> ps{64.0 / 63.0, 4.0 / 3.0, 2.0, 4.0, 64.0};
  const std::vector<double> mus{0.0, 0.1, 10.0};
  for (int trial = 0; trial < 20; ++trial) {
    auto rp = random_problem(rng, rng.pick(ps), rng.pick(mus), trial % 4 != 0);
    SolverConfig cfg;
    cfg.tol = 1e-9;
    const auto sol = solve(rp.prob, cfg);
    const auto ref = oracle::projected_gradient_ascent(rp.spec);
    CHECK(std::abs(sol.objective - ref.value) <= 1e-6);
  }
}

TEST_CASE("solver matches the barrier oracle on low-rank kernels") {
  // at large p the optimum can sit where a block norm hits the smoothing floor
  oracle::Rng rng(35);
  const std::vector<double> ps{64.0 / 63.0, 2.0, 64.0};
  const std::vector<double> mus{0.0, 0.1, 10.0};
  for (int trial = 0; trial < 40; ++trial) {
    auto rp = random_problem(rng, rng.pick(ps), rng.pick(mus), trial % 4 != 0, true);
    SolverConfig cfg;
    cfg.tol = 1e-9;
    const auto sol = solve(rp.prob, cfg);
    const auto ref = oracle::barrier_maximum(rp.spec);
    CHECK(std::abs(sol.objective - ref.value) <= 1e-6);
  }
}

TEST_CASE("identical inputs give bit-identical results") {
  oracle::Rng rng(33);
  auto rp = random_problem(rng, 4.0 / 3.0, 0.1);
  for (std::uint64_t seed : {0u, 17u}) {
    SolverConfig cfg;
    cfg.seed = seed;
    const auto a = solve(rp.prob, cfg);
    const auto b = solve(rp.prob, cfg);
    CHECK(bit_equal(a.point.alpha, b.point.alpha));
    CHECK(bit_equal(a.point.gamma, b.point.gamma));
    CHECK(a.trace == b.trace);
    CHECK(a.iterations == b.iterations);
  }
}

TEST_CASE("max_iter exhaustion is a soft result") {
  oracle::Rng rng(34);
  auto rp = random_problem(rng, 4.0, 0.0);
  SolverConfig cfg;
  cfg.max_iter = 1;
  cfg.tol = 1e-14;
  const auto sol = solve(rp.prob, cfg);
  CHECK_FALSE(sol.converged);
  CHECK(sol.iterations <= 1);
}

TEST_CASE("non-finite kernels are rejected before solving") {
  Matrix k = Matrix::Identity(2, 2);
  k(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(GramMatrix{k}, ValidationError);
}

TEST_CASE("overflowing objective raises a solver error") {
  // the summed kernel overflows, so the gamma term is 0 * inf
  const Matrix k = Matrix::Identity(2, 2) * 1.7e308;
  Vector y(2);
  y << 1, -1;
  MklConfig cfg;
  cfg.mu = 1.0;
  const LabeledProblem prob(KernelSet({GramMatrix(k), GramMatrix(k)}, {}), y, cfg);
  CHECK_THROWS_AS(solve(prob), SolverError);
}
