#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mkl/error.hpp"
#include "mkl/weights.hpp"
#include "oracles.hpp"

using namespace mkl;

namespace {

DualKernelNorms norms_of(std::initializer_list<double> values) {
  DualKernelNorms out;
  out.norms = Vector(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) out.norms(i++) = v;
  return out;
}

}  // namespace

TEST_CASE("kernel norms") {
  const KernelSet ks({GramMatrix(Matrix::Identity(2, 2))}, {});
  CHECK(kernel_norms(Vector::Zero(2), ks).norms(0) == 0.0);
  Vector v(2);
  v << 3, 4;
  CHECK(kernel_norms(v, ks).norms(0) == doctest::Approx(5.0));
  CHECK_THROWS_AS(kernel_norms(Vector::Zero(3), ks), ValidationError);
}

TEST_CASE("kernel norms match feature-space norms") {
  oracle::Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6;
    Matrix x(n, 3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    const Vector v = Vector::NullaryExpr(n, [&] { return rng.normal(); });
    const KernelSet ks({GramMatrix(x * x.transpose())}, {});
    const Vector w = x.transpose() * v;  // sum_i v_i x_i
    CHECK(kernel_norms(v, ks).norms(0) == doctest::Approx(w.norm()).epsilon(1e-12));
  }
}

TEST_CASE("block-norm weight examples") {
  const auto uniform = recover_blocknorm(norms_of({0.3, 1.0, 7.0}), 2.0);
  for (int m = 0; m < 3; ++m) CHECK(uniform.theta(m) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const auto sparse = recover_blocknorm(norms_of({1.0, 2.0}), 4.0 / 3.0);
  CHECK(sparse.theta(0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(sparse.theta(1) == doctest::Approx(0.8).epsilon(1e-12));

  const auto dense = recover_blocknorm(norms_of({1.0, 2.0}), 4.0);
  const double b = std::pow(2.0, -2.0 / 3.0);
  CHECK(dense.theta(0) == doctest::Approx(1.0 / (1.0 + b)).epsilon(1e-12));
  CHECK(dense.theta(1) == doctest::Approx(b / (1.0 + b)).epsilon(1e-12));
  CHECK(dense.theta(0) == doctest::Approx(0.6134).epsilon(1e-4));

  CHECK(dense.normalization == WeightNormalization::kSumToOne);
}

TEST_CASE("block-norm weights: zero norms and errors") {
  const auto w = recover_blocknorm(norms_of({0.0, 1.0, 2.0}), 4.0);
  CHECK(w.theta(0) == 0.0);
  CHECK(w.theta.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(recover_blocknorm(norms_of({0.0, 1.0}), 4.0 / 3.0).theta(0) == 0.0);
  CHECK_THROWS_AS(recover_blocknorm(norms_of({0.0, 0.0}), 2.0), ValidationError);
  CHECK_THROWS_AS(recover_blocknorm(norms_of({1.0}), 1.0), ValidationError);
  CHECK_THROWS_AS(recover_blocknorm(norms_of({-1.0, 1.0}), 2.0), ValidationError);
}

TEST_CASE("block-norm weights: effective scale follows the optimality conditions") {
  // effective theta_m = (s_m / ||s||_{p*})^{p*-2}
  oracle::Rng rng(42);
  for (double p : {64.0 / 63.0, 4.0 / 3.0, 2.0, 3.0, 64.0}) {
    Vector s(3);
    for (int m = 0; m < 3; ++m) s(m) = rng.uniform(0.1, 5.0);
    const auto w = recover_blocknorm({s}, p);
    const double ps = conjugate_exponent(p);
    const double big = std::pow(s.array().pow(ps).sum(), 1.0 / ps);
    for (int m = 0; m < 3; ++m)
      CHECK(w.effective()(m) == doctest::Approx(std::pow(s(m) / big, ps - 2.0)).epsilon(1e-10));
  }
}

TEST_CASE("block-norm weights: scale covariance, permutation, monotonicity") {
  oracle::Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const double p = rng.pick(std::vector<double>{64.0 / 63.0, 4.0 / 3.0, 1.7, 2.0, 2.5, 4.0, 64.0});
    Vector s(4);
    for (int m = 0; m < 4; ++m) s(m) = rng.uniform(0.01, 10.0);
    const auto w = recover_blocknorm({s}, p);
    CHECK(w.theta.sum() == doctest::Approx(1.0).epsilon(1e-10));

    const double factor = rng.uniform(0.1, 100.0);
    const auto scaled = recover_blocknorm({Vector(factor * s)}, p);
    CHECK((scaled.theta - w.theta).cwiseAbs().maxCoeff() <= 1e-12);

    Vector perm(4);
    perm << s(2), s(0), s(3), s(1);
    const auto wp = recover_blocknorm({perm}, p);
    CHECK(wp.theta(0) == doctest::Approx(w.theta(2)).epsilon(1e-13));
    CHECK(wp.theta(1) == doctest::Approx(w.theta(0)).epsilon(1e-13));
    CHECK(wp.theta(2) == doctest::Approx(w.theta(3)).epsilon(1e-13));
    CHECK(wp.theta(3) == doctest::Approx(w.theta(1)).epsilon(1e-13));

    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        if (!(s(a) > s(b))) continue;
        if (p < 2.0) CHECK(w.theta(a) >= w.theta(b));
        if (p > 2.0) CHECK(w.theta(a) <= w.theta(b));
        if (p == 2.0) CHECK(w.theta(a) == w.theta(b));
      }
  }
}

TEST_CASE("elastic-net weights: symmetric and large-mu examples") {
  const auto sym = recover_elasticnet(norms_of({1.5, 1.5, 1.5}), 1.0, 0.01);
  CHECK(sym.theta(0) == doctest::Approx(sym.theta(1)).epsilon(1e-12));
  CHECK(sym.theta(1) == doctest::Approx(sym.theta(2)).epsilon(1e-12));
  CHECK(sym.normalization == WeightNormalization::kRaw);

  const auto big = recover_elasticnet(norms_of({1.0, 2.0}), 1e6, 0.01);
  for (int m = 0; m < 2; ++m) CHECK(std::abs(big.theta(m) * 1e6 - 1.0) <= 1e-3);
}

TEST_CASE("elastic-net weights agree with a full Newton solve") {
  const auto w = recover_elasticnet(norms_of({1.0, 2.0}), 1.0, 0.01);
  CHECK(elasticnet_residuals(w.theta, norms_of({1.0, 2.0}), 1.0, 0.01).cwiseAbs().maxCoeff() <= 1e-8);
  Vector n(2);
  n << 1.0, 2.0;
  const Vector ref = oracle::elasticnet_newton(n, 1.0, 0.01);
  CHECK((w.theta - ref).cwiseAbs().maxCoeff() <= 1e-6);

  oracle::Rng rng(44);
  for (int trial = 0; trial < 40; ++trial) {
    const int num = rng.integer(1, 3);
    Vector norms(num);
    for (int m = 0; m < num; ++m) norms(m) = std::exp(rng.uniform(-3.0, 3.0));
    const double mu = std::exp(rng.uniform(-4.0, 4.0));
    const double eps = rng.pick(std::vector<double>{0.001, 0.01, 0.1, 0.5});
    const auto got = recover_elasticnet({norms}, mu, eps);
    const Vector r = elasticnet_residuals(got.theta, {norms}, mu, eps);
    const Vector expected = oracle::elasticnet_newton(norms, mu, eps);
    const bool underflow = (got.theta.array() == 0.0).any();
    for (int m = 0; m < num; ++m) {
      if (got.theta(m) == 0.0) {
        CHECK(expected(m) < 1e-300);
      } else {
        CHECK(std::abs(r(m)) <= 1e-10 * std::max(1.0, std::pow(norms(m), 1 - eps)));
      }
      CHECK(std::abs(got.theta(m) - expected(m)) <= 1e-6 * std::max(1.0, expected(m)));
    }
    if (!underflow) CHECK(oracle::elasticnet_residual(expected, norms, mu, eps).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("elastic-net weights below the double range come back as zero") {
  // with eps = 0.001 the weakest kernel's root is near 1e-660
  const auto w = recover_elasticnet(norms_of({0.38154959445833792, 0.19973730632952336, 0.084961358261607847}),
                                    0.07730564147173459, 0.001);
  CHECK(w.theta(2) == 0.0);
  CHECK(w.theta(0) > 0.0);
  const Vector r = elasticnet_residuals(w.theta, norms_of({0.38154959445833792, 0.19973730632952336, 0.084961358261607847}),
                                        0.07730564147173459, 0.001);
  CHECK(std::abs(r(0)) <= 1e-10);
}

TEST_CASE("elastic-net weights: zero norms and errors") {
  const auto w = recover_elasticnet(norms_of({0.0, 1.0}), 0.5, 0.01);
  CHECK(w.theta(0) == 0.0);
  CHECK(w.theta(1) > 0.0);
  CHECK_THROWS_AS(recover_elasticnet(norms_of({0.0, 0.0}), 1.0, 0.01), ValidationError);
  CHECK_THROWS_AS(recover_elasticnet(norms_of({1.0}), 0.0, 0.01), ValidationError);
  CHECK_THROWS_AS(recover_elasticnet(norms_of({1.0}), 1.0, 1.0), ValidationError);
}

TEST_CASE("theta from a solved instance") {
  oracle::Rng rng(45);
  const int n = 12;
  std::vector<GramMatrix> grams;
  for (int m = 0; m < 3; ++m) grams.emplace_back(oracle::random_psd(rng, n, 4));
  const Vector y = oracle::random_labels(rng, n);

  MklConfig cfg;
  cfg.p = 4.0 / 3.0;
  const LabeledProblem prob(KernelSet(grams, {}), y, cfg);
  const auto sol = solve(prob);
  const auto w = theta_from_solution(sol, prob);
  const Vector norms = kernel_norms(sol.point.alpha.cwiseProduct(y), prob.kernels()).norms;
  // exponent 2: theta_m * c = norms_m^2 for one shared c
  const double c = norms(0) * norms(0) / w.theta(0);
  for (int m = 1; m < 3; ++m) CHECK(w.theta(m) * c == doctest::Approx(norms(m) * norms(m)).epsilon(1e-10));

  cfg.p = 2.0;
  const LabeledProblem flat(KernelSet(grams, {}), y, cfg);
  const auto uniform = theta_from_solution(solve(flat), flat);
  for (int m = 0; m < 3; ++m) CHECK(uniform.theta(m) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const LabeledProblem single(KernelSet({grams[0]}, {}), y, cfg);
  CHECK(theta_from_solution(solve(single), single).theta(0) == 1.0);

  cfg.mu = 0.5;
  const LabeledProblem en(KernelSet(grams, {}), y, cfg);
  const auto sol_en = solve(en);
  const auto w_en = theta_from_solution(sol_en, en);
  CHECK(w_en.normalization == WeightNormalization::kRaw);
  const DualKernelNorms v_norms = kernel_norms(expansion_coefficients(sol_en.point, y), en.kernels());
  CHECK(elasticnet_residuals(w_en.theta, v_norms, 0.5, cfg.en_eps).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("duality gap closes at the recovered weights") {
  oracle::Rng rng(46);
  for (double p : {4.0 / 3.0, 1.5, 2.0, 3.0, 4.0}) {
    const int n = rng.integer(10, 30);
    std::vector<GramMatrix> grams;
    for (int m = 0; m < 3; ++m) grams.emplace_back(oracle::random_psd(rng, n, 5));
    MklConfig cfg;
    cfg.p = p;
    const LabeledProblem prob(KernelSet(grams, {}), oracle::random_labels(rng, n), cfg);
    const auto sol = solve(prob);
    const double gap = primal_objective(theta_from_solution(sol, prob), sol.point, prob) - sol.objective;
    CHECK(gap >= -1e-9);
    CHECK(gap <= 1e-4 * (1.0 + std::abs(sol.objective)));
  }
}
