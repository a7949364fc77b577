#include <cmath>

#include "doctest.h"
#include "mkl/bounds.hpp"
#include "mkl/error.hpp"
#include "oracles.hpp"

using namespace mkl;

namespace {

BoundParams params(int M, int n, double p, double q, double c1) {
  BoundParams b;
  b.M = M;
  b.n = n;
  b.p = p;
  b.q = q;
  b.c1 = c1;
  b.c2 = 1.0 - c1;
  return b;
}

double oracle_bound(const BoundParams& b) {
  return static_cast<double>(oracle::rademacher(b.M, b.n, b.p, b.q, b.c1, b.c2));
}

}  // namespace

TEST_CASE("rademacher examples") {
  for (double p : {1.0, 4.0 / 3.0, 2.0, 5.0})
    CHECK(rademacher_bound(params(1, 49, p, 2.0, 0.3)) == doctest::Approx(1.0 / 7.0).epsilon(1e-14));
  CHECK(rademacher_bound(params(16, 100, 1.0, 2.0, 1.0)) ==
        doctest::Approx(std::sqrt(2.0 * std::log(16.0) / 100.0) + 0.1).epsilon(1e-14));
  CHECK(rademacher_bound(params(16, 100, 1.0, 2.0, 1.0)) == doctest::Approx(0.33544).epsilon(1e-4));
  for (double c1 : {0.0, 0.4, 1.0}) CHECK(rademacher_bound(params(4, 100, 2.0, 2.0, c1)) == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("generalization examples") {
  BoundParams b = params(1, 100, 2.0, 2.0, 1.0);
  b.delta = 2.0 / std::exp(100.0 / 8.0);  // ln(2/delta) = n/8
  CHECK(generalization_bound(b, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

  b.delta = 0.05;
  b.emp_risk = 0.1;
  CHECK(generalization_bound(b, 0.2) == doctest::Approx(0.5 + std::sqrt(8.0 * std::log(40.0) / 100.0)).epsilon(1e-14));
  CHECK(generalization_bound(b, 0.2) == doctest::Approx(1.0432).epsilon(1e-4));

  b.emp_risk = 0.0;
  b.delta = 1.0 - 1e-12;
  CHECK(generalization_bound(b, 0.0) == doctest::Approx(std::sqrt(8.0 * std::log(2.0) / 100.0)).epsilon(1e-9));
  b.lipschitz = 3.0;
  CHECK(generalization_bound(b, 0.1) - generalization_bound(b, 0.0) == doctest::Approx(0.6));
}

TEST_CASE("parameter validation") {
  BoundParams b = params(4, 100, 1.0, 2.0, 0.5);
  CHECK_NOTHROW(b.validate());
  auto expect_reject = [](BoundParams bad) { CHECK_THROWS_AS(rademacher_bound(bad), ValidationError); };
  BoundParams bad = b;
  bad.M = 0;
  expect_reject(bad);
  bad = b;
  bad.n = 0;
  expect_reject(bad);
  bad = b;
  bad.p = 0.5;
  expect_reject(bad);
  bad = b;
  bad.c2 = 0.6;
  expect_reject(bad);
  bad = b;
  bad.c1 = -0.5;
  bad.c2 = 1.5;
  expect_reject(bad);
  bad = b;
  bad.delta = 1.0;
  CHECK_THROWS_AS(generalization_bound(bad, 0.1), ValidationError);
  bad = b;
  bad.lipschitz = -1.0;
  CHECK_THROWS_AS(generalization_bound(bad, 0.1), ValidationError);
}

TEST_CASE("formula matches the long-double oracle on a random grid") {
  oracle::Rng rng(61);
  for (int trial = 0; trial < 500; ++trial) {
    const int M = rng.integer(1, 200);
    const int n = rng.integer(1, 100000);
    const double p = rng.uniform(1.0, 6.0);
    const double q = rng.uniform(1.0, 6.0);
    const auto b = params(M, n, p, q, rng.uniform());
    CHECK(std::abs(rademacher_bound(b) - oracle_bound(b)) <= 1e-12 * oracle_bound(b));
  }
}

TEST_CASE("bound invariants") {
  oracle::Rng rng(62);
  for (int trial = 0; trial < 300; ++trial) {
    const int M = rng.integer(1, 100);
    const int n = rng.integer(1, 5000);
    const double p = rng.uniform(1.0, 5.0);
    const double q = rng.uniform(1.0, 5.0);
    const double c1 = rng.uniform();
    const auto b = params(M, n, p, q, c1);
    const double r = rademacher_bound(b);
    CHECK(r > 0.0);
    CHECK(rademacher_bound(params(M, n + rng.integer(1, 100), p, q, c1)) <= r);

    // swapping (p, C1) with (q, C2) leaves the bound unchanged
    BoundParams swapped = b;
    swapped.p = q;
    swapped.q = p;
    swapped.c1 = b.c2;
    swapped.c2 = b.c1;
    CHECK(rademacher_bound(swapped) == doctest::Approx(r).epsilon(1e-14));

    // p == q makes C1 irrelevant
    CHECK(rademacher_bound(params(M, n, p, p, c1)) == doctest::Approx(rademacher_bound(params(M, n, p, p, 0.5))).epsilon(1e-14));

    BoundParams g = b;
    g.emp_risk = rng.uniform(0.0, 0.5);
    g.delta = rng.uniform(0.001, 0.5);
    CHECK(generalization_bound(g, r) >= g.emp_risk + 2.0 * r);
  }
}

TEST_CASE("literature report") {
  const auto rows = literature_consistency_report(16, 100);
  REQUIRE(rows.size() >= 4);
  const auto find = [&](const std::string& name, double c1) {
    for (const auto& r : rows)
      if (r.setting == name && r.c1 == c1) return r;
    FAIL("missing row " << name);
    return BoundRow{};
  };
  const auto l1 = find("l1", 1.0);
  const auto l43 = find("l4/3", 1.0);
  const auto l2 = find("l2", 1.0);
  CHECK(l1.rademacher == doctest::Approx(0.33544).epsilon(1e-4));
  CHECK(l43.rademacher == doctest::Approx(2.0 * (std::sqrt(2.0 * std::log(16.0)) + 1.0) / 10.0).epsilon(1e-14));
  CHECK(find("elastic-net", 1.0).rademacher == l1.rademacher);
  CHECK(find("elastic-net", 0.0).rademacher == doctest::Approx(l2.rademacher).epsilon(1e-14));
  double previous = 0.0;
  for (const auto& r : rows) {
    if (r.setting != "elastic-net") continue;
    CHECK(r.rademacher >= previous);  // rows run from C1 = 1 down to 0
    CHECK(r.rademacher <= 4.0 * l1.rademacher * (1.0 + 1e-12));
    previous = r.rademacher;
  }
  CHECK_THROWS_AS(literature_consistency_report(1, 100), ValidationError);
}
