#include "mkl/bounds.hpp"

#include <cmath>

#include "mkl/error.hpp"
#include "mkl/text.hpp"

namespace mkl {

void BoundParams::validate() const {
  if (M < 1) throw ValidationError("bound: M must be >= 1");
  if (n < 1) throw ValidationError("bound: n must be >= 1");
  if (!(p >= 1.0) || !std::isfinite(p)) throw ValidationError("bound: p must be >= 1");
  if (!(q >= 1.0) || !std::isfinite(q)) throw ValidationError("bound: q must be >= 1");
  if (!(c1 >= 0.0 && c2 >= 0.0)) throw ValidationError("bound: C1 and C2 must be >= 0");
  if (std::abs(c1 + c2 - 1.0) > 1e-12)
    throw ValidationError("bound: C1 + C2 must equal 1, got " + text::format_real(c1 + c2));
  if (!(lipschitz > 0.0)) throw ValidationError("bound: L must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("bound: delta must lie in (0, 1)");
  if (!(emp_risk >= 0.0)) throw ValidationError("bound: empirical risk must be >= 0");
}

double rademacher_bound(const BoundParams& params) {
  params.validate();
  const double m = params.M;
  const double n = params.n;
  const double factor = m / (params.c1 * std::pow(m, 1.0 / params.p) + params.c2 * std::pow(m, 1.0 / params.q));
  const double base = std::sqrt(1.0 / n);
  if (params.p >= 2.0 && params.q >= 2.0) return factor * base;
  return factor * (std::sqrt(2.0 * std::log(m) / n) + base);
}

double generalization_bound(const BoundParams& params, double rademacher) {
  params.validate();
  if (!(rademacher >= 0.0)) throw ValidationError("bound: Rademacher term must be >= 0");
  return params.emp_risk + 2.0 * params.lipschitz * rademacher +
         std::sqrt(8.0 * std::log(2.0 / params.delta) / params.n);
}

std::vector<BoundRow> literature_consistency_report(int M, int n) {
  if (M < 2) throw ValidationError("consistency report needs M >= 2");
  std::vector<BoundRow> rows;
  auto add = [&](std::string name, double p, double q, double c1) {
    BoundParams bp;
    bp.M = M;
    bp.n = n;
    bp.p = p;
    bp.q = q;
    bp.c1 = c1;
    bp.c2 = 1.0 - c1;
    rows.push_back({std::move(name), p, q, c1, 1.0 - c1, rademacher_bound(bp)});
  };
  add("l1", 1.0, 2.0, 1.0);
  add("l4/3", 4.0 / 3.0, 2.0, 1.0);
  // Paired with q = 1 so that it mirrors the elastic-net row at C1 = 0.
  add("l2", 2.0, 1.0, 1.0);
  for (double c1 : {1.0, 0.75, 0.5, 0.25, 0.1, 0.01, 0.0}) add("elastic-net", 1.0, 2.0, c1);
  return rows;
}

}  // namespace mkl
