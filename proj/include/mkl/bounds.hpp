#pragma once

#include <string>
#include <vector>

namespace mkl {

/// Inputs of the Rademacher and generalization bounds for the mixed
/// regularizer C1 ||w||_{2,p} + C2 ||w||_{2,q}. Kernels are assumed
/// normalized (k(x, x) <= 1).
struct BoundParams {
  int M = 1;
  int n = 1;
  double p = 1.0;
  double q = 2.0;
  double c1 = 1.0;
  double c2 = 0.0;
  double lipschitz = 1.0;
  double delta = 0.05;
  double emp_risk = 0.0;

  /// Throws ValidationError unless every invariant holds.
  void validate() const;
};

/// M / (C1 M^(1/p) + C2 M^(1/q)) * (sqrt(2 ln M / n) + sqrt(1 / n)),
/// or without the sqrt(2 ln M / n) term when p >= 2 and q >= 2.
double rademacher_bound(const BoundParams& params);

/// emp_risk + 2 L R + sqrt(8 ln(2 / delta) / n).
double generalization_bound(const BoundParams& params, double rademacher);

struct BoundRow {
  std::string setting;
  double p = 1.0;
  double q = 2.0;
  double c1 = 1.0;
  double c2 = 0.0;
  double rademacher = 0.0;
};

/// Bound values for l1 (p = 1), l4/3, p = 2 and the elastic net (p = 1,
/// q = 2) over a grid of C1 values from 1 down to 0.
std::vector<BoundRow> literature_consistency_report(int M, int n);

}  // namespace mkl
