#include <algorithm>
#include <numeric>

#include "mkl/error.hpp"
#include "mkl/model.hpp"

namespace mkl {

namespace {

void check_lengths(const Vector& scores, const Vector& labels) {
  if (scores.size() != labels.size())
    throw ValidationError("metrics: " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(labels.size()) + " labels");
  if (scores.size() == 0) throw ValidationError("metrics: empty input");
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels(i) != 1.0 && labels(i) != -1.0)
      throw ValidationError("metrics: label " + std::to_string(i) + " is not +-1");
}

// ROC vertices (fpr, tpr) from the highest score down; tied scores form one
// step, which makes the area count tied pairs as one half.
struct Roc {
  std::vector<double> fpr{0.0};
  std::vector<double> tpr{0.0};
};

Roc roc_curve(const Vector& scores, const Vector& labels) {
  check_lengths(scores, labels);
  const auto n = static_cast<std::size_t>(scores.size());
  double pos = 0.0;
  for (std::size_t i = 0; i < n; ++i) pos += labels(static_cast<Eigen::Index>(i)) > 0.0 ? 1.0 : 0.0;
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw ValidationError("metrics: both classes must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });

  Roc roc;
  double tp = 0.0;
  double fp = 0.0;
  for (std::size_t k = 0; k < n;) {
    const double s = scores(static_cast<Eigen::Index>(order[k]));
    while (k < n && scores(static_cast<Eigen::Index>(order[k])) == s) {
      (labels(static_cast<Eigen::Index>(order[k])) > 0.0 ? tp : fp) += 1.0;
      ++k;
    }
    roc.fpr.push_back(fp / neg);
    roc.tpr.push_back(tp / pos);
  }
  return roc;
}

}  // namespace

double accuracy(const Vector& scores, const Vector& labels) {
  check_lengths(scores, labels);
  double hits = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const double predicted = scores(i) >= 0.0 ? 1.0 : -1.0;
    if (predicted == labels(i)) hits += 1.0;
  }
  return hits / static_cast<double>(scores.size());
}

double auc(const Vector& scores, const Vector& labels) { return partial_auc(scores, labels, 1.0); }

double partial_auc(const Vector& scores, const Vector& labels, double fpr_max) {
  if (!(fpr_max > 0.0 && fpr_max <= 1.0))
    throw ValidationError("partial_auc: fpr_max must lie in (0, 1]");
  const Roc roc = roc_curve(scores, labels);
  double area = 0.0;
  for (std::size_t k = 1; k < roc.fpr.size(); ++k) {
    const double x0 = roc.fpr[k - 1];
    const double x1 = roc.fpr[k];
    if (x0 >= fpr_max) break;
    if (x1 == x0) continue;
    const double y0 = roc.tpr[k - 1];
    const double y1 = roc.tpr[k];
    const double right = std::min(x1, fpr_max);
    const double y_right = y0 + (y1 - y0) * (right - x0) / (x1 - x0);
    area += 0.5 * (y0 + y_right) * (right - x0);
  }
  return area / fpr_max;
}

}  // namespace mkl
