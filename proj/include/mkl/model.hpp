#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mkl/objective.hpp"
#include "mkl/solver.hpp"
#include "mkl/weights.hpp"

namespace mkl {

/// What a model remembers about the solve that produced it.
struct SolveSummary {
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double projected_grad_norm = 0.0;
  double duality_gap = std::numeric_limits<double>::quiet_NaN();

  static SolveSummary from(const SolveResult& sol);
};

/// f(x) = sum_m theta_m sum_i v_i k_m(x_i, x), no bias term.
///
/// theta holds the weights at the scale used for prediction (raw
/// normalization), so scores need no further rescaling.
struct TrainedModel {
  Vector v;
  KernelWeights theta;
  MklConfig config;
  std::vector<std::string> kernel_names;
  std::size_t n_train = 0;
  SolveSummary diagnostics;

  /// Throws ValidationError if lengths disagree or a weight is negative.
  void validate() const;
};

/// Builds the model from a solve: v = alpha o y - gamma and the effective weights.
TrainedModel make_model(const SolveResult& sol, const KernelWeights& weights,
                        const LabeledProblem& prob);

/// One n_train x n_test matrix per base kernel.
struct CrossKernelSet {
  std::vector<Matrix> matrices;

  [[nodiscard]] std::size_t size() const { return matrices.size(); }
};

Vector predict_scores(const TrainedModel& model, const CrossKernelSet& cross);

/// Fraction of samples with sign(score) == label; a zero score counts as +1.
double accuracy(const Vector& scores, const Vector& labels);

/// Mann-Whitney statistic; tied positive/negative pairs get half credit.
double auc(const Vector& scores, const Vector& labels);

/// ROC area over false-positive rates [0, fpr_max], divided by fpr_max.
double partial_auc(const Vector& scores, const Vector& labels, double fpr_max);

/// Line-oriented text format, version 1:
///   MKLMODEL 1
///   p <real>
///   mu <real>
///   c <real>
///   loss <hinge|squared>
///   n <count>
///   M <count>
///   theta <M reals>
///   v <n reals>
///   names <M tokens>
///   diagnostics <objective> <iterations> <converged 0|1> <pg norm> <gap>
/// The diagnostics line is optional on input. Reals carry 17 significant digits.
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

std::string serialize_model(const TrainedModel& model);
TrainedModel parse_model(const std::string& text, const std::string& source = "<model>");

}  // namespace mkl
