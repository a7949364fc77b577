#pragma once

#include <cstdint>
#include <string>

#include "mkl/kernels.hpp"
#include "mkl/model.hpp"

namespace mkl {

/// Two Gaussian classes x | y ~ N(y mu, I) over M blocks of block_dim
/// coordinates. sparsity = 1 puts all of mu in the first block, sparsity = 0
/// spreads it evenly; |mu| is set so that the Bayes error is bayes_target.
struct Scenario {
  int M = 6;
  int block_dim = 5;
  double sparsity = 1.0;
  double bayes_target = 0.1;
  int n_train = 500;
  int n_test = 2000;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Concatenated class mean, length M * block_dim.
Vector mean_vector(const Scenario& scn);

/// Phi(-|mu|).
double bayes_error(const Scenario& scn);

/// Standard normal CDF and its inverse.
double normal_cdf(double x);
double normal_quantile(double prob);

struct SyntheticData {
  Matrix x_train;  // n_train x (M * block_dim)
  Matrix x_test;
  Vector y_train;
  Vector y_test;
  KernelSet train_kernels;     // one normalized linear kernel per block
  CrossKernelSet cross_kernels; // n_train x n_test, same normalization
};

/// Deterministic in scn.seed. The stream is std::mt19937_64(seed); a uniform
/// is (next() >> 11) * 2^-53, and normals come in pairs from Box-Muller on
/// (1 - u1, u2). Training samples are drawn before test samples, each as a
/// label (u < 0.5 gives -1) followed by its M * block_dim noise coordinates.
SyntheticData generate(const Scenario& scn);

/// key=value text listing every scenario field.
std::string scenario_manifest(const Scenario& scn);

}  // namespace mkl
