#include "mkl/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "mkl/error.hpp"
#include "mkl/text.hpp"

namespace mkl {

namespace {

class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

void draw(NormalStream& stream, const Vector& mu, Matrix& x, Vector& y) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    y(i) = stream.uniform() < 0.5 ? -1.0 : 1.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = y(i) * mu(j) + stream.normal();
  }
}

std::vector<Sample> block_samples(const Matrix& x, Eigen::Index start, Eigen::Index width) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.emplace_back(Vector(x.row(i).segment(start, width)));
  return out;
}

}  // namespace

void Scenario::validate() const {
  if (M < 1 || block_dim < 1 || n_train < 1 || n_test < 1)
    throw ValidationError("scenario: M, block_dim, n_train and n_test must be >= 1");
  if (!(sparsity >= 0.0 && sparsity <= 1.0))
    throw ValidationError("scenario: sparsity must lie in [0, 1]");
  if (!(bayes_target > 0.0 && bayes_target < 0.5))
    throw ValidationError("scenario: bayes_target must lie in (0, 0.5)");
}

double normal_cdf(double x) { return boost::math::cdf(boost::math::normal_distribution<double>(), x); }

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("normal_quantile needs prob in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), prob);
}

Vector mean_vector(const Scenario& scn) {
  scn.validate();
  const double length = normal_quantile(1.0 - scn.bayes_target);
  Vector energy(scn.M);
  for (int m = 0; m < scn.M; ++m) energy(m) = (1.0 - scn.sparsity) + (m == 0 ? scn.sparsity : 0.0);
  energy /= energy.sum();

  Vector mu(static_cast<Eigen::Index>(scn.M) * scn.block_dim);
  for (int m = 0; m < scn.M; ++m) {
    // block norm^2 = energy_m * length^2, split evenly across coordinates
    const double coord = length * std::sqrt(energy(m) / scn.block_dim);
    mu.segment(static_cast<Eigen::Index>(m) * scn.block_dim, scn.block_dim).setConstant(coord);
  }
  return mu;
}

double bayes_error(const Scenario& scn) { return normal_cdf(-mean_vector(scn).norm()); }

SyntheticData generate(const Scenario& scn) {
  const Vector mu = mean_vector(scn);
  const Eigen::Index dim = mu.size();
  SyntheticData data;
  data.x_train.resize(scn.n_train, dim);
  data.y_train.resize(scn.n_train);
  data.x_test.resize(scn.n_test, dim);
  data.y_test.resize(scn.n_test);

  NormalStream stream(scn.seed);
  draw(stream, mu, data.x_train, data.y_train);
  draw(stream, mu, data.x_test, data.y_test);

  const KernelSpec spec{LinearKernel{}, true};
  std::vector<GramMatrix> grams;
  std::vector<std::string> names;
  for (int m = 0; m < scn.M; ++m) {
    const Eigen::Index start = static_cast<Eigen::Index>(m) * scn.block_dim;
    const auto train = block_samples(data.x_train, start, scn.block_dim);
    const auto test = block_samples(data.x_test, start, scn.block_dim);
    grams.push_back(compute_gram(spec, train));
    data.cross_kernels.matrices.push_back(compute_cross(spec, train, test));
    names.push_back("block" + std::to_string(m + 1));
  }
  data.train_kernels = KernelSet(std::move(grams), std::move(names));
  return data;
}

std::string scenario_manifest(const Scenario& scn) {
  std::string out;
  out += "M=" + std::to_string(scn.M) + "\n";
  out += "block_dim=" + std::to_string(scn.block_dim) + "\n";
  out += "sparsity=" + text::format_real(scn.sparsity) + "\n";
  out += "bayes_target=" + text::format_real(scn.bayes_target) + "\n";
  out += "n_train=" + std::to_string(scn.n_train) + "\n";
  out += "n_test=" + std::to_string(scn.n_test) + "\n";
  out += "seed=" + std::to_string(scn.seed) + "\n";
  out += "bayes_error=" + text::format_real(bayes_error(scn)) + "\n";
  out += "rng=mt19937_64\n";
  return out;
}

}  // namespace mkl
