#include "mkl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>

#include "mkl/error.hpp"
#include "mkl/text.hpp"

namespace mkl {

namespace {

constexpr double kSymmetryTol = 1e-12;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Runs body(row) for every row in [0, rows) on a few worker threads. Each row
// is owned by exactly one thread, so results do not depend on scheduling.
template <class Body>
void parallel_rows(std::size_t rows, Body&& body) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(hw, rows < 64 ? 1 : rows / 32);
  if (workers <= 1) {
    for (std::size_t i = 0; i < rows; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < rows; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Sparse k-gram count vector, sorted by gram id.
using GramCounts = std::vector<std::pair<std::size_t, double>>;

std::vector<GramCounts> spectrum_features(std::span<const std::string* const> strings, int k,
                                          std::unordered_map<std::string_view, std::size_t>& ids) {
  std::vector<GramCounts> out;
  out.reserve(strings.size());
  for (const std::string* s : strings) {
    std::map<std::size_t, double> counts;
    const auto len = static_cast<int>(s->size());
    for (int i = 0; i + k <= len; ++i) {
      std::string_view gram(s->data() + i, static_cast<std::size_t>(k));
      auto [it, inserted] = ids.try_emplace(gram, ids.size());
      counts[it->second] += 1.0;
    }
    out.emplace_back(counts.begin(), counts.end());
  }
  return out;
}

double sparse_dot(const GramCounts& a, const GramCounts& b) {
  double acc = 0.0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (i->first < j->first) {
      ++i;
    } else if (j->first < i->first) {
      ++j;
    } else {
      acc += i->second * j->second;
      ++i;
      ++j;
    }
  }
  return acc;
}

enum class Modality { kVector, kString };

Modality modality_of(std::span<const Sample> data, const char* what) {
  if (data.empty()) throw ValidationError(std::string(what) + ": empty data");
  const bool first_is_vector = std::holds_alternative<Vector>(data.front());
  for (const auto& s : data) {
    if (std::holds_alternative<Vector>(s) != first_is_vector)
      throw ValidationError(std::string(what) + ": mixed vector and string samples");
  }
  if (first_is_vector) {
    const auto dim = std::get<Vector>(data.front()).size();
    for (const auto& s : data) {
      if (std::get<Vector>(s).size() != dim)
        throw ValidationError(std::string(what) + ": feature vectors differ in dimension");
    }
    return Modality::kVector;
  }
  return Modality::kString;
}

// Raw (unnormalized) kernel between two sample lists. When `same` is set the
// lists are identical and only the upper triangle is evaluated, then mirrored.
Matrix raw_kernel(const KernelSpec& spec, std::span<const Sample> a, std::span<const Sample> b,
                  bool same) {
  const Modality ma = modality_of(a, "compute_gram");
  const Modality mb = modality_of(b, "compute_gram");
  if (ma != mb) throw ValidationError("compute_gram: train and test modalities differ");
  const bool wants_strings = std::holds_alternative<SpectrumKernel>(spec.kind);
  if (wants_strings != (ma == Modality::kString))
    throw ValidationError("compute_gram: " + describe(spec) + " cannot be evaluated on " +
                          (ma == Modality::kString ? "strings" : "feature vectors"));
  if (ma == Modality::kVector &&
      std::get<Vector>(a.front()).size() != std::get<Vector>(b.front()).size())
    throw ValidationError("compute_gram: train and test dimensions differ");

  const auto rows = a.size();
  const auto cols = b.size();
  Matrix K(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));

  if (const auto* spectrum = std::get_if<SpectrumKernel>(&spec.kind)) {
    std::vector<const std::string*> all;
    for (const auto& s : a) all.push_back(&std::get<std::string>(s));
    if (!same)
      for (const auto& s : b) all.push_back(&std::get<std::string>(s));
    std::unordered_map<std::string_view, std::size_t> ids;
    const auto feats = spectrum_features(all, spectrum->k, ids);
    const std::size_t offset = same ? 0 : rows;
    parallel_rows(rows, [&](std::size_t i) {
      for (std::size_t j = same ? i : 0; j < cols; ++j)
        K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            sparse_dot(feats[i], feats[offset + j]);
    });
  } else {
    auto entry = std::visit(
        Overloaded{
            [](const LinearKernel&) {
              return std::function<double(const Vector&, const Vector&)>(
                  [](const Vector& x, const Vector& z) { return x.dot(z); });
            },
            [](const RbfKernel& k) {
              const double scale = 1.0 / (2.0 * k.bandwidth * k.bandwidth);
              return std::function<double(const Vector&, const Vector&)>(
                  [scale](const Vector& x, const Vector& z) {
                    return std::exp(-scale * (x - z).squaredNorm());
                  });
            },
            [](const PolynomialKernel& k) {
              return std::function<double(const Vector&, const Vector&)>(
                  [k](const Vector& x, const Vector& z) {
                    return std::pow(x.dot(z) + k.offset, k.degree);
                  });
            },
            [](const auto&) -> std::function<double(const Vector&, const Vector&)> {
              throw ValidationError("compute_gram: kernel has no feature-vector form");
            },
        },
        spec.kind);
    parallel_rows(rows, [&](std::size_t i) {
      const auto& x = std::get<Vector>(a[i]);
      for (std::size_t j = same ? i : 0; j < cols; ++j)
        K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            entry(x, std::get<Vector>(b[j]));
    });
  }

  if (same) {
    for (Eigen::Index i = 0; i < K.rows(); ++i)
      for (Eigen::Index j = 0; j < i; ++j) K(i, j) = K(j, i);
  }
  return K;
}

Vector self_similarity(const KernelSpec& spec, std::span<const Sample> data) {
  Vector diag(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    diag(static_cast<Eigen::Index>(i)) = raw_kernel(spec, data.subspan(i, 1), data.subspan(i, 1), true)(0, 0);
  }
  return diag;
}

void require_positive_diag(const Vector& diag, const char* side) {
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (!(diag(i) > 0.0))
      throw ValidationError(std::string("normalization: ") + side + "sample " + std::to_string(i) +
                            " has nonpositive self-similarity " + text::format_real(diag(i)));
  }
}

}  // namespace

GramMatrix::GramMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols())
    throw ValidationError("Gram matrix is not square: " + std::to_string(entries_.rows()) + "x" +
                          std::to_string(entries_.cols()));
  for (Eigen::Index i = 0; i < entries_.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < entries_.cols(); ++j) {
      const double a = entries_(i, j);
      const double b = entries_(j, i);
      if (!std::isfinite(a) || !std::isfinite(b))
        throw ValidationError("Gram matrix has a non-finite entry at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
      if (std::abs(a - b) > kSymmetryTol * std::max(1.0, std::abs(a)))
        throw ValidationError("Gram matrix is not symmetric at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
    }
    if (!std::isfinite(entries_(i, i)))
      throw ValidationError("Gram matrix has a non-finite diagonal entry " + std::to_string(i));
  }
}

KernelSet::KernelSet(std::vector<GramMatrix> matrices, std::vector<std::string> names)
    : matrices_(std::move(matrices)), names_(std::move(names)) {
  if (matrices_.empty()) throw ValidationError("kernel set needs at least one matrix");
  if (names_.empty()) {
    for (std::size_t m = 0; m < matrices_.size(); ++m) names_.push_back("k" + std::to_string(m));
  }
  if (names_.size() != matrices_.size())
    throw ValidationError("kernel set: " + std::to_string(matrices_.size()) + " matrices but " +
                          std::to_string(names_.size()) + " names");
  for (const auto& K : matrices_) {
    if (K.n() != matrices_.front().n())
      throw ValidationError("kernel set: matrices differ in size (" + std::to_string(K.n()) +
                            " vs " + std::to_string(matrices_.front().n()) + ")");
  }
}

Matrix KernelSet::sum() const {
  Matrix total = Matrix::Zero(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(n()));
  for (const auto& K : matrices_) total += K.entries();
  return total;
}

void KernelSpec::validate() const {
  std::visit(Overloaded{
                 [](const RbfKernel& k) {
                   if (!(k.bandwidth > 0.0)) throw ValidationError("rbf bandwidth must be > 0");
                 },
                 [](const PolynomialKernel& k) {
                   if (k.degree < 1) throw ValidationError("polynomial degree must be >= 1");
                 },
                 [](const SpectrumKernel& k) {
                   if (k.k < 1) throw ValidationError("spectrum k must be >= 1");
                 },
                 [](const auto&) {},
             },
             kind);
}

KernelSpec parse_kernel_spec(const std::string& text_spec, bool normalize) {
  KernelSpec spec;
  spec.normalize = normalize;
  const auto colon = text_spec.find(':');
  const std::string head = text_spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text_spec.substr(colon + 1);
  auto need_arg = [&] {
    if (rest.empty()) throw ValidationError("kernel '" + head + "' needs a parameter");
  };
  if (head == "linear") {
    spec.kind = LinearKernel{};
  } else if (head == "rbf") {
    need_arg();
    spec.kind = RbfKernel{text::parse_real(rest)};
  } else if (head == "poly" || head == "polynomial") {
    need_arg();
    PolynomialKernel k;
    const auto c2 = rest.find(':');
    k.degree = static_cast<int>(text::parse_int(rest.substr(0, c2)));
    if (c2 != std::string::npos) k.offset = text::parse_real(rest.substr(c2 + 1));
    spec.kind = k;
  } else if (head == "spectrum") {
    need_arg();
    spec.kind = SpectrumKernel{static_cast<int>(text::parse_int(rest))};
  } else if (head == "precomputed") {
    need_arg();
    spec.kind = PrecomputedKernel{rest};
  } else {
    throw ValidationError("unknown kernel kind '" + head + "'");
  }
  spec.validate();
  return spec;
}

std::string describe(const KernelSpec& spec) {
  return std::visit(
      Overloaded{
          [](const LinearKernel&) { return std::string("linear"); },
          [](const RbfKernel& k) { return "rbf:" + text::format_real(k.bandwidth); },
          [](const PolynomialKernel& k) {
            return "poly:" + std::to_string(k.degree) + ":" + text::format_real(k.offset);
          },
          [](const SpectrumKernel& k) { return "spectrum:" + std::to_string(k.k); },
          [](const PrecomputedKernel& k) { return "precomputed:" + k.path.string(); },
      },
      spec.kind);
}

GramMatrix compute_gram(const KernelSpec& spec, std::span<const Sample> data) {
  spec.validate();
  if (const auto* pre = std::get_if<PrecomputedKernel>(&spec.kind)) {
    GramMatrix K = read_gram(pre->path);
    if (!data.empty() && K.n() != data.size())
      throw ValidationError("precomputed kernel " + pre->path.string() + " has n=" +
                            std::to_string(K.n()) + " but " + std::to_string(data.size()) +
                            " samples were given");
    return spec.normalize ? normalize_gram(K) : K;
  }
  GramMatrix K(raw_kernel(spec, data, data, true));
  if (!spec.normalize) return K;
  return normalize_gram(K);
}

Matrix compute_cross(const KernelSpec& spec, std::span<const Sample> train,
                     std::span<const Sample> test) {
  spec.validate();
  if (std::holds_alternative<PrecomputedKernel>(spec.kind))
    throw ValidationError("compute_cross: precomputed kernels must be supplied as matrices");
  Matrix K = raw_kernel(spec, train, test, false);
  if (!spec.normalize) return K;
  const Vector dtrain = self_similarity(spec, train);
  const Vector dtest = self_similarity(spec, test);
  require_positive_diag(dtrain, "train ");
  require_positive_diag(dtest, "test ");
  const Vector itrain = dtrain.array().sqrt().inverse();
  const Vector itest = dtest.array().sqrt().inverse();
  return itrain.asDiagonal() * K * itest.asDiagonal();
}

GramMatrix normalize_gram(const GramMatrix& K) {
  const Vector diag = K.entries().diagonal();
  require_positive_diag(diag, "");
  const Vector inv = diag.array().sqrt().inverse();
  Matrix out = inv.asDiagonal() * K.entries() * inv.asDiagonal();
  // Exact symmetry and unit diagonal, independent of rounding above.
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) out(i, j) = out(j, i);
  }
  return GramMatrix(std::move(out));
}

PsdReport check_psd(const GramMatrix& K, double tol, std::size_t cap) {
  PsdReport report;
  const auto n = K.n();
  if (n == 0) return report;
  report.threshold = -tol * K.entries().trace() / static_cast<double>(n);
  if (n > cap) {
    std::clog << "warning: PSD check skipped for n=" << n << " (cap " << cap << ")\n";
    return report;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(K.entries(), Eigen::EigenvaluesOnly);
  report.checked = true;
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  report.psd = report.min_eigenvalue >= report.threshold;
  return report;
}

}  // namespace mkl
