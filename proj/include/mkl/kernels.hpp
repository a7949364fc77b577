#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace mkl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Symmetric n x n matrix of pairwise kernel values.
///
/// Construction checks squareness and symmetry
/// (|K_ij - K_ji| <= 1e-12 * max(1, |K_ij|)). Positive semidefiniteness is
/// not checked here; see check_psd.
class GramMatrix {
 public:
  GramMatrix() = default;
  explicit GramMatrix(Matrix entries);

  [[nodiscard]] std::size_t n() const { return static_cast<std::size_t>(entries_.rows()); }
  [[nodiscard]] const Matrix& entries() const { return entries_; }
  [[nodiscard]] double operator()(std::size_t i, std::size_t j) const {
    return entries_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  Matrix entries_;
};

/// M Gram matrices over one shared sample index set.
class KernelSet {
 public:
  KernelSet() = default;
  KernelSet(std::vector<GramMatrix> matrices, std::vector<std::string> names);

  [[nodiscard]] std::size_t size() const { return matrices_.size(); }
  [[nodiscard]] std::size_t n() const { return matrices_.empty() ? 0 : matrices_.front().n(); }
  [[nodiscard]] const GramMatrix& operator[](std::size_t m) const { return matrices_[m]; }
  [[nodiscard]] const std::vector<GramMatrix>& matrices() const { return matrices_; }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }

  /// Sum of all base kernels.
  [[nodiscard]] Matrix sum() const;

 private:
  std::vector<GramMatrix> matrices_;
  std::vector<std::string> names_;
};

struct LinearKernel {};
/// exp(-|x - x'|^2 / (2 bandwidth^2))
struct RbfKernel {
  double bandwidth = 1.0;
};
/// (<x, x'> + offset)^degree
struct PolynomialKernel {
  int degree = 2;
  double offset = 1.0;
};
/// Dot product of contiguous k-gram count vectors.
struct SpectrumKernel {
  int k = 1;
};
struct PrecomputedKernel {
  std::filesystem::path path;
};

using KernelKind =
    std::variant<LinearKernel, RbfKernel, PolynomialKernel, SpectrumKernel, PrecomputedKernel>;

struct KernelSpec {
  KernelKind kind = LinearKernel{};
  bool normalize = false;

  /// Throws ValidationError for bandwidth <= 0, degree < 1 or k < 1.
  void validate() const;
};

/// Parses "linear", "rbf:<bandwidth>", "poly:<degree>[:<offset>]",
/// "spectrum:<k>" or "precomputed:<path>".
KernelSpec parse_kernel_spec(const std::string& text, bool normalize);
std::string describe(const KernelSpec& spec);

/// One input item: a feature vector or a string.
using Sample = std::variant<Vector, std::string>;

/// Gram matrix of `spec` over `data`, normalized when spec.normalize is set.
/// Precomputed kernels are read from disk and `data` may be empty.
///
/// Throws ValidationError on empty data, mixed modality, a modality the
/// kernel cannot handle, vectors of differing dimension, or a zero-norm
/// sample under normalization.
GramMatrix compute_gram(const KernelSpec& spec, std::span<const Sample> data);

/// Rows are train samples, columns test samples: k(train_i, test_j).
/// Normalization uses the self-similarities of each side.
Matrix compute_cross(const KernelSpec& spec, std::span<const Sample> train,
                     std::span<const Sample> test);

/// K'_ij = K_ij / sqrt(K_ii K_jj). The returned diagonal is exactly 1.
GramMatrix normalize_gram(const GramMatrix& K);

struct PsdReport {
  bool checked = false;  // false when n exceeded the cap
  bool psd = true;
  double min_eigenvalue = 0.0;
  double threshold = 0.0;  // -tol * trace / n
};

inline constexpr std::size_t kDefaultPsdCap = 2000;

/// True iff the smallest eigenvalue is >= -tol * trace(K) / n. Matrices
/// larger than `cap` are skipped (checked = false) with a warning on stderr.
PsdReport check_psd(const GramMatrix& K, double tol = 1e-8, std::size_t cap = kDefaultPsdCap);

// Kernel matrix files. Text: "n" on the first line, then n rows of n reals.
// Binary: the magic "GRAM1", little-endian u64 n, n*n little-endian IEEE-754
// doubles in row-major order. read_gram detects the format from the magic.
GramMatrix read_gram(const std::filesystem::path& path);
void write_gram_text(const GramMatrix& K, const std::filesystem::path& path);
void write_gram_binary(const GramMatrix& K, const std::filesystem::path& path);

/// A general n_rows x n_cols matrix in the same text layout, with
/// "n_rows n_cols" on the first line. Used for cross-kernel matrices.
Matrix read_matrix(const std::filesystem::path& path);
void write_matrix_text(const Matrix& A, const std::filesystem::path& path);

/// One real per line.
Vector read_vector(const std::filesystem::path& path);
void write_vector(const Vector& v, const std::filesystem::path& path);

/// Feature vectors (one whitespace-separated row per line) or raw strings
/// (one per line).
std::vector<Sample> read_vector_samples(const std::filesystem::path& path);
std::vector<Sample> read_string_samples(const std::filesystem::path& path);

}  // namespace mkl
