#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>

#include "mkl/error.hpp"
#include "mkl/kernels.hpp"
#include "mkl/text.hpp"

namespace mkl {

namespace {

constexpr std::string_view kBinaryMagic = "GRAM1";

static_assert(std::endian::native == std::endian::little,
              "binary Gram I/O assumes a little-endian host");

// Splits file content into non-empty lines, remembering 1-based line numbers.
struct Line {
  std::size_t number;
  std::string_view text;
};

std::vector<Line> content_lines(std::string_view content) {
  std::vector<Line> out;
  std::size_t start = 0;
  std::size_t number = 1;
  while (start <= content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(start, end - start);
    if (!text::split_ws(line).empty()) out.push_back({number, line});
    start = end + 1;
    ++number;
  }
  return out;
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw IoError(path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_at(const std::filesystem::path& path, std::size_t line, std::string_view token) {
  try {
    return text::parse_real(token);
  } catch (const IoError& e) {
    fail(path, line, e.what());
  }
}

Matrix parse_text_matrix(const std::filesystem::path& path, std::string_view content,
                         bool require_square) {
  const auto lines = content_lines(content);
  if (lines.empty()) throw IoError(path.string() + ": empty matrix file");
  const auto header = text::split_ws(lines.front().text);
  long long rows = 0;
  long long cols = 0;
  try {
    if (header.size() == 1) {
      rows = cols = text::parse_int(header[0]);
    } else if (header.size() == 2 && !require_square) {
      rows = text::parse_int(header[0]);
      cols = text::parse_int(header[1]);
    } else {
      fail(path, lines.front().number, "bad header");
    }
  } catch (const IoError& e) {
    fail(path, lines.front().number, std::string("bad header: ") + e.what());
  }
  if (rows < 1 || cols < 1) fail(path, lines.front().number, "matrix dimensions must be >= 1");
  if (static_cast<long long>(lines.size()) - 1 != rows)
    throw IoError(path.string() + ": expected " + std::to_string(rows) + " rows, found " +
                  std::to_string(lines.size() - 1));
  Matrix A(rows, cols);
  for (long long i = 0; i < rows; ++i) {
    const auto& line = lines[static_cast<std::size_t>(i + 1)];
    const auto tokens = text::split_ws(line.text);
    if (static_cast<long long>(tokens.size()) != cols)
      fail(path, line.number,
           "expected " + std::to_string(cols) + " values, found " + std::to_string(tokens.size()));
    for (long long j = 0; j < cols; ++j)
      A(i, j) = parse_at(path, line.number, tokens[static_cast<std::size_t>(j)]);
  }
  return A;
}

std::string matrix_rows_text(const Matrix& A) {
  std::string out;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (j) out += ' ';
      out += text::format_real(A(i, j));
    }
    out += '\n';
  }
  return out;
}

}  // namespace

GramMatrix read_gram(const std::filesystem::path& path) {
  const std::string content = text::read_file(path);
  Matrix A;
  if (content.compare(0, kBinaryMagic.size(), kBinaryMagic) == 0) {
    constexpr std::size_t header = kBinaryMagic.size() + sizeof(std::uint64_t);
    if (content.size() < header)
      throw IoError(path.string() + ": truncated binary header at byte " +
                    std::to_string(content.size()));
    std::uint64_t n = 0;
    std::memcpy(&n, content.data() + kBinaryMagic.size(), sizeof n);
    if (n == 0 || n > (std::uint64_t{1} << 20))
      throw IoError(path.string() + ": implausible binary size n=" + std::to_string(n));
    const std::size_t expected = header + n * n * sizeof(double);
    if (content.size() != expected)
      throw IoError(path.string() + ": binary Gram file has " + std::to_string(content.size()) +
                    " bytes, expected " + std::to_string(expected));
    A.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    // Row-major on disk, column-major in Eigen.
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> disk(
        reinterpret_cast<const double*>(content.data() + header), static_cast<Eigen::Index>(n),
        static_cast<Eigen::Index>(n));
    A = disk;
  } else {
    A = parse_text_matrix(path, content, true);
  }
  try {
    return GramMatrix(std::move(A));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_gram_text(const GramMatrix& K, const std::filesystem::path& path) {
  text::write_atomic(path, std::to_string(K.n()) + "\n" + matrix_rows_text(K.entries()));
}

void write_gram_binary(const GramMatrix& K, const std::filesystem::path& path) {
  std::string out(kBinaryMagic);
  const std::uint64_t n = K.n();
  out.append(reinterpret_cast<const char*>(&n), sizeof n);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = K.entries();
  out.append(reinterpret_cast<const char*>(rows.data()),
             static_cast<std::size_t>(rows.size()) * sizeof(double));
  text::write_atomic(path, out);
}

Matrix read_matrix(const std::filesystem::path& path) {
  return parse_text_matrix(path, text::read_file(path), false);
}

void write_matrix_text(const Matrix& A, const std::filesystem::path& path) {
  text::write_atomic(path, std::to_string(A.rows()) + " " + std::to_string(A.cols()) + "\n" +
                               matrix_rows_text(A));
}

Vector read_vector(const std::filesystem::path& path) {
  const std::string content = text::read_file(path);
  const auto lines = content_lines(content);
  Vector v(static_cast<Eigen::Index>(lines.size()));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto tokens = text::split_ws(lines[i].text);
    if (tokens.size() != 1) fail(path, lines[i].number, "expected one value per line");
    v(static_cast<Eigen::Index>(i)) = parse_at(path, lines[i].number, tokens[0]);
  }
  return v;
}

void write_vector(const Vector& v, const std::filesystem::path& path) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out += text::format_real(v(i));
    out += '\n';
  }
  text::write_atomic(path, out);
}

std::vector<Sample> read_vector_samples(const std::filesystem::path& path) {
  std::vector<Sample> out;
  const std::string content = text::read_file(path);
  for (const auto& line : content_lines(content)) {
    const auto tokens = text::split_ws(line.text);
    Vector x(static_cast<Eigen::Index>(tokens.size()));
    for (std::size_t j = 0; j < tokens.size(); ++j)
      x(static_cast<Eigen::Index>(j)) = parse_at(path, line.number, tokens[j]);
    out.emplace_back(std::move(x));
  }
  return out;
}

std::vector<Sample> read_string_samples(const std::filesystem::path& path) {
  std::vector<Sample> out;
  const std::string content = text::read_file(path);
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.emplace_back(line);
  }
  return out;
}

}  // namespace mkl
