#include "mkl/model.hpp"

#include <cmath>
#include <optional>

#include "mkl/error.hpp"
#include "mkl/text.hpp"

namespace mkl {

namespace {

constexpr int kModelVersion = 1;

// Walks a model file line by line, remembering where each line starts so
// errors can point at a byte offset.
class LineReader {
 public:
  LineReader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

  // Next non-empty line, or nullopt at end of input.
  std::optional<std::vector<std::string_view>> next() {
    while (pos_ < text_.size()) {
      line_start_ = pos_;
      std::size_t end = text_.find('\n', pos_);
      if (end == std::string::npos) end = text_.size();
      const std::string_view line(text_.data() + pos_, end - pos_);
      pos_ = end < text_.size() ? end + 1 : end;
      auto tokens = text::split_ws(line);
      if (!tokens.empty()) return tokens;
    }
    line_start_ = text_.size();
    return std::nullopt;
  }

  // The next line, which must begin with `key` and carry `count` values.
  std::vector<std::string_view> expect(std::string_view key, std::size_t count) {
    auto tokens = next();
    if (!tokens) fail("truncated: expected '" + std::string(key) + "'");
    if ((*tokens)[0] != key)
      fail("expected '" + std::string(key) + "', found '" + std::string((*tokens)[0]) + "'");
    if (tokens->size() != count + 1) {
      const bool last = pos_ >= text_.size();
      fail(std::string(last && tokens->size() < count + 1 ? "truncated: " : "") + "'" +
           std::string(key) + "' needs " + std::to_string(count) + " values, found " +
           std::to_string(tokens->size() - 1));
    }
    tokens->erase(tokens->begin());
    return *tokens;
  }

  double real(std::string_view token) {
    try {
      return text::parse_real(token);
    } catch (const IoError& e) {
      fail(e.what());
    }
  }

  std::size_t count(std::string_view token) {
    long long value = 0;
    try {
      value = text::parse_int(token);
    } catch (const IoError& e) {
      fail(e.what());
    }
    if (value < 0) fail("negative count");
    return static_cast<std::size_t>(value);
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw IoError(source_ + ": byte " + std::to_string(line_start_) + ": " + message);
  }

 private:
  const std::string& text_;
  std::string source_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
};

void append_line(std::string& out, std::string_view key, std::string_view value) {
  out += key;
  out += ' ';
  out += value;
  out += '\n';
}

}  // namespace

SolveSummary SolveSummary::from(const SolveResult& sol) {
  return {sol.objective, sol.iterations, sol.converged, sol.projected_grad_norm, sol.duality_gap};
}

void TrainedModel::validate() const {
  config.validate();
  if (static_cast<std::size_t>(v.size()) != n_train)
    throw ValidationError("model: v has length " + std::to_string(v.size()) + ", n=" +
                          std::to_string(n_train));
  if (static_cast<std::size_t>(theta.theta.size()) != kernel_names.size())
    throw ValidationError("model: " + std::to_string(theta.theta.size()) + " weights for " +
                          std::to_string(kernel_names.size()) + " kernel names");
  if ((theta.theta.array() < 0.0).any()) throw ValidationError("model: negative kernel weight");
  for (const auto& name : kernel_names)
    if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos)
      throw ValidationError("model: kernel name '" + name + "' must be a non-empty token");
}

TrainedModel make_model(const SolveResult& sol, const KernelWeights& weights,
                        const LabeledProblem& prob) {
  TrainedModel model;
  model.v = expansion_coefficients(sol.point, prob.labels());
  model.theta.theta = weights.effective();
  model.theta.normalization = WeightNormalization::kRaw;
  model.theta.scale = 1.0;
  model.config = prob.config();
  model.kernel_names = prob.kernels().names();
  model.n_train = prob.n();
  model.diagnostics = SolveSummary::from(sol);
  model.validate();
  return model;
}

Vector predict_scores(const TrainedModel& model, const CrossKernelSet& cross) {
  const Vector theta = model.theta.effective();
  if (cross.size() != static_cast<std::size_t>(theta.size()))
    throw ValidationError("predict: model has " + std::to_string(theta.size()) +
                          " kernels, got " + std::to_string(cross.size()) + " cross matrices");
  if (cross.matrices.empty()) throw ValidationError("predict: no cross matrices");
  const Eigen::Index n_test = cross.matrices.front().cols();
  Vector scores = Vector::Zero(n_test);
  for (std::size_t m = 0; m < cross.size(); ++m) {
    const Matrix& k = cross.matrices[m];
    if (k.rows() != model.v.size() || k.cols() != n_test)
      throw ValidationError("predict: cross matrix " + std::to_string(m) + " is " +
                            std::to_string(k.rows()) + "x" + std::to_string(k.cols()) +
                            ", expected " + std::to_string(model.v.size()) + "x" +
                            std::to_string(n_test));
    const double w = theta(static_cast<Eigen::Index>(m));
    if (w != 0.0) scores.noalias() += w * (k.transpose() * model.v);
  }
  return scores;
}

std::string serialize_model(const TrainedModel& model) {
  model.validate();
  using text::format_real;
  std::string out = "MKLMODEL " + std::to_string(kModelVersion) + "\n";
  append_line(out, "p", format_real(model.config.p));
  append_line(out, "mu", format_real(model.config.mu));
  append_line(out, "c", format_real(model.config.c));
  append_line(out, "loss", to_string(model.config.loss));
  append_line(out, "n", std::to_string(model.n_train));
  append_line(out, "M", std::to_string(model.kernel_names.size()));
  const Vector theta = model.theta.effective();
  std::string row = "theta";
  for (Eigen::Index m = 0; m < theta.size(); ++m) row += " " + format_real(theta(m));
  out += row + "\n";
  row = "v";
  for (Eigen::Index i = 0; i < model.v.size(); ++i) row += " " + format_real(model.v(i));
  out += row + "\n";
  row = "names";
  for (const auto& name : model.kernel_names) row += " " + name;
  out += row + "\n";
  const SolveSummary& d = model.diagnostics;
  out += "diagnostics " + format_real(d.objective) + " " + std::to_string(d.iterations) + " " +
         (d.converged ? "1" : "0") + " " + format_real(d.projected_grad_norm) + " " +
         format_real(d.duality_gap) + "\n";
  return out;
}

TrainedModel parse_model(const std::string& content, const std::string& source) {
  LineReader in(content, source);
  const auto header = in.next();
  if (!header) in.fail("truncated: empty model file");
  if ((*header)[0] != "MKLMODEL") in.fail("not a model file (missing MKLMODEL header)");
  if (header->size() != 2) in.fail("malformed MKLMODEL header");
  if ((*header)[1] != std::to_string(kModelVersion))
    in.fail("unsupported model version '" + std::string((*header)[1]) + "' (this build reads version " +
            std::to_string(kModelVersion) + ")");

  TrainedModel model;
  model.config.p = in.real(in.expect("p", 1)[0]);
  model.config.mu = in.real(in.expect("mu", 1)[0]);
  model.config.c = in.real(in.expect("c", 1)[0]);
  try {
    model.config.loss = parse_loss(std::string(in.expect("loss", 1)[0]));
  } catch (const ValidationError& e) {
    in.fail(e.what());
  }
  model.n_train = in.count(in.expect("n", 1)[0]);
  const std::size_t num = in.count(in.expect("M", 1)[0]);

  const auto theta = in.expect("theta", num);
  model.theta.theta.resize(static_cast<Eigen::Index>(num));
  for (std::size_t m = 0; m < num; ++m) model.theta.theta(static_cast<Eigen::Index>(m)) = in.real(theta[m]);
  model.theta.normalization = WeightNormalization::kRaw;
  model.theta.scale = 1.0;

  const auto v = in.expect("v", model.n_train);
  model.v.resize(static_cast<Eigen::Index>(model.n_train));
  for (std::size_t i = 0; i < model.n_train; ++i) model.v(static_cast<Eigen::Index>(i)) = in.real(v[i]);

  for (auto name : in.expect("names", num)) model.kernel_names.emplace_back(name);

  if (auto extra = in.next()) {
    if ((*extra)[0] != "diagnostics" || extra->size() != 6) in.fail("unexpected content after names");
    SolveSummary& d = model.diagnostics;
    d.objective = in.real((*extra)[1]);
    d.iterations = static_cast<int>(in.count((*extra)[2]));
    if ((*extra)[3] != "0" && (*extra)[3] != "1") in.fail("converged flag must be 0 or 1");
    d.converged = (*extra)[3] == "1";
    d.projected_grad_norm = in.real((*extra)[4]);
    d.duality_gap = in.real((*extra)[5]);
    if (in.next()) in.fail("unexpected content after diagnostics");
  }

  try {
    model.validate();
  } catch (const ValidationError& e) {
    throw IoError(source + ": " + e.what());
  }
  return model;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  text::write_atomic(path, serialize_model(model));
}

TrainedModel load_model(const std::filesystem::path& path) {
  return parse_model(text::read_file(path), path.string());
}

}  // namespace mkl
