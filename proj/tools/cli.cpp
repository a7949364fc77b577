#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "mkl/bounds.hpp"
#include "mkl/error.hpp"
#include "mkl/kernels.hpp"
#include "mkl/model.hpp"
#include "mkl/text.hpp"
#include "mkl/weights.hpp"

namespace mkl::cli {

namespace fs = std::filesystem;
using text::format_real;

std::string sha256_file(const fs::path& path) {
  const std::string bytes = text::read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 failed for " + path.string());
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

namespace {

// A real number or a ratio such as 4/3.
double parse_fraction(const std::string& token, const std::string& what) {
  auto real = [&](const std::string& part) {
    try {
      return text::parse_real(part);
    } catch (const IoError&) {
      throw ValidationError(what + ": cannot parse '" + token + "'");
    }
  };
  const auto slash = token.find('/');
  if (slash == std::string::npos) return real(token);
  const double num = real(token.substr(0, slash));
  const double den = real(token.substr(slash + 1));
  if (!(den != 0.0)) throw ValidationError(what + ": zero denominator in '" + token + "'");
  return num / den;
}

}  // namespace

double parse_p(const std::string& token, double mu) {
  if (token == "inf") return kMaxP;
  const double value = parse_fraction(token, "p");
  if (std::isnan(value) || value < 1.0) throw ValidationError("p must be >= 1, got '" + token + "'");
  if (value == 1.0) {
    if (mu == 0.0)
      throw ValidationError(
          "p = 1 needs mu > 0: the objective is degenerate at p = 1 without the elastic-net term "
          "(use --mu > 0, or --p 64/63 for the l1 approximation)");
    return kMinP;
  }
  if (std::isinf(value)) return kMaxP;
  return clamp_p(value);
}

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// key=value record of one command run, written next to its outputs.
class Manifest {
 public:
  explicit Manifest(std::string command)
      : command_(std::move(command)), started_(utc_now()), clock_(std::chrono::steady_clock::now()) {}

  void param(const std::string& key, const std::string& value) { params_.emplace_back(key, value); }
  void param(const std::string& key, double value) { param(key, format_real(value)); }
  void input(const fs::path& path) {
    inputs_.emplace_back(path.string(), sha256_file(path));
  }
  void output(const fs::path& path) { outputs_.push_back(path.string()); }
  void result(const std::string& key, const std::string& value) { results_.emplace_back(key, value); }
  void result(const std::string& key, double value) { result(key, format_real(value)); }

  void write(const fs::path& path) const {
    std::string out = "command=" + command_ + "\n";
    out += "version=" + std::string(kVersion) + "\n";
    for (const auto& [k, v] : params_) out += "param." + k + "=" + v + "\n";
    for (std::size_t i = 0; i < inputs_.size(); ++i)
      out += "input." + std::to_string(i) + "=" + inputs_[i].first + " sha256:" + inputs_[i].second + "\n";
    for (std::size_t i = 0; i < outputs_.size(); ++i)
      out += "output." + std::to_string(i) + "=" + outputs_[i] + "\n";
    for (const auto& [k, v] : results_) out += "result." + k + "=" + v + "\n";
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_).count();
    out += "wall_clock.start=" + started_ + "\n";
    out += "wall_clock.seconds=" + format_real(elapsed) + "\n";
    text::write_atomic(path, out);
  }

 private:
  std::string command_;
  std::string started_;
  std::chrono::steady_clock::time_point clock_;
  std::vector<std::pair<std::string, std::string>> params_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> outputs_;
  std::vector<std::pair<std::string, std::string>> results_;
};

fs::path manifest_for(const fs::path& output, const std::string& override_path) {
  return override_path.empty() ? fs::path(output.string() + ".manifest") : fs::path(override_path);
}

std::string join(const std::vector<std::string>& items, const std::string& sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

std::string kernel_name_from(const fs::path& path) {
  std::string name = path.stem().string();
  for (char& ch : name)
    if (std::isspace(static_cast<unsigned char>(ch))) ch = '_';
  return name.empty() ? "kernel" : name;
}

void add_solver_options(CLI::App* sub, SolverConfig& cfg) {
  sub->add_option("--tol", cfg.tol, "projected-gradient tolerance")->capture_default_str();
  sub->add_option("--max-iter", cfg.max_iter, "iteration cap")->capture_default_str();
  sub->add_option("--history", cfg.history, "curvature pairs kept")->capture_default_str();
  sub->add_option("--solver-seed", cfg.seed, "0: deterministic start; otherwise seeded start")
      ->capture_default_str();
}

void add_scenario_options(CLI::App* sub, Scenario& scn) {
  sub->add_option("--M", scn.M, "number of blocks / kernels")->capture_default_str();
  sub->add_option("--block-dim", scn.block_dim, "coordinates per block")->capture_default_str();
  sub->add_option("--bayes", scn.bayes_target, "target Bayes error")->capture_default_str();
  sub->add_option("--n-train", scn.n_train, "training samples")->capture_default_str();
  sub->add_option("--n-test", scn.n_test, "test samples")->capture_default_str();
}

void print_metrics(std::ostream& out, const Vector& scores, const Vector& labels, double fpr_max,
                   Manifest* manifest) {
  const double acc = accuracy(scores, labels);
  const double area = auc(scores, labels);
  const double partial = partial_auc(scores, labels, fpr_max);
  out << "accuracy " << format_real(acc) << "\n";
  out << "error " << format_real(1.0 - acc) << "\n";
  out << "auc " << format_real(area) << "\n";
  std::ostringstream range;
  range << fpr_max;
  out << "partial_auc@" << range.str() << " " << format_real(partial) << "\n";
  if (manifest) {
    manifest->result("accuracy", acc);
    manifest->result("auc", area);
    manifest->result("partial_auc", partial);
  }
}

// ---- gram ----

struct GramArgs {
  std::string kernel;
  std::string data;
  std::string test_data;
  std::string out;
  std::string cross_out;
  std::string manifest;
  bool strings = false;
  bool normalize = false;
  bool binary = false;
  double psd_tol = 1e-8;
};

int cmd_gram(const GramArgs& a, std::ostream& out, std::ostream& err) {
  Manifest man("gram");
  const KernelSpec spec = parse_kernel_spec(a.kernel, a.normalize);
  man.param("kernel", describe(spec));
  man.param("normalize", a.normalize ? "true" : "false");

  auto load = [&](const std::string& path) {
    if (path.empty()) return std::vector<Sample>{};
    man.input(path);
    return a.strings ? read_string_samples(path) : read_vector_samples(path);
  };
  const auto train = load(a.data);
  if (std::holds_alternative<PrecomputedKernel>(spec.kind))
    man.input(std::get<PrecomputedKernel>(spec.kind).path);

  const GramMatrix gram = compute_gram(spec, train);
  const PsdReport psd = check_psd(gram, a.psd_tol);
  if (psd.checked && !psd.psd)
    err << "warning: kernel matrix is not positive semidefinite (min eigenvalue "
        << format_real(psd.min_eigenvalue) << ")\n";
  if (a.binary) {
    write_gram_binary(gram, a.out);
  } else {
    write_gram_text(gram, a.out);
  }
  man.output(a.out);
  man.result("n", std::to_string(gram.n()));
  man.result("psd_checked", psd.checked ? "true" : "false");
  man.result("min_eigenvalue", psd.min_eigenvalue);

  if (!a.test_data.empty()) {
    if (a.cross_out.empty()) throw ValidationError("--test-data needs --cross-out");
    const auto test = load(a.test_data);
    write_matrix_text(compute_cross(spec, train, test), a.cross_out);
    man.output(a.cross_out);
  }
  man.write(manifest_for(a.out, a.manifest));
  out << "wrote " << a.out << " (n=" << gram.n() << ")\n";
  return kOk;
}

// ---- train ----

struct TrainArgs {
  std::vector<std::string> kernels;
  std::vector<std::string> names;
  std::string labels;
  std::string out;
  std::string manifest;
  std::string p = "2";
  double mu = 0.0;
  double c = 1.0;
  std::string loss = "hinge";
  double smooth_eps = 1e-12;
  double en_eps = 0.01;
  SolverConfig solver;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  Manifest man("train");
  MklConfig cfg;
  cfg.mu = a.mu;
  cfg.p = parse_p(a.p, a.mu);
  cfg.c = a.c;
  cfg.loss = parse_loss(a.loss);
  cfg.smooth_eps = a.smooth_eps;
  cfg.en_eps = a.en_eps;
  cfg.validate();
  a.solver.validate();
  man.param("p", cfg.p);
  man.param("p_token", a.p);
  man.param("mu", cfg.mu);
  man.param("c", cfg.c);
  man.param("loss", to_string(cfg.loss));
  man.param("smooth_eps", cfg.smooth_eps);
  man.param("en_eps", cfg.en_eps);
  man.param("tol", a.solver.tol);
  man.param("max_iter", std::to_string(a.solver.max_iter));
  man.param("history", std::to_string(a.solver.history));
  man.param("seed", std::to_string(a.solver.seed));

  if (!a.names.empty() && a.names.size() != a.kernels.size())
    throw ValidationError("--names needs one name per kernel file");
  std::vector<GramMatrix> grams;
  std::vector<std::string> names;
  for (std::size_t m = 0; m < a.kernels.size(); ++m) {
    grams.push_back(read_gram(a.kernels[m]));
    man.input(a.kernels[m]);
    names.push_back(a.names.empty() ? kernel_name_from(a.kernels[m]) : a.names[m]);
    const PsdReport psd = check_psd(grams.back());
    if (psd.checked && !psd.psd)
      err << "warning: " << a.kernels[m] << " is not positive semidefinite (min eigenvalue "
          << format_real(psd.min_eigenvalue) << ")\n";
  }
  Vector labels = read_vector(a.labels);
  man.input(a.labels);

  const LabeledProblem prob(KernelSet(std::move(grams), std::move(names)), std::move(labels), cfg);
  SolveResult sol = solve(prob, a.solver);
  const KernelWeights weights = theta_from_solution(sol, prob);
  sol.duality_gap = primal_objective(weights, sol.point, prob) - sol.objective;
  const TrainedModel model = make_model(sol, weights, prob);
  save_model(model, a.out);
  man.output(a.out);

  man.result("converged", sol.converged ? "true" : "false");
  man.result("stop_reason", sol.stop_reason);
  man.result("iterations", std::to_string(sol.iterations));
  man.result("objective", sol.objective);
  man.result("projected_grad_norm", sol.projected_grad_norm);
  man.result("duality_gap", sol.duality_gap);
  man.write(manifest_for(a.out, a.manifest));

  out << "objective " << format_real(sol.objective) << "\n";
  out << "iterations " << sol.iterations << "\n";
  out << "converged " << (sol.converged ? "yes" : "no") << " (" << sol.stop_reason << ")\n";
  out << "duality_gap " << format_real(sol.duality_gap) << "\n";
  for (std::size_t m = 0; m < model.kernel_names.size(); ++m)
    out << "theta " << model.kernel_names[m] << " "
        << format_real(model.theta.theta(static_cast<Eigen::Index>(m))) << "\n";
  if (!sol.converged) {
    err << "warning: solver stopped before reaching tol (" << sol.stop_reason
        << "); model written anyway\n";
    return kNotConverged;
  }
  return kOk;
}

// ---- predict ----

struct PredictArgs {
  std::string model;
  std::vector<std::string> cross;
  std::string labels;
  std::string out;
  std::string manifest;
  double fpr_max = 0.1;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream&) {
  Manifest man("predict");
  man.param("fpr_max", a.fpr_max);
  const TrainedModel model = load_model(a.model);
  man.input(a.model);
  CrossKernelSet cross;
  for (const auto& path : a.cross) {
    cross.matrices.push_back(read_matrix(path));
    man.input(path);
  }
  const Vector scores = predict_scores(model, cross);
  write_vector(scores, a.out);
  man.output(a.out);
  if (!a.labels.empty()) {
    const Vector labels = read_vector(a.labels);
    man.input(a.labels);
    print_metrics(out, scores, labels, a.fpr_max, &man);
  }
  man.write(manifest_for(a.out, a.manifest));
  return kOk;
}

// ---- weights ----

int cmd_weights(const std::string& model_path, const std::string& out_path, std::ostream& out) {
  const TrainedModel model = load_model(model_path);
  const Vector theta = model.theta.effective();
  const double total = theta.sum();
  out << std::left << std::setw(16) << "kernel" << std::setw(26) << "theta"
      << "share\n";
  for (std::size_t m = 0; m < model.kernel_names.size(); ++m) {
    const double t = theta(static_cast<Eigen::Index>(m));
    out << std::setw(16) << model.kernel_names[m] << std::setw(26) << format_real(t)
        << format_real(total > 0.0 ? t / total : 0.0) << "\n";
  }
  if (!out_path.empty()) write_vector(theta, out_path);
  return kOk;
}

// ---- bound ----

struct BoundArgs {
  BoundParams params;
  std::string p = "1";
  std::string q = "2";
  double c2 = std::numeric_limits<double>::quiet_NaN();
  std::string csv;
};

int cmd_bound(BoundArgs a, std::ostream& out) {
  BoundParams& bp = a.params;
  bp.p = parse_fraction(a.p, "p");
  bp.q = parse_fraction(a.q, "q");
  bp.c2 = std::isnan(a.c2) ? 1.0 - bp.c1 : a.c2;
  const double rad = rademacher_bound(bp);
  const double gen = generalization_bound(bp, rad);
  out << "rademacher " << format_real(rad) << "\n";
  out << "generalization " << format_real(gen) << "\n";
  out << "note: assumes normalized kernels and a loss bounded by 1 with l(0) = 0\n";

  std::vector<BoundRow> rows{{"requested", bp.p, bp.q, bp.c1, bp.c2, rad}};
  if (bp.M >= 2) {
    const auto report = literature_consistency_report(bp.M, bp.n);
    rows.insert(rows.end(), report.begin(), report.end());
  }
  out << "\n" << std::left << std::setw(13) << "setting" << std::setw(10) << "p" << std::setw(6)
      << "q" << std::setw(7) << "C1" << std::setw(7) << "C2"
      << "rademacher\n";
  for (const auto& r : rows) {
    std::ostringstream pcell;
    pcell << std::setprecision(4) << r.p;
    out << std::setw(13) << r.setting << std::setw(10) << pcell.str() << std::setw(6) << r.q
        << std::setw(7) << r.c1 << std::setw(7) << r.c2 << format_real(r.rademacher) << "\n";
  }
  if (!a.csv.empty()) {
    std::string csv = "setting,p,q,c1,c2,rademacher\n";
    for (const auto& r : rows)
      csv += r.setting + "," + format_real(r.p) + "," + format_real(r.q) + "," + format_real(r.c1) +
             "," + format_real(r.c2) + "," + format_real(r.rademacher) + "\n";
    text::write_atomic(a.csv, csv);
  }
  return kOk;
}

// ---- synth ----

struct SynthArgs {
  Scenario scn;
  std::string out_dir;
  bool binary = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  Manifest man("synth");
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const SyntheticData data = generate(a.scn);
  text::write_atomic(dir / "scenario.txt", scenario_manifest(a.scn));
  write_vector(data.y_train, dir / "train_labels.txt");
  write_vector(data.y_test, dir / "test_labels.txt");
  std::vector<std::string> files{"scenario.txt", "train_labels.txt", "test_labels.txt"};
  for (std::size_t m = 0; m < data.train_kernels.size(); ++m) {
    const std::string name = data.train_kernels.names()[m];
    const std::string gram = "train_" + name + (a.binary ? ".bin" : ".txt");
    if (a.binary) {
      write_gram_binary(data.train_kernels[m], dir / gram);
    } else {
      write_gram_text(data.train_kernels[m], dir / gram);
    }
    write_matrix_text(data.cross_kernels.matrices[m], dir / ("cross_" + name + ".txt"));
    files.push_back(gram);
    files.push_back("cross_" + name + ".txt");
  }
  std::istringstream fields(scenario_manifest(a.scn));
  for (std::string line; std::getline(fields, line);) {
    const auto eq = line.find('=');
    man.param(line.substr(0, eq), line.substr(eq + 1));
  }
  for (const auto& f : files) man.output(dir / f);
  man.write(dir / "manifest.txt");
  out << "bayes_error " << format_real(bayes_error(a.scn)) << "\n";
  out << "wrote " << files.size() << " files to " << dir.string() << "\n";
  return kOk;
}

// ---- sweep ----

struct SweepArgs {
  SweepGrid grid;
  std::vector<double> sparsity{0.0, 1.0};
  std::vector<std::string> p{"64/63", "4/3", "2", "4", "64"};
  std::vector<double> mu{0.0};
  int seeds = 20;
  std::uint64_t seed_start = 1;
  std::string loss = "hinge";
  std::string out;
  std::string manifest;
};

int cmd_sweep(SweepArgs a, std::ostream& out, std::ostream& err) {
  Manifest man("sweep");
  SweepGrid& grid = a.grid;
  if (a.seeds < 1) throw ValidationError("--seeds must be >= 1");
  grid.sparsity = a.sparsity;
  grid.mu = a.mu;
  grid.loss = parse_loss(a.loss);
  grid.p.clear();
  std::vector<std::string> p_text;
  for (const auto& token : a.p) {
    for (double mu : grid.mu) parse_p(token, mu);  // reject p = 1 with mu = 0 up front
    grid.p.push_back(parse_p(token, grid.mu.empty() ? 1.0 : *std::max_element(grid.mu.begin(), grid.mu.end())));
    p_text.push_back(format_real(grid.p.back()));
  }
  grid.seeds.clear();
  for (int s = 0; s < a.seeds; ++s) grid.seeds.push_back(a.seed_start + static_cast<std::uint64_t>(s));

  std::vector<std::string> sp_text;
  std::vector<std::string> mu_text;
  for (double v : grid.sparsity) sp_text.push_back(format_real(v));
  for (double v : grid.mu) mu_text.push_back(format_real(v));
  man.param("sparsity", join(sp_text));
  man.param("p", join(p_text));
  man.param("mu", join(mu_text));
  man.param("seeds", std::to_string(a.seeds));
  man.param("seed_start", std::to_string(a.seed_start));
  man.param("M", std::to_string(grid.base.M));
  man.param("block_dim", std::to_string(grid.base.block_dim));
  man.param("bayes_target", grid.base.bayes_target);
  man.param("n_train", std::to_string(grid.base.n_train));
  man.param("n_test", std::to_string(grid.base.n_test));
  man.param("c", grid.c);
  man.param("loss", to_string(grid.loss));
  man.param("tol", grid.solver.tol);
  man.param("max_iter", std::to_string(grid.solver.max_iter));

  const auto rows = run_sweep(grid);
  const std::string csv = sweep_csv(rows);
  text::write_atomic(a.out, csv);
  man.output(a.out);
  int failed = 0;
  for (const auto& r : rows) failed += r.failed;
  man.result("failed_cells", std::to_string(failed));
  man.write(manifest_for(a.out, a.manifest));
  out << csv;
  if (failed > 0) err << "warning: " << failed << " sweep cells failed\n";
  return kOk;
}

int cmd_eval(const std::string& scores_path, const std::string& labels_path, double fpr_max,
             std::ostream& out) {
  print_metrics(out, read_vector(scores_path), read_vector(labels_path), fpr_max, nullptr);
  return kOk;
}

// Splices "key=value" lines of a --config file into the argument list as
// flags, right after the subcommand. Keys already present on the command
// line are skipped so that explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::size_t at = args.size();
  for (std::size_t i = 1; i + 1 < args.size(); ++i)
    if (args[i] == "--config") at = i;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i)
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  if (at < args.size()) path = args[at + 1];
  if (path.empty() || args.size() < 2) return args;

  auto given = [&](const std::string& key) {
    for (const auto& a : args)
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> flags;
  std::istringstream lines(text::read_file(path));
  int number = 0;
  for (std::string line; std::getline(lines, line);) {
    ++number;
    const auto tokens = text::split_ws(line);
    if (tokens.empty() || tokens[0].front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError(path + ":" + std::to_string(number) + ": expected key=value");
    const auto key_tokens = text::split_ws(std::string_view(line).substr(0, eq));
    if (key_tokens.size() != 1) throw IoError(path + ":" + std::to_string(number) + ": bad key");
    const std::string key(key_tokens[0]);
    if (given(key)) continue;
    const auto values = text::split_ws(std::string_view(line).substr(eq + 1));
    if (values.size() == 1) {
      flags.push_back("--" + key + "=" + std::string(values[0]));
    } else {
      flags.push_back("--" + key);
      for (auto v : values) flags.emplace_back(v);
    }
  }
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  out.insert(out.end(), flags.begin(), flags.end());
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepGrid& grid) {
  grid.base.validate();
  grid.solver.validate();
  if (grid.sparsity.empty() || grid.p.empty() || grid.mu.empty() || grid.seeds.empty())
    throw ValidationError("sweep: every grid axis needs at least one value");

  const std::size_t models = grid.p.size() * grid.mu.size();
  const std::size_t jobs = grid.sparsity.size() * grid.seeds.size();
  struct Cell {
    bool ok = false;
    bool converged = false;
    double error = 0.0;
  };
  std::vector<std::vector<Cell>> cells(jobs, std::vector<Cell>(models));

  auto run_job = [&](std::size_t job) {
    Scenario scn = grid.base;
    scn.sparsity = grid.sparsity[job / grid.seeds.size()];
    scn.seed = grid.seeds[job % grid.seeds.size()];
    SyntheticData data;
    try {
      data = generate(scn);
    } catch (const std::exception&) {
      return;
    }
    for (std::size_t k = 0; k < models; ++k) {
      MklConfig cfg;
      cfg.p = grid.p[k / grid.mu.size()];
      cfg.mu = grid.mu[k % grid.mu.size()];
      cfg.c = grid.c;
      cfg.loss = grid.loss;
      try {
        const LabeledProblem prob(data.train_kernels, data.y_train, cfg);
        const SolveResult sol = solve(prob, grid.solver);
        const TrainedModel model = make_model(sol, theta_from_solution(sol, prob), prob);
        const Vector scores = predict_scores(model, data.cross_kernels);
        cells[job][k] = {true, sol.converged, 1.0 - accuracy(scores, data.y_test)};
      } catch (const std::exception&) {
        cells[job][k] = {};
      }
    }
  };

  const unsigned hw = grid.threads ? grid.threads : std::max(1u, std::thread::hardware_concurrency());
  const auto workers = static_cast<unsigned>(std::min<std::size_t>(hw, jobs));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t job; (job = next.fetch_add(1)) < jobs;) run_job(job);
    });
  for (auto& t : pool) t.join();

  std::vector<SweepRow> rows;
  for (std::size_t s = 0; s < grid.sparsity.size(); ++s) {
    Scenario scn = grid.base;
    scn.sparsity = grid.sparsity[s];
    const double bayes = bayes_error(scn);
    for (std::size_t k = 0; k < models; ++k) {
      SweepRow row;
      row.sparsity = grid.sparsity[s];
      row.p = grid.p[k / grid.mu.size()];
      row.mu = grid.mu[k % grid.mu.size()];
      row.bayes_error = bayes;
      std::vector<double> errors;
      for (std::size_t i = 0; i < grid.seeds.size(); ++i) {
        const Cell& cell = cells[s * grid.seeds.size() + i][k];
        if (!cell.ok) {
          ++row.failed;
          continue;
        }
        if (!cell.converged) ++row.not_converged;
        errors.push_back(cell.error);
      }
      row.seeds = static_cast<int>(errors.size());
      if (errors.empty()) {
        row.mean_error = row.stderr_error = std::numeric_limits<double>::quiet_NaN();
      } else {
        double sum = 0.0;
        for (double e : errors) sum += e;
        row.mean_error = sum / static_cast<double>(errors.size());
        double ss = 0.0;
        for (double e : errors) ss += (e - row.mean_error) * (e - row.mean_error);
        row.stderr_error = errors.size() < 2
                               ? std::numeric_limits<double>::quiet_NaN()
                               : std::sqrt(ss / static_cast<double>(errors.size() - 1)) /
                                     std::sqrt(static_cast<double>(errors.size()));
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string csv = "sparsity,p,mu,mean_error,stderr,seeds,failed,not_converged,bayes_error\n";
  for (const auto& r : rows)
    csv += format_real(r.sparsity) + "," + format_real(r.p) + "," + format_real(r.mu) + "," +
           format_real(r.mean_error) + "," + format_real(r.stderr_error) + "," +
           std::to_string(r.seeds) + "," + std::to_string(r.failed) + "," +
           std::to_string(r.not_converged) + "," + format_real(r.bayes_error) + "\n";
  return csv;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Block-norm multiple kernel learning"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  auto config_option = [&config_path](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value file; command-line flags take precedence");
  };

  GramArgs gram;
  auto* sub_gram = app.add_subcommand("gram", "compute a kernel matrix from data");
  config_option(sub_gram);
  sub_gram->add_option("--kernel", gram.kernel, "linear | rbf:BW | poly:D[:OFF] | spectrum:K | precomputed:PATH")
      ->required();
  sub_gram->add_option("--data", gram.data, "training samples, one per line");
  sub_gram->add_flag("--strings", gram.strings, "samples are strings, not vectors");
  sub_gram->add_flag("--normalize", gram.normalize, "scale to unit self-similarity");
  sub_gram->add_option("--out", gram.out, "output Gram matrix")->required();
  sub_gram->add_flag("--binary", gram.binary, "write the binary Gram format");
  sub_gram->add_option("--test-data", gram.test_data, "test samples for a cross matrix");
  sub_gram->add_option("--cross-out", gram.cross_out, "output cross matrix (train x test)");
  sub_gram->add_option("--psd-tol", gram.psd_tol, "relative eigenvalue tolerance")->capture_default_str();
  sub_gram->add_option("--manifest", gram.manifest, "manifest path (default OUT.manifest)");

  TrainArgs train;
  auto* sub_train = app.add_subcommand("train", "train a block-norm MKL classifier");
  config_option(sub_train);
  sub_train->add_option("--kernels", train.kernels, "Gram matrix files")->required()->expected(1, -1);
  sub_train->add_option("--names", train.names, "kernel names (default: file stems)")->expected(1, -1);
  sub_train->add_option("--labels", train.labels, "labels file, one +-1 per line")->required();
  sub_train->add_option("--out", train.out, "model file")->required();
  sub_train->add_option("--manifest", train.manifest, "manifest path (default OUT.manifest)");
  sub_train->add_option("--p", train.p, "block-norm exponent: real, a/b, 1 (= 64/63) or inf (= 64)")
      ->capture_default_str();
  sub_train->add_option("--mu", train.mu, "elastic-net weight")->capture_default_str();
  sub_train->add_option("--c", train.c, "loss weight C")->capture_default_str();
  sub_train->add_option("--loss", train.loss, "hinge | squared")->capture_default_str();
  sub_train->add_option("--smooth-eps", train.smooth_eps, "floor on v'K_m v")->capture_default_str();
  sub_train->add_option("--en-eps", train.en_eps, "elastic-net weight recovery exponent offset")
      ->capture_default_str();
  add_solver_options(sub_train, train.solver);

  PredictArgs predict;
  auto* sub_predict = app.add_subcommand("predict", "score samples with a trained model");
  config_option(sub_predict);
  sub_predict->add_option("--model", predict.model, "model file")->required();
  sub_predict->add_option("--cross", predict.cross, "cross matrices (train x test), one per kernel")
      ->required()
      ->expected(1, -1);
  sub_predict->add_option("--labels", predict.labels, "test labels; enables metrics");
  sub_predict->add_option("--out", predict.out, "scores file")->required();
  sub_predict->add_option("--fpr-max", predict.fpr_max, "partial AUC range")->capture_default_str();
  sub_predict->add_option("--manifest", predict.manifest, "manifest path (default OUT.manifest)");

  std::string weights_model;
  std::string weights_out;
  auto* sub_weights = app.add_subcommand("weights", "print the kernel weights of a model");
  config_option(sub_weights);
  sub_weights->add_option("--model", weights_model, "model file")->required();
  sub_weights->add_option("--out", weights_out, "also write the weights, one per line");

  BoundArgs bound;
  auto* sub_bound = app.add_subcommand("bound", "evaluate the Rademacher and generalization bounds");
  config_option(sub_bound);
  sub_bound->add_option("--M", bound.params.M, "number of kernels")->required();
  sub_bound->add_option("--n", bound.params.n, "sample size")->required();
  sub_bound->add_option("--p", bound.p, "first block-norm exponent, e.g. 4/3")->capture_default_str();
  sub_bound->add_option("--q", bound.q, "second block-norm exponent")->capture_default_str();
  sub_bound->add_option("--c1", bound.params.c1, "weight of the p term")->capture_default_str();
  sub_bound->add_option("--c2", bound.c2, "weight of the q term (default 1 - c1)");
  sub_bound->add_option("--L", bound.params.lipschitz, "Lipschitz constant of the loss")->capture_default_str();
  sub_bound->add_option("--delta", bound.params.delta, "confidence parameter")->capture_default_str();
  sub_bound->add_option("--emp-risk", bound.params.emp_risk, "empirical risk")->capture_default_str();
  sub_bound->add_option("--csv", bound.csv, "also write the table as CSV");

  SynthArgs synth;
  auto* sub_synth = app.add_subcommand("synth", "generate a synthetic block-structured data set");
  config_option(sub_synth);
  add_scenario_options(sub_synth, synth.scn);
  sub_synth->add_option("--sparsity", synth.scn.sparsity, "1: one informative block; 0: uniform")
      ->capture_default_str();
  sub_synth->add_option("--seed", synth.scn.seed, "random seed")->capture_default_str();
  sub_synth->add_option("--out-dir", synth.out_dir, "output directory")->required();
  sub_synth->add_flag("--binary", synth.binary, "write Gram matrices in the binary format");

  SweepArgs sweep;
  auto* sub_sweep = app.add_subcommand("sweep", "synthetic experiment over sparsity, p and mu");
  config_option(sub_sweep);
  add_scenario_options(sub_sweep, sweep.grid.base);
  sub_sweep->add_option("--sparsity", sweep.sparsity, "sparsity levels")->capture_default_str()->expected(1, -1);
  sub_sweep->add_option("--p", sweep.p, "p values (real, a/b, 1, inf)")->capture_default_str()->expected(1, -1);
  sub_sweep->add_option("--mu", sweep.mu, "mu values")->capture_default_str()->expected(1, -1);
  sub_sweep->add_option("--seeds", sweep.seeds, "number of seeds")->capture_default_str();
  sub_sweep->add_option("--seed-start", sweep.seed_start, "first seed")->capture_default_str();
  sub_sweep->add_option("--c", sweep.grid.c, "loss weight C")->capture_default_str();
  sub_sweep->add_option("--loss", sweep.loss, "hinge | squared")->capture_default_str();
  sub_sweep->add_option("--threads", sweep.grid.threads, "worker threads (0: all cores)")->capture_default_str();
  sub_sweep->add_option("--out", sweep.out, "CSV output")->required();
  sub_sweep->add_option("--manifest", sweep.manifest, "manifest path (default OUT.manifest)");
  add_solver_options(sub_sweep, sweep.grid.solver);

  std::string eval_scores;
  std::string eval_labels;
  double eval_fpr = 0.1;
  auto* sub_eval = app.add_subcommand("eval", "metrics of a scores file against labels");
  config_option(sub_eval);
  sub_eval->add_option("--scores", eval_scores, "scores file")->required();
  sub_eval->add_option("--labels", eval_labels, "labels file")->required();
  sub_eval->add_option("--fpr-max", eval_fpr, "partial AUC range")->capture_default_str();

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  }
  std::vector<const char*> argv;
  for (const auto& a : expanded) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sub_gram) return cmd_gram(gram, out, err);
    if (*sub_train) return cmd_train(train, out, err);
    if (*sub_predict) return cmd_predict(predict, out, err);
    if (*sub_weights) return cmd_weights(weights_model, weights_out, out);
    if (*sub_bound) return cmd_bound(bound, out);
    if (*sub_synth) return cmd_synth(synth, out);
    if (*sub_sweep) return cmd_sweep(sweep, out, err);
    if (*sub_eval) return cmd_eval(eval_scores, eval_labels, eval_fpr, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const SolverError& e) {
    err << "error: " << e.what() << "\n";
    return kSolverFailure;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kSolverFailure;
  }
  return kUsage;
}

}  // namespace mkl::cli
