#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mkl/objective.hpp"
#include "mkl/solver.hpp"
#include "mkl/synth.hpp"

namespace mkl::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIoError = 2,
  kInvalid = 3,
  kSolverFailure = 4,
  kNotConverged = 5,
};

/// Runs one command line (args[0] is the program name). Output goes to
/// `out`, diagnostics to `err`; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Accepts a real, a fraction "a/b", or the tokens "1" and "inf", which stand
/// for 64/63 and 64. Exactly 1 is rejected when mu == 0. Values inside
/// (1, 64/63) or above 64 are clamped with a warning.
double parse_p(const std::string& token, double mu);

struct SweepGrid {
  Scenario base;                 // everything except sparsity and seed
  std::vector<double> sparsity;
  std::vector<double> p;
  std::vector<double> mu;
  std::vector<std::uint64_t> seeds;
  double c = 0.01;
  Loss loss = Loss::kHinge;
  SolverConfig solver;
  unsigned threads = 0;          // 0: hardware concurrency
};

struct SweepRow {
  double sparsity = 0.0;
  double p = 0.0;
  double mu = 0.0;
  double bayes_error = 0.0;
  double mean_error = 0.0;
  double stderr_error = 0.0;     // sample sd / sqrt(successful seeds)
  int seeds = 0;                 // successful cells
  int failed = 0;
  int not_converged = 0;
};

/// Runs synth -> train -> predict for every grid cell, in parallel over
/// (sparsity, seed) pairs. Rows come out in grid order: sparsity, then p,
/// then mu. A cell that throws is counted as failed and skipped.
std::vector<SweepRow> run_sweep(const SweepGrid& grid);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace mkl::cli
