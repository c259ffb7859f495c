#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "spws/driver.hpp"
#include "spws/io.hpp"

namespace spws {

/// Everything a command needs to build, feed and run one expression.
struct RunConfig {
  std::string kernel;
  std::string expr;
  std::string order;
  std::string schedule;
  std::vector<std::string> formats;
  std::vector<SortPolicy> policies{SortPolicy::Coord};
  std::vector<std::size_t> capacities{1024};
  bool auto_insert = true;
  bool pipelined = false;
  bool double_buffer = false;
  bool grow = false;
  /// "T=path" pairs (.mtx or .tns).
  std::vector<std::string> inputs;
  /// "I=..,K=..,nnz=..,frac=..,shift=.." for the two matrix operands.
  std::string synthetic;
  /// "i=16,j=16"; variables not listed use `size`.
  std::string dims;
  Coord size = 16;
  double density = 0.1;
  std::uint64_t seed = 1;
  int repetitions = 20;
  int warmups = 5;
  bool verify = false;

  void validate() const;
  /// The expression, the loop order and the format specs (kernel defaults
  /// with explicit overrides applied).
  std::string expression() const;
  std::string loop_order() const;
  std::vector<std::string> format_specs() const;
};

SyntheticSpec parse_synthetic(const std::string& text, std::uint64_t seed);

/// Inputs of a compiled expression per the config (files, synthetic or random).
std::map<std::string, Tensor> load_inputs(const RunConfig& cfg, const ParsedAssignment& p);

std::string cmd_classify(const RunConfig& cfg);
std::string cmd_explain(const RunConfig& cfg);

struct BenchReport {
  std::vector<BenchRow> rows;
  std::size_t executions = 0;
  std::size_t timed = 0;
  /// Rows whose result disagreed with the oracle under verify.
  std::size_t verify_failures = 0;
};

/// One row per (policy, capacity): mean execute time over the timed
/// repetitions after the warmups.
BenchReport cmd_bench(const RunConfig& cfg);

/// Capacity sweep over 1, powers of two and the insertion stream length,
/// for every policy and every combination of double buffering and
/// pipelining. Throws if any two rows disagree on the result.
BenchReport cmd_ablation(const RunConfig& cfg);

/// Command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace spws
