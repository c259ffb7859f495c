#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spws/analysis.hpp"
#include "spws/lowering.hpp"
#include "spws/parser.hpp"

namespace spws {

/// A named benchmark kernel: expression, default loop order and formats.
struct KernelSpec {
  std::string name;
  std::string expr;
  std::string order;
  std::map<std::string, std::string> formats;
  std::string description;
};

const std::vector<KernelSpec>& kernel_suite();
const KernelSpec& find_kernel(const std::string& name);

/// Parses "T=CSR" overrides against the tensor orders of `expr`.
std::map<std::string, Format> parse_format_overrides(const std::string& expr, const std::vector<std::string>& specs);
std::map<std::string, Format> kernel_formats(const KernelSpec& k);

struct CompileOptions {
  /// Loop order such as "kij"; empty means result variables then reductions.
  std::string order;
  std::string schedule;
  SortPolicy policy = SortPolicy::Coord;
  std::size_t capacity = 1024;
  bool auto_insert = true;
};

struct Compiled {
  ParsedAssignment parsed;
  /// Statement after the schedule, before workspace insertion.
  Stmt scheduled;
  InsertionDecision decision;
  /// Statement that was lowered.
  Stmt final_stmt;
  LoopPlan plan;
};

Compiled compile(const std::string& expr, const std::map<std::string, Format>& formats, const CompileOptions& options);

/// Index variable extents of every tensor mode; fails on conflicts.
std::map<std::string, Coord> extents_of(const ParsedAssignment& p, const std::map<std::string, Tensor>& inputs);

/// Random integer-valued inputs for every right-hand-side tensor. Operands
/// stored all-dense are filled completely.
std::map<std::string, Tensor> random_inputs(const ParsedAssignment& p, const std::map<std::string, Coord>& extents,
                                            double density, std::uint64_t seed);

/// Dense reference result of the assignment.
DenseArray reference_result(const ParsedAssignment& p, const std::map<std::string, Tensor>& inputs,
                            const std::map<std::string, Coord>& extents = {});

std::size_t stored_nonzeros(const Tensor& t);

} // namespace spws
