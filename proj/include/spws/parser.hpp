#pragma once

#include <map>
#include <string>
#include <vector>

#include "spws/cin.hpp"

namespace spws {

/// A parsed assignment "A(i,j) = B(i,k) * C(k,j)".
struct ParsedAssignment {
  Access lhs;
  Expr rhs;
  /// Tensor names in order of first appearance (result first).
  std::vector<std::string> tensors;
};

/// Format used for a tensor without an explicit entry: Dense for order 0
/// and 1, CSR for order 2, CSF above.
Format default_format(int order);

/// Parses an assignment. `formats` overrides the per-tensor default format.
/// Throws ParseError with the column of the offending token.
ParsedAssignment parse_assignment(const std::string& text, const std::map<std::string, Format>& formats = {});

/// Parses "k,i,j", "(k,i,j)" or "kij" (single-letter names) into index vars.
IndexVars parse_index_list(const std::string& text);

/// One call of a schedule script, e.g. split(fpos,{f0,f1},4).
struct ScheduleCommand {
  std::string name;
  std::vector<std::string> args;
  std::size_t line = 0;
  std::size_t column = 0;
};

/// Parses a schedule script. Commands are separated by newlines, ';' or '.',
/// an optional leading "stmt" is ignored, braces are ignored and '#' starts
/// a comment.
std::vector<ScheduleCommand> parse_schedule(const std::string& script);

/// Applies reorder/split/fuse/pos commands in order.
Stmt apply_schedule(const Stmt& stmt, const std::vector<ScheduleCommand>& commands);

} // namespace spws
