#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spws/cin.hpp"

namespace spws {

enum class Computation { Appending, Scattering };

struct Classification {
  Computation computation = Computation::Appending;
  /// Required workspace order, max(N+1-p1, p2).
  int ordering = 0;
  /// 1-based position of the first output variable out of loop order; N+1 if none.
  int p1 = 0;
  /// Output variables nested inside the outermost reduction variable.
  int p2 = 0;
  bool concordant = true;
  /// More than one reduction variable; p2 then uses the outermost one.
  bool multiple_reductions = false;

  /// "scattering, order 2"
  std::string label() const;
};

/// Outermost-first forall variables. For a where statement: the shared outer
/// loops followed by the producer's loops.
IndexVars loop_order(const Stmt& stmt);

/// Variables of the right-hand side that do not index the result.
IndexVars reduction_vars(const AssignStmt& assign);

/// True when the right-hand side adds two terms that both read sparse operands.
bool has_sparse_union(const Expr& rhs);

Classification classify(const IndexVars& loop_order, const IndexVars& output_access_order, const Expr& rhs);

/// Classifies a forall nest using its reconstructed input order.
Classification classify(const Stmt& stmt);

/// Undoes split/fuse/pos in reverse relation order on `loop_order`.
IndexVars reconstruct_input_order(const IndexVars& loop_order, const std::vector<SchedulingRelation>& relations,
                                  const IndexVars& reductions);
IndexVars reconstruct_input_order(const Stmt& stmt);

struct OrderComparison {
  /// Input order without variables absent from the output (the workspace modes).
  IndexVars pruned;
  /// pruned[x] == output_order[ow_order[x]]
  std::vector<int> ow_order;
};

OrderComparison compare_orders(const IndexVars& input_order, const IndexVars& output_order);

enum class InsertAction {
  AlreadyInserted,     ///< statement already has a where node
  DenseOutput,         ///< every result level supports random insert
  ScalarAccumulation,  ///< concordant with ordering 0; results are appended
  SparseWorkspace,     ///< discordant; workspace with a reordering ow_order
  UnionWorkspace,      ///< several sparse terms merge into one result
  ConversionWorkspace, ///< concordant but result levels differ from iteration levels
  DenseWorkspace,      ///< hoisted outer loops plus a first-order dense workspace
  HoistedWorkspace,    ///< hoisted outer loops plus a lower-order sparse workspace
  FullWorkspace,       ///< same-order sparse workspace, identity ow_order
};

std::string to_string(InsertAction a);

struct InsertionDecision {
  InsertAction action = InsertAction::DenseOutput;
  Classification classification;
  IndexVars input_order;
  IndexVars output_order;
  IndexVars hoisted;
  /// Workspace modes in producer insertion order.
  IndexVars workspace_vars;
  std::optional<WorkspaceDescriptor> descriptor;
  Stmt result;
};

/// Runs the workspace insertion decision tree and builds the rewritten statement.
InsertionDecision plan_insertion(const Stmt& stmt, SortPolicy policy, std::size_t capacity);

Stmt insert_sparse_workspace(const Stmt& stmt, SortPolicy policy, std::size_t capacity);

/// Text report of orders, p1, p2, ordering, concordance and the insertion action.
std::string classify_report(const Stmt& stmt, SortPolicy policy, std::size_t capacity);

} // namespace spws
