#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spws/cin.hpp"
#include "spws/ism.hpp"
#include "spws/tensor.hpp"

namespace spws {

enum class TensorRole { Input, Output, SparseWorkspace, DenseWorkspace };

struct PlanTensor {
  std::string name;
  int order = 0;
  Format format;
  TensorRole role = TensorRole::Input;
  std::optional<WorkspaceDescriptor> descriptor;
  /// Variable ids indexing each mode (output and workspaces only).
  std::vector<int> mode_vars;
};

struct PlanVar {
  std::string name;
  IndexVarKind kind = IndexVarKind::Original;
};

/// One occurrence of a tensor access in one product term.
struct PlanSlot {
  int tensor = -1;
  /// Variable id of every storage level.
  std::vector<int> level_vars;
  std::string text;
};

enum class IterKind {
  DenseRange, ///< 0..extent of an original variable, or a derived variable's domain
  Level,      ///< ordered iteration of one sparse level
  Intersect,  ///< two-pointer co-iteration of two sparse levels
  Positions,  ///< positions of a fused run of levels
};

/// Runtime step executed at loop entry (Domain*) or after binding a value.
struct BindOp {
  enum class Kind { DomainPos, DomainSplit, DomainFused, SplitParent, Unfuse, PosBind };
  Kind kind;
  int var = -1;        ///< variable whose domain or value is set
  int a = -1, b = -1;  ///< split outer/inner or fused outer/inner
  std::size_t step = 0;
  int slot = -1;       ///< positions: access slot
  int first_level = 0; ///< positions: fused level run
  int last_level = 0;
};

/// Locate levels of `slot` until `depth` levels are resolved.
struct Advance {
  int slot;
  int depth;
};

struct PlanNode {
  enum class Kind { Seq, Alloc, Loop, CoordTrack, Compute, IsmCall, DenseWsOp };
  enum class IsmOp { Insert, DrainIfFull, FinalDrain, Compress };
  enum class DenseOp { Scatter, GatherAppend, Materialize, Clear };

  Kind kind = Kind::Seq;
  std::string label;

  // Loop
  IterKind iter = IterKind::DenseRange;
  int var = -1;
  std::vector<int> drivers;
  std::vector<BindOp> entry;
  std::vector<BindOp> binds;
  std::vector<Advance> advances;
  /// Slots whose absence makes every computation below this loop zero.
  std::vector<int> prune;
  /// Slots whose cursor this loop changes (restored between iterations).
  std::vector<int> touched;

  // CoordTrack, IsmCall, DenseWsOp, Alloc, Compute
  int tensor = -1;
  int slot = -1;
  /// Compress / GatherAppend destination; -1 materializes the workspace itself.
  int target = -1;
  IsmOp ism_op = IsmOp::Insert;
  DenseOp dense_op = DenseOp::Scatter;

  // Compute
  double coef = 1.0;
  std::vector<int> factors;
  /// Variable ids of the written tensor in storage order.
  std::vector<int> lhs_level_vars;
  /// Compress / GatherAppend: workspace storage slot feeding each result
  /// level, or -1 when the level variable is bound outside.
  std::vector<int> sources;

  std::vector<PlanNode> children;
};

/// Imperative loop plan of a statement, interpretable by execute().
struct LoopPlan {
  std::string statement;
  std::vector<PlanVar> vars;
  std::vector<PlanTensor> tensors;
  std::vector<PlanSlot> slots;
  int output = -1;
  PlanNode root;

  const PlanTensor& output_tensor() const { return tensors.at(static_cast<std::size_t>(output)); }
  std::vector<const PlanTensor*> workspaces() const;
};

/// Lowers a validated statement. Workspaces are the tensors whose
/// TensorVar is a sparse or dense workspace.
LoopPlan lower(const Stmt& stmt);

struct ExecOptions {
  bool pipelined = false;
  bool double_buffer = true;
  bool grow = false;
};

struct ExecStats {
  IsmCounters ism;
  std::size_t drains = 0;
};

/// Interprets the plan on named inputs and returns the result in its
/// declared format.
Tensor execute(const LoopPlan& plan, const std::map<std::string, Tensor>& inputs, const ExecOptions& options = {},
               ExecStats* stats = nullptr);

std::string print_plan(const LoopPlan& plan);

/// Dense workspace: scattered values plus the list of occupied (row-major
/// linear) coordinates.
class DenseRowWorkspace {
public:
  explicit DenseRowWorkspace(std::size_t extent);

  std::size_t extent() const { return values_.size(); }
  void scatter(std::size_t j, double v);
  /// Sorted (coordinate, value) pairs of the row; the workspace is cleared.
  std::vector<std::pair<std::size_t, double>> gather();
  void clear();
  std::size_t occupied() const { return list_.size(); }
  const std::vector<double>& values() const { return values_; }

private:
  std::vector<double> values_;
  std::vector<char> flags_;
  std::vector<std::size_t> list_;
};

} // namespace spws
