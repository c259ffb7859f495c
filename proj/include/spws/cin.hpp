#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "spws/format.hpp"
#include "spws/oracle.hpp"
#include "spws/policy.hpp"

namespace spws {

enum class IndexVarKind { Original, Split, Fused, Position };

/// An index variable. Identity is the name; names are unique per statement.
class IndexVar {
public:
  IndexVar() = default;
  IndexVar(std::string name, IndexVarKind kind = IndexVarKind::Original)
      : name_(std::move(name)), kind_(kind) {}
  IndexVar(const char* name) : IndexVar(std::string(name)) {}

  const std::string& name() const { return name_; }
  IndexVarKind kind() const { return kind_; }
  bool derived() const { return kind_ != IndexVarKind::Original; }

  friend bool operator==(const IndexVar& a, const IndexVar& b) { return a.name_ == b.name_; }
  friend auto operator<=>(const IndexVar& a, const IndexVar& b) { return a.name_ <=> b.name_; }

private:
  std::string name_;
  IndexVarKind kind_ = IndexVarKind::Original;
};

using IndexVars = std::vector<IndexVar>;

std::string to_string(const IndexVars& vars);

/// Configuration of a sparse workspace tensor variable.
struct WorkspaceDescriptor {
  int order = 0;
  /// Extents named by index variable, in workspace mode order ("I", "J").
  std::vector<std::string> dims;
  SortPolicy policy = SortPolicy::Coord;
  std::size_t capacity = 1024;
  /// Workspace mode x is stored at storage slot ow_order[x].
  std::vector<int> ow_order;
  /// Bucket count for Hash; 0 picks the default from the input nonzeros.
  std::size_t hash_buckets = 0;

  void validate() const;
  /// "SpFormat(2, Coord), {I,J}, {1,0}, cap=1024"
  std::string to_string() const;
};

struct TensorVar {
  std::string name;
  int order = 0;
  Format format;
  std::optional<WorkspaceDescriptor> sparse_workspace;
  bool dense_workspace = false;

  bool is_workspace() const { return sparse_workspace.has_value() || dense_workspace; }

  static TensorVar sparse_ws(std::string name, WorkspaceDescriptor desc);
  static TensorVar dense_ws(std::string name, int order);
};

struct Access {
  TensorVar tensor;
  IndexVars vars;

  /// Index variables in the order they touch storage levels.
  IndexVars access_order() const { return access_map(vars, tensor.format); }
  std::string to_string() const;
};

struct ExprNode;

/// Immutable expression tree: Access | Const | Add | Mul.
class Expr {
public:
  using Node = ExprNode;

  Expr() = default;
  Expr(Access a);
  Expr(double c);

  const Node& node() const;
  bool defined() const { return node_ != nullptr; }

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend bool operator==(const Expr& a, const Expr& b);

  std::string to_string() const;

private:
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

struct AccessExpr { Access access; };
struct ConstExpr { double value; };
struct AddExpr { Expr lhs, rhs; };
struct MulExpr { Expr lhs, rhs; };

struct ExprNode : std::variant<AccessExpr, ConstExpr, AddExpr, MulExpr> {
  using variant::variant;
};

inline const ExprNode& Expr::node() const { return *node_; }

/// One product of the sum-of-products expansion of an expression.
struct ProductTerm {
  double coef = 1.0;
  std::vector<Access> factors;
};

std::vector<ProductTerm> expand(const Expr& e);
std::vector<Access> accesses(const Expr& e);
/// Index variables of an expression, in first-appearance order.
IndexVars expr_vars(const Expr& e);

struct SplitRel { IndexVar parent, outer, inner; std::size_t step; };
struct FuseRel { IndexVar outer, inner, fused; };
struct PosRel { IndexVar coord, pos; Access access; };
struct ReorderRel { IndexVars order; };
using SchedulingRelation = std::variant<SplitRel, FuseRel, PosRel, ReorderRel>;

std::string to_string(const SchedulingRelation& r);

struct StmtNode;
struct ForallStmt;
struct AssignStmt;
struct WhereStmt;

/// Immutable CIN statement. Every transform returns a new statement; the
/// root carries the log of scheduling relations in application order.
class Stmt {
public:
  using Node = StmtNode;

  Stmt() = default;

  static Stmt forall(IndexVar v, Stmt body);
  static Stmt assign(Access lhs, Expr rhs, bool accumulate);
  static Stmt where(Stmt consumer, Stmt producer);

  const Node& node() const;
  bool defined() const { return node_ != nullptr; }
  bool is_forall() const;
  bool is_assign() const;
  bool is_where() const;
  const ForallStmt& as_forall() const;
  const AssignStmt& as_assign() const;
  const WhereStmt& as_where() const;

  const std::vector<SchedulingRelation>& relations() const { return relations_; }
  Stmt with_relations(std::vector<SchedulingRelation> rels) const;

  Stmt reorder(const IndexVars& order) const;
  Stmt split(const IndexVar& i, const IndexVar& i0, const IndexVar& i1, std::size_t step) const;
  Stmt fuse(const IndexVar& i, const IndexVar& j, const IndexVar& f) const;
  Stmt pos(const IndexVar& i, const IndexVar& p, const Access& access) const;
  /// Rewrites into "... = ...ws(o_vars) where ws(i_vars) = expr".
  Stmt precompute(const Expr& expr, const IndexVars& i_vars, const IndexVars& o_vars,
                  const TensorVar& ws) const;

  std::string to_string() const;

private:
  explicit Stmt(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
  std::vector<SchedulingRelation> relations_;
};

struct ForallStmt { IndexVar var; Stmt body; };
struct AssignStmt { Access lhs; Expr rhs; bool accumulate; };
struct WhereStmt { Stmt consumer; Stmt producer; };

struct StmtNode : std::variant<ForallStmt, AssignStmt, WhereStmt> {
  using variant::variant;
};

inline const StmtNode& Stmt::node() const { return *node_; }

/// Nested foralls in the given order around one assignment; the accumulate
/// flag is set when the right-hand side has a reduction variable.
Stmt from_einsum(const Access& lhs, const Expr& rhs, const IndexVars& loop_order);

/// Outermost-first forall variables of a perfect forall nest.
IndexVars forall_chain(const Stmt& s);
/// The statement below the forall chain.
const Stmt& chain_body(const Stmt& s);
/// The single assignment of a forall nest (throws for other shapes).
const AssignStmt& innermost_assign(const Stmt& s);

/// Original index variables a (possibly derived) variable stands for, in
/// loop order.
IndexVars underlying_vars(const IndexVar& v, const std::vector<SchedulingRelation>& rels);

/// Sum-of-products form of an assignment for the reference oracle.
Einsum to_einsum(const AssignStmt& a);

} // namespace spws
