#include "spws/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "spws/error.hpp"

namespace spws {

namespace {

bool contains(const IndexVars& vars, const IndexVar& v) {
  return std::find(vars.begin(), vars.end(), v) != vars.end();
}

std::size_t index_of(const IndexVars& vars, const IndexVar& v) {
  return static_cast<std::size_t>(std::find(vars.begin(), vars.end(), v) - vars.begin());
}

bool is_sparse(const Access& a) { return !a.tensor.format.all_dense(); }

// Storage kind of the level that `v` indexes in `a`, if any.
std::optional<LevelKind> level_kind_of(const Access& a, const IndexVar& v) {
  const IndexVars order = a.access_order();
  const std::size_t l = index_of(order, v);
  if (l == order.size()) return std::nullopt;
  return a.tensor.format.level(static_cast<int>(l)).kind;
}

// Dense when no operand stores `v` in a Compressed or Singleton level.
LevelKind iteration_kind(const IndexVar& v, const Expr& rhs) {
  for (const auto& a : accesses(rhs)) {
    const auto k = level_kind_of(a, v);
    if (k && *k != LevelKind::Dense) return LevelKind::Compressed;
  }
  return LevelKind::Dense;
}

bool has_where(const Stmt& s) {
  if (s.is_where()) return true;
  if (s.is_forall()) return has_where(s.as_forall().body);
  return false;
}

std::string upper(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
  return out;
}

std::string fresh_tensor_name(const AssignStmt& a) {
  std::set<std::string> used{a.lhs.tensor.name};
  for (const auto& x : accesses(a.rhs)) used.insert(x.tensor.name);
  std::string name = "W";
  for (int n = 0; used.count(name); ++n) name = "W" + std::to_string(n);
  return name;
}

IndexVars slice(const IndexVars& v, std::size_t b, std::size_t e) {
  return IndexVars(v.begin() + static_cast<std::ptrdiff_t>(b), v.begin() + static_cast<std::ptrdiff_t>(e));
}

// Wraps the statement as "forall(hoisted) (consumer where producer)" with a
// workspace over ws_vars.
Stmt wrap_workspace(const Stmt& stmt, std::size_t hoisted, const IndexVars& ws_vars, const TensorVar& ws) {
  const AssignStmt& assign = innermost_assign(stmt);
  if (hoisted == 0) return stmt.precompute(assign.rhs, ws_vars, ws_vars, ws);
  const IndexVars chain = forall_chain(stmt);
  const IndexVars outer = slice(chain, 0, hoisted);
  bool reduces = false;
  for (const auto& v : expr_vars(assign.rhs)) reduces |= !contains(ws_vars, v) && !contains(outer, v);
  Stmt producer = Stmt::assign(Access{ws, ws_vars}, assign.rhs, reduces);
  for (std::size_t x = chain.size(); x > hoisted; --x) producer = Stmt::forall(chain[x - 1], producer);
  Stmt consumer = Stmt::assign(assign.lhs, Expr(Access{ws, ws_vars}), false);
  const IndexVars out = assign.lhs.access_order();
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    if (!contains(outer, *it)) consumer = Stmt::forall(*it, consumer);
  }
  Stmt result = Stmt::where(consumer, producer);
  for (auto it = outer.rbegin(); it != outer.rend(); ++it) result = Stmt::forall(*it, result);
  return result.with_relations(stmt.relations());
}

} // namespace

std::string Classification::label() const {
  return std::string(computation == Computation::Appending ? "appending" : "scattering") + ", order " +
         std::to_string(ordering);
}

IndexVars loop_order(const Stmt& stmt) {
  IndexVars out = forall_chain(stmt);
  const Stmt& body = chain_body(stmt);
  if (body.is_where()) {
    for (const auto& v : loop_order(body.as_where().producer)) out.push_back(v);
  }
  return out;
}

IndexVars reduction_vars(const AssignStmt& assign) {
  IndexVars out;
  for (const auto& v : expr_vars(assign.rhs)) {
    if (!contains(assign.lhs.vars, v)) out.push_back(v);
  }
  return out;
}

bool has_sparse_union(const Expr& rhs) {
  int sparse_terms = 0;
  for (const auto& t : expand(rhs)) {
    if (std::any_of(t.factors.begin(), t.factors.end(), is_sparse)) ++sparse_terms;
  }
  return sparse_terms > 1;
}

Classification classify(const IndexVars& loops, const IndexVars& output_order, const Expr& rhs) {
  if (loops.empty() && !output_order.empty()) throw Error("classify: empty loop order");
  for (const auto& v : output_order) {
    if (!contains(loops, v)) throw Error("classify: output variable " + v.name() + " is not in the loop order");
  }
  Classification c;
  const int n = static_cast<int>(output_order.size());
  IndexVars restricted;
  for (const auto& v : loops) {
    if (contains(output_order, v)) restricted.push_back(v);
  }
  c.p1 = n + 1;
  for (int x = 0; x < n; ++x) {
    if (!(restricted[static_cast<std::size_t>(x)] == output_order[static_cast<std::size_t>(x)])) {
      c.p1 = x + 1;
      break;
    }
  }
  c.concordant = c.p1 == n + 1;

  IndexVars reductions;
  for (const auto& v : loops) {
    if (!contains(output_order, v)) reductions.push_back(v);
  }
  c.multiple_reductions = reductions.size() > 1;
  c.p2 = 0;
  if (!reductions.empty()) {
    const std::size_t r = index_of(loops, reductions.front());
    for (std::size_t x = r + 1; x < loops.size(); ++x) c.p2 += contains(output_order, loops[x]) ? 1 : 0;
  }
  c.ordering = std::max(n + 1 - c.p1, c.p2);
  c.computation = reductions.empty() && !has_sparse_union(rhs) ? Computation::Appending : Computation::Scattering;
  return c;
}

Classification classify(const Stmt& stmt) {
  const Stmt& body = chain_body(stmt);
  const AssignStmt& a = body.is_where() ? innermost_assign(body.as_where().producer) : innermost_assign(stmt);
  if (body.is_where()) {
    // The producer writes the workspace; classify against the final result.
    const AssignStmt& c = innermost_assign(body.as_where().consumer);
    return classify(reconstruct_input_order(stmt), c.lhs.access_order(), a.rhs);
  }
  return classify(reconstruct_input_order(stmt), a.lhs.access_order(), a.rhs);
}

IndexVars reconstruct_input_order(const IndexVars& loops, const std::vector<SchedulingRelation>& relations,
                                  const IndexVars& reductions) {
  IndexVars order = loops;
  const auto at = [&](const IndexVar& v) {
    const std::size_t p = index_of(order, v);
    if (p == order.size()) {
      throw Error("reconstruct_input_order: " + v.name() + " is not in the current order (corrupt relation log)");
    }
    return p;
  };
  for (auto it = relations.rbegin(); it != relations.rend(); ++it) {
    if (const auto* s = std::get_if<SplitRel>(&*it)) {
      const auto under = underlying_vars(s->parent, relations);
      const bool reduction = std::any_of(under.begin(), under.end(),
                                         [&](const IndexVar& u) { return contains(reductions, u); });
      const std::size_t po = at(s->outer);
      const std::size_t pi = at(s->inner);
      if (reduction) {
        order[po] = s->parent;
        order.erase(order.begin() + static_cast<std::ptrdiff_t>(pi));
      } else {
        order[pi] = s->parent;
        order.erase(order.begin() + static_cast<std::ptrdiff_t>(po));
      }
    } else if (const auto* f = std::get_if<FuseRel>(&*it)) {
      const std::size_t p = at(f->fused);
      order[p] = f->outer;
      order.insert(order.begin() + static_cast<std::ptrdiff_t>(p) + 1, f->inner);
    } else if (const auto* q = std::get_if<PosRel>(&*it)) {
      order[at(q->pos)] = q->coord;
    }
  }
  return order;
}

IndexVars reconstruct_input_order(const Stmt& stmt) {
  const Stmt& body = chain_body(stmt);
  IndexVars reductions;
  if (body.is_where()) {
    const AssignStmt& prod = innermost_assign(body.as_where().producer);
    const AssignStmt& cons = innermost_assign(body.as_where().consumer);
    const IndexVars outer = forall_chain(stmt);
    for (const auto& v : expr_vars(prod.rhs)) {
      if (!contains(prod.lhs.vars, v) && !contains(cons.lhs.vars, v) && !contains(outer, v)) reductions.push_back(v);
    }
  } else {
    reductions = reduction_vars(innermost_assign(stmt));
  }
  return reconstruct_input_order(loop_order(stmt), stmt.relations(), reductions);
}

OrderComparison compare_orders(const IndexVars& input_order, const IndexVars& output_order) {
  OrderComparison c;
  for (const auto& v : output_order) {
    if (std::count(output_order.begin(), output_order.end(), v) != 1 ||
        std::count(input_order.begin(), input_order.end(), v) != 1) {
      throw Error("compare_orders: variable " + v.name() + " must appear exactly once in both orders");
    }
  }
  for (const auto& v : input_order) {
    if (contains(output_order, v)) {
      c.pruned.push_back(v);
      c.ow_order.push_back(static_cast<int>(index_of(output_order, v)));
    }
  }
  return c;
}

std::string to_string(InsertAction a) {
  switch (a) {
    case InsertAction::AlreadyInserted: return "unchanged (workspace already present)";
    case InsertAction::DenseOutput: return "unchanged (dense result)";
    case InsertAction::ScalarAccumulation: return "unchanged (scalar accumulation, appended in order)";
    case InsertAction::SparseWorkspace: return "sparse workspace";
    case InsertAction::UnionWorkspace: return "sparse workspace (union of sparse terms)";
    case InsertAction::ConversionWorkspace: return "sparse workspace (format conversion)";
    case InsertAction::DenseWorkspace: return "dense workspace with hoisted loops";
    case InsertAction::HoistedWorkspace: return "sparse workspace with hoisted loops";
    case InsertAction::FullWorkspace: return "sparse workspace (full order)";
  }
  return "?";
}

InsertionDecision plan_insertion(const Stmt& stmt, SortPolicy policy, std::size_t capacity) {
  InsertionDecision d;
  d.result = stmt;
  if (has_where(stmt)) {
    d.action = InsertAction::AlreadyInserted;
    d.input_order = reconstruct_input_order(stmt);
    d.classification = classify(stmt);
    return d;
  }
  const AssignStmt& assign = innermost_assign(stmt);
  const IndexVars chain = forall_chain(stmt);
  d.input_order = reconstruct_input_order(stmt);
  d.output_order = assign.lhs.access_order();
  d.classification = classify(d.input_order, d.output_order, assign.rhs);
  const Format& out_format = assign.lhs.tensor.format;
  const std::size_t n = d.output_order.size();

  const auto sparse_ws = [&](InsertAction action, std::size_t hoisted) {
    const IndexVars in_rest = slice(d.input_order, hoisted, d.input_order.size());
    const IndexVars out_rest = slice(d.output_order, hoisted, n);
    const OrderComparison cmp = compare_orders(in_rest, out_rest);
    WorkspaceDescriptor desc;
    desc.order = static_cast<int>(cmp.pruned.size());
    for (const auto& v : cmp.pruned) desc.dims.push_back(upper(v.name()));
    desc.policy = policy;
    desc.capacity = capacity;
    desc.ow_order = cmp.ow_order;
    const TensorVar ws = TensorVar::sparse_ws(fresh_tensor_name(assign), desc);
    d.action = action;
    d.hoisted = slice(d.input_order, 0, hoisted);
    d.workspace_vars = cmp.pruned;
    d.descriptor = desc;
    d.result = wrap_workspace(stmt, hoisted, cmp.pruned, ws);
    return d;
  };

  if (out_format.all_dense()) {
    d.action = InsertAction::DenseOutput;
    return d;
  }
  if (has_sparse_union(assign.rhs) || expand(assign.rhs).size() > 1) return sparse_ws(InsertAction::UnionWorkspace, 0);
  if (!d.classification.concordant) return sparse_ws(InsertAction::SparseWorkspace, 0);
  for (std::size_t l = 0; l < n; ++l) {
    const bool out_random = out_format.level(static_cast<int>(l)).kind == LevelKind::Dense;
    if (!out_random && iteration_kind(d.output_order[l], assign.rhs) == LevelKind::Dense) {
      return sparse_ws(InsertAction::ConversionWorkspace, 0);
    }
  }
  if (d.classification.ordering == 0) {
    d.action = InsertAction::ScalarAccumulation;
    return d;
  }

  const auto actual_prefix = [&](std::size_t len) {
    if (len > chain.size()) return false;
    for (std::size_t x = 0; x < len; ++x) {
      if (!(chain[x] == d.input_order[x]) || chain[x].derived()) return false;
    }
    return true;
  };

  // Dense workspace: one output variable left inside the outermost reduction.
  const IndexVars reductions = reduction_vars(assign);
  std::size_t r = d.input_order.size();
  for (std::size_t x = 0; x < d.input_order.size(); ++x) {
    if (contains(reductions, d.input_order[x])) {
      r = x;
      break;
    }
  }
  if (r + 2 == d.input_order.size()) {
    const IndexVar last = d.input_order.back();
    IndexVars expect = slice(d.input_order, 0, r);
    expect.push_back(last);
    if (actual_prefix(r) && chain.back() == last && !chain.back().derived() && expect == d.output_order) {
      const TensorVar ws = TensorVar::dense_ws(fresh_tensor_name(assign), 1);
      d.action = InsertAction::DenseWorkspace;
      d.hoisted = slice(d.input_order, 0, r);
      d.workspace_vars = {last};
      d.result = wrap_workspace(stmt, r, {last}, ws);
      return d;
    }
  }

  // Common iteration hoisting over the matching prefix.
  std::size_t p = 0;
  while (p < n && p < d.input_order.size() && d.input_order[p] == d.output_order[p]) ++p;
  bool abilities = p > 0 && p < n && actual_prefix(p);
  for (std::size_t x = 0; abilities && x < p; ++x) {
    if (out_format.level(static_cast<int>(x)).kind == LevelKind::Dense) continue;
    for (const auto& a : accesses(assign.rhs)) {
      const auto k = level_kind_of(a, d.output_order[x]);
      if (k && *k == LevelKind::Dense) abilities = false;
    }
  }
  if (abilities) return sparse_ws(InsertAction::HoistedWorkspace, p);
  return sparse_ws(InsertAction::FullWorkspace, 0);
}

Stmt insert_sparse_workspace(const Stmt& stmt, SortPolicy policy, std::size_t capacity) {
  return plan_insertion(stmt, policy, capacity).result;
}

std::string classify_report(const Stmt& stmt, SortPolicy policy, std::size_t capacity) {
  const InsertionDecision d = plan_insertion(stmt, policy, capacity);
  const Classification& c = d.classification;
  std::ostringstream os;
  os << "statement:      " << stmt.to_string() << "\n";
  os << "loop order:     " << to_string(loop_order(stmt)) << "\n";
  os << "input order:    " << to_string(d.input_order) << "\n";
  const Stmt& body = chain_body(stmt);
  const AssignStmt& a = body.is_where() ? innermost_assign(body.as_where().producer) : innermost_assign(stmt);
  os << "access orders:  " << a.lhs.tensor.name << " " << to_string(a.lhs.access_order());
  for (const auto& x : accesses(a.rhs)) os << ", " << x.tensor.name << " " << to_string(x.access_order());
  os << "\n";
  os << "p1: " << c.p1 << "  p2: " << c.p2 << "  ordering: " << c.ordering << "\n";
  os << "concordant:     " << (c.concordant ? "yes" : "no") << "\n";
  os << "classification: " << c.label() << "\n";
  if (c.multiple_reductions) os << "note:           multiple reduction variables; p2 uses the outermost\n";
  os << "insertion:      " << to_string(d.action) << "\n";
  if (!d.hoisted.empty()) os << "hoisted:        " << to_string(d.hoisted) << "\n";
  if (d.descriptor) os << "workspace:      " << d.descriptor->to_string() << "\n";
  if (d.action == InsertAction::DenseWorkspace) {
    os << "workspace:      dense, order 1, over " << to_string(d.workspace_vars) << "\n";
  }
  os << "result:         " << d.result.to_string() << "\n";
  return os.str();
}

} // namespace spws
