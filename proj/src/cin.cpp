#include "spws/cin.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "spws/error.hpp"

namespace spws {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool contains(const IndexVars& vars, const IndexVar& v) {
  return std::find(vars.begin(), vars.end(), v) != vars.end();
}

void note(IndexVars& vars, const IndexVar& v) {
  if (!contains(vars, v)) vars.push_back(v);
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string format_const(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

Stmt build_chain(const IndexVars& vars, const Stmt& body) {
  Stmt s = body;
  for (auto it = vars.rbegin(); it != vars.rend(); ++it) s = Stmt::forall(*it, s);
  return s;
}

IndexVars rename_vars(const IndexVars& vars, const std::map<std::string, IndexVar>& m) {
  IndexVars out;
  for (const auto& v : vars) {
    auto it = m.find(v.name());
    out.push_back(it == m.end() ? v : it->second);
  }
  return out;
}

Access rename(const Access& a, const std::map<std::string, IndexVar>& m) {
  return {a.tensor, rename_vars(a.vars, m)};
}

Expr rename(const Expr& e, const std::map<std::string, IndexVar>& m) {
  return std::visit(overloaded{
                        [&](const AccessExpr& a) { return Expr(rename(a.access, m)); },
                        [&](const ConstExpr& c) { return Expr(c.value); },
                        [&](const AddExpr& a) { return rename(a.lhs, m) + rename(a.rhs, m); },
                        [&](const MulExpr& a) { return rename(a.lhs, m) * rename(a.rhs, m); },
                    },
                    e.node());
}

// Replaces the first subtree equal to `target`; `done` records a hit.
Expr replace_first(const Expr& e, const Expr& target, const Expr& with, bool& done) {
  if (done) return e;
  if (e == target) {
    done = true;
    return with;
  }
  return std::visit(overloaded{
                        [&](const AddExpr& a) {
                          Expr l = replace_first(a.lhs, target, with, done);
                          Expr r = replace_first(a.rhs, target, with, done);
                          return l + r;
                        },
                        [&](const MulExpr& a) {
                          Expr l = replace_first(a.lhs, target, with, done);
                          Expr r = replace_first(a.rhs, target, with, done);
                          return l * r;
                        },
                        [&](const auto&) { return e; },
                    },
                    e.node());
}

// All index variable names used anywhere in a statement (loops and accesses).
void collect_names(const Stmt& s, std::set<std::string>& names) {
  std::visit(overloaded{
                 [&](const ForallStmt& f) {
                   names.insert(f.var.name());
                   collect_names(f.body, names);
                 },
                 [&](const AssignStmt& a) {
                   for (const auto& v : a.lhs.vars) names.insert(v.name());
                   for (const auto& v : expr_vars(a.rhs)) names.insert(v.name());
                 },
                 [&](const WhereStmt& w) {
                   collect_names(w.consumer, names);
                   collect_names(w.producer, names);
                 },
             },
             s.node());
}

void require_fresh(const Stmt& s, const IndexVar& v, const char* op) {
  std::set<std::string> names;
  collect_names(s, names);
  for (const auto& rel : s.relations()) {
    std::visit(overloaded{
                   [&](const SplitRel& r) { names.insert({r.outer.name(), r.inner.name()}); },
                   [&](const FuseRel& r) { names.insert(r.fused.name()); },
                   [&](const PosRel& r) { names.insert(r.pos.name()); },
                   [&](const ReorderRel&) {},
               },
               rel);
  }
  if (v.name().empty()) throw Error(std::string(op) + ": empty index variable name");
  if (names.count(v.name())) {
    throw Error(std::string(op) + ": index variable " + v.name() + " already exists");
  }
}

std::size_t chain_position(const IndexVars& chain, const IndexVar& v, const char* op) {
  auto it = std::find(chain.begin(), chain.end(), v);
  if (it == chain.end()) {
    throw Error(std::string(op) + ": index variable " + v.name() + " is not in the loop nest");
  }
  return static_cast<std::size_t>(it - chain.begin());
}

void require_forall_nest(const Stmt& s, const char* op) {
  if (!chain_body(s).is_assign()) {
    throw Error(std::string(op) + ": statement is not a forall nest around one assignment");
  }
}

} // namespace

std::string to_string(const IndexVars& vars) {
  std::vector<std::string> names;
  for (const auto& v : vars) names.push_back(v.name());
  return "(" + join(names, ",") + ")";
}

void WorkspaceDescriptor::validate() const {
  if (order < 0) throw Error("workspace: negative order");
  if (dims.size() != static_cast<std::size_t>(order)) {
    throw Error("workspace: " + std::to_string(dims.size()) + " dims for order " + std::to_string(order));
  }
  if (ow_order.size() != static_cast<std::size_t>(order) || !is_permutation_of_iota(ow_order)) {
    throw Error("workspace: ow_order is not a permutation of 0.." + std::to_string(order - 1));
  }
  if (capacity == 0) throw Error("workspace: capacity must be positive");
}

std::string WorkspaceDescriptor::to_string() const {
  std::vector<std::string> ow;
  for (int x : ow_order) ow.push_back(std::to_string(x));
  std::string out = "SpFormat(" + std::to_string(order) + ", " + spws::to_string(policy) + "), {" +
                    join(dims, ",") + "}, {" + join(ow, ",") + "}, cap=" + std::to_string(capacity);
  if (policy == SortPolicy::Hash) {
    out += hash_buckets ? ", L=" + std::to_string(hash_buckets) : ", L=auto";
  }
  return out;
}

TensorVar TensorVar::sparse_ws(std::string name, WorkspaceDescriptor desc) {
  desc.validate();
  TensorVar t;
  t.name = std::move(name);
  t.order = desc.order;
  std::vector<LevelFormat> levels(static_cast<std::size_t>(desc.order), LevelFormat::compressed());
  t.format = Format(levels, inverse_permutation(desc.ow_order));
  t.sparse_workspace = std::move(desc);
  return t;
}

TensorVar TensorVar::dense_ws(std::string name, int order) {
  TensorVar t;
  t.name = std::move(name);
  t.order = order;
  t.format = formats::dense(order);
  t.dense_workspace = true;
  return t;
}

std::string Access::to_string() const {
  if (vars.empty()) return tensor.name;
  std::vector<std::string> names;
  for (const auto& v : vars) names.push_back(v.name());
  return tensor.name + "(" + join(names, ",") + ")";
}

Expr::Expr(Access a) : node_(std::make_shared<const Node>(AccessExpr{std::move(a)})) {}
Expr::Expr(double c) : node_(std::make_shared<const Node>(ConstExpr{c})) {}

Expr operator+(const Expr& a, const Expr& b) {
  return Expr(std::make_shared<const Expr::Node>(AddExpr{a, b}));
}

Expr operator*(const Expr& a, const Expr& b) {
  return Expr(std::make_shared<const Expr::Node>(MulExpr{a, b}));
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  if (!a.node_ || !b.node_ || a.node_->index() != b.node_->index()) return false;
  return std::visit(overloaded{
                        [&](const AccessExpr& x) {
                          const auto& y = std::get<AccessExpr>(*b.node_);
                          return x.access.tensor.name == y.access.tensor.name && x.access.vars == y.access.vars;
                        },
                        [&](const ConstExpr& x) { return x.value == std::get<ConstExpr>(*b.node_).value; },
                        [&](const AddExpr& x) {
                          const auto& y = std::get<AddExpr>(*b.node_);
                          return x.lhs == y.lhs && x.rhs == y.rhs;
                        },
                        [&](const MulExpr& x) {
                          const auto& y = std::get<MulExpr>(*b.node_);
                          return x.lhs == y.lhs && x.rhs == y.rhs;
                        },
                    },
                    *a.node_);
}

std::string Expr::to_string() const {
  if (!node_) return "<undefined>";
  return std::visit(overloaded{
                        [](const AccessExpr& a) { return a.access.to_string(); },
                        [](const ConstExpr& c) { return format_const(c.value); },
                        [](const AddExpr& a) { return a.lhs.to_string() + " + " + a.rhs.to_string(); },
                        [](const MulExpr& m) {
                          auto side = [](const Expr& e) {
                            const bool paren = std::holds_alternative<AddExpr>(e.node());
                            return paren ? "(" + e.to_string() + ")" : e.to_string();
                          };
                          return side(m.lhs) + " * " + side(m.rhs);
                        },
                    },
                    *node_);
}

std::vector<ProductTerm> expand(const Expr& e) {
  return std::visit(overloaded{
                        [](const AccessExpr& a) { return std::vector<ProductTerm>{{1.0, {a.access}}}; },
                        [](const ConstExpr& c) { return std::vector<ProductTerm>{{c.value, {}}}; },
                        [](const AddExpr& a) {
                          auto l = expand(a.lhs);
                          auto r = expand(a.rhs);
                          l.insert(l.end(), r.begin(), r.end());
                          return l;
                        },
                        [](const MulExpr& m) {
                          std::vector<ProductTerm> out;
                          for (const auto& l : expand(m.lhs)) {
                            for (const auto& r : expand(m.rhs)) {
                              ProductTerm t{l.coef * r.coef, l.factors};
                              t.factors.insert(t.factors.end(), r.factors.begin(), r.factors.end());
                              out.push_back(std::move(t));
                            }
                          }
                          return out;
                        },
                    },
                    e.node());
}

std::vector<Access> accesses(const Expr& e) {
  return std::visit(overloaded{
                        [](const AccessExpr& a) { return std::vector<Access>{a.access}; },
                        [](const ConstExpr&) { return std::vector<Access>{}; },
                        [](const auto& bin) {
                          auto l = accesses(bin.lhs);
                          auto r = accesses(bin.rhs);
                          l.insert(l.end(), r.begin(), r.end());
                          return l;
                        },
                    },
                    e.node());
}

IndexVars expr_vars(const Expr& e) {
  IndexVars out;
  for (const auto& a : accesses(e)) {
    for (const auto& v : a.vars) note(out, v);
  }
  return out;
}

std::string to_string(const SchedulingRelation& r) {
  return std::visit(overloaded{
                        [](const SplitRel& s) {
                          return "split(" + s.parent.name() + "," + s.outer.name() + "," + s.inner.name() + "," +
                                 std::to_string(s.step) + ")";
                        },
                        [](const FuseRel& f) {
                          return "fuse(" + f.outer.name() + "," + f.inner.name() + "," + f.fused.name() + ")";
                        },
                        [](const PosRel& p) {
                          return "pos(" + p.coord.name() + "," + p.pos.name() + "," + p.access.to_string() + ")";
                        },
                        [](const ReorderRel& o) {
                          std::vector<std::string> names;
                          for (const auto& v : o.order) names.push_back(v.name());
                          return "reorder(" + join(names, ",") + ")";
                        },
                    },
                    r);
}

Stmt Stmt::forall(IndexVar v, Stmt body) {
  return Stmt(std::make_shared<const Node>(ForallStmt{std::move(v), std::move(body)}));
}

Stmt Stmt::assign(Access lhs, Expr rhs, bool accumulate) {
  return Stmt(std::make_shared<const Node>(AssignStmt{std::move(lhs), std::move(rhs), accumulate}));
}

Stmt Stmt::where(Stmt consumer, Stmt producer) {
  return Stmt(std::make_shared<const Node>(WhereStmt{std::move(consumer), std::move(producer)}));
}

bool Stmt::is_forall() const { return node_ && std::holds_alternative<ForallStmt>(*node_); }
bool Stmt::is_assign() const { return node_ && std::holds_alternative<AssignStmt>(*node_); }
bool Stmt::is_where() const { return node_ && std::holds_alternative<WhereStmt>(*node_); }
const ForallStmt& Stmt::as_forall() const { return std::get<ForallStmt>(*node_); }
const AssignStmt& Stmt::as_assign() const { return std::get<AssignStmt>(*node_); }
const WhereStmt& Stmt::as_where() const { return std::get<WhereStmt>(*node_); }

Stmt Stmt::with_relations(std::vector<SchedulingRelation> rels) const {
  Stmt s = *this;
  s.relations_ = std::move(rels);
  return s;
}

Stmt Stmt::reorder(const IndexVars& order) const {
  require_forall_nest(*this, "reorder");
  IndexVars chain = forall_chain(*this);
  std::vector<std::size_t> slots;
  for (const auto& v : order) {
    const std::size_t p = chain_position(chain, v, "reorder");
    if (std::find(slots.begin(), slots.end(), p) != slots.end()) {
      throw Error("reorder: index variable " + v.name() + " listed twice");
    }
    slots.push_back(p);
  }
  std::sort(slots.begin(), slots.end());
  IndexVars next = chain;
  for (std::size_t x = 0; x < order.size(); ++x) next[slots[x]] = chain[chain_position(chain, order[x], "reorder")];
  auto rels = relations_;
  rels.push_back(ReorderRel{order});
  return build_chain(next, chain_body(*this)).with_relations(std::move(rels));
}

Stmt Stmt::split(const IndexVar& i, const IndexVar& i0, const IndexVar& i1, std::size_t step) const {
  require_forall_nest(*this, "split");
  if (step == 0) throw Error("split: step must be positive");
  IndexVars chain = forall_chain(*this);
  const std::size_t p = chain_position(chain, i, "split");
  require_fresh(*this, i0, "split");
  require_fresh(*this, i1, "split");
  if (i0 == i1) throw Error("split: outer and inner variables must differ");
  const IndexVar outer(i0.name(), IndexVarKind::Split);
  const IndexVar inner(i1.name(), IndexVarKind::Split);
  const IndexVar parent = chain[p];
  chain[p] = outer;
  chain.insert(chain.begin() + static_cast<std::ptrdiff_t>(p) + 1, inner);
  auto rels = relations_;
  rels.push_back(SplitRel{parent, outer, inner, step});
  return build_chain(chain, chain_body(*this)).with_relations(std::move(rels));
}

Stmt Stmt::fuse(const IndexVar& i, const IndexVar& j, const IndexVar& f) const {
  require_forall_nest(*this, "fuse");
  IndexVars chain = forall_chain(*this);
  const std::size_t pi = chain_position(chain, i, "fuse");
  const std::size_t pj = chain_position(chain, j, "fuse");
  if (pj != pi + 1) {
    throw Error("fuse: " + i.name() + " must be directly outside " + j.name());
  }
  require_fresh(*this, f, "fuse");
  const IndexVar fused(f.name(), IndexVarKind::Fused);
  const IndexVar oi = chain[pi];
  const IndexVar oj = chain[pj];
  chain[pi] = fused;
  chain.erase(chain.begin() + static_cast<std::ptrdiff_t>(pj));
  auto rels = relations_;
  rels.push_back(FuseRel{oi, oj, fused});
  return build_chain(chain, chain_body(*this)).with_relations(std::move(rels));
}

Stmt Stmt::pos(const IndexVar& i, const IndexVar& p, const Access& access) const {
  require_forall_nest(*this, "pos");
  IndexVars chain = forall_chain(*this);
  const std::size_t at = chain_position(chain, i, "pos");
  const auto& assign = chain_body(*this).as_assign();
  const auto accs = accesses(assign.rhs);
  auto hit = std::find_if(accs.begin(), accs.end(), [&](const Access& a) {
    return a.tensor.name == access.tensor.name && a.vars == access.vars;
  });
  if (hit == accs.end()) {
    throw Error("pos: " + access.to_string() + " is not an operand of the statement");
  }
  for (const auto& u : underlying_vars(chain[at], relations_)) {
    if (!contains(hit->vars, u)) {
      throw Error("pos: " + access.to_string() + " does not index " + u.name());
    }
  }
  require_fresh(*this, p, "pos");
  const IndexVar pv(p.name(), IndexVarKind::Position);
  const IndexVar coord = chain[at];
  chain[at] = pv;
  auto rels = relations_;
  rels.push_back(PosRel{coord, pv, *hit});
  return build_chain(chain, chain_body(*this)).with_relations(std::move(rels));
}

Stmt Stmt::precompute(const Expr& expr, const IndexVars& i_vars, const IndexVars& o_vars,
                      const TensorVar& ws) const {
  require_forall_nest(*this, "precompute");
  const IndexVars chain = forall_chain(*this);
  const AssignStmt& assign = chain_body(*this).as_assign();

  if (ws.order != static_cast<int>(i_vars.size())) {
    throw Error("precompute: workspace order " + std::to_string(ws.order) + " does not match " +
                std::to_string(i_vars.size()) + " index variables");
  }
  const IndexVars& outs = o_vars.empty() ? i_vars : o_vars;
  if (outs.size() != i_vars.size() || !std::is_permutation(outs.begin(), outs.end(), i_vars.begin())) {
    throw Error("precompute: o_vars must be a permutation of i_vars");
  }
  for (std::size_t x = 0; x < i_vars.size(); ++x) {
    if (std::count(i_vars.begin(), i_vars.end(), i_vars[x]) != 1) {
      throw Error("precompute: index variable " + i_vars[x].name() + " listed twice");
    }
  }

  const Expr ws_access = Expr(Access{ws, i_vars});
  bool found = false;
  const Expr rest = replace_first(assign.rhs, expr, ws_access, found);
  if (!found) throw Error("precompute: " + expr.to_string() + " is not a sub-expression of the statement");

  // Variables of expr that are still needed outside it must live in ws.
  const IndexVars inner = expr_vars(expr);
  IndexVars outside = assign.lhs.vars;
  for (const auto& v : expr_vars(rest)) note(outside, v);
  for (const auto& v : inner) {
    if (contains(outside, v) && !contains(i_vars, v)) {
      throw Error("precompute: i_vars do not cover index variable " + v.name() + " of the expression");
    }
  }
  for (const auto& v : i_vars) {
    if (!contains(inner, v)) {
      throw Error("precompute: index variable " + v.name() + " does not appear in the expression");
    }
  }

  // Producer: the original loops restricted to those that drive expr.
  IndexVars producer_loops;
  for (const auto& v : chain) {
    const auto under = underlying_vars(v, relations_);
    if (std::any_of(under.begin(), under.end(), [&](const IndexVar& u) { return contains(inner, u); })) {
      producer_loops.push_back(v);
    }
  }
  bool reduces = false;
  for (const auto& v : inner) reduces |= !contains(i_vars, v);
  if (reduces && expand(rest).size() > 1) {
    throw Error("precompute: reducing " + expr.to_string() +
                " inside a sum changes how often the other terms are summed");
  }
  const Stmt producer = build_chain(producer_loops, Stmt::assign(Access{ws, i_vars}, expr, reduces));

  // Consumer: i_vars renamed to o_vars, loops in result access order.
  std::map<std::string, IndexVar> ren;
  for (std::size_t x = 0; x < i_vars.size(); ++x) ren[i_vars[x].name()] = outs[x];
  const Access lhs = rename(assign.lhs, ren);
  const Expr rhs = rename(rest, ren);
  IndexVars consumer_loops = lhs.access_order();
  bool consumer_reduces = false;
  for (const auto& v : expr_vars(rhs)) {
    if (!contains(consumer_loops, v)) {
      consumer_loops.push_back(v);
      consumer_reduces = true;
    }
  }
  const Stmt consumer = build_chain(consumer_loops, Stmt::assign(lhs, rhs, consumer_reduces));
  return Stmt::where(consumer, producer).with_relations(relations_);
}

std::string Stmt::to_string() const {
  if (!node_) return "<undefined>";
  std::string body = std::visit(overloaded{
                                    [](const ForallStmt& f) { return "forall(" + f.var.name() + ") " + f.body.to_string(); },
                                    [](const AssignStmt& a) {
                                      return a.lhs.to_string() + (a.accumulate ? " += " : " = ") + a.rhs.to_string();
                                    },
                                    [](const WhereStmt& w) {
                                      return "(" + w.consumer.to_string() + ") where (" + w.producer.to_string() + ")";
                                    },
                                },
                                *node_);
  if (!relations_.empty()) {
    std::vector<std::string> rels;
    for (const auto& r : relations_) rels.push_back(spws::to_string(r));
    body += " s.t. " + join(rels, ", ");
  }
  return body;
}

Stmt from_einsum(const Access& lhs, const Expr& rhs, const IndexVars& loop_order) {
  if (!rhs.defined()) throw Error("from_einsum: empty right-hand side");
  std::map<std::string, const TensorVar*> tensors;
  auto check_access = [&](const Access& a) {
    if (static_cast<int>(a.vars.size()) != a.tensor.order || a.tensor.format.order() != a.tensor.order) {
      throw Error("from_einsum: " + a.to_string() + " does not match the order of " + a.tensor.name);
    }
    for (std::size_t x = 0; x < a.vars.size(); ++x) {
      if (std::count(a.vars.begin(), a.vars.end(), a.vars[x]) != 1) {
        throw Error("from_einsum: repeated index variable in " + a.to_string());
      }
    }
    auto [it, inserted] = tensors.emplace(a.tensor.name, &a.tensor);
    if (!inserted && (it->second->order != a.tensor.order || !(it->second->format == a.tensor.format))) {
      throw Error("from_einsum: tensor " + a.tensor.name + " used with conflicting order or format");
    }
  };
  check_access(lhs);
  const auto accs = accesses(rhs);
  for (const auto& a : accs) {
    if (a.tensor.name == lhs.tensor.name) {
      throw Error("from_einsum: result tensor " + lhs.tensor.name + " also appears on the right-hand side");
    }
    check_access(a);
  }

  IndexVars used = lhs.vars;
  for (const auto& v : expr_vars(rhs)) note(used, v);
  for (const auto& v : used) {
    if (!contains(loop_order, v)) throw Error("from_einsum: unbound index variable " + v.name());
  }
  for (std::size_t x = 0; x < loop_order.size(); ++x) {
    if (!contains(used, loop_order[x])) {
      throw Error("from_einsum: loop variable " + loop_order[x].name() + " is not used");
    }
    if (std::count(loop_order.begin(), loop_order.end(), loop_order[x]) != 1) {
      throw Error("from_einsum: loop variable " + loop_order[x].name() + " listed twice");
    }
  }
  bool reduces = false;
  for (const auto& v : expr_vars(rhs)) reduces |= !contains(lhs.vars, v);
  return build_chain(loop_order, Stmt::assign(lhs, rhs, reduces));
}

IndexVars forall_chain(const Stmt& s) {
  IndexVars out;
  const Stmt* cur = &s;
  while (cur->is_forall()) {
    out.push_back(cur->as_forall().var);
    cur = &cur->as_forall().body;
  }
  return out;
}

const Stmt& chain_body(const Stmt& s) {
  const Stmt* cur = &s;
  while (cur->is_forall()) cur = &cur->as_forall().body;
  return *cur;
}

const AssignStmt& innermost_assign(const Stmt& s) {
  const Stmt& body = chain_body(s);
  if (!body.is_assign()) throw Error("statement is not a forall nest around one assignment");
  return body.as_assign();
}

IndexVars underlying_vars(const IndexVar& v, const std::vector<SchedulingRelation>& rels) {
  for (auto it = rels.rbegin(); it != rels.rend(); ++it) {
    if (const auto* s = std::get_if<SplitRel>(&*it); s && (s->outer == v || s->inner == v)) {
      return underlying_vars(s->parent, rels);
    }
    if (const auto* f = std::get_if<FuseRel>(&*it); f && f->fused == v) {
      IndexVars out = underlying_vars(f->outer, rels);
      for (const auto& u : underlying_vars(f->inner, rels)) out.push_back(u);
      return out;
    }
    if (const auto* p = std::get_if<PosRel>(&*it); p && p->pos == v) {
      return underlying_vars(p->coord, rels);
    }
  }
  return {IndexVar(v.name())};
}

Einsum to_einsum(const AssignStmt& a) {
  Einsum e;
  e.result = a.lhs.tensor.name;
  for (const auto& v : a.lhs.vars) e.result_vars.push_back(v.name());
  for (const auto& term : expand(a.rhs)) {
    Einsum::Term t;
    t.coef = term.coef;
    for (const auto& f : term.factors) {
      Einsum::Factor factor{f.tensor.name, {}};
      for (const auto& v : f.vars) factor.vars.push_back(v.name());
      t.factors.push_back(std::move(factor));
    }
    e.terms.push_back(std::move(t));
  }
  return e;
}

} // namespace spws
