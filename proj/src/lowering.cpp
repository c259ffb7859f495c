#include "spws/lowering.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "spws/error.hpp"

namespace spws {

namespace {

template <class T>
bool contains(const std::vector<T>& v, const T& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::string upper(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
  return out;
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

struct VarMeta {
  enum class Rel { None, SplitOuter, SplitInner, Fused, Pos };
  Rel rel = Rel::None;
  int parent = -1;
  int sibling = -1;
  std::size_t step = 0;
  int outer = -1;
  int inner = -1;
  int coord = -1;
  std::optional<Access> access;
  std::vector<int> underlying;
};

struct Leaf {
  const AssignStmt* assign = nullptr;
  double coef = 1.0;
  std::vector<int> slots;
  std::string text;
};

// Static binding state while lowering.
struct Static {
  std::vector<char> bound;
  std::vector<char> domain;
  std::vector<int> depth;
};

class Lowerer {
public:
  explicit Lowerer(const Stmt& stmt) : stmt_(stmt) {}

  LoopPlan run() {
    plan_.statement = stmt_.to_string();
    for (const auto& r : stmt_.relations()) register_relation(r);
    collect_tensors(stmt_);
    find_fast_paths(stmt_, {});
    collect_leaves(stmt_);
    Static st;
    st.bound.assign(plan_.vars.size(), 0);
    st.domain.assign(plan_.vars.size(), 0);
    st.depth.assign(plan_.slots.size(), 0);
    plan_.root.kind = PlanNode::Kind::Seq;
    for (std::size_t t = 0; t < plan_.tensors.size(); ++t) {
      const auto role = plan_.tensors[t].role;
      if (role == TensorRole::Input) continue;
      PlanNode alloc;
      alloc.kind = PlanNode::Kind::Alloc;
      alloc.tensor = static_cast<int>(t);
      plan_.root.children.push_back(std::move(alloc));
    }
    for (auto& n : lower_stmt(stmt_, leaves_under(stmt_), st)) plan_.root.children.push_back(std::move(n));
    return std::move(plan_);
  }

private:
  int var_id(const IndexVar& v) {
    for (std::size_t x = 0; x < plan_.vars.size(); ++x) {
      if (plan_.vars[x].name == v.name()) {
        if (v.derived()) plan_.vars[x].kind = v.kind();
        return static_cast<int>(x);
      }
    }
    plan_.vars.push_back({v.name(), v.kind()});
    meta_.emplace_back();
    return static_cast<int>(plan_.vars.size() - 1);
  }

  void register_relation(const SchedulingRelation& r) {
    if (const auto* s = std::get_if<SplitRel>(&r)) {
      const int p = var_id(s->parent), o = var_id(s->outer), i = var_id(s->inner);
      VarMeta m;
      m.parent = p;
      m.step = s->step;
      m.rel = VarMeta::Rel::SplitOuter;
      m.sibling = i;
      meta_[static_cast<std::size_t>(o)] = m;
      m.rel = VarMeta::Rel::SplitInner;
      m.sibling = o;
      meta_[static_cast<std::size_t>(i)] = m;
    } else if (const auto* f = std::get_if<FuseRel>(&r)) {
      const int o = var_id(f->outer), i = var_id(f->inner), fv = var_id(f->fused);
      VarMeta m;
      m.rel = VarMeta::Rel::Fused;
      m.outer = o;
      m.inner = i;
      meta_[static_cast<std::size_t>(fv)] = m;
    } else if (const auto* p = std::get_if<PosRel>(&r)) {
      const int c = var_id(p->coord), pv = var_id(p->pos);
      VarMeta m;
      m.rel = VarMeta::Rel::Pos;
      m.coord = c;
      m.access = p->access;
      for (const auto& u : underlying_vars(p->coord, stmt_.relations())) m.underlying.push_back(var_id(u));
      meta_[static_cast<std::size_t>(pv)] = m;
    }
  }

  VarMeta& meta(int v) { return meta_[static_cast<std::size_t>(v)]; }

  int tensor_id(const TensorVar& t) {
    for (std::size_t x = 0; x < plan_.tensors.size(); ++x) {
      if (plan_.tensors[x].name == t.name) {
        if (!(plan_.tensors[x].format == t.format) || plan_.tensors[x].order != t.order) {
          throw Error("lower: tensor " + t.name + " is used with conflicting formats");
        }
        return static_cast<int>(x);
      }
    }
    PlanTensor pt;
    pt.name = t.name;
    pt.order = t.order;
    pt.format = t.format;
    if (t.sparse_workspace) {
      pt.role = TensorRole::SparseWorkspace;
      pt.descriptor = t.sparse_workspace;
    } else if (t.dense_workspace) {
      pt.role = TensorRole::DenseWorkspace;
    }
    plan_.tensors.push_back(std::move(pt));
    return static_cast<int>(plan_.tensors.size() - 1);
  }

  void collect_tensors(const Stmt& s) {
    if (s.is_forall()) {
      var_id(s.as_forall().var);
      collect_tensors(s.as_forall().body);
    } else if (s.is_where()) {
      collect_tensors(s.as_where().producer);
      collect_tensors(s.as_where().consumer);
    } else {
      const AssignStmt& a = s.as_assign();
      const int t = tensor_id(a.lhs.tensor);
      PlanTensor& pt = plan_.tensors[static_cast<std::size_t>(t)];
      std::vector<int> mv;
      for (const auto& v : a.lhs.vars) mv.push_back(var_id(v));
      if (pt.role == TensorRole::Input) {
        if (plan_.output >= 0 && plan_.output != t) throw Error("lower: more than one result tensor");
        plan_.output = t;
        pt.role = TensorRole::Output;
      }
      if (pt.mode_vars.empty()) plan_.tensors[static_cast<std::size_t>(t)].mode_vars = mv;
      for (const auto& acc : accesses(a.rhs)) {
        const int r = tensor_id(acc.tensor);
        for (const auto& v : acc.vars) var_id(v);
        if (r == plan_.output) throw Error("lower: result tensor " + acc.tensor.name + " is also read");
      }
    }
  }

  // Decides, per where statement, whether the consumer is a plain copy of
  // the workspace in output order (then it becomes an append from the
  // workspace instead of a loop nest).
  void find_fast_paths(const Stmt& s, std::vector<int> enclosing) {
    if (s.is_forall()) {
      enclosing.push_back(var_id(s.as_forall().var));
      find_fast_paths(s.as_forall().body, enclosing);
      return;
    }
    if (!s.is_where()) return;
    const WhereStmt& w = s.as_where();
    if (w.producer.is_where() || chain_body(w.producer).is_where()) {
      throw Error("lower: nested where statements in a producer are not supported");
    }
    const AssignStmt& prod = innermost_assign(w.producer);
    const int ws = tensor_id(prod.lhs.tensor);
    const PlanTensor& wt = plan_.tensors[static_cast<std::size_t>(ws)];
    if (wt.role != TensorRole::SparseWorkspace && wt.role != TensorRole::DenseWorkspace) {
      throw Error("lower: where producer must write a workspace tensor, not " + wt.name);
    }
    if (!chain_body(w.consumer).is_assign()) throw Error("lower: where consumer must be a forall nest");
    const AssignStmt& cons = innermost_assign(w.consumer);
    const auto* rhs = std::get_if<AccessExpr>(&cons.rhs.node());
    FastPath fp;
    fp.ok = rhs && rhs->access.tensor.name == wt.name;
    if (fp.ok) {
      const IndexVars& wv = rhs->access.vars;
      std::vector<int> storage;
      for (int l = 0; l < wt.order; ++l) {
        storage.push_back(var_id(wv[static_cast<std::size_t>(wt.format.mode_of_level(l))]));
      }
      std::vector<int> chain;
      for (const auto& v : forall_chain(w.consumer)) chain.push_back(var_id(v));
      fp.ok = chain == storage;
      const IndexVars lhs_order = cons.lhs.access_order();
      std::vector<int> rest;
      for (const auto& v : lhs_order) {
        const int id = var_id(v);
        if (contains(storage, id)) {
          rest.push_back(id);
          fp.sources.push_back(static_cast<int>(std::find(storage.begin(), storage.end(), id) - storage.begin()));
        } else {
          if (!rest.empty() || !contains(enclosing, id)) fp.ok = false;
          fp.sources.push_back(-1);
        }
      }
      if (rest != storage) fp.ok = false;
    }
    fast_[&w] = fp;
  }

  void collect_leaves(const Stmt& s) {
    if (s.is_forall()) return collect_leaves(s.as_forall().body);
    if (s.is_where()) {
      collect_leaves(s.as_where().producer);
      collect_leaves(s.as_where().consumer);
      return;
    }
    const AssignStmt& a = s.as_assign();
    std::vector<Leaf> leaves;
    for (const auto& term : expand(a.rhs)) {
      Leaf leaf;
      leaf.assign = &a;
      leaf.coef = term.coef;
      std::vector<std::string> parts;
      if (term.coef != 1.0 || term.factors.empty()) parts.push_back(fmt_num(term.coef));
      for (const auto& f : term.factors) {
        PlanSlot slot;
        slot.tensor = tensor_id(f.tensor);
        for (const auto& v : f.access_order()) slot.level_vars.push_back(var_id(v));
        slot.text = f.to_string();
        parts.push_back(slot.text);
        plan_.slots.push_back(std::move(slot));
        leaf.slots.push_back(static_cast<int>(plan_.slots.size() - 1));
      }
      for (std::size_t x = 0; x < parts.size(); ++x) leaf.text += (x ? " * " : "") + parts[x];
      leaves.push_back(std::move(leaf));
    }
    leaves_[&a] = std::move(leaves);
  }

  // Leaves that compute inside `s` (fast-path consumers compute nothing).
  std::vector<const Leaf*> leaves_under(const Stmt& s) const {
    std::vector<const Leaf*> out;
    const auto add = [&](const Stmt& x, auto&& self) -> void {
      if (x.is_forall()) return self(x.as_forall().body, self);
      if (x.is_where()) {
        self(x.as_where().producer, self);
        if (!fast_.at(&x.as_where()).ok) self(x.as_where().consumer, self);
        return;
      }
      for (const auto& l : leaves_.at(&x.as_assign())) out.push_back(&l);
    };
    add(s, add);
    return out;
  }

  static bool has_where(const Stmt& s) {
    if (s.is_where()) return true;
    if (s.is_forall()) return has_where(s.as_forall().body);
    return false;
  }

  const PlanSlot& slot(int s) const { return plan_.slots[static_cast<std::size_t>(s)]; }
  const PlanTensor& tensor(int t) const { return plan_.tensors[static_cast<std::size_t>(t)]; }

  int leading_bound(int s, const Static& st) const {
    const auto& lv = slot(s).level_vars;
    int d = st.depth[static_cast<std::size_t>(s)];
    while (d < static_cast<int>(lv.size()) && st.bound[static_cast<std::size_t>(lv[static_cast<std::size_t>(d)])]) ++d;
    return d;
  }

  int find_pos_slot(int p, const std::vector<int>& slots) const {
    const VarMeta& m = meta_[static_cast<std::size_t>(p)];
    for (int s : slots) {
      const PlanSlot& ps = slot(s);
      if (tensor(ps.tensor).name != m.access->tensor.name) continue;
      if (ps.text == m.access->to_string()) return s;
    }
    throw Error("lower: pos(" + plan_.vars[static_cast<std::size_t>(m.coord)].name + ") over " +
                m.access->to_string() + ", which no computation below reads");
  }

  // Contiguous storage levels of a position variable's access.
  std::pair<int, int> pos_levels(int p, int s) const {
    const VarMeta& m = meta_[static_cast<std::size_t>(p)];
    const auto& lv = slot(s).level_vars;
    int first = -1, last = -1;
    for (int l = 0; l < static_cast<int>(lv.size()); ++l) {
      if (contains(m.underlying, lv[static_cast<std::size_t>(l)])) {
        if (first < 0) first = l;
        else if (last + 1 != l) throw Error("lower: pos levels of " + slot(s).text + " are not contiguous");
        last = l;
      }
    }
    if (first < 0 || last - first + 1 != static_cast<int>(m.underlying.size())) {
      throw Error("lower: " + slot(s).text + " does not store every variable of the pos coordinate");
    }
    return {first, last};
  }

  void ensure_domain(int v, Static& st, std::vector<BindOp>& ops, const std::vector<int>& slots) {
    if (st.domain[static_cast<std::size_t>(v)]) return;
    st.domain[static_cast<std::size_t>(v)] = 1;
    const VarMeta& m = meta(v);
    switch (m.rel) {
    case VarMeta::Rel::None: return;
    case VarMeta::Rel::SplitOuter:
    case VarMeta::Rel::SplitInner: {
      ensure_domain(m.parent, st, ops, slots);
      BindOp op{BindOp::Kind::DomainSplit};
      op.var = v;
      op.a = m.parent;
      op.b = m.rel == VarMeta::Rel::SplitOuter ? 1 : 0;
      op.step = m.step;
      ops.push_back(op);
      return;
    }
    case VarMeta::Rel::Fused: {
      for (int c : {m.outer, m.inner}) {
        if (meta(c).rel == VarMeta::Rel::Pos) throw Error("lower: fusing position variables is not supported");
        ensure_domain(c, st, ops, slots);
      }
      BindOp op{BindOp::Kind::DomainFused};
      op.var = v;
      op.a = m.outer;
      op.b = m.inner;
      ops.push_back(op);
      return;
    }
    case VarMeta::Rel::Pos: {
      const int s = find_pos_slot(v, slots);
      const auto [first, last] = pos_levels(v, s);
      if (st.depth[static_cast<std::size_t>(s)] != first) {
        throw Error("lower: levels above the pos coordinate of " + slot(s).text + " are not bound before " +
                    plan_.vars[static_cast<std::size_t>(v)].name);
      }
      BindOp op{BindOp::Kind::DomainPos};
      op.var = v;
      op.slot = s;
      op.first_level = first;
      op.last_level = last;
      ops.push_back(op);
      return;
    }
    }
  }

  void propagate(int v, Static& st, std::vector<BindOp>& ops, std::vector<int>& touched,
                 const std::vector<int>& slots) {
    st.bound[static_cast<std::size_t>(v)] = 1;
    const VarMeta& m = meta(v);
    switch (m.rel) {
    case VarMeta::Rel::None: return;
    case VarMeta::Rel::SplitOuter:
    case VarMeta::Rel::SplitInner: {
      if (!st.bound[static_cast<std::size_t>(m.sibling)]) return;
      BindOp op{BindOp::Kind::SplitParent};
      op.var = m.parent;
      op.a = m.rel == VarMeta::Rel::SplitOuter ? v : m.sibling;
      op.b = m.rel == VarMeta::Rel::SplitOuter ? m.sibling : v;
      op.step = m.step;
      ops.push_back(op);
      propagate(m.parent, st, ops, touched, slots);
      return;
    }
    case VarMeta::Rel::Fused: {
      BindOp op{BindOp::Kind::Unfuse};
      op.var = v;
      op.a = m.outer;
      op.b = m.inner;
      ops.push_back(op);
      propagate(m.outer, st, ops, touched, slots);
      propagate(m.inner, st, ops, touched, slots);
      return;
    }
    case VarMeta::Rel::Pos: {
      const int s = find_pos_slot(v, slots);
      const auto [first, last] = pos_levels(v, s);
      BindOp op{BindOp::Kind::PosBind};
      op.var = v;
      op.slot = s;
      op.first_level = first;
      op.last_level = last;
      ops.push_back(op);
      st.depth[static_cast<std::size_t>(s)] = last + 1;
      if (!contains(touched, s)) touched.push_back(s);
      for (int l = first; l <= last; ++l) {
        const int lv = slot(s).level_vars[static_cast<std::size_t>(l)];
        if (st.bound[static_cast<std::size_t>(lv)]) {
          throw Error("lower: " + plan_.vars[static_cast<std::size_t>(lv)].name + " is bound twice");
        }
        st.bound[static_cast<std::size_t>(lv)] = 1;
      }
      st.bound[static_cast<std::size_t>(m.coord)] = 1;
      return;
    }
    }
  }

  std::vector<PlanNode> lower_stmt(const Stmt& s, const std::vector<const Leaf*>& leaves, const Static& st) {
    std::vector<PlanNode> out;
    if (!has_where(s) && leaves.size() > 1) {
      const PlanTensor& dst = plan_.tensors[static_cast<std::size_t>(tensor_id(leaves.front()->assign->lhs.tensor))];
      if (dst.role == TensorRole::Output && !dst.format.all_dense()) {
        throw Error("lower: a sum of " + std::to_string(leaves.size()) + " terms cannot be appended to compressed " +
                    dst.name + "; precompute it into a workspace");
      }
      for (std::size_t x = 0; x < leaves.size(); ++x) {
        PlanNode pass;
        pass.kind = PlanNode::Kind::Seq;
        pass.label = "pass " + std::to_string(x + 1) + ": " + leaves[x]->text;
        pass.children = lower_stmt(s, {leaves[x]}, st);
        out.push_back(std::move(pass));
      }
      return out;
    }
    if (s.is_forall()) {
      out.push_back(lower_loop(s.as_forall(), leaves, st));
    } else if (s.is_where()) {
      lower_where(s.as_where(), leaves, st, out);
    } else {
      for (const Leaf* leaf : leaves) {
        if (leaf->assign == &s.as_assign()) lower_leaf(*leaf, st, out);
      }
    }
    return out;
  }

  PlanNode lower_loop(const ForallStmt& f, const std::vector<const Leaf*>& leaves, Static st) {
    PlanNode n;
    n.kind = PlanNode::Kind::Loop;
    n.var = var_id(f.var);
    if (st.bound[static_cast<std::size_t>(n.var)]) throw Error("lower: " + f.var.name() + " is bound twice");

    std::vector<int> all;
    std::vector<int> inter;
    for (std::size_t x = 0; x < leaves.size(); ++x) {
      for (int s : leaves[x]->slots) {
        if (!contains(all, s)) all.push_back(s);
      }
      if (x == 0) {
        inter = leaves[x]->slots;
      } else {
        std::vector<int> keep;
        for (int s : inter) {
          if (contains(leaves[x]->slots, s)) keep.push_back(s);
        }
        inter = keep;
      }
    }

    ensure_domain(n.var, st, n.entry, all);
    const VarMeta& m = meta(n.var);
    if (m.rel == VarMeta::Rel::None) {
      for (int s : inter) {
        const int d = st.depth[static_cast<std::size_t>(s)];
        const PlanSlot& ps = slot(s);
        if (d >= static_cast<int>(ps.level_vars.size()) || ps.level_vars[static_cast<std::size_t>(d)] != n.var) continue;
        const LevelFormat lf = tensor(ps.tensor).format.level(d);
        if (lf.kind == LevelKind::Dense) continue;
        n.drivers.push_back(s);
      }
      if (n.drivers.size() > 2) {
        throw Error("lower: more than two sparse operands intersect at " + f.var.name() + " (unsupported)");
      }
      if (n.drivers.size() == 2) {
        for (int s : n.drivers) {
          const int d = st.depth[static_cast<std::size_t>(s)];
          if (!tensor(slot(s).tensor).format.level(d).unique) {
            throw Error("lower: co-iteration over the non-unique level of " + slot(s).text);
          }
        }
      }
      n.iter = n.drivers.empty() ? IterKind::DenseRange : n.drivers.size() == 1 ? IterKind::Level : IterKind::Intersect;
    } else {
      n.iter = m.rel == VarMeta::Rel::Pos ? IterKind::Positions : IterKind::DenseRange;
    }
    for (int s : n.drivers) {
      ++st.depth[static_cast<std::size_t>(s)];
      n.touched.push_back(s);
    }
    const std::vector<char> before = st.bound;
    propagate(n.var, st, n.binds, n.touched, all);

    for (int s : all) {
      const int from = st.depth[static_cast<std::size_t>(s)];
      const int to = leading_bound(s, st);
      if (to == from) continue;
      const Format& fm = tensor(slot(s).tensor).format;
      for (int l = from; l < to; ++l) {
        if (fm.level(l).kind != LevelKind::Dense && !fm.level(l).unique) {
          throw Error("lower: random access into the non-unique level of " + slot(s).text +
                      " (convert COO operands first)");
        }
      }
      n.advances.push_back({s, to});
      st.depth[static_cast<std::size_t>(s)] = to;
      if (!contains(n.touched, s)) n.touched.push_back(s);
      if (contains(inter, s)) n.prune.push_back(s);
    }

    // Workspace coordinates that become known in this loop.
    std::vector<int> written;
    for (const Leaf* leaf : leaves) {
      const int t = tensor_id(leaf->assign->lhs.tensor);
      if (tensor(t).role == TensorRole::SparseWorkspace && !contains(written, t)) written.push_back(t);
    }
    for (int t : written) {
      const PlanTensor& wt = tensor(t);
      for (int mode = 0; mode < wt.order; ++mode) {
        const int v = wt.mode_vars[static_cast<std::size_t>(mode)];
        if (st.bound[static_cast<std::size_t>(v)] && !before[static_cast<std::size_t>(v)]) {
          PlanNode ct;
          ct.kind = PlanNode::Kind::CoordTrack;
          ct.tensor = t;
          ct.slot = wt.format.level_of_mode(mode);
          ct.var = v;
          n.children.push_back(std::move(ct));
        }
      }
    }
    for (auto& c : lower_stmt(f.body, leaves, st)) n.children.push_back(std::move(c));
    return n;
  }

  void lower_leaf(const Leaf& leaf, const Static& st, std::vector<PlanNode>& out) {
    const AssignStmt& a = *leaf.assign;
    for (const auto& v : a.lhs.vars) {
      if (!st.bound[static_cast<std::size_t>(var_id(v))]) {
        throw Error("lower: result index " + v.name() + " of " + a.lhs.to_string() + " is not bound by a loop");
      }
    }
    for (int s : leaf.slots) {
      if (st.depth[static_cast<std::size_t>(s)] != static_cast<int>(slot(s).level_vars.size())) {
        throw Error("lower: " + slot(s).text + " is not fully indexed by the enclosing loops");
      }
    }
    PlanNode c;
    c.kind = PlanNode::Kind::Compute;
    c.tensor = tensor_id(a.lhs.tensor);
    c.coef = leaf.coef;
    c.factors = leaf.slots;
    c.label = leaf.text;
    for (const auto& v : a.lhs.access_order()) c.lhs_level_vars.push_back(var_id(v));
    const TensorRole role = tensor(c.tensor).role;
    const int t = c.tensor;
    out.push_back(std::move(c));
    if (role == TensorRole::SparseWorkspace) {
      PlanNode ins;
      ins.kind = PlanNode::Kind::IsmCall;
      ins.ism_op = PlanNode::IsmOp::Insert;
      ins.tensor = t;
      out.push_back(ins);
      ins.ism_op = PlanNode::IsmOp::DrainIfFull;
      out.push_back(std::move(ins));
    } else if (role == TensorRole::DenseWorkspace) {
      PlanNode sc;
      sc.kind = PlanNode::Kind::DenseWsOp;
      sc.dense_op = PlanNode::DenseOp::Scatter;
      sc.tensor = t;
      out.push_back(std::move(sc));
    }
  }

  void lower_where(const WhereStmt& w, const std::vector<const Leaf*>& leaves, const Static& st,
                   std::vector<PlanNode>& out) {
    const AssignStmt& prod = innermost_assign(w.producer);
    const int ws = tensor_id(prod.lhs.tensor);
    const bool sparse = tensor(ws).role == TensorRole::SparseWorkspace;
    const FastPath& fp = fast_.at(&w);

    const auto filter = [&](const Stmt& part) {
      std::vector<const Leaf*> keep;
      const auto under = leaves_under(part);
      for (const Leaf* l : leaves) {
        if (contains(under, l)) keep.push_back(l);
      }
      return keep;
    };
    PlanNode producer;
    producer.kind = PlanNode::Kind::Seq;
    producer.label = "producer";
    producer.children = lower_stmt(w.producer, filter(w.producer), st);
    out.push_back(std::move(producer));

    PlanNode consumer;
    consumer.kind = PlanNode::Kind::Seq;
    consumer.label = "consumer";
    const AssignStmt& cons = innermost_assign(w.consumer);
    const int target = tensor_id(cons.lhs.tensor);
    if (sparse) {
      PlanNode fd;
      fd.kind = PlanNode::Kind::IsmCall;
      fd.ism_op = PlanNode::IsmOp::FinalDrain;
      fd.tensor = ws;
      consumer.children.push_back(std::move(fd));
    }
    if (fp.ok) {
      PlanNode c;
      c.tensor = ws;
      c.target = target;
      c.sources = fp.sources;
      for (const auto& v : cons.lhs.access_order()) c.lhs_level_vars.push_back(var_id(v));
      if (sparse) {
        c.kind = PlanNode::Kind::IsmCall;
        c.ism_op = PlanNode::IsmOp::Compress;
      } else {
        c.kind = PlanNode::Kind::DenseWsOp;
        c.dense_op = PlanNode::DenseOp::GatherAppend;
      }
      consumer.children.push_back(std::move(c));
    } else {
      PlanNode m;
      m.tensor = ws;
      if (sparse) {
        m.kind = PlanNode::Kind::IsmCall;
        m.ism_op = PlanNode::IsmOp::Compress;
      } else {
        m.kind = PlanNode::Kind::DenseWsOp;
        m.dense_op = PlanNode::DenseOp::Materialize;
      }
      consumer.children.push_back(std::move(m));
      for (auto& c : lower_stmt(w.consumer, filter(w.consumer), st)) consumer.children.push_back(std::move(c));
      if (!sparse) {
        PlanNode clear;
        clear.kind = PlanNode::Kind::DenseWsOp;
        clear.dense_op = PlanNode::DenseOp::Clear;
        clear.tensor = ws;
        consumer.children.push_back(std::move(clear));
      }
    }
    out.push_back(std::move(consumer));
  }

  struct FastPath {
    bool ok = false;
    std::vector<int> sources;
  };

  const Stmt& stmt_;
  LoopPlan plan_;
  std::vector<VarMeta> meta_;
  std::map<const WhereStmt*, FastPath> fast_;
  std::map<const AssignStmt*, std::vector<Leaf>> leaves_;
};

// ---------------------------------------------------------------------------
// Execution

struct OutputSink {
  bool dense = false;
  std::vector<Coord> dims;
  std::vector<std::size_t> strides;
  std::vector<int> mode_of_level;
  std::vector<double> values;
  std::vector<std::vector<Coord>> crds;
  std::vector<double> vals;

  void write_storage(std::span<const Coord> c, double v) {
    if (dense) {
      std::size_t off = 0;
      for (std::size_t l = 0; l < c.size(); ++l) off += c[l] * strides[static_cast<std::size_t>(mode_of_level[l])];
      values[off] += v;
      return;
    }
    if (!vals.empty()) {
      int cmp = 0;
      for (std::size_t l = 0; l < c.size() && cmp == 0; ++l) {
        const Coord last = crds[l].back();
        cmp = c[l] < last ? -1 : (c[l] > last ? 1 : 0);
      }
      if (cmp == 0) {
        vals.back() += v;
        return;
      }
      if (cmp < 0) throw Error("execute: result components arrive out of storage order");
    }
    for (std::size_t l = 0; l < c.size(); ++l) crds[l].push_back(c[l]);
    vals.push_back(v);
  }
};

// Tensor holding every coordinate, values from a row-major mode-order array.
Tensor from_dense_values(const std::vector<double>& values, const std::vector<Coord>& dims, const Format& format) {
  const int order = format.order();
  std::vector<std::size_t> strides(static_cast<std::size_t>(order), 1);
  for (int m = order - 2; m >= 0; --m) {
    strides[static_cast<std::size_t>(m)] = strides[static_cast<std::size_t>(m + 1)] * dims[static_cast<std::size_t>(m + 1)];
  }
  std::vector<std::vector<Coord>> crds(static_cast<std::size_t>(order));
  std::vector<double> vals;
  std::vector<Coord> idx(static_cast<std::size_t>(order), 0);
  const bool empty = std::any_of(dims.begin(), dims.end(), [](Coord d) { return d == 0; });
  if (!empty) {
    for (;;) {
      std::size_t off = 0;
      for (int l = 0; l < order; ++l) {
        crds[static_cast<std::size_t>(l)].push_back(idx[static_cast<std::size_t>(l)]);
        off += idx[static_cast<std::size_t>(l)] * strides[static_cast<std::size_t>(format.mode_of_level(l))];
      }
      vals.push_back(values[off]);
      int l = order - 1;
      for (; l >= 0; --l) {
        const Coord ext = dims[static_cast<std::size_t>(format.mode_of_level(l))];
        if (++idx[static_cast<std::size_t>(l)] < ext) break;
        idx[static_cast<std::size_t>(l)] = 0;
      }
      if (l < 0) break;
    }
  }
  std::vector<std::span<const Coord>> spans(crds.begin(), crds.end());
  return compress_levels(spans, vals, format, dims);
}

class Executor {
public:
  Executor(const LoopPlan& plan, const std::map<std::string, Tensor>& inputs, const ExecOptions& opts)
      : p_(plan), opts_(opts) {
    const std::size_t nt = plan.tensors.size();
    operands_.assign(nt, nullptr);
    materialized_.resize(nt);
    outputs_.resize(nt);
    ism_.resize(nt);
    ism_crd_.resize(nt);
    dense_ws_.resize(nt);
    ext_.assign(plan.vars.size(), -1);
    std::size_t input_nnz = 0;

    for (std::size_t t = 0; t < nt; ++t) {
      const PlanTensor& pt = plan.tensors[t];
      if (pt.role != TensorRole::Input) continue;
      const auto it = inputs.find(pt.name);
      if (it == inputs.end()) throw Error("execute: missing input tensor " + pt.name);
      const Tensor& x = it->second;
      if (x.order() != pt.order) throw Error("execute: " + pt.name + " has the wrong order");
      if (!(x.format() == pt.format)) {
        throw Error("execute: format mismatch for " + pt.name + ": plan expects " + pt.format.name() + ", got " +
                    x.format().name());
      }
      operands_[t] = &x;
      input_nnz += x.stored();
    }
    for (const auto& s : plan.slots) {
      const PlanTensor& pt = plan.tensors[static_cast<std::size_t>(s.tensor)];
      if (pt.role != TensorRole::Input) continue;
      const Tensor& x = *operands_[static_cast<std::size_t>(s.tensor)];
      for (std::size_t l = 0; l < s.level_vars.size(); ++l) {
        note_extent(s.level_vars[l], x.dim(pt.format.mode_of_level(static_cast<int>(l))), s.text);
      }
    }
    const auto dims_of = [&](const PlanTensor& pt) {
      std::vector<Coord> d;
      for (int v : pt.mode_vars) {
        if (ext_[static_cast<std::size_t>(v)] < 0) {
          throw Error("execute: cannot infer the extent of " + p_.vars[static_cast<std::size_t>(v)].name);
        }
        d.push_back(static_cast<Coord>(ext_[static_cast<std::size_t>(v)]));
      }
      return d;
    };
    for (std::size_t t = 0; t < nt; ++t) {
      const PlanTensor& pt = plan.tensors[t];
      if (pt.role == TensorRole::Input) continue;
      const std::vector<Coord> dims = dims_of(pt);
      if (pt.role == TensorRole::Output) {
        OutputSink& o = outputs_[t];
        o.dense = pt.format.all_dense();
        o.dims = dims;
        o.strides.assign(dims.size(), 1);
        for (int m = static_cast<int>(dims.size()) - 2; m >= 0; --m) {
          o.strides[static_cast<std::size_t>(m)] = o.strides[static_cast<std::size_t>(m + 1)] * dims[static_cast<std::size_t>(m + 1)];
        }
        for (int l = 0; l < pt.order; ++l) o.mode_of_level.push_back(pt.format.mode_of_level(l));
        if (o.dense) {
          std::size_t size = 1;
          for (auto d : dims) size *= d;
          o.values.assign(size, 0.0);
        } else {
          o.crds.resize(dims.size());
        }
      } else if (pt.role == TensorRole::SparseWorkspace) {
        const WorkspaceDescriptor& d = *pt.descriptor;
        IsmOptions io;
        io.policy = d.policy;
        io.capacity = d.capacity;
        io.hash_buckets = d.hash_buckets ? d.hash_buckets : hash_default_L(input_nnz);
        io.double_buffer = opts.double_buffer;
        io.pipelined = opts.pipelined;
        io.grow = opts.grow;
        std::vector<Coord> storage(dims.size());
        for (int l = 0; l < pt.order; ++l) storage[static_cast<std::size_t>(l)] = dims[static_cast<std::size_t>(pt.format.mode_of_level(l))];
        if (storage.empty()) throw Error("execute: a sparse workspace needs at least one mode");
        ism_[t] = std::make_unique<SparseWorkspace>(storage, io);
        ism_crd_[t].assign(storage.size(), 0);
      } else {
        std::size_t size = 1;
        for (auto d : dims) size *= d;
        dense_ws_[t] = std::make_unique<DenseRowWorkspace>(size);
      }
      ws_dims_[t] = dims;
    }

    const std::size_t nv = plan.vars.size();
    val_.assign(nv, 0);
    dbegin_.assign(nv, 0);
    dsize_.assign(nv, 0);
    for (std::size_t v = 0; v < nv; ++v) {
      if (ext_[v] >= 0) dsize_[v] = ext_[v];
    }
    pos_.assign(plan.slots.size(), 0);
    depth_.assign(plan.slots.size(), 0);
  }

  Tensor run(ExecStats* stats) {
    exec(p_.root);
    if (stats) {
      for (const auto& w : ism_) {
        if (!w) continue;
        w->finish();
        stats->ism += w->counters();
        stats->drains += w->drains();
      }
    }
    const PlanTensor& out = p_.output_tensor();
    OutputSink& o = outputs_[static_cast<std::size_t>(p_.output)];
    if (o.dense) return from_dense_values(o.values, o.dims, out.format);
    std::vector<std::span<const Coord>> spans(o.crds.begin(), o.crds.end());
    return compress_levels(spans, o.vals, out.format, o.dims);
  }

private:
  void note_extent(int v, Coord d, const std::string& where) {
    auto& e = ext_[static_cast<std::size_t>(v)];
    if (e >= 0 && e != static_cast<std::int64_t>(d)) {
      throw Error("execute: dimension mismatch for index " + p_.vars[static_cast<std::size_t>(v)].name + " in " +
                  where + " (" + std::to_string(e) + " vs " + std::to_string(d) + ")");
    }
    e = d;
  }

  const Tensor& operand(int slot) const {
    const Tensor* t = operands_[static_cast<std::size_t>(p_.slots[static_cast<std::size_t>(slot)].tensor)];
    if (!t) throw Error("execute: workspace read before it was compressed");
    return *t;
  }

  void exec(const PlanNode& n) {
    switch (n.kind) {
    case PlanNode::Kind::Seq:
    case PlanNode::Kind::Alloc:
      for (const auto& c : n.children) exec(c);
      return;
    case PlanNode::Kind::Loop: loop(n); return;
    case PlanNode::Kind::CoordTrack:
      ism_crd_[static_cast<std::size_t>(n.tensor)][static_cast<std::size_t>(n.slot)] =
          static_cast<Coord>(val_[static_cast<std::size_t>(n.var)]);
      return;
    case PlanNode::Kind::Compute: compute(n); return;
    case PlanNode::Kind::IsmCall: ism_call(n); return;
    case PlanNode::Kind::DenseWsOp: dense_op(n); return;
    }
  }

  void apply_entry(const BindOp& op) {
    const auto v = static_cast<std::size_t>(op.var);
    switch (op.kind) {
    case BindOp::Kind::DomainPos: {
      const auto s = static_cast<std::size_t>(op.slot);
      dbegin_[v] = 0;
      dsize_[v] = 0;
      if (depth_[s] < 0) return;
      const Tensor& t = operand(op.slot);
      std::size_t b = op.first_level == 0 ? 0 : pos_[s];
      std::size_t e = b + 1;
      for (int l = op.first_level; l <= op.last_level && b < e; ++l) {
        const std::size_t nb = t.child_range(l, b).first;
        e = t.child_range(l, e - 1).second;
        b = nb;
      }
      dbegin_[v] = static_cast<std::int64_t>(b);
      dsize_[v] = static_cast<std::int64_t>(e > b ? e - b : 0);
      return;
    }
    case BindOp::Kind::DomainSplit: {
      const std::int64_t ps = dsize_[static_cast<std::size_t>(op.a)];
      const auto step = static_cast<std::int64_t>(op.step);
      dbegin_[v] = 0;
      dsize_[v] = op.b ? (ps + step - 1) / step : step;
      return;
    }
    case BindOp::Kind::DomainFused:
      dbegin_[v] = 0;
      dsize_[v] = dsize_[static_cast<std::size_t>(op.a)] * dsize_[static_cast<std::size_t>(op.b)];
      return;
    default: return;
    }
  }

  bool apply_bind(const BindOp& op) {
    const auto v = static_cast<std::size_t>(op.var);
    switch (op.kind) {
    case BindOp::Kind::SplitParent: {
      const std::int64_t off =
          val_[static_cast<std::size_t>(op.a)] * static_cast<std::int64_t>(op.step) + val_[static_cast<std::size_t>(op.b)];
      if (off >= dsize_[v]) return false;
      val_[v] = dbegin_[v] + off;
      return true;
    }
    case BindOp::Kind::Unfuse: {
      const auto a = static_cast<std::size_t>(op.a), b = static_cast<std::size_t>(op.b);
      val_[a] = dbegin_[a] + val_[v] / dsize_[b];
      val_[b] = dbegin_[b] + val_[v] % dsize_[b];
      return true;
    }
    case BindOp::Kind::PosBind: {
      const auto s = static_cast<std::size_t>(op.slot);
      if (depth_[s] < 0) return false;
      const Tensor& t = operand(op.slot);
      auto q = static_cast<std::size_t>(val_[v]);
      pos_[s] = q;
      depth_[s] = op.last_level + 1;
      const auto& lvars = p_.slots[s].level_vars;
      for (int l = op.last_level; l >= op.first_level; --l) {
        const Level& lv = t.level(l);
        Coord c = 0;
        switch (lv.format.kind) {
        case LevelKind::Dense:
          c = static_cast<Coord>(q % lv.extent);
          q /= lv.extent;
          break;
        case LevelKind::Compressed:
          c = lv.crd[q];
          q = static_cast<std::size_t>(std::upper_bound(lv.pos.begin(), lv.pos.end(), q) - lv.pos.begin()) - 1;
          break;
        case LevelKind::Singleton: c = lv.crd[q]; break;
        }
        val_[static_cast<std::size_t>(lvars[static_cast<std::size_t>(l)])] = c;
      }
      return true;
    }
    default: return true;
    }
  }

  void advance(const Advance& a) {
    const auto s = static_cast<std::size_t>(a.slot);
    if (depth_[s] < 0) return;
    const Tensor& t = operand(a.slot);
    const auto& lvars = p_.slots[s].level_vars;
    while (depth_[s] < a.depth) {
      const int l = depth_[s];
      const auto c = static_cast<Coord>(val_[static_cast<std::size_t>(lvars[static_cast<std::size_t>(l)])]);
      const auto r = t.locate(l, pos_[s], c);
      if (!r) {
        depth_[s] = -1;
        return;
      }
      pos_[s] = *r;
      ++depth_[s];
    }
  }

  bool settle(const PlanNode& n) {
    for (const auto& op : n.binds) {
      if (!apply_bind(op)) return false;
    }
    for (const auto& a : n.advances) advance(a);
    for (int s : n.prune) {
      if (depth_[static_cast<std::size_t>(s)] < 0) return false;
    }
    return true;
  }

  void body(const PlanNode& n) {
    for (const auto& c : n.children) exec(c);
  }

  void loop(const PlanNode& n) {
    for (const auto& op : n.entry) apply_entry(op);
    const std::size_t base = saved_.size();
    for (int s : n.touched) saved_.push_back({pos_[static_cast<std::size_t>(s)], depth_[static_cast<std::size_t>(s)]});
    const auto restore = [&] {
      for (std::size_t x = 0; x < n.touched.size(); ++x) {
        const auto s = static_cast<std::size_t>(n.touched[x]);
        pos_[s] = saved_[base + x].first;
        depth_[s] = saved_[base + x].second;
      }
    };
    const auto v = static_cast<std::size_t>(n.var);
    switch (n.iter) {
    case IterKind::DenseRange:
    case IterKind::Positions: {
      const std::int64_t b = dbegin_[v], e = dbegin_[v] + dsize_[v];
      for (std::int64_t x = b; x < e; ++x) {
        restore();
        val_[v] = x;
        if (settle(n)) body(n);
      }
      break;
    }
    case IterKind::Level: {
      const auto d = static_cast<std::size_t>(n.drivers[0]);
      if (depth_[d] < 0) break;
      const Tensor& t = operand(n.drivers[0]);
      const int l = depth_[d];
      const auto [b, e] = t.child_range(l, pos_[d]);
      const auto& crd = t.level(l).crd;
      for (std::size_t q = b; q < e; ++q) {
        restore();
        pos_[d] = q;
        depth_[d] = l + 1;
        val_[v] = crd[q];
        if (settle(n)) body(n);
      }
      break;
    }
    case IterKind::Intersect: {
      const auto d1 = static_cast<std::size_t>(n.drivers[0]);
      const auto d2 = static_cast<std::size_t>(n.drivers[1]);
      if (depth_[d1] < 0 || depth_[d2] < 0) break;
      const Tensor& t1 = operand(n.drivers[0]);
      const Tensor& t2 = operand(n.drivers[1]);
      const int l1 = depth_[d1], l2 = depth_[d2];
      auto [a, ae] = t1.child_range(l1, pos_[d1]);
      auto [b, be] = t2.child_range(l2, pos_[d2]);
      const auto& c1 = t1.level(l1).crd;
      const auto& c2 = t2.level(l2).crd;
      while (a < ae && b < be) {
        if (c1[a] < c2[b]) {
          ++a;
        } else if (c2[b] < c1[a]) {
          ++b;
        } else {
          restore();
          pos_[d1] = a;
          depth_[d1] = l1 + 1;
          pos_[d2] = b;
          depth_[d2] = l2 + 1;
          val_[v] = c1[a];
          if (settle(n)) body(n);
          ++a;
          ++b;
        }
      }
      break;
    }
    }
    restore();
    saved_.resize(base);
  }

  void compute(const PlanNode& n) {
    live_ = false;
    double value = n.coef;
    for (int s : n.factors) {
      const auto x = static_cast<std::size_t>(s);
      if (depth_[x] < 0) return;
      value *= operand(s).vals()[pos_[x]];
    }
    live_ = true;
    reg_ = value;
    const auto t = static_cast<std::size_t>(n.tensor);
    if (p_.tensors[t].role == TensorRole::Output) {
      coords_.clear();
      for (int v : n.lhs_level_vars) coords_.push_back(static_cast<Coord>(val_[static_cast<std::size_t>(v)]));
      outputs_[t].write_storage(coords_, value);
    }
  }

  template <class F>
  void append_from(const PlanNode& n, F&& ws_coord, double v) {
    coords_.clear();
    for (std::size_t l = 0; l < n.sources.size(); ++l) {
      const int src = n.sources[l];
      coords_.push_back(src >= 0 ? ws_coord(src) : static_cast<Coord>(val_[static_cast<std::size_t>(n.lhs_level_vars[l])]));
    }
    const auto t = static_cast<std::size_t>(n.target);
    if (p_.tensors[t].role != TensorRole::Output) throw Error("execute: workspace consumers must write the result");
    outputs_[t].write_storage(coords_, v);
  }

  void ism_call(const PlanNode& n) {
    const auto t = static_cast<std::size_t>(n.tensor);
    SparseWorkspace& ws = *ism_[t];
    switch (n.ism_op) {
    case PlanNode::IsmOp::Insert:
      if (live_) full_ = !ws.try_insert(ism_crd_[t], reg_);
      return;
    case PlanNode::IsmOp::DrainIfFull:
      if (live_ && full_) {
        ws.drain();
        if (!ws.try_insert(ism_crd_[t], reg_)) throw Error("execute: insert failed after a drain");
        full_ = false;
      }
      return;
    case PlanNode::IsmOp::FinalDrain: ws.finish(); return;
    case PlanNode::IsmOp::Compress: {
      if (n.target >= 0) {
        ws.finish();
        const AllArray& all = ws.all();
        for (std::size_t e = 0; e < all.size(); ++e) {
          append_from(n, [&](int s) { return all.crd(s)[e]; }, all.vals()[e]);
        }
      } else {
        const PlanTensor& pt = p_.tensors[t];
        materialized_[t] = ws.drain_and_compress(pt.format, ws_dims_.at(t));
        operands_[t] = &materialized_[t];
      }
      ws.reset();
      return;
    }
    }
  }

  std::size_t dense_linear(std::size_t t) const {
    const PlanTensor& pt = p_.tensors[t];
    std::size_t off = 0;
    const auto& dims = ws_dims_.at(t);
    for (std::size_t m = 0; m < pt.mode_vars.size(); ++m) {
      off = off * dims[m] + static_cast<std::size_t>(val_[static_cast<std::size_t>(pt.mode_vars[m])]);
    }
    return off;
  }

  void dense_op(const PlanNode& n) {
    const auto t = static_cast<std::size_t>(n.tensor);
    DenseRowWorkspace& w = *dense_ws_[t];
    const auto& dims = ws_dims_.at(t);
    switch (n.dense_op) {
    case PlanNode::DenseOp::Scatter:
      if (live_) w.scatter(dense_linear(t), reg_);
      return;
    case PlanNode::DenseOp::GatherAppend: {
      std::vector<Coord> crd(dims.size());
      for (const auto& [lin, v] : w.gather()) {
        std::size_t rest = lin;
        for (std::size_t m = dims.size(); m-- > 0;) {
          crd[m] = static_cast<Coord>(rest % dims[m]);
          rest /= dims[m];
        }
        append_from(n, [&](int s) { return crd[static_cast<std::size_t>(s)]; }, v);
      }
      return;
    }
    case PlanNode::DenseOp::Materialize:
      materialized_[t] = from_dense_values(w.values(), dims, p_.tensors[t].format);
      operands_[t] = &materialized_[t];
      return;
    case PlanNode::DenseOp::Clear: w.clear(); return;
    }
  }

  const LoopPlan& p_;
  ExecOptions opts_;
  std::vector<const Tensor*> operands_;
  std::vector<Tensor> materialized_;
  std::vector<OutputSink> outputs_;
  std::vector<std::unique_ptr<SparseWorkspace>> ism_;
  std::vector<std::vector<Coord>> ism_crd_;
  std::vector<std::unique_ptr<DenseRowWorkspace>> dense_ws_;
  std::map<std::size_t, std::vector<Coord>> ws_dims_;
  std::vector<std::int64_t> ext_;
  std::vector<std::int64_t> val_;
  std::vector<std::int64_t> dbegin_;
  std::vector<std::int64_t> dsize_;
  std::vector<std::size_t> pos_;
  std::vector<int> depth_;
  std::vector<std::pair<std::size_t, int>> saved_;
  std::vector<Coord> coords_;
  double reg_ = 0.0;
  bool live_ = false;
  bool full_ = false;
};

// ---------------------------------------------------------------------------
// Printing

class Printer {
public:
  explicit Printer(const LoopPlan& p) : p_(p) {}

  std::string run() {
    os_ << "statement: " << p_.statement << "\n";
    for (const auto* w : p_.workspaces()) {
      os_ << "workspace " << w->name << ": ";
      if (w->descriptor) {
        os_ << w->descriptor->to_string();
      } else {
        os_ << "Dense(" << w->order << ")";
      }
      os_ << "\n";
    }
    if (p_.output >= 0) os_ << "output " << p_.output_tensor().name << ": " << p_.output_tensor().format.name() << "\n";
    os_ << "{\n";
    for (const auto& c : p_.root.children) node(c, 1);
    if (p_.output >= 0) line(1, "return " + p_.output_tensor().name);
    os_ << "}\n";
    return os_.str();
  }

private:
  const std::string& var(int v) const { return p_.vars[static_cast<std::size_t>(v)].name; }
  const std::string& tname(int t) const { return p_.tensors[static_cast<std::size_t>(t)].name; }

  void line(int depth, const std::string& s) { os_ << std::string(static_cast<std::size_t>(depth) * 2, ' ') << s << "\n"; }

  std::string tuple(const std::vector<int>& vars) const {
    std::string s = "(";
    for (std::size_t x = 0; x < vars.size(); ++x) s += (x ? "," : "") + var(vars[x]);
    return s + ")";
  }

  std::string sources(const PlanNode& n) const {
    std::string s = "(";
    for (std::size_t l = 0; l < n.sources.size(); ++l) {
      s += l ? "," : "";
      s += n.sources[l] >= 0 ? tname(n.tensor) + ".crd[" + std::to_string(n.sources[l]) + "]" : var(n.lhs_level_vars[l]);
    }
    return s + ")";
  }

  std::string domain_text(const PlanNode& n) const {
    for (const auto& op : n.entry) {
      if (op.var != n.var) continue;
      switch (op.kind) {
      case BindOp::Kind::DomainPos:
        return "pos(" + p_.slots[static_cast<std::size_t>(op.slot)].text + ", levels " + std::to_string(op.first_level) +
               ".." + std::to_string(op.last_level) + ")";
      case BindOp::Kind::DomainSplit:
        return op.b ? "0..ceil(|" + var(op.a) + "|/" + std::to_string(op.step) + ")" : "0.." + std::to_string(op.step);
      case BindOp::Kind::DomainFused: return "0..|" + var(op.a) + "|*|" + var(op.b) + "|";
      default: break;
      }
    }
    return "0.." + upper(var(n.var));
  }

  void node(const PlanNode& n, int d) {
    switch (n.kind) {
    case PlanNode::Kind::Seq:
      if (!n.label.empty()) line(d, "// " + n.label);
      for (const auto& c : n.children) node(c, d);
      return;
    case PlanNode::Kind::Alloc: {
      const PlanTensor& t = p_.tensors[static_cast<std::size_t>(n.tensor)];
      if (t.role == TensorRole::SparseWorkspace) {
        line(d, t.name + ".Acc = AccArray(" + std::to_string(t.descriptor->capacity) + ", " +
                    to_string(t.descriptor->policy) + ")");
        line(d, t.name + ".All = AllArray(" + std::to_string(t.order) + ")");
      } else if (t.role == TensorRole::DenseWorkspace) {
        line(d, t.name + " = DenseWorkspace" + tuple(t.mode_vars));
      } else {
        line(d, t.name + " = " + (t.format.all_dense() ? "DenseArray" : "Appender") + tuple(t.mode_vars));
      }
      return;
    }
    case PlanNode::Kind::Loop: {
      std::string head = "for " + var(n.var) + " in ";
      if (n.iter == IterKind::Level) {
        const PlanSlot& s = p_.slots[static_cast<std::size_t>(n.drivers[0])];
        head += tname(s.tensor) + ".level(" + var(n.var) + ")";
      } else if (n.iter == IterKind::Intersect) {
        head += tname(p_.slots[static_cast<std::size_t>(n.drivers[0])].tensor) + ".level(" + var(n.var) + ") & " +
                tname(p_.slots[static_cast<std::size_t>(n.drivers[1])].tensor) + ".level(" + var(n.var) + ")";
      } else {
        head += domain_text(n);
      }
      line(d, head + " {");
      for (const auto& op : n.binds) {
        switch (op.kind) {
        case BindOp::Kind::SplitParent:
          line(d + 1, var(op.var) + " = " + var(op.a) + " * " + std::to_string(op.step) + " + " + var(op.b));
          break;
        case BindOp::Kind::Unfuse:
          line(d + 1, var(op.a) + " = " + var(op.var) + " / |" + var(op.b) + "|; " + var(op.b) + " = " + var(op.var) +
                          " % |" + var(op.b) + "|");
          break;
        case BindOp::Kind::PosBind: {
          std::vector<int> lv;
          const auto& s = p_.slots[static_cast<std::size_t>(op.slot)];
          for (int l = op.first_level; l <= op.last_level; ++l) lv.push_back(s.level_vars[static_cast<std::size_t>(l)]);
          line(d + 1, tuple(lv) + " = coords(" + s.text + ", " + var(op.var) + ")");
          break;
        }
        default: break;
        }
      }
      for (const auto& a : n.advances) {
        line(d + 1, "locate " + p_.slots[static_cast<std::size_t>(a.slot)].text + " to level " + std::to_string(a.depth));
      }
      for (const auto& c : n.children) node(c, d + 1);
      line(d, "}");
      return;
    }
    case PlanNode::Kind::CoordTrack:
      line(d, tname(n.tensor) + ".crd[" + std::to_string(n.slot) + "] = " + var(n.var));
      return;
    case PlanNode::Kind::Compute: {
      const PlanTensor& t = p_.tensors[static_cast<std::size_t>(n.tensor)];
      if (t.role == TensorRole::Output) {
        if (t.format.all_dense()) {
          line(d, t.name + tuple(t.mode_vars) + " += " + n.label);
        } else {
          line(d, "Append(" + t.name + ", " + tuple(n.lhs_level_vars) + ", " + n.label + ")");
        }
      } else {
        line(d, "val = " + n.label);
      }
      return;
    }
    case PlanNode::Kind::IsmCall: {
      const std::string& w = tname(n.tensor);
      switch (n.ism_op) {
      case PlanNode::IsmOp::Insert: line(d, "Insert(" + w + ".Acc, " + w + ".crd, val)"); return;
      case PlanNode::IsmOp::DrainIfFull:
        line(d, "if (" + w + ".Acc.full) {");
        line(d + 1, "Sort(" + w + ".Acc)");
        line(d + 1, "Merge(" + w + ".Acc, " + w + ".All)");
        line(d + 1, "Insert(" + w + ".Acc, " + w + ".crd, val)");
        line(d, "}");
        return;
      case PlanNode::IsmOp::FinalDrain:
        line(d, "Sort(" + w + ".Acc)");
        line(d, "Merge(" + w + ".Acc, " + w + ".All)");
        return;
      case PlanNode::IsmOp::Compress:
        if (n.target >= 0) {
          line(d, "Compress(" + w + ".All -> " + tname(n.target) + ", " + sources(n) + ")");
        } else {
          line(d, "Compress(" + w + ".All -> " + w + ", " + p_.tensors[static_cast<std::size_t>(n.tensor)].format.name() + ")");
        }
        return;
      }
      return;
    }
    case PlanNode::Kind::DenseWsOp: {
      const PlanTensor& t = p_.tensors[static_cast<std::size_t>(n.tensor)];
      switch (n.dense_op) {
      case PlanNode::DenseOp::Scatter: line(d, "Scatter(" + t.name + tuple(t.mode_vars) + ", val)"); return;
      case PlanNode::DenseOp::GatherAppend:
        line(d, "Gather(" + t.name + " -> " + tname(n.target) + ", " + sources(n) + ")");
        return;
      case PlanNode::DenseOp::Materialize: line(d, "Materialize(" + t.name + ")"); return;
      case PlanNode::DenseOp::Clear: line(d, "Clear(" + t.name + ")"); return;
      }
      return;
    }
    }
  }

  const LoopPlan& p_;
  std::ostringstream os_;
};

} // namespace

std::vector<const PlanTensor*> LoopPlan::workspaces() const {
  std::vector<const PlanTensor*> out;
  for (const auto& t : tensors) {
    if (t.role == TensorRole::SparseWorkspace || t.role == TensorRole::DenseWorkspace) out.push_back(&t);
  }
  return out;
}

LoopPlan lower(const Stmt& stmt) {
  if (!stmt.defined()) throw Error("lower: undefined statement");
  return Lowerer(stmt).run();
}

Tensor execute(const LoopPlan& plan, const std::map<std::string, Tensor>& inputs, const ExecOptions& options,
               ExecStats* stats) {
  if (plan.output < 0) throw Error("execute: plan has no result tensor");
  return Executor(plan, inputs, options).run(stats);
}

std::string print_plan(const LoopPlan& plan) { return Printer(plan).run(); }

DenseRowWorkspace::DenseRowWorkspace(std::size_t extent) : values_(extent, 0.0), flags_(extent, 0) {}

void DenseRowWorkspace::scatter(std::size_t j, double v) {
  if (j >= values_.size()) throw Error("DenseRowWorkspace: coordinate out of range");
  if (!flags_[j]) {
    flags_[j] = 1;
    list_.push_back(j);
  }
  values_[j] += v;
}

std::vector<std::pair<std::size_t, double>> DenseRowWorkspace::gather() {
  std::sort(list_.begin(), list_.end());
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(list_.size());
  for (auto j : list_) out.emplace_back(j, values_[j]);
  clear();
  return out;
}

void DenseRowWorkspace::clear() {
  for (auto j : list_) {
    values_[j] = 0.0;
    flags_[j] = 0;
  }
  list_.clear();
}

} // namespace spws
