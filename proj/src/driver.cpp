#include "spws/driver.hpp"

#include <algorithm>

#include "spws/error.hpp"
#include "spws/io.hpp"

namespace spws {

const std::vector<KernelSpec>& kernel_suite() {
  static const std::vector<KernelSpec> suite{
      {"spgemm-inner", "A(i,j) = B(i,k) * C(k,j)", "ijk", {{"B", "CSR"}, {"C", "CSC"}, {"A", "CSR"}},
       "inner-product SpGEMM"},
      {"spgemm-rowwise", "A(i,j) = B(i,k) * C(k,j)", "ikj", {{"B", "CSR"}, {"C", "CSR"}, {"A", "CSR"}},
       "row-wise (Gustavson) SpGEMM"},
      {"spgemm-outer", "A(i,j) = B(i,k) * C(k,j)", "kij", {{"B", "CSC"}, {"C", "CSR"}, {"A", "CSR"}},
       "outer-product SpGEMM"},
      {"spgemm-transposed", "A(j,i) = B(i,k) * C(k,j)", "ikj", {{"B", "CSR"}, {"C", "CSR"}, {"A", "CSR"}},
       "SpGEMM with a transposed result"},
      {"spmv", "y(i) = B(i,j) * x(j)", "ij", {{"B", "CSR"}, {"x", "Dense"}, {"y", "Dense"}}, "sparse matrix-vector"},
      {"elementwise", "A(i,j) = B(i,j) * C(i,j)", "ij", {{"B", "CSR"}, {"C", "CSR"}, {"A", "CSR"}},
       "elementwise product"},
      {"transpose", "A(j,i) = B(i,j)", "ij", {{"B", "CSR"}, {"A", "CSC"}}, "transpose into CSC"},
      {"mttkrp", "A(i,j) = B(i,k,l) * C(k,j) * D(l,j)", "iklj",
       {{"B", "CSF"}, {"C", "Dense"}, {"D", "Dense"}, {"A", "Dense"}}, "SpMTTKRP"},
      {"ttm", "A(i,j,l) = B(i,j,k) * C(k,l)", "ijkl", {{"B", "CSF"}, {"C", "Dense"}, {"A", "CSF"}}, "SpTTM"},
  };
  return suite;
}

const KernelSpec& find_kernel(const std::string& name) {
  for (const auto& k : kernel_suite()) {
    if (k.name == name) return k;
  }
  std::string known;
  for (const auto& k : kernel_suite()) known += (known.empty() ? "" : ", ") + k.name;
  throw Error("unknown kernel '" + name + "' (known: " + known + ")");
}

namespace {

std::map<std::string, int> tensor_orders(const std::string& expr) {
  const ParsedAssignment p = parse_assignment(expr);
  std::map<std::string, int> orders{{p.lhs.tensor.name, p.lhs.tensor.order}};
  for (const auto& a : accesses(p.rhs)) orders[a.tensor.name] = a.tensor.order;
  return orders;
}

} // namespace

std::map<std::string, Format> parse_format_overrides(const std::string& expr, const std::vector<std::string>& specs) {
  const auto orders = tensor_orders(expr);
  std::map<std::string, Format> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("format override '" + s + "' must look like T=CSR");
    const std::string name = s.substr(0, eq);
    const auto it = orders.find(name);
    if (it == orders.end()) throw Error("format override names unknown tensor " + name);
    out[name] = parse_format(s.substr(eq + 1), it->second);
  }
  return out;
}

std::map<std::string, Format> kernel_formats(const KernelSpec& k) {
  std::vector<std::string> specs;
  for (const auto& [t, f] : k.formats) specs.push_back(t + "=" + f);
  return parse_format_overrides(k.expr, specs);
}

Compiled compile(const std::string& expr, const std::map<std::string, Format>& formats, const CompileOptions& options) {
  Compiled c;
  c.parsed = parse_assignment(expr, formats);
  IndexVars order;
  if (options.order.empty()) {
    order = c.parsed.lhs.vars;
    for (const auto& a : accesses(c.parsed.rhs)) {
      for (const auto& v : a.vars) {
        if (std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
      }
    }
  } else {
    order = parse_index_list(options.order);
  }
  c.scheduled = from_einsum(c.parsed.lhs, c.parsed.rhs, order);
  if (!options.schedule.empty()) c.scheduled = apply_schedule(c.scheduled, parse_schedule(options.schedule));
  if (options.auto_insert) {
    c.decision = plan_insertion(c.scheduled, options.policy, options.capacity);
    c.final_stmt = c.decision.result;
  } else {
    c.final_stmt = c.scheduled;
  }
  c.plan = lower(c.final_stmt);
  return c;
}

std::map<std::string, Coord> extents_of(const ParsedAssignment& p, const std::map<std::string, Tensor>& inputs) {
  std::map<std::string, Coord> ext;
  for (const auto& a : accesses(p.rhs)) {
    const auto it = inputs.find(a.tensor.name);
    if (it == inputs.end()) throw Error("missing input tensor " + a.tensor.name);
    if (it->second.order() != static_cast<int>(a.vars.size())) {
      throw Error("input " + a.tensor.name + " has order " + std::to_string(it->second.order()) + ", expression uses " +
                  std::to_string(a.vars.size()));
    }
    for (std::size_t m = 0; m < a.vars.size(); ++m) {
      const Coord d = it->second.dim(static_cast<int>(m));
      const auto [pos, fresh] = ext.emplace(a.vars[m].name(), d);
      if (!fresh && pos->second != d) {
        throw Error("index " + a.vars[m].name() + " has extent " + std::to_string(pos->second) + " and " +
                    std::to_string(d));
      }
    }
  }
  return ext;
}

std::map<std::string, Tensor> random_inputs(const ParsedAssignment& p, const std::map<std::string, Coord>& extents,
                                            double density, std::uint64_t seed) {
  std::map<std::string, Tensor> out;
  std::uint64_t stream = 0;
  for (const auto& a : accesses(p.rhs)) {
    if (out.count(a.tensor.name)) continue;
    std::vector<Coord> dims;
    for (const auto& v : a.vars) {
      const auto it = extents.find(v.name());
      if (it == extents.end()) throw Error("no extent for index " + v.name());
      dims.push_back(it->second);
    }
    const double d = a.tensor.format.all_dense() ? 1.0 : density;
    out.emplace(a.tensor.name, random_tensor(dims, d, seed * 1000003 + stream++, a.tensor.format));
  }
  return out;
}

DenseArray reference_result(const ParsedAssignment& p, const std::map<std::string, Tensor>& inputs,
                            const std::map<std::string, Coord>& extents) {
  std::map<std::string, DenseArray> dense;
  for (const auto& [name, t] : inputs) dense.emplace(name, to_dense(t));
  return dense_oracle(to_einsum(AssignStmt{p.lhs, p.rhs, false}), dense, extents);
}

std::size_t stored_nonzeros(const Tensor& t) {
  return static_cast<std::size_t>(std::count_if(t.vals().begin(), t.vals().end(), [](double v) { return v != 0.0; }));
}

} // namespace spws
