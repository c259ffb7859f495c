#include "spws/oracle.hpp"

#include <algorithm>

#include "spws/error.hpp"

namespace spws {

DenseArray dense_oracle(const Einsum& expr, const std::map<std::string, DenseArray>& inputs,
                        const std::map<std::string, Coord>& extra_extents) {
  std::vector<std::string> vars;
  std::map<std::string, Coord> extent = extra_extents;
  auto note = [&](const std::string& v) {
    if (std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);
  };
  for (const auto& v : expr.result_vars) note(v);
  for (const auto& term : expr.terms) {
    for (const auto& f : term.factors) {
      const auto it = inputs.find(f.tensor);
      if (it == inputs.end()) throw Error("dense_oracle: missing input " + f.tensor);
      if (it->second.dims.size() != f.vars.size()) {
        throw Error("dense_oracle: " + f.tensor + " accessed with wrong arity");
      }
      for (std::size_t m = 0; m < f.vars.size(); ++m) {
        note(f.vars[m]);
        const Coord d = it->second.dims[m];
        auto [e, inserted] = extent.emplace(f.vars[m], d);
        if (!inserted && e->second != d) {
          throw Error("dense_oracle: inconsistent extent for index " + f.vars[m]);
        }
      }
    }
  }
  std::size_t space = 1;
  for (const auto& v : vars) {
    const auto it = extent.find(v);
    if (it == extent.end()) throw Error("dense_oracle: no extent for index " + v);
    space *= std::max<std::size_t>(it->second, 1);
    if (space > kOracleLimit) throw Error("dense_oracle: iteration space exceeds the size guard");
  }

  std::vector<Coord> rdims;
  for (const auto& v : expr.result_vars) rdims.push_back(extent.at(v));
  DenseArray out(rdims);
  for (const auto& v : vars) {
    if (extent.at(v) == 0) return out;
  }

  const auto slot = [&](const std::string& v) {
    return static_cast<std::size_t>(std::find(vars.begin(), vars.end(), v) - vars.begin());
  };
  std::vector<std::size_t> rslots;
  for (const auto& v : expr.result_vars) rslots.push_back(slot(v));
  struct BoundFactor {
    const DenseArray* array;
    std::vector<std::size_t> slots;
  };
  std::vector<std::vector<BoundFactor>> bound(expr.terms.size());
  for (std::size_t t = 0; t < expr.terms.size(); ++t) {
    for (const auto& f : expr.terms[t].factors) {
      BoundFactor b{&inputs.at(f.tensor), {}};
      for (const auto& v : f.vars) b.slots.push_back(slot(v));
      bound[t].push_back(std::move(b));
    }
  }

  std::vector<Coord> ext;
  for (const auto& v : vars) ext.push_back(extent.at(v));
  std::vector<Coord> idx(vars.size(), 0);
  std::vector<Coord> crds;
  for (;;) {
    crds.clear();
    for (auto s : rslots) crds.push_back(idx[s]);
    double sum = 0.0;
    for (std::size_t t = 0; t < expr.terms.size(); ++t) {
      double prod = expr.terms[t].coef;
      for (const auto& b : bound[t]) {
        std::size_t off = 0;
        for (std::size_t m = 0; m < b.slots.size(); ++m) off = off * b.array->dims[m] + idx[b.slots[m]];
        prod *= b.array->data[off];
      }
      sum += prod;
    }
    out.at(crds) += sum;

    // Odometer increment, innermost variable fastest.
    std::size_t k = vars.size();
    while (k > 0) {
      --k;
      if (++idx[k] < ext[k]) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
    if (vars.empty()) return out;
  }
}

} // namespace spws
