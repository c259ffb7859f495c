#include "spws/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "spws/error.hpp"

namespace spws {

void CooList::push_back(std::span<const Coord> c, double v) {
  if (c.size() != crds.size()) {
    throw Error("CooList: component of order " + std::to_string(c.size()) + " pushed into order " +
                std::to_string(crds.size()));
  }
  for (std::size_t m = 0; m < c.size(); ++m) crds[m].push_back(c[m]);
  vals.push_back(v);
}

Component CooList::component(std::size_t e) const {
  Component c;
  c.crds.reserve(crds.size());
  for (const auto& col : crds) c.crds.push_back(col[e]);
  c.val = vals[e];
  return c;
}

std::vector<Component> CooList::components() const {
  std::vector<Component> out;
  out.reserve(size());
  for (std::size_t e = 0; e < size(); ++e) out.push_back(component(e));
  return out;
}

CooList CooList::from_components(int order, const std::vector<Component>& comps) {
  CooList coo(order);
  for (const auto& c : comps) coo.push_back(c);
  return coo;
}

LevelEntry LevelRange::iterator::operator*() const {
  switch (level_->format.kind) {
  case LevelKind::Dense:
    return {static_cast<Coord>(cursor_ - parent_ * level_->extent), cursor_};
  case LevelKind::Compressed:
  case LevelKind::Singleton:
    return {level_->crd[cursor_], cursor_};
  }
  return {0, 0};
}

Tensor::Tensor(std::vector<Coord> dims, Format format) {
  CooList empty(static_cast<int>(dims.size()));
  *this = compress_coo(empty, format, std::move(dims));
}

std::size_t Tensor::level_size(int l) const {
  if (l < 0) return 1;
  const Level& lv = level(l);
  switch (lv.format.kind) {
  case LevelKind::Dense:
    return level_size(l - 1) * lv.extent;
  case LevelKind::Compressed:
  case LevelKind::Singleton:
    return lv.crd.size();
  }
  return 0;
}

std::pair<std::size_t, std::size_t> Tensor::child_range(int l, std::size_t parent_pos) const {
  const Level& lv = level(l);
  if (parent_pos >= level_size(l - 1)) {
    throw Error("iterate_level: parent position " + std::to_string(parent_pos) + " out of range at level " +
                std::to_string(l));
  }
  switch (lv.format.kind) {
  case LevelKind::Dense:
    return {parent_pos * lv.extent, (parent_pos + 1) * lv.extent};
  case LevelKind::Compressed:
    return {lv.pos[parent_pos], lv.pos[parent_pos + 1]};
  case LevelKind::Singleton:
    return {parent_pos, parent_pos + 1};
  }
  return {0, 0};
}

LevelRange Tensor::iterate_level(int l, std::size_t parent_pos) const {
  if (l < 0 || l >= order()) throw Error("iterate_level: level " + std::to_string(l) + " out of range");
  auto [b, e] = child_range(l, parent_pos);
  return LevelRange(&levels_[static_cast<std::size_t>(l)], parent_pos, b, e);
}

std::optional<std::size_t> Tensor::locate(int l, std::size_t parent_pos, Coord coord) const {
  const Level& lv = level(l);
  switch (lv.format.kind) {
  case LevelKind::Dense:
    if (coord >= lv.extent) return std::nullopt;
    return parent_pos * lv.extent + coord;
  case LevelKind::Compressed: {
    const auto first = lv.crd.begin() + lv.pos[parent_pos];
    const auto last = lv.crd.begin() + lv.pos[parent_pos + 1];
    const auto it = std::lower_bound(first, last, coord);
    if (it == last || *it != coord) return std::nullopt;
    return static_cast<std::size_t>(it - lv.crd.begin());
  }
  case LevelKind::Singleton:
    if (lv.crd[parent_pos] != coord) return std::nullopt;
    return parent_pos;
  }
  return std::nullopt;
}

namespace {

void collect(const Tensor& t, int l, std::size_t parent, std::vector<Coord>& crds,
             std::vector<Component>& out) {
  for (const auto [c, p] : t.iterate_level(l, parent)) {
    crds[static_cast<std::size_t>(t.format().mode_of_level(l))] = c;
    if (l + 1 == t.order()) {
      out.push_back({crds, t.vals()[p]});
    } else {
      collect(t, l + 1, p, crds, out);
    }
  }
}

} // namespace

std::vector<Component> Tensor::components() const {
  std::vector<Component> out;
  if (order() == 0) {
    out.push_back({{}, vals_.empty() ? 0.0 : vals_[0]});
    return out;
  }
  std::vector<Coord> crds(static_cast<std::size_t>(order()));
  collect(*this, 0, 0, crds, out);
  return out;
}

CooList Tensor::to_coo() const { return CooList::from_components(order(), components()); }

void Tensor::check_invariants() const {
  if (static_cast<int>(levels_.size()) != format_.order() || format_.order() != order()) {
    throw Error("tensor: level count does not match order");
  }
  std::size_t parent = 1;
  for (int l = 0; l < order(); ++l) {
    const Level& lv = levels_[static_cast<std::size_t>(l)];
    const Coord extent = dims_[static_cast<std::size_t>(format_.mode_of_level(l))];
    switch (lv.format.kind) {
    case LevelKind::Dense:
      if (lv.extent != extent) throw Error("tensor: dense level extent mismatch");
      parent *= extent;
      break;
    case LevelKind::Compressed: {
      if (lv.pos.size() != parent + 1 || lv.pos.front() != 0 || lv.pos.back() != lv.crd.size()) {
        throw Error("tensor: malformed pos array at level " + std::to_string(l));
      }
      for (std::size_t p = 0; p < parent; ++p) {
        if (lv.pos[p] > lv.pos[p + 1]) throw Error("tensor: pos not nondecreasing at level " + std::to_string(l));
        for (std::size_t q = lv.pos[p]; q < lv.pos[p + 1]; ++q) {
          if (lv.crd[q] >= extent) throw Error("tensor: coordinate out of bounds at level " + std::to_string(l));
          if (q > lv.pos[p]) {
            const bool ok = lv.format.unique ? lv.crd[q - 1] < lv.crd[q] : lv.crd[q - 1] <= lv.crd[q];
            if (!ok) throw Error("tensor: crd segment not increasing at level " + std::to_string(l));
          }
        }
      }
      parent = lv.crd.size();
      break;
    }
    case LevelKind::Singleton:
      if (lv.crd.size() != parent) throw Error("tensor: singleton level size mismatch");
      for (Coord c : lv.crd) {
        if (c >= extent) throw Error("tensor: coordinate out of bounds at level " + std::to_string(l));
      }
      break;
    }
  }
  if (vals_.size() != parent) throw Error("tensor: value count does not match innermost positions");
}

std::size_t Tensor::bytes() const {
  std::size_t b = vals_.size() * sizeof(double);
  for (const auto& lv : levels_) b += (lv.pos.size() + lv.crd.size()) * sizeof(std::uint32_t);
  return b;
}

Tensor compress_levels(std::span<const std::span<const Coord>> level_crds, std::span<const double> vals,
                       const Format& target, std::vector<Coord> dims) {
  const int order = target.order();
  if (static_cast<int>(dims.size()) != order || static_cast<int>(level_crds.size()) != order) {
    throw Error("compress: order mismatch between format, dims and coordinates");
  }
  const std::size_t n = vals.size();
  for (const auto& col : level_crds) {
    if (col.size() != n) throw Error("compress: ragged coordinate arrays");
  }
  for (int l = 0; l < order; ++l) {
    const Coord extent = dims[static_cast<std::size_t>(target.mode_of_level(l))];
    for (std::size_t e = 0; e < n; ++e) {
      if (level_crds[static_cast<std::size_t>(l)][e] >= extent) {
        throw Error("compress: coordinate " + std::to_string(level_crds[static_cast<std::size_t>(l)][e]) +
                    " out of bounds for mode " + std::to_string(target.mode_of_level(l)) + " (extent " +
                    std::to_string(extent) + ")");
      }
    }
  }
  for (std::size_t e = 1; e < n; ++e) {
    int cmp = 0;
    for (int l = 0; l < order && cmp == 0; ++l) {
      const Coord a = level_crds[static_cast<std::size_t>(l)][e - 1];
      const Coord b = level_crds[static_cast<std::size_t>(l)][e];
      cmp = a < b ? -1 : (a > b ? 1 : 0);
    }
    if (cmp == 0) throw Error("compress: duplicate coordinates at entry " + std::to_string(e));
    if (cmp > 0) throw Error("compress: components not sorted at entry " + std::to_string(e));
  }

  Tensor t;
  t.dims_ = std::move(dims);
  t.format_ = target;
  t.levels_.resize(static_cast<std::size_t>(order));

  std::vector<std::size_t> parent(n, 0);
  std::vector<std::size_t> child(n, 0);
  std::size_t parent_count = 1;
  for (int l = 0; l < order; ++l) {
    Level& lv = t.levels_[static_cast<std::size_t>(l)];
    lv.format = target.level(l);
    const auto crd = level_crds[static_cast<std::size_t>(l)];
    const Coord extent = t.dims_[static_cast<std::size_t>(target.mode_of_level(l))];
    std::size_t count = 0;
    switch (lv.format.kind) {
    case LevelKind::Dense:
      lv.extent = extent;
      for (std::size_t e = 0; e < n; ++e) child[e] = parent[e] * extent + crd[e];
      count = parent_count * extent;
      break;
    case LevelKind::Compressed:
      lv.pos.assign(parent_count + 1, 0);
      for (std::size_t e = 0; e < n; ++e) {
        const bool fresh = !lv.format.unique || e == 0 || parent[e] != parent[e - 1] || crd[e] != crd[e - 1];
        if (fresh) {
          lv.crd.push_back(crd[e]);
          ++lv.pos[parent[e] + 1];
        }
        child[e] = lv.crd.size() - 1;
      }
      std::partial_sum(lv.pos.begin(), lv.pos.end(), lv.pos.begin());
      count = lv.crd.size();
      break;
    case LevelKind::Singleton:
      lv.crd.assign(parent_count, 0);
      for (std::size_t e = 0; e < n; ++e) {
        lv.crd[parent[e]] = crd[e];
        child[e] = parent[e];
      }
      count = parent_count;
      break;
    }
    std::swap(parent, child);
    parent_count = count;
  }
  t.vals_.assign(parent_count, 0.0);
  for (std::size_t e = 0; e < n; ++e) t.vals_[parent[e]] = vals[e];
  return t;
}

Tensor compress_coo(const CooList& sorted, const Format& target, std::vector<Coord> dims) {
  if (sorted.order() != target.order()) throw Error("compress_coo: component order does not match format");
  std::vector<std::span<const Coord>> cols;
  for (int l = 0; l < target.order(); ++l) {
    cols.emplace_back(sorted.crds[static_cast<std::size_t>(target.mode_of_level(l))]);
  }
  return compress_levels(cols, sorted.vals, target, std::move(dims));
}

Tensor pack(CooList coo, const Format& target, std::vector<Coord> dims) {
  const int order = target.order();
  if (coo.order() != order) throw Error("pack: component order does not match format");
  std::vector<std::size_t> idx(coo.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](std::size_t e, int l) {
    return coo.crds[static_cast<std::size_t>(target.mode_of_level(l))][e];
  };
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    for (int l = 0; l < order; ++l) {
      if (key(a, l) != key(b, l)) return key(a, l) < key(b, l);
    }
    return false;
  });
  CooList out(order);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t e = idx[k];
    bool same = k > 0;
    for (int m = 0; m < order && same; ++m) {
      same = coo.crds[static_cast<std::size_t>(m)][e] == out.crds[static_cast<std::size_t>(m)].back();
    }
    if (same) {
      out.vals.back() += coo.vals[e];
    } else {
      for (int m = 0; m < order; ++m) {
        out.crds[static_cast<std::size_t>(m)].push_back(coo.crds[static_cast<std::size_t>(m)][e]);
      }
      out.vals.push_back(coo.vals[e]);
    }
  }
  return compress_coo(out, target, std::move(dims));
}

Tensor pack(const std::vector<Component>& comps, const Format& target, std::vector<Coord> dims) {
  return pack(CooList::from_components(target.order(), comps), target, std::move(dims));
}

Tensor convert(const Tensor& t, const Format& target) {
  if (t.format() == target) return t;
  return pack(t.to_coo(), target, t.dims());
}

DenseArray::DenseArray(std::vector<Coord> d) : dims(std::move(d)) {
  std::size_t n = 1;
  for (Coord x : dims) n *= x;
  data.assign(n, 0.0);
}

std::size_t DenseArray::offset(std::span<const Coord> crds) const {
  std::size_t off = 0;
  for (std::size_t m = 0; m < dims.size(); ++m) off = off * dims[m] + crds[m];
  return off;
}

std::size_t DenseArray::nonzeros() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](double v) { return v != 0.0; }));
}

DenseArray to_dense(const Tensor& t) {
  DenseArray d(t.dims());
  for (const auto& c : t.components()) d.at(c.crds) += c.val;
  return d;
}

std::string to_string(const Component& c) {
  std::ostringstream os;
  os << '(';
  for (std::size_t m = 0; m < c.crds.size(); ++m) os << c.crds[m] << ',';
  os << c.val << ')';
  return os.str();
}

} // namespace spws
