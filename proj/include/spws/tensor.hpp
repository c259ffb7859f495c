#pragma once

#include <cstddef>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spws/format.hpp"

namespace spws {

/// One nonzero: a coordinate per mode plus its value.
struct Component {
  std::vector<Coord> crds;
  double val = 0.0;

  friend bool operator==(const Component&, const Component&) = default;
};

/// Coordinate list in structure-of-arrays form: crds[m][e] is the mode-m
/// coordinate of entry e.
struct CooList {
  std::vector<std::vector<Coord>> crds;
  std::vector<double> vals;

  CooList() = default;
  explicit CooList(int order) : crds(static_cast<std::size_t>(order)) {}

  int order() const { return static_cast<int>(crds.size()); }
  std::size_t size() const { return vals.size(); }
  bool empty() const { return vals.empty(); }

  void push_back(std::span<const Coord> c, double v);
  void push_back(const Component& c) { push_back(c.crds, c.val); }
  Component component(std::size_t e) const;
  std::vector<Component> components() const;
  static CooList from_components(int order, const std::vector<Component>& comps);
};

/// Storage of one level. Dense levels keep only their extent; Compressed
/// levels keep pos and crd; Singleton levels keep crd.
struct Level {
  LevelFormat format;
  Coord extent = 0;
  std::vector<std::uint32_t> pos;
  std::vector<Coord> crd;

  friend bool operator==(const Level&, const Level&) = default;
};

/// (coordinate, child position) pair produced by level iteration.
struct LevelEntry {
  Coord coord;
  std::size_t pos;
};

/// Ordered range over the coordinates of one level below a parent position.
class LevelRange {
public:
  class iterator {
  public:
    using value_type = LevelEntry;
    using difference_type = std::ptrdiff_t;
    using iterator_category = std::forward_iterator_tag;

    iterator() = default;
    iterator(const Level* level, std::size_t parent, std::size_t cursor)
        : level_(level), parent_(parent), cursor_(cursor) {}

    LevelEntry operator*() const;
    iterator& operator++() { ++cursor_; return *this; }
    iterator operator++(int) { auto t = *this; ++cursor_; return t; }
    friend bool operator==(const iterator& a, const iterator& b) { return a.cursor_ == b.cursor_; }

  private:
    const Level* level_ = nullptr;
    std::size_t parent_ = 0;
    std::size_t cursor_ = 0;
  };

  LevelRange(const Level* level, std::size_t parent, std::size_t begin, std::size_t end)
      : level_(level), parent_(parent), begin_(begin), end_(end) {}

  iterator begin() const { return {level_, parent_, begin_}; }
  iterator end() const { return {level_, parent_, end_}; }
  std::size_t size() const { return end_ - begin_; }
  bool empty() const { return begin_ == end_; }

private:
  const Level* level_;
  std::size_t parent_;
  std::size_t begin_;
  std::size_t end_;
};

/// Level-by-level compressed tensor of 64-bit values.
///
/// Immutable once built; the only constructors produce valid storage.
class Tensor {
public:
  Tensor() = default;
  /// A tensor with no stored components (Dense levels are zero-filled).
  Tensor(std::vector<Coord> dims, Format format);

  int order() const { return static_cast<int>(dims_.size()); }
  const std::vector<Coord>& dims() const { return dims_; }
  Coord dim(int mode) const { return dims_.at(static_cast<std::size_t>(mode)); }
  const Format& format() const { return format_; }
  const Level& level(int l) const { return levels_.at(static_cast<std::size_t>(l)); }
  const std::vector<Level>& levels() const { return levels_; }
  const std::vector<double>& vals() const { return vals_; }

  /// Number of stored values (includes explicit zeros of Dense levels).
  std::size_t stored() const { return vals_.size(); }
  /// Number of positions at a storage level.
  std::size_t level_size(int l) const;

  /// Ordered iteration of level `l` below `parent_pos` (0 for the root).
  LevelRange iterate_level(int l, std::size_t parent_pos) const;
  /// Position of `coord` below `parent_pos`, if stored.
  std::optional<std::size_t> locate(int l, std::size_t parent_pos, Coord coord) const;
  /// Half-open range of child positions of `parent_pos` at level `l`.
  std::pair<std::size_t, std::size_t> child_range(int l, std::size_t parent_pos) const;

  /// Every stored component in storage order; crds are in mode order.
  std::vector<Component> components() const;
  CooList to_coo() const;

  /// Throws if any structural invariant is violated.
  void check_invariants() const;

  std::size_t bytes() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

private:
  friend Tensor compress_levels(std::span<const std::span<const Coord>>, std::span<const double>,
                                const Format&, std::vector<Coord>);

  std::vector<Coord> dims_;
  Format format_;
  std::vector<Level> levels_;
  std::vector<double> vals_;
};

/// Builds a tensor from components given per storage level (level_crds[l] is
/// the level-l coordinate of each entry). Entries must be sorted
/// lexicographically in storage order and unique.
Tensor compress_levels(std::span<const std::span<const Coord>> level_crds, std::span<const double> vals,
                       const Format& target, std::vector<Coord> dims);

/// Builds a tensor from a mode-ordered coordinate list that is sorted
/// lexicographically by the target's storage order and has no duplicates.
Tensor compress_coo(const CooList& sorted, const Format& target, std::vector<Coord> dims);

/// Sorts by storage order, sums duplicates and compresses.
Tensor pack(CooList coo, const Format& target, std::vector<Coord> dims);
Tensor pack(const std::vector<Component>& comps, const Format& target, std::vector<Coord> dims);

/// Re-packs the stored components of `t` into another format.
Tensor convert(const Tensor& t, const Format& target);

/// Row-major dense array used by the reference oracle and by tests.
struct DenseArray {
  std::vector<Coord> dims;
  std::vector<double> data;

  DenseArray() = default;
  explicit DenseArray(std::vector<Coord> d);

  std::size_t size() const { return data.size(); }
  std::size_t offset(std::span<const Coord> crds) const;
  double& at(std::span<const Coord> crds) { return data[offset(crds)]; }
  double at(std::span<const Coord> crds) const { return data[offset(crds)]; }
  std::size_t nonzeros() const;

  friend bool operator==(const DenseArray&, const DenseArray&) = default;
};

DenseArray to_dense(const Tensor& t);

std::string to_string(const Component& c);

} // namespace spws
