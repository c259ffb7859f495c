#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "spws/policy.hpp"
#include "spws/tensor.hpp"

namespace spws {

struct IsmCounters {
  std::uint64_t inserts = 0;
  /// Values summed into an existing component (on insert, sort or merge).
  std::uint64_t dedups = 0;
  std::uint64_t merges = 0;
  /// Coordinate-tuple comparisons in chain walks, sorts, dedup passes and merges.
  std::uint64_t comparisons = 0;
  std::size_t peak_bytes = 0;

  IsmCounters& operator+=(const IsmCounters& o);
};

struct IsmOptions {
  SortPolicy policy = SortPolicy::Coord;
  std::size_t capacity = 1024;
  /// Hash bucket count; 0 falls back to hash_default_L(capacity).
  std::size_t hash_buckets = 0;
  /// Grow the accumulation capacity after every drain.
  bool grow = false;
  bool double_buffer = true;
  /// Sort and merge sealed buffers on a background worker.
  bool pipelined = false;
};

/// Next accumulation capacity: x2 below 2^16, x1.5 below 2^22, x1.25 above.
std::size_t grow_capacity(std::size_t capacity);

/// Smallest power of two >= nnz (1 for nnz = 0).
std::size_t hash_default_L(std::size_t nnz);

/// Bounded landing buffer for components. Components stay where they were
/// inserted; sorting permutes only the id list. Coordinates are in workspace
/// storage order.
class AccArray {
public:
  AccArray(std::vector<Coord> dims, SortPolicy policy, std::size_t capacity, std::size_t hash_buckets = 0);

  int order() const { return static_cast<int>(dims_.size()); }
  SortPolicy policy() const { return policy_; }
  std::size_t size() const { return vals_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return size() >= capacity_; }
  bool empty() const { return vals_.empty(); }
  std::size_t buckets() const { return buckets_; }

  /// Adds a component. Bucket and Hash sum into an equal stored component.
  /// Returns false, leaving the array untouched, when a new slot is needed
  /// and the array is full.
  bool try_insert(std::span<const Coord> crds, double val, IsmCounters& counters);
  /// As try_insert, but a full array is an error.
  void insert(std::span<const Coord> crds, double val, IsmCounters& counters);

  /// Orders ids lexicographically by coordinates. Coord also sums equal
  /// neighbours, so the result lists each coordinate once.
  const std::vector<std::uint32_t>& sort(IsmCounters& counters);
  const std::vector<std::uint32_t>& sorted_ids() const { return sorted_; }

  Coord crd(int level, std::uint32_t id) const { return crds_[static_cast<std::size_t>(level)][id]; }
  double val(std::uint32_t id) const { return vals_[id]; }

  /// Empties the array (and bucket flags); capacity is kept.
  void clear();
  /// Changes the capacity of an empty array.
  void set_capacity(std::size_t capacity);

  std::size_t bytes() const;

private:
  std::size_t bucket_of(std::span<const Coord> crds) const;
  bool equal(std::uint32_t id, std::span<const Coord> crds) const;
  bool less(std::uint32_t a, std::uint32_t b) const;

  std::vector<Coord> dims_;
  SortPolicy policy_;
  std::size_t capacity_;
  std::size_t buckets_ = 0;
  std::vector<std::vector<Coord>> crds_;
  std::vector<double> vals_;
  std::vector<std::uint32_t> sorted_;
  // Bucket/Hash state: chain heads per bucket, chain links per id, touched buckets.
  std::vector<std::uint32_t> head_;
  std::vector<std::uint32_t> tail_;
  std::vector<std::uint32_t> next_;
  std::vector<std::uint32_t> touched_;
};

/// Sorted, duplicate-free coordinate list of every component merged so far,
/// with an optional second buffer that receives each merge.
class AllArray {
public:
  explicit AllArray(int order, bool double_buffer = true);

  int order() const { return order_; }
  std::size_t size() const { return active().vals.size(); }
  bool empty() const { return size() == 0; }
  bool double_buffered() const { return double_buffer_; }

  std::span<const Coord> crd(int level) const { return active().crds[static_cast<std::size_t>(level)]; }
  std::span<const double> vals() const { return active().vals; }

  /// Merges a sorted accumulation array, summing equal coordinates. Small
  /// batches are located by galloping search, large ones by a linear scan.
  /// Without double buffering the merge is in place. Empties the
  /// accumulation array.
  void merge(AccArray& acc, IsmCounters& counters);

  void clear();
  std::size_t bytes() const;
  /// Throws unless entries are strictly increasing.
  void check_sorted_unique() const;

private:
  struct Buffer {
    std::vector<std::vector<Coord>> crds;
    std::vector<double> vals;
  };
  const Buffer& active() const { return buffers_[active_]; }

  int order_;
  bool double_buffer_;
  Buffer buffers_[2];
  std::size_t active_ = 0;
  std::vector<std::size_t> pos_;
  std::vector<char> equal_;
};

/// The insert-sort-merge workspace: accumulation array(s) feeding an all
/// array, with optional pipelined draining on a background worker.
class SparseWorkspace {
public:
  /// `dims` are the workspace extents in storage order.
  SparseWorkspace(std::vector<Coord> dims, IsmOptions options);
  ~SparseWorkspace();
  SparseWorkspace(const SparseWorkspace&) = delete;
  SparseWorkspace& operator=(const SparseWorkspace&) = delete;

  const std::vector<Coord>& dims() const { return dims_; }
  const IsmOptions& options() const { return options_; }

  /// One Insert call; false means the accumulation array is full.
  bool try_insert(std::span<const Coord> crds, double val);
  /// Sort and merge the current accumulation array (or hand it to the worker).
  void drain();
  /// try_insert, drain when full, insert again.
  void insert(std::span<const Coord> crds, double val);
  /// Drains any residue and waits for the worker. The all array is then final.
  void finish();
  /// Empties every buffer for another round (after finish).
  void reset();

  const AllArray& all() const;
  /// finish() followed by compression of the all array. The target's storage
  /// levels must be in workspace storage order; `dims` are in mode order.
  Tensor drain_and_compress(const Format& target, const std::vector<Coord>& dims);

  std::size_t capacity() const;
  std::size_t drains() const { return drains_; }
  /// Counters of both threads (complete after finish).
  IsmCounters counters() const;

private:
  struct Worker;

  AccArray& open() { return *accs_[open_]; }
  void note_bytes();
  void sort_merge(AccArray& acc, IsmCounters& counters);

  std::vector<Coord> dims_;
  IsmOptions options_;
  std::vector<std::unique_ptr<AccArray>> accs_;
  std::size_t open_ = 0;
  AllArray all_;
  IsmCounters counters_;
  std::size_t drains_ = 0;
  std::unique_ptr<Worker> worker_;
};

} // namespace spws
