#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spws/tensor.hpp"

namespace spws {

/// MatrixMarket coordinate file (real, integer or pattern; general,
/// symmetric or skew-symmetric). Indices are 1-based in the file; duplicate
/// entries are summed. Errors name the offending line.
Tensor read_matrix_market(std::istream& in, const Format& target = formats::coo(2));
Tensor read_matrix_market(const std::string& path, const Format& target = formats::coo(2));
/// Writes a "coordinate real general" file of an order-2 tensor.
void write_matrix_market(std::ostream& out, const Tensor& t);
void write_matrix_market(const std::string& path, const Tensor& t);

/// FROSTT text tensor: one "i1 ... iN value" line per component, 1-based,
/// '#' comments. The order comes from the column count; `dims` may declare
/// the extents (required for an empty file), otherwise they are the largest
/// coordinates seen.
Tensor read_frostt(std::istream& in, const std::vector<Coord>& dims = {}, const Format* target = nullptr);
Tensor read_frostt(const std::string& path, const std::vector<Coord>& dims = {}, const Format* target = nullptr);
void write_frostt(std::ostream& out, const Tensor& t);
void write_frostt(const std::string& path, const Tensor& t);

/// Reads .mtx or .tns by extension and packs into `target`.
Tensor read_tensor_file(const std::string& path, const Format& target);

/// SplitMix64 (Steele, Lea and Flood): the seeded generator behind every
/// synthetic input.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
  std::uint64_t state_;
};

/// B is dims[0] x dims[1] (I x K). round(column_fraction * K) columns chosen
/// uniformly hold nnz_per_column distinct uniformly chosen rows each.
struct SyntheticSpec {
  std::vector<Coord> dims;
  std::size_t nnz_per_column = 1;
  double column_fraction = 1.0;
  /// C = B transposed with its columns cyclically shifted by one.
  bool shift = true;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t selected_columns() const;
  std::size_t expected_nnz() const { return selected_columns() * nnz_per_column; }
};

struct SyntheticPair {
  Tensor b;
  Tensor c;
};

/// Values are integers in 1..9. C is K x I; when shift is false it is the
/// plain transpose.
SyntheticPair synthesize(const SyntheticSpec& spec, const Format& b_format = formats::csr(),
                         const Format& c_format = formats::csr());

/// Uniform-random tensor with round(density * size) distinct components of
/// integer value in 1..9.
Tensor random_tensor(const std::vector<Coord>& dims, double density, std::uint64_t seed, const Format& target);

enum class WorkspaceKind { Dense, Sparse };

/// Dense: shape * (3 * 4 + 1) bytes. Sparse: nnz * 3 * 4 bytes per buffer,
/// twice that with double buffering.
std::uint64_t estimate_memory(WorkspaceKind kind, std::uint64_t shape_or_nnz, bool double_buffer = false);

/// One benchmark measurement.
struct BenchRow {
  std::string kernel;
  std::string policy;
  std::size_t capacity = 0;
  std::string dims;
  std::size_t nnz_in = 0;
  std::size_t nnz_out = 0;
  std::uint64_t time_ns = 0;
  std::uint64_t peak_bytes = 0;
  std::uint64_t comparisons = 0;
  std::uint64_t dedups = 0;
  /// estimate_memory of a dense workspace over the result shape and of a
  /// sparse workspace holding nnz_out components.
  std::uint64_t est_dense_bytes = 0;
  std::uint64_t est_sparse_bytes = 0;
  std::string mode;
  std::string label;
};

/// Columns kernel, policy, capacity, dims, nnz_in, nnz_out, time_ns,
/// peak_bytes, comparisons, dedups, then est_dense_bytes, est_sparse_bytes,
/// mode and label.
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

} // namespace spws
