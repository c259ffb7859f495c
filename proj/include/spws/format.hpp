#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spws {

using Coord = std::uint32_t;

/// Storage kind of one level.
///
/// Dense levels support random insert and lookup. Compressed levels store a
/// pos/crd pair and only support ordered append and ordered iteration.
/// Singleton levels hold exactly one coordinate per parent position; they
/// exist only to realize COO (a non-unique Compressed level followed by
/// Singleton levels).
enum class LevelKind { Dense, Compressed, Singleton };

struct LevelFormat {
  LevelKind kind = LevelKind::Dense;
  bool unique = true;

  static LevelFormat dense() { return {LevelKind::Dense, true}; }
  static LevelFormat compressed(bool unique = true) { return {LevelKind::Compressed, unique}; }
  static LevelFormat singleton() { return {LevelKind::Singleton, true}; }

  /// Random insert and lookup (the stronger of the two abilities).
  bool random_access() const { return kind == LevelKind::Dense; }

  friend bool operator==(const LevelFormat&, const LevelFormat&) = default;
};

/// Level formats plus the mode ordering mapping storage level -> tensor mode.
class Format {
public:
  Format() = default;
  Format(std::vector<LevelFormat> levels, std::vector<int> mode_ordering);
  explicit Format(std::vector<LevelFormat> levels);

  int order() const { return static_cast<int>(levels_.size()); }
  const std::vector<LevelFormat>& levels() const { return levels_; }
  const LevelFormat& level(int l) const { return levels_.at(static_cast<std::size_t>(l)); }
  const std::vector<int>& mode_ordering() const { return mode_ordering_; }
  int mode_of_level(int l) const { return mode_ordering_.at(static_cast<std::size_t>(l)); }
  int level_of_mode(int mode) const;

  bool all_dense() const;
  bool is_coo() const;

  /// Human-readable name: a named format when one matches, else a level string.
  std::string name() const;

  friend bool operator==(const Format&, const Format&) = default;

private:
  std::vector<LevelFormat> levels_;
  std::vector<int> mode_ordering_;
};

namespace formats {
Format dense(int order);
Format csr();
Format csc();
Format dcsr();
Format dcsc();
/// All levels Compressed, identity mode ordering (order >= 1).
Format csf(int order);
Format coo(int order);
Format sparse_vector();
} // namespace formats

/// Parses a format name for a tensor of the given order.
///
/// Accepts CSR, CSC, DCSR, DCSC, CSF, COO, Dense, or a level string such as
/// "dc" / "cc:1,0" (d = Dense, c = Compressed, optional mode ordering).
Format parse_format(const std::string& text, int order);

/// Permutes access index variables into the order in which they touch the
/// physical storage levels: result[l] = access_vars[mode_ordering[l]].
template <typename T>
std::vector<T> access_map(const std::vector<T>& access_vars, const Format& format);

/// Inverse permutation of a mode ordering.
std::vector<int> inverse_permutation(const std::vector<int>& perm);

bool is_permutation_of_iota(const std::vector<int>& perm);

} // namespace spws

#include "spws/error.hpp"

namespace spws {

template <typename T>
std::vector<T> access_map(const std::vector<T>& access_vars, const Format& format) {
  if (static_cast<int>(access_vars.size()) != format.order()) {
    throw Error("access_map: " + std::to_string(access_vars.size()) +
                " access variables for a format of order " + std::to_string(format.order()));
  }
  std::vector<T> out;
  out.reserve(access_vars.size());
  for (int l = 0; l < format.order(); ++l) {
    out.push_back(access_vars[static_cast<std::size_t>(format.mode_of_level(l))]);
  }
  return out;
}

} // namespace spws
