#pragma once

#include <string>

namespace spws {

/// Sorting policy of an accumulation array.
enum class SortPolicy {
  Bucket, ///< one bucket per first coordinate, dedup on insert
  Hash,   ///< modular hash of the linearized coordinate, dedup on insert
  Coord,  ///< append list, lexicographic sort, dedup while sorting
};

std::string to_string(SortPolicy p);
SortPolicy parse_policy(const std::string& text);

} // namespace spws
