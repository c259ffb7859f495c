#include "spws/policy.hpp"

#include <algorithm>
#include <cctype>

#include "spws/error.hpp"

namespace spws {

std::string to_string(SortPolicy p) {
  switch (p) {
    case SortPolicy::Bucket: return "Bucket";
    case SortPolicy::Hash: return "Hash";
    case SortPolicy::Coord: return "Coord";
  }
  return "?";
}

SortPolicy parse_policy(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "bucket") return SortPolicy::Bucket;
  if (t == "hash") return SortPolicy::Hash;
  if (t == "coord") return SortPolicy::Coord;
  throw Error("unknown sort policy '" + text + "' (expected bucket, hash or coord)");
}

} // namespace spws
