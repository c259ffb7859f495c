#include "spws/format.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <sstream>

namespace spws {

bool is_permutation_of_iota(const std::vector<int>& perm) {
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= perm.size() || seen[static_cast<std::size_t>(p)]) {
      return false;
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  return true;
}

std::vector<int> inverse_permutation(const std::vector<int>& perm) {
  if (!is_permutation_of_iota(perm)) {
    throw Error("inverse_permutation: not a permutation");
  }
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  }
  return inv;
}

Format::Format(std::vector<LevelFormat> levels, std::vector<int> mode_ordering)
    : levels_(std::move(levels)), mode_ordering_(std::move(mode_ordering)) {
  if (levels_.size() != mode_ordering_.size()) {
    throw Error("Format: mode ordering length does not match the number of levels");
  }
  if (!is_permutation_of_iota(mode_ordering_)) {
    throw Error("Format: mode ordering is not a permutation");
  }
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const auto& lf = levels_[l];
    if (lf.kind == LevelKind::Singleton && l == 0) {
      throw Error("Format: a Singleton level needs a parent level");
    }
    if (lf.kind == LevelKind::Compressed && !lf.unique) {
      for (std::size_t r = l + 1; r < levels_.size(); ++r) {
        if (levels_[r].kind != LevelKind::Singleton) {
          throw Error("Format: a non-unique Compressed level must be followed by Singleton levels");
        }
      }
    }
  }
}

Format::Format(std::vector<LevelFormat> levels)
    : Format(levels, [&] {
        std::vector<int> id(levels.size());
        std::iota(id.begin(), id.end(), 0);
        return id;
      }()) {}

int Format::level_of_mode(int mode) const {
  for (int l = 0; l < order(); ++l) {
    if (mode_ordering_[static_cast<std::size_t>(l)] == mode) return l;
  }
  throw Error("Format: mode " + std::to_string(mode) + " out of range");
}

bool Format::all_dense() const {
  return std::all_of(levels_.begin(), levels_.end(),
                     [](const LevelFormat& l) { return l.kind == LevelKind::Dense; });
}

bool Format::is_coo() const {
  return order() >= 1 && levels_[0].kind == LevelKind::Compressed && !levels_[0].unique;
}

std::string Format::name() const {
  if (order() == 0) return "Scalar";
  if (*this == formats::dense(order())) return "Dense";
  if (order() == 2) {
    if (*this == formats::csr()) return "CSR";
    if (*this == formats::csc()) return "CSC";
    if (*this == formats::dcsr()) return "DCSR";
    if (*this == formats::dcsc()) return "DCSC";
  }
  if (order() >= 2 && *this == formats::coo(order())) return "COO";
  if (order() >= 3 && *this == formats::csf(order())) return "CSF";
  if (order() == 1 && *this == formats::sparse_vector()) return "Sparse";
  std::string s;
  for (const auto& l : levels_) {
    switch (l.kind) {
    case LevelKind::Dense: s += 'd'; break;
    case LevelKind::Compressed: s += l.unique ? 'c' : 'n'; break;
    case LevelKind::Singleton: s += 's'; break;
    }
  }
  bool identity = true;
  for (int l = 0; l < order(); ++l) identity = identity && mode_ordering_[static_cast<std::size_t>(l)] == l;
  if (!identity) {
    s += ':';
    for (int l = 0; l < order(); ++l) {
      if (l) s += ',';
      s += std::to_string(mode_ordering_[static_cast<std::size_t>(l)]);
    }
  }
  return s;
}

namespace formats {

Format dense(int order) {
  return Format(std::vector<LevelFormat>(static_cast<std::size_t>(order), LevelFormat::dense()));
}
Format csr() { return Format({LevelFormat::dense(), LevelFormat::compressed()}, {0, 1}); }
Format csc() { return Format({LevelFormat::dense(), LevelFormat::compressed()}, {1, 0}); }
Format dcsr() { return Format({LevelFormat::compressed(), LevelFormat::compressed()}, {0, 1}); }
Format dcsc() { return Format({LevelFormat::compressed(), LevelFormat::compressed()}, {1, 0}); }
Format csf(int order) {
  return Format(std::vector<LevelFormat>(static_cast<std::size_t>(order), LevelFormat::compressed()));
}
Format coo(int order) {
  std::vector<LevelFormat> levels;
  levels.push_back(LevelFormat::compressed(order == 1));
  for (int l = 1; l < order; ++l) levels.push_back(LevelFormat::singleton());
  return Format(levels);
}
Format sparse_vector() { return csf(1); }

} // namespace formats

namespace {

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

} // namespace

Format parse_format(const std::string& text, int order) {
  const std::string u = upper(text);
  auto need = [&](int o) {
    if (order != o) {
      throw Error("format " + text + " needs order " + std::to_string(o) + ", tensor has order " +
                  std::to_string(order));
    }
  };
  if (u == "DENSE") return formats::dense(order);
  if (u == "CSR") { need(2); return formats::csr(); }
  if (u == "CSC") { need(2); return formats::csc(); }
  if (u == "DCSR") { need(2); return formats::dcsr(); }
  if (u == "DCSC") { need(2); return formats::dcsc(); }
  if (u == "CSF" || u == "SPARSE") return formats::csf(order);
  if (u == "COO") return formats::coo(order);

  // Level string, optionally followed by ":<mode ordering>".
  const auto colon = text.find(':');
  const std::string lv = text.substr(0, colon);
  std::vector<LevelFormat> levels;
  for (char c : lv) {
    switch (std::tolower(static_cast<unsigned char>(c))) {
    case 'd': levels.push_back(LevelFormat::dense()); break;
    case 'c': levels.push_back(LevelFormat::compressed()); break;
    default: throw Error("unknown format '" + text + "'");
    }
  }
  if (static_cast<int>(levels.size()) != order) {
    throw Error("format '" + text + "' has " + std::to_string(levels.size()) +
                " levels, tensor has order " + std::to_string(order));
  }
  if (colon == std::string::npos) return Format(levels);
  std::vector<int> ordering;
  std::stringstream ss(text.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      ordering.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error("bad mode ordering in format '" + text + "'");
    }
  }
  return Format(levels, ordering);
}

} // namespace spws
