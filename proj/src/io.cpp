#include "spws/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "spws/error.hpp"

namespace spws {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::uint64_t parse_uint(const std::string& w, std::size_t line, const char* what) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc() || p != w.data() + w.size()) {
    throw ParseError(std::string("expected ") + what + ", got '" + w + "'", line, 1);
  }
  return v;
}

double parse_real(const std::string& w, std::size_t line) {
  double v = 0;
  const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc() || p != w.data() + w.size()) throw ParseError("expected a number, got '" + w + "'", line, 1);
  return v;
}

Coord checked_index(const std::string& w, std::uint64_t extent, std::size_t line) {
  const std::uint64_t v = parse_uint(w, line, "an index");
  if (v == 0 || v > extent) {
    throw ParseError("index " + w + " out of bounds 1.." + std::to_string(extent), line, 1);
  }
  return static_cast<Coord>(v - 1);
}

Coord checked_extent(std::uint64_t v, std::size_t line) {
  if (v > std::numeric_limits<Coord>::max()) throw ParseError("extent " + std::to_string(v) + " too large", line, 1);
  return static_cast<Coord>(v);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

Tensor read_matrix_market(std::istream& in, const Format& target) {
  std::string line;
  std::size_t no = 0;
  if (!std::getline(in, line)) throw ParseError("empty MatrixMarket file", 1, 1);
  ++no;
  const auto head = split_ws(lower(line));
  if (head.size() != 5 || head[0] != "%%matrixmarket" || head[1] != "matrix") {
    throw ParseError("malformed MatrixMarket header", no, 1);
  }
  if (head[2] != "coordinate") throw ParseError("only coordinate MatrixMarket files are supported", no, 1);
  const std::string& field = head[3];
  const std::string& symmetry = head[4];
  if (field != "real" && field != "integer" && field != "pattern" && field != "double") {
    throw ParseError("unsupported field '" + field + "'", no, 1);
  }
  if (symmetry != "general" && symmetry != "symmetric" && symmetry != "skew-symmetric") {
    throw ParseError("unsupported symmetry '" + symmetry + "'", no, 1);
  }
  const bool pattern = field == "pattern";

  std::vector<std::string> size;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty() || line[0] == '%') continue;
    size = split_ws(line);
    if (!size.empty()) break;
  }
  if (size.size() != 3) throw ParseError("expected 'rows cols nonzeros'", no, 1);
  const Coord rows = checked_extent(parse_uint(size[0], no, "a row count"), no);
  const Coord cols = checked_extent(parse_uint(size[1], no, "a column count"), no);
  const std::uint64_t declared = parse_uint(size[2], no, "a nonzero count");
  if (symmetry != "general" && rows != cols) throw ParseError("symmetric matrix must be square", no, 1);

  CooList coo(2);
  std::uint64_t seen = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty() || line[0] == '%') continue;
    const auto w = split_ws(line);
    if (w.empty()) continue;
    if (w.size() != (pattern ? 2u : 3u)) throw ParseError("expected " + std::string(pattern ? "2" : "3") + " fields", no, 1);
    if (++seen > declared) throw ParseError("more entries than the declared " + std::to_string(declared), no, 1);
    const Coord i = checked_index(w[0], rows, no);
    const Coord j = checked_index(w[1], cols, no);
    const double v = pattern ? 1.0 : parse_real(w[2], no);
    const Coord ij[2]{i, j};
    coo.push_back(ij, v);
    if (symmetry != "general" && i != j) {
      const Coord ji[2]{j, i};
      coo.push_back(ji, symmetry == "skew-symmetric" ? -v : v);
    }
  }
  if (seen != declared) {
    throw ParseError("found " + std::to_string(seen) + " entries, header declares " + std::to_string(declared), no, 1);
  }
  return pack(std::move(coo), target, {rows, cols});
}

Tensor read_matrix_market(const std::string& path, const Format& target) {
  auto in = open_in(path);
  return read_matrix_market(in, target);
}

void write_matrix_market(std::ostream& out, const Tensor& t) {
  if (t.order() != 2) throw Error("write_matrix_market: order-2 tensor required");
  const auto comps = t.components();
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << t.dim(0) << ' ' << t.dim(1) << ' ' << comps.size() << '\n';
  out << std::setprecision(17);
  for (const auto& c : comps) out << c.crds[0] + 1 << ' ' << c.crds[1] + 1 << ' ' << c.val << '\n';
}

void write_matrix_market(const std::string& path, const Tensor& t) {
  auto out = open_out(path);
  write_matrix_market(out, t);
}

Tensor read_frostt(std::istream& in, const std::vector<Coord>& dims, const Format* target) {
  std::string line;
  std::size_t no = 0;
  int order = dims.empty() ? -1 : static_cast<int>(dims.size());
  std::vector<std::vector<std::uint64_t>> idx;
  std::vector<double> vals;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto w = split_ws(line);
    if (w.empty()) continue;
    if (w.size() < 2) throw ParseError("expected coordinates and a value", no, 1);
    const int n = static_cast<int>(w.size()) - 1;
    if (order < 0) order = n;
    if (n != order) {
      throw ParseError("ragged line: " + std::to_string(n) + " coordinates, expected " + std::to_string(order), no, 1);
    }
    std::vector<std::uint64_t> c(static_cast<std::size_t>(n));
    for (int m = 0; m < n; ++m) {
      const auto& field = w[static_cast<std::size_t>(m)];
      c[static_cast<std::size_t>(m)] = dims.empty()
                                           ? std::uint64_t{checked_index(field, std::numeric_limits<Coord>::max(), no)} + 1
                                           : std::uint64_t{checked_index(field, dims[static_cast<std::size_t>(m)], no)} + 1;
    }
    idx.push_back(std::move(c));
    vals.push_back(parse_real(w.back(), no));
  }
  if (order < 0) throw Error("read_frostt: empty file needs declared dims");
  std::vector<Coord> extents = dims;
  if (extents.empty()) {
    extents.assign(static_cast<std::size_t>(order), 0);
    for (const auto& c : idx) {
      for (std::size_t m = 0; m < c.size(); ++m) extents[m] = std::max(extents[m], static_cast<Coord>(c[m]));
    }
  }
  CooList coo(order);
  std::vector<Coord> crd(static_cast<std::size_t>(order));
  for (std::size_t e = 0; e < idx.size(); ++e) {
    for (std::size_t m = 0; m < crd.size(); ++m) crd[m] = static_cast<Coord>(idx[e][m] - 1);
    coo.push_back(crd, vals[e]);
  }
  return pack(std::move(coo), target ? *target : formats::coo(order), std::move(extents));
}

Tensor read_frostt(const std::string& path, const std::vector<Coord>& dims, const Format* target) {
  auto in = open_in(path);
  return read_frostt(in, dims, target);
}

void write_frostt(std::ostream& out, const Tensor& t) {
  out << std::setprecision(17);
  for (const auto& c : t.components()) {
    for (auto x : c.crds) out << x + 1 << ' ';
    out << c.val << '\n';
  }
}

void write_frostt(const std::string& path, const Tensor& t) {
  auto out = open_out(path);
  write_frostt(out, t);
}

Tensor read_tensor_file(const std::string& path, const Format& target) {
  if (ends_with(path, ".mtx")) return read_matrix_market(path, target);
  if (ends_with(path, ".tns")) return read_frostt(path, {}, &target);
  throw Error("unknown tensor file extension: " + path + " (expected .mtx or .tns)");
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::below(std::uint64_t n) {
  if (n == 0) throw Error("SplitMix64::below: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const std::uint64_t x = next();
    if (x < limit) return x % n;
  }
}

namespace {

// Floyd's sampling of k distinct values from [0, n), returned sorted.
std::vector<std::uint64_t> sample(SplitMix64& rng, std::uint64_t n, std::uint64_t k) {
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  std::vector<std::uint64_t> out;
  for (std::uint64_t j = n - k; j < n; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    const std::uint64_t pick = chosen.count(t) ? j : t;
    chosen.insert(pick);
    out.push_back(pick);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double small_int(SplitMix64& rng) { return static_cast<double>(1 + rng.below(9)); }

} // namespace

void SyntheticSpec::validate() const {
  if (dims.size() != 2) throw Error("synthetic spec: dims must be {I, K}");
  if (dims[0] == 0 || dims[1] == 0) throw Error("synthetic spec: extents must be positive");
  if (!(column_fraction > 0.0 && column_fraction <= 1.0)) throw Error("synthetic spec: column fraction must be in (0, 1]");
  if (nnz_per_column == 0 || nnz_per_column > dims[0]) {
    throw Error("synthetic spec: " + std::to_string(nnz_per_column) + " nonzeros per column do not fit " +
                std::to_string(dims[0]) + " rows");
  }
  if (selected_columns() == 0) throw Error("synthetic spec: column fraction selects no column");
}

std::size_t SyntheticSpec::selected_columns() const {
  if (dims.size() != 2) return 0;
  return static_cast<std::size_t>(std::llround(column_fraction * static_cast<double>(dims[1])));
}

SyntheticPair synthesize(const SyntheticSpec& spec, const Format& b_format, const Format& c_format) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  const Coord rows = spec.dims[0];
  const Coord cols = spec.dims[1];
  CooList b(2);
  CooList c(2);
  for (auto k : sample(rng, cols, spec.selected_columns())) {
    for (auto i : sample(rng, rows, spec.nnz_per_column)) {
      const double v = small_int(rng);
      const Coord bi[2]{static_cast<Coord>(i), static_cast<Coord>(k)};
      b.push_back(bi, v);
      const Coord col = spec.shift ? static_cast<Coord>((i + 1) % rows) : static_cast<Coord>(i);
      const Coord ci[2]{static_cast<Coord>(k), col};
      c.push_back(ci, v);
    }
  }
  return {pack(std::move(b), b_format, {rows, cols}), pack(std::move(c), c_format, {cols, rows})};
}

Tensor random_tensor(const std::vector<Coord>& dims, double density, std::uint64_t seed, const Format& target) {
  if (!(density >= 0.0 && density <= 1.0)) throw Error("random_tensor: density must be in [0, 1]");
  std::uint64_t total = 1;
  for (auto d : dims) total *= d;
  const auto nnz = static_cast<std::uint64_t>(std::llround(density * static_cast<double>(total)));
  SplitMix64 rng(seed);
  CooList coo(static_cast<int>(dims.size()));
  std::vector<Coord> crd(dims.size());
  for (auto lin : sample(rng, total, nnz)) {
    for (std::size_t m = dims.size(); m-- > 0;) {
      crd[m] = static_cast<Coord>(lin % dims[m]);
      lin /= dims[m];
    }
    coo.push_back(crd, small_int(rng));
  }
  return pack(std::move(coo), target, dims);
}

std::uint64_t estimate_memory(WorkspaceKind kind, std::uint64_t shape_or_nnz, bool double_buffer) {
  if (kind == WorkspaceKind::Dense) return shape_or_nnz * (3 * 4 + 1);
  return shape_or_nnz * 3 * 4 * (double_buffer ? 2 : 1);
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "kernel,policy,capacity,dims,nnz_in,nnz_out,time_ns,peak_bytes,comparisons,dedups,"
         "est_dense_bytes,est_sparse_bytes,mode,label\n";
  for (const auto& r : rows) {
    out << r.kernel << ',' << r.policy << ',' << r.capacity << ',' << r.dims << ',' << r.nnz_in << ',' << r.nnz_out << ','
        << r.time_ns << ',' << r.peak_bytes << ',' << r.comparisons << ',' << r.dedups << ',' << r.est_dense_bytes << ','
        << r.est_sparse_bytes << ',' << r.mode << ',' << r.label << '\n';
  }
}

} // namespace spws
