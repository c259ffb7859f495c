#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "spws/error.hpp"
#include "spws/io.hpp"

using namespace spws;

namespace {

Tensor mtx(const std::string& text) {
  std::istringstream in(text);
  return read_matrix_market(in);
}

Tensor tns(const std::string& text, const std::vector<Coord>& dims = {}) {
  std::istringstream in(text);
  return read_frostt(in, dims);
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

} // namespace

TEST_CASE("MatrixMarket indices shift to zero-based") {
  const Tensor t = mtx("%%MatrixMarket matrix coordinate real general\n% comment\n3 3 2\n1 1 1.0\n3 2 2.0\n");
  CHECK(t.format() == formats::coo(2));
  CHECK(t.dims() == std::vector<Coord>{3, 3});
  CHECK(t.components() == std::vector<Component>{{{0, 0}, 1.0}, {{2, 1}, 2.0}});
}

TEST_CASE("MatrixMarket symmetry, pattern and duplicates") {
  const Tensor sym = mtx("%%MatrixMarket matrix coordinate real symmetric\n3 3 2\n2 1 4\n3 3 1\n");
  CHECK(sym.components() == std::vector<Component>{{{0, 1}, 4}, {{1, 0}, 4}, {{2, 2}, 1}});
  const Tensor skew = mtx("%%MatrixMarket matrix coordinate integer skew-symmetric\n2 2 1\n2 1 3\n");
  CHECK(skew.components() == std::vector<Component>{{{0, 1}, -3}, {{1, 0}, 3}});
  const Tensor pat = mtx("%%MatrixMarket matrix coordinate pattern general\n2 4 2\n1 4\n2 2\n");
  CHECK(pat.components() == std::vector<Component>{{{0, 3}, 1}, {{1, 1}, 1}});
  const Tensor dup = mtx("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 2 1.5\n1 2 2.5\n2 1 1\n");
  CHECK(dup.components() == std::vector<Component>{{{0, 1}, 4}, {{1, 0}, 1}});
}

TEST_CASE("MatrixMarket errors name the line") {
  CHECK(error_of([] { mtx("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n"); }).find("line 3") !=
        std::string::npos);
  CHECK(error_of([] { mtx("%%MatrixMarket matrix coordinate real general\n2 2 1\n% c\n1 0 1\n"); }).find("line 4") !=
        std::string::npos);
  CHECK(error_of([] { mtx("%%MatrixMarket matrix array real general\n2 2\n"); }).find("coordinate") != std::string::npos);
  CHECK_THROWS_AS(mtx("MatrixMarket matrix coordinate real general\n"), ParseError);
  CHECK_THROWS_AS(mtx("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n"), ParseError);
  CHECK_THROWS_AS(mtx("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 x\n"), ParseError);
  CHECK_THROWS_AS(mtx("%%MatrixMarket matrix coordinate real symmetric\n2 3 0\n"), ParseError);
  CHECK_THROWS_AS(read_matrix_market(std::string("/nonexistent/file.mtx")), Error);
}

TEST_CASE("MatrixMarket round trip into CSR") {
  const Tensor t = random_tensor({7, 5}, 0.3, 11, formats::csr());
  std::stringstream s;
  write_matrix_market(s, t);
  CHECK(read_matrix_market(s, formats::csr()) == t);
}

TEST_CASE("FROSTT reading and writing") {
  const Tensor one = tns("1 1 1 5.0\n");
  CHECK(one.order() == 3);
  CHECK(one.components() == std::vector<Component>{{{0, 0, 0}, 5.0}});
  const Tensor empty = tns("# nothing\n", {4, 5, 6});
  CHECK(empty.dims() == std::vector<Coord>{4, 5, 6});
  CHECK(empty.components().empty());
  CHECK_THROWS_AS(tns(""), Error);
  CHECK_THROWS_AS(tns("1 1 1 1\n1 1 1\n"), ParseError);
  CHECK_THROWS_AS(tns("1 a 1 1\n"), ParseError);
  CHECK(error_of([] { tns("1 1 1\n3 1 1\n", {2, 2}); }).find("line 2") != std::string::npos);
  const Tensor t = random_tensor({4, 5, 6}, 0.2, 3, formats::csf(3));
  std::stringstream s;
  write_frostt(s, t);
  const Format f = formats::csf(3);
  CHECK(read_frostt(s, t.dims(), &f) == t);
}

TEST_CASE("file round trip by extension") {
  const auto dir = std::filesystem::temp_directory_path();
  const Tensor t = random_tensor({6, 4}, 0.4, 5, formats::csr());
  write_matrix_market((dir / "spws_io.mtx").string(), t);
  CHECK(read_tensor_file((dir / "spws_io.mtx").string(), formats::csr()) == t);
  write_frostt((dir / "spws_io.tns").string(), t);
  const Tensor back = read_tensor_file((dir / "spws_io.tns").string(), formats::csr());
  CHECK(back.components() == t.components());
  CHECK_THROWS_AS(read_tensor_file("x.bin", formats::csr()), Error);
}

TEST_CASE("SplitMix64 reference stream") {
  SplitMix64 r(1234567);
  CHECK(r.next() == 6457827717110365317ULL);
  CHECK(r.next() == 3203168211198807973ULL);
  SplitMix64 z(0);
  CHECK(z.next() == 0xe220a8397b1dcdafULL);
}

TEST_CASE("synthetic inputs") {
  SyntheticSpec spec;
  spec.dims = {40, 30};
  spec.nnz_per_column = 5;
  spec.column_fraction = 0.1;
  spec.seed = 42;
  const auto a = synthesize(spec);
  const auto b = synthesize(spec);
  CHECK(a.b == b.b);
  CHECK(a.c == b.c);
  CHECK(a.b.stored() == 15);
  CHECK(a.c.dims() == std::vector<Coord>{30, 40});
  // C(k, (i + 1) mod I) = B(i, k).
  for (const auto& comp : a.b.components()) {
    const Coord crd[2]{comp.crds[1], (comp.crds[0] + 1) % 40};
    CHECK(to_dense(a.c).at(crd) == comp.val);
  }
  spec.seed = 43;
  CHECK_FALSE(synthesize(spec).b == a.b);
  spec.nnz_per_column = 41;
  CHECK_THROWS_AS(synthesize(spec), Error);
  spec.nnz_per_column = 1;
  spec.column_fraction = 0.01;
  CHECK_THROWS_AS(synthesize(spec), Error);
}

TEST_CASE("shifted transpose of a 2x2 matrix") {
  // B = [[0,b],[c,0]]; B^T = [[0,c],[b,0]]; rotating columns by one gives [[c,0],[0,b]].
  SyntheticSpec spec;
  spec.dims = {2, 2};
  spec.nnz_per_column = 1;
  spec.seed = 0;
  const auto p = synthesize(spec);
  const auto bt = p.b.components();
  REQUIRE(bt.size() == 2);
  for (const auto& comp : bt) {
    const Coord crd[2]{comp.crds[1], static_cast<Coord>((comp.crds[0] + 1) % 2)};
    CHECK(to_dense(p.c).at(crd) == comp.val);
  }
  spec.shift = false;
  const auto q = synthesize(spec);
  for (const auto& comp : q.b.components()) {
    const Coord crd[2]{comp.crds[1], comp.crds[0]};
    CHECK(to_dense(q.c).at(crd) == comp.val);
  }
}

TEST_CASE("sweep point nonzero count matches the closed form") {
  SyntheticSpec spec;
  spec.dims = {10000, 2500};
  spec.nnz_per_column = 1000;
  spec.column_fraction = 0.1;
  spec.seed = 7;
  CHECK(spec.expected_nnz() == 250 * 1000);
  const auto p = synthesize(spec);
  CHECK(p.b.stored() == 250000);
  CHECK(p.c.stored() == 250000);
}

TEST_CASE("random tensors") {
  const Tensor t = random_tensor({10, 10, 10}, 0.05, 9, formats::csf(3));
  CHECK(t.stored() == 50);
  t.check_invariants();
  CHECK(random_tensor({10, 10, 10}, 0.05, 9, formats::csf(3)) == t);
  CHECK(random_tensor({3, 3}, 1.0, 1, formats::csr()).stored() == 9);
  CHECK(random_tensor({3, 3}, 0.0, 1, formats::csr()).stored() == 0);
  CHECK_THROWS_AS(random_tensor({3}, 1.5, 1, formats::sparse_vector()), Error);
}

TEST_CASE("memory estimates") {
  CHECK(estimate_memory(WorkspaceKind::Dense, 100000000ULL) == 1300000000ULL);
  CHECK(estimate_memory(WorkspaceKind::Sparse, 1000000ULL) == 12000000ULL);
  CHECK(estimate_memory(WorkspaceKind::Sparse, 1000000ULL, true) == 24000000ULL);
  const double ratio = static_cast<double>(estimate_memory(WorkspaceKind::Dense, 100000000ULL)) /
                       static_cast<double>(estimate_memory(WorkspaceKind::Sparse, 1000000ULL));
  CHECK(ratio == doctest::Approx(108.33).epsilon(0.001));
  CHECK(estimate_memory(WorkspaceKind::Dense, 0) == 0);
}

TEST_CASE("benchmark CSV schema") {
  std::ostringstream s;
  BenchRow r{"spgemm", "coord", 64, "8x8", 10, 12, 500, 1024, 30, 2, 832, 144, "seq", "map-extreme"};
  write_bench_csv(s, {r});
  CHECK(s.str() ==
        "kernel,policy,capacity,dims,nnz_in,nnz_out,time_ns,peak_bytes,comparisons,dedups,"
        "est_dense_bytes,est_sparse_bytes,mode,label\n"
        "spgemm,coord,64,8x8,10,12,500,1024,30,2,832,144,seq,map-extreme\n");
}
