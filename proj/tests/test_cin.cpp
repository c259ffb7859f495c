#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "spws/error.hpp"
#include "spws/parser.hpp"

using namespace spws;

namespace {

Stmt stmt_of(const std::string& text, const std::string& order, const std::map<std::string, Format>& f = {}) {
  const auto p = parse_assignment(text, f);
  return from_einsum(p.lhs, p.rhs, parse_index_list(order));
}

} // namespace

TEST_CASE("from_einsum builds a forall nest") {
  CHECK(stmt_of("A(i,j) = B(i,k) * C(k,j)", "kij").to_string() ==
        "forall(k) forall(i) forall(j) A(i,j) += B(i,k) * C(k,j)");
  CHECK(stmt_of("A(i) = B(i)", "i").to_string() == "forall(i) A(i) = B(i)");
  CHECK(stmt_of("A(i,j) = B(i,j) * C(i,j)", "ij").to_string() == "forall(i) forall(j) A(i,j) = B(i,j) * C(i,j)");
}

TEST_CASE("from_einsum rejects unbound and unused variables") {
  const auto p = parse_assignment("A(i,j) = B(i,k) * C(k,j)");
  CHECK_THROWS_AS(from_einsum(p.lhs, p.rhs, parse_index_list("ij")), Error);
  CHECK_THROWS_AS(from_einsum(p.lhs, p.rhs, parse_index_list("ijkl")), Error);
  CHECK_THROWS_AS(from_einsum(p.lhs, p.rhs, parse_index_list("i,j,k,k")), Error);
}

TEST_CASE("parser handles precedence, constants and errors") {
  const auto p = parse_assignment("y(i) = 2 * (B(i,j) + C(i,j)) * x(j)");
  CHECK(p.rhs.to_string() == "2 * (B(i,j) + C(i,j)) * x(j)");
  CHECK(p.tensors == std::vector<std::string>{"y", "B", "C", "x"});
  const auto terms = expand(p.rhs);
  REQUIRE(terms.size() == 2);
  CHECK(terms[0].coef == 2.0);
  CHECK(terms[0].factors.size() == 2);
  try {
    parse_assignment("A(i,j) = B(i,k) ** C(k,j)");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.column() == 18);
  }
  CHECK_THROWS_AS(parse_assignment("A(i,j) = B(i,k) * B(k)"), ParseError);
  CHECK_THROWS_AS(parse_assignment("A(i,j) B(i,j)"), ParseError);
  CHECK_THROWS_AS(parse_assignment("A(i,j) = B(i,j"), ParseError);
  CHECK_THROWS_AS(parse_assignment("A(i,j) = B(i,j)", {{"A", formats::csf(3)}}), ParseError);
}

TEST_CASE("default formats by order") {
  const auto p = parse_assignment("A(i,j) = B(i,k,l) * c(k) * d(l)");
  CHECK(p.lhs.tensor.format == formats::csr());
  CHECK(accesses(p.rhs)[0].tensor.format == formats::csf(3));
  CHECK(accesses(p.rhs)[1].tensor.format == formats::dense(1));
}

TEST_CASE("pipelined transposed schedule") {
  const Stmt s = stmt_of("A(j,i) = B(i,k) * C(k,j)", "ijk", {{"A", formats::dcsr()}});
  const Stmt t = apply_schedule(s, parse_schedule("stmt.reorder({i,k,j})\n"
                                                  "  .fuse(i,k,f)\n"
                                                  "  .pos(f,fpos,B)   # position space of B\n"
                                                  "  .split(fpos,f0,f1,4)\n"
                                                  "  .reorder({f0,f1,j})\n"));
  CHECK(forall_chain(t) == IndexVars{"f0", "f1", "j"});
  CHECK(t.relations().size() == 5);
  CHECK(forall_chain(t)[0].kind() == IndexVarKind::Split);
  CHECK(underlying_vars("f1", t.relations()) == IndexVars{"i", "k"});
  // Access variables are untouched by scheduling.
  CHECK(innermost_assign(t).rhs.to_string() == "B(i,k) * C(k,j)");
}

TEST_CASE("scheduling errors") {
  const Stmt s = stmt_of("A(i,j) = B(i,k) * C(k,j)", "ikj");
  CHECK_THROWS_AS(s.fuse("i", "j", "f"), Error);
  CHECK_THROWS_AS(s.split("q", "q0", "q1", 2), Error);
  CHECK_THROWS_AS(s.split("i", "k", "i1", 2), Error);
  CHECK_THROWS_AS(s.split("i", "i0", "i1", 0), Error);
  CHECK_THROWS_AS(s.reorder({"i", "i"}), Error);
  CHECK_THROWS_AS(apply_schedule(s, parse_schedule("split(i,i0,i1)")), ParseError);
  CHECK_THROWS_AS(apply_schedule(s, parse_schedule("unroll(i,4)")), ParseError);
  try {
    apply_schedule(s, parse_schedule("reorder(k,i)\n\nfuse(k,j,f)"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("pos rewrites the loop variable and logs the relation") {
  const Stmt s = stmt_of("A(i,j) = B(i,k) * C(k,j)", "ikj");
  const auto b = accesses(innermost_assign(s).rhs)[0];
  const Stmt t = s.reorder({"i", "k"}).pos("i", "p", b);
  CHECK(forall_chain(t) == IndexVars{"p", "k", "j"});
  REQUIRE(std::holds_alternative<PosRel>(t.relations().back()));
  CHECK_THROWS_AS(s.pos("j", "p", b), Error);
}

TEST_CASE("reorder permutes only the listed positions") {
  const Stmt s = stmt_of("A(i,j) = B(i,k) * C(k,j)", "ikj");
  CHECK(forall_chain(s.reorder({"j", "i"})) == IndexVars{"j", "k", "i"});
  CHECK(forall_chain(s.reorder({"k", "i", "j"})) == IndexVars{"k", "i", "j"});
}

TEST_CASE("precompute produces a where statement") {
  const Stmt s = stmt_of("A(j,i) = B(i,k) * C(k,j)", "ikj", {{"A", formats::csr()}});
  WorkspaceDescriptor d{2, {"I", "J"}, SortPolicy::Coord, 64, {1, 0}, 0};
  const TensorVar w = TensorVar::sparse_ws("W", d);
  const Stmt p = s.precompute(innermost_assign(s).rhs, {"i", "j"}, {"i", "j"}, w);
  CHECK(p.to_string() ==
        "(forall(j) forall(i) A(j,i) = W(i,j)) where (forall(i) forall(k) forall(j) W(i,j) += B(i,k) * C(k,j))");
  CHECK(w.format.mode_ordering() == std::vector<int>{1, 0});
  CHECK(d.to_string() == "SpFormat(2, Coord), {I,J}, {1,0}, cap=64");

  const Stmt q = s.precompute(innermost_assign(s).rhs, {"i", "j"}, {"j", "i"}, w);
  CHECK(q.as_where().consumer.to_string() == "forall(i) forall(j) A(i,j) = W(j,i)");
}

TEST_CASE("precompute of a sub-expression keeps the rest in the consumer") {
  const Stmt s = stmt_of("A(i,j) = B(i,k) * C(k,j) * d(j)", "ikj");
  const auto rhs = innermost_assign(s).rhs;
  const auto& outer = std::get<MulExpr>(rhs.node());
  const TensorVar w = TensorVar::sparse_ws("W", {2, {"I", "J"}, SortPolicy::Bucket, 8, {0, 1}, 0});
  const Stmt p = s.precompute(outer.lhs, {"i", "j"}, {}, w);
  CHECK(p.as_where().consumer.to_string() == "forall(i) forall(j) A(i,j) = W(i,j) * d(j)");
  CHECK(p.as_where().producer.to_string() == "forall(i) forall(k) forall(j) W(i,j) += B(i,k) * C(k,j)");
}

TEST_CASE("precompute errors") {
  const Stmt s = stmt_of("A(i,j) = B(i,k) * C(k,j)", "ikj");
  const auto rhs = innermost_assign(s).rhs;
  const TensorVar w2 = TensorVar::sparse_ws("W", {2, {"I", "J"}, SortPolicy::Coord, 8, {0, 1}, 0});
  const TensorVar w1 = TensorVar::sparse_ws("W", {1, {"I"}, SortPolicy::Coord, 8, {0}, 0});
  const auto p = parse_assignment("X(i,j) = D(i,j)");
  CHECK_THROWS_AS(s.precompute(p.rhs, {"i", "j"}, {}, w2), Error);
  CHECK_THROWS_AS(s.precompute(rhs, {"i"}, {}, w1), Error);
  CHECK_THROWS_AS(s.precompute(rhs, {"i", "j"}, {"i", "k"}, w2), Error);
  CHECK_THROWS_AS(TensorVar::sparse_ws("W", {2, {"I"}, SortPolicy::Coord, 8, {0, 1}, 0}), Error);
  CHECK_THROWS_AS(TensorVar::sparse_ws("W", {2, {"I", "J"}, SortPolicy::Coord, 8, {0, 0}, 0}), Error);
}

TEST_CASE("to_einsum mirrors the expansion") {
  const Stmt s = stmt_of("a(i) = B(i,j) * (c(j) + d(j))", "ij");
  const Einsum e = to_einsum(innermost_assign(s));
  CHECK(e.result == "a");
  REQUIRE(e.terms.size() == 2);
  CHECK(e.terms[1].factors[1].tensor == "d");
}
