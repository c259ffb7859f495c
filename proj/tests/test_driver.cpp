#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "spws/driver.hpp"
#include "spws/error.hpp"

using namespace spws;

TEST_CASE("every suite kernel matches the oracle") {
  for (const auto& k : kernel_suite()) {
    for (auto policy : {SortPolicy::Bucket, SortPolicy::Hash, SortPolicy::Coord}) {
      CompileOptions o;
      o.order = k.order;
      o.policy = policy;
      o.capacity = 5;
      const Compiled c = compile(k.expr, kernel_formats(k), o);
      std::map<std::string, Coord> ext;
      for (const auto& a : accesses(c.parsed.rhs)) {
        for (const auto& v : a.vars) ext[v.name()] = static_cast<Coord>(5 + ext.size());
      }
      const auto in = random_inputs(c.parsed, ext, 0.2, 17);
      CAPTURE(k.name);
      const Tensor out = execute(c.plan, in);
      out.check_invariants();
      CHECK(out.format() == c.parsed.lhs.tensor.format);
      CHECK(to_dense(out) == reference_result(c.parsed, in, ext));
    }
  }
}

TEST_CASE("suite lookups and format overrides") {
  CHECK(find_kernel("spmv").order == "ij");
  CHECK_THROWS_AS(find_kernel("nope"), Error);
  const auto f = parse_format_overrides("A(i,j) = B(i,k) * C(k,j)", {"B=CSC", "A=dc"});
  CHECK(f.at("B") == formats::csc());
  CHECK(f.at("A") == formats::csr());
  CHECK_THROWS_AS(parse_format_overrides("A(i,j) = B(i,j)", {"Z=CSR"}), Error);
  CHECK_THROWS_AS(parse_format_overrides("A(i,j) = B(i,j)", {"CSR"}), Error);
}

TEST_CASE("default loop order and insertion decisions") {
  const auto& outer = find_kernel("spgemm-outer");
  CompileOptions o;
  const Compiled inner = compile(outer.expr, {}, o);
  CHECK(forall_chain(inner.scheduled) == parse_index_list("ijk"));
  o.order = outer.order;
  CHECK(compile(outer.expr, kernel_formats(outer), o).decision.classification.label() == "scattering, order 2");
  const auto& row = find_kernel("spgemm-rowwise");
  o.order = row.order;
  CHECK(compile(row.expr, kernel_formats(row), o).decision.action == InsertAction::DenseWorkspace);
  o.auto_insert = false;
  CHECK_FALSE(compile(row.expr, kernel_formats(row), o).final_stmt.is_where());
}

TEST_CASE("extents") {
  const ParsedAssignment p = parse_assignment("A(i,j) = B(i,k) * C(k,j)");
  std::map<std::string, Tensor> in{{"B", Tensor({3, 4}, formats::csr())}, {"C", Tensor({4, 5}, formats::csr())}};
  CHECK(extents_of(p, in) == std::map<std::string, Coord>{{"i", 3}, {"j", 5}, {"k", 4}});
  in["C"] = Tensor({6, 5}, formats::csr());
  CHECK_THROWS_AS(extents_of(p, in), Error);
  in.erase("C");
  CHECK_THROWS_AS(extents_of(p, in), Error);
  CHECK_THROWS_AS(random_inputs(p, {{"i", 2}}, 0.5, 1), Error);
}
