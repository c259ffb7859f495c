#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "spws/analysis.hpp"
#include "spws/error.hpp"
#include "spws/parser.hpp"

using namespace spws;

namespace {

Stmt stmt_of(const std::string& text, const std::string& order, const std::map<std::string, Format>& f = {}) {
  const auto p = parse_assignment(text, f);
  return from_einsum(p.lhs, p.rhs, parse_index_list(order));
}

const char* kPipelined = "reorder(i,k,j); fuse(i,k,f); pos(f,fpos,B); split(fpos,f0,f1,4); reorder(f0,f1,j)";

} // namespace

TEST_CASE("loop_order") {
  CHECK(loop_order(stmt_of("A(i,j) = B(i,k) * C(k,j)", "kij")) == IndexVars{"k", "i", "j"});
  CHECK(loop_order(stmt_of("a(i) = b(i)", "i")) == IndexVars{"i"});
  const Stmt w = insert_sparse_workspace(stmt_of("A(i,j) = B(i,k) * C(k,j)", "kij"), SortPolicy::Coord, 8);
  CHECK(loop_order(w) == IndexVars{"k", "i", "j"});
}

TEST_CASE("ordering of the SpGEMM loop orders") {
  const Expr rhs = parse_assignment("A(i,j) = B(i,k) * C(k,j)").rhs;
  const IndexVars out{"i", "j"};
  const auto row = classify(IndexVars{"i", "k", "j"}, out, rhs);
  CHECK(row.ordering == 1);
  CHECK(row.p1 == 3);
  CHECK(row.p2 == 1);
  const auto outer = classify(IndexVars{"k", "i", "j"}, out, rhs);
  CHECK(outer.ordering == 2);
  CHECK(outer.p2 == 2);
  const auto inner = classify(IndexVars{"i", "j", "k"}, out, rhs);
  CHECK(inner.ordering == 0);
  CHECK(inner.concordant);
  const auto t = classify(IndexVars{"i", "j"}, IndexVars{"j", "i"}, parse_assignment("A(j,i) = B(i,j)").rhs);
  CHECK(t.ordering == 2);
  CHECK(t.p1 == 1);
  CHECK_FALSE(t.concordant);
  CHECK(t.computation == Computation::Appending);
  CHECK_THROWS_AS(classify(IndexVars{"i"}, out, rhs), Error);
}

TEST_CASE("ordering formula against brute-force mismatch enumeration") {
  // Every loop order of a 3-variable, 2-output contraction.
  IndexVars loops{"i", "j", "k"};
  const IndexVars out{"i", "j"};
  const Expr rhs = parse_assignment("A(i,j) = B(i,k) * C(k,j)").rhs;
  std::sort(loops.begin(), loops.end());
  do {
    // Output variables at or inside the first reduction or out-of-order loop.
    std::size_t first_bad = loops.size();
    IndexVars seen;
    for (std::size_t x = 0; x < loops.size(); ++x) {
      const bool red = !(loops[x] == out[0] || loops[x] == out[1]);
      const bool disorder = !red && !(loops[x] == out[seen.size()]);
      if (red || disorder) {
        first_bad = x;
        break;
      }
      seen.push_back(loops[x]);
    }
    int expect = 0;
    for (std::size_t x = first_bad; x < loops.size(); ++x) {
      if (loops[x] == out[0] || loops[x] == out[1]) ++expect;
    }
    CHECK(classify(loops, out, rhs).ordering == expect);
  } while (std::next_permutation(loops.begin(), loops.end()));
}

TEST_CASE("taxonomy labels") {
  CHECK(classify(stmt_of("A(i,j) = B(i,j) * C(i,j)", "ij")).label() == "appending, order 0");
  CHECK(classify(stmt_of("A(j,i) = B(i,j)", "ij")).label() == "appending, order 2");
  CHECK(classify(stmt_of("A(i,j) = B(i,k) * C(k,j)", "ijk")).label() == "scattering, order 0");
  CHECK(classify(stmt_of("A(i,j) = B(i,k) * C(k,j)", "ikj")).label() == "scattering, order 1");
  CHECK(classify(stmt_of("A(i,j) = B(i,k) * C(k,j)", "kij")).label() == "scattering, order 2");
  CHECK(classify(stmt_of("A(i,j) = B(i,j) + C(i,j)", "ij")).computation == Computation::Scattering);
  CHECK(classify(stmt_of("A(i,j) = B(i,k,l) * C(k,j) * D(l,j)", "klij")).multiple_reductions);
}

TEST_CASE("pipelined transposed schedule: reconstruction and comparison") {
  const Stmt s = apply_schedule(stmt_of("A(j,i) = B(i,k) * C(k,j)", "ijk", {{"A", formats::dcsr()}}),
                                parse_schedule(kPipelined));
  CHECK(loop_order(s) == IndexVars{"f0", "f1", "j"});
  CHECK(reconstruct_input_order(s) == IndexVars{"i", "k", "j"});
  const auto cmp = compare_orders(IndexVars{"i", "k", "j"}, IndexVars{"j", "i"});
  CHECK(cmp.pruned == IndexVars{"i", "j"});
  CHECK(cmp.ow_order == std::vector<int>{1, 0});
  const auto d = plan_insertion(s, SortPolicy::Coord, 1024);
  CHECK(d.action == InsertAction::SparseWorkspace);
  REQUIRE(d.descriptor);
  CHECK(d.descriptor->to_string() == "SpFormat(2, Coord), {I,J}, {1,0}, cap=1024");
  CHECK(d.result.to_string().find("where (forall(f0) forall(f1) forall(j) W(i,j) += B(i,k) * C(k,j))") !=
        std::string::npos);
}

TEST_CASE("reconstruction basics") {
  CHECK(reconstruct_input_order(stmt_of("A(i,j) = B(i,j)", "ij")) == IndexVars{"i", "j"});
  const Stmt s = stmt_of("A(i,j) = B(i,j)", "ij").split("j", "j0", "j1", 2);
  CHECK(forall_chain(s) == IndexVars{"i", "j0", "j1"});
  CHECK(reconstruct_input_order(s) == IndexVars{"i", "j"});
  CHECK_THROWS_AS(reconstruct_input_order(IndexVars{"i"}, {FuseRel{"a", "b", "f"}}, {}), Error);
}

TEST_CASE("compare_orders") {
  CHECK(compare_orders(IndexVars{"i", "j"}, IndexVars{"i", "j"}).ow_order == std::vector<int>{0, 1});
  CHECK(compare_orders(IndexVars{"i", "j", "k"}, IndexVars{"k", "i", "j"}).ow_order == std::vector<int>{1, 2, 0});
  CHECK_THROWS_AS(compare_orders(IndexVars{"i", "j"}, IndexVars{"i", "i"}), Error);
  CHECK_THROWS_AS(compare_orders(IndexVars{"i"}, IndexVars{"i", "j"}), Error);
}

TEST_CASE("random schedules invert") {
  std::mt19937 rng(11);
  const IndexVars originals{"i", "j", "k", "l"};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 3;
    IndexVars order(originals.begin(), originals.begin() + static_cast<std::ptrdiff_t>(n));
    std::shuffle(order.begin(), order.end(), rng);
    std::string text = "A(" + order[0].name() + ") = B(";
    for (std::size_t x = 0; x < n; ++x) text += (x ? "," : "") + originals[x].name();
    text += ")";
    const auto p = parse_assignment(text, {{"B", formats::csf(static_cast<int>(n))}});
    Stmt s = from_einsum(p.lhs, p.rhs, order);
    const auto b = accesses(p.rhs)[0];
    const int depth = 1 + static_cast<int>(rng() % 4);
    for (int step = 0; step < depth; ++step) {
      const IndexVars chain = forall_chain(s);
      const std::size_t at = rng() % chain.size();
      const std::string fresh = "v" + std::to_string(step);
      switch (rng() % 3) {
        case 0: s = s.split(chain[at], fresh + "o", fresh + "i", 1 + rng() % 4); break;
        case 1:
          if (at + 1 < chain.size()) s = s.fuse(chain[at], chain[at + 1], fresh + "f");
          break;
        default: s = s.pos(chain[at], fresh + "p", b); break;
      }
    }
    CHECK(reconstruct_input_order(s) == order);
  }
}

TEST_CASE("insertion decisions") {
  const auto action = [](const Stmt& s) { return plan_insertion(s, SortPolicy::Coord, 16).action; };
  // Outer product, CSR result: full second-order workspace.
  const auto outer = plan_insertion(stmt_of("A(i,j) = B(i,k) * C(k,j)", "kij", {{"B", formats::csc()}}),
                                    SortPolicy::Coord, 16);
  CHECK(outer.action == InsertAction::FullWorkspace);
  REQUIRE(outer.descriptor);
  CHECK(outer.descriptor->order == 2);
  CHECK(outer.descriptor->ow_order == std::vector<int>{0, 1});

  const auto row = plan_insertion(stmt_of("A(i,j) = B(i,k) * C(k,j)", "ikj"), SortPolicy::Coord, 16);
  CHECK(row.action == InsertAction::DenseWorkspace);
  CHECK(row.hoisted == IndexVars{"i"});
  CHECK(row.result.to_string() == "forall(i) (forall(j) A(i,j) = W(j)) where (forall(k) forall(j) W(j) += B(i,k) * C(k,j))");

  CHECK(action(stmt_of("A(i,j) = B(i,j) * C(i,j)", "ij", {{"A", formats::dense(2)}})) == InsertAction::DenseOutput);
  CHECK(action(stmt_of("A(i,j) = B(i,j) * C(i,j)", "ij")) == InsertAction::ScalarAccumulation);
  CHECK(action(stmt_of("A(j,i) = B(i,j)", "ij")) == InsertAction::SparseWorkspace);
  CHECK(action(stmt_of("A(i,j) = B(i,j) + C(i,j)", "ij")) == InsertAction::UnionWorkspace);
  CHECK(action(stmt_of("A(i,j) = B(i,j)", "ij", {{"A", formats::dcsr()}})) == InsertAction::ConversionWorkspace);
  CHECK(action(stmt_of("A(i,j) = B(k,l,i) * C(k,j) * D(l,j)", "klij")) == InsertAction::FullWorkspace);
  // Two reductions between i and j: i is hoisted, j gets a sparse workspace.
  CHECK(action(stmt_of("A(i,j) = B(i,k,l) * C(k,j) * D(l,j)", "iklj",
                       {{"A", formats::dcsr()}, {"B", formats::csf(3)}, {"C", formats::dcsr()}, {"D", formats::dcsr()}})) ==
        InsertAction::HoistedWorkspace);
}

TEST_CASE("insertion is idempotent") {
  for (const char* order : {"kij", "ikj", "ijk"}) {
    const Stmt once = insert_sparse_workspace(stmt_of("A(i,j) = B(i,k) * C(k,j)", order), SortPolicy::Hash, 4);
    const Stmt twice = insert_sparse_workspace(once, SortPolicy::Hash, 4);
    CHECK(once.to_string() == twice.to_string());
  }
}

TEST_CASE("ow_order satisfies the defining constraint") {
  for (const char* order : {"kij", "kji", "jki", "ijk", "jik", "ikj"}) {
    for (const auto& fmt : {formats::csr(), formats::csc(), formats::dcsr()}) {
      const auto d = plan_insertion(stmt_of("A(j,i) = B(i,k) * C(k,j)", order, {{"A", fmt}}), SortPolicy::Coord, 16);
      if (!d.descriptor) continue;
      const IndexVars out(d.output_order.begin() + static_cast<std::ptrdiff_t>(d.hoisted.size()), d.output_order.end());
      REQUIRE(d.workspace_vars.size() == d.descriptor->ow_order.size());
      for (std::size_t x = 0; x < d.workspace_vars.size(); ++x) {
        CHECK(d.workspace_vars[x] == out[static_cast<std::size_t>(d.descriptor->ow_order[x])]);
      }
    }
  }
}
