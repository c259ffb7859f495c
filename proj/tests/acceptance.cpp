// One PASS/FAIL line per acceptance criterion; exit code 1 if any fails.
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

#include "spws/cli.hpp"
#include "spws/driver.hpp"
#include "spws/error.hpp"
#include "spws/io.hpp"

using namespace spws;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Instance {
  const KernelSpec* kernel = nullptr;
  std::map<std::string, Tensor> inputs;
  std::map<std::string, Coord> extents;
  DenseArray expect;
  /// Insertion stream length of the auto-inserted plan (0 without a workspace).
  std::size_t stream = 0;
  Tensor result;
};

Compiled compile_kernel(const KernelSpec& k, SortPolicy policy, std::size_t capacity) {
  CompileOptions o;
  o.order = k.order;
  o.policy = policy;
  o.capacity = capacity;
  return compile(k.expr, kernel_formats(k), o);
}

std::vector<Instance> make_instances(int per_kernel, std::uint64_t seed) {
  const double densities[] = {0.01, 0.1, 0.5};
  SplitMix64 rng(seed);
  std::vector<Instance> out;
  for (const auto& k : kernel_suite()) {
    const Compiled c = compile_kernel(k, SortPolicy::Coord, 64);
    int order = 0;
    for (const auto& a : accesses(c.parsed.rhs)) order = std::max(order, static_cast<int>(a.vars.size()));
    const Coord max_dim = order >= 3 ? 14 : 64;
    for (int t = 0; t < per_kernel; ++t) {
      Instance inst;
      inst.kernel = &k;
      for (const auto& a : accesses(c.parsed.rhs)) {
        for (const auto& v : a.vars) {
          if (!inst.extents.count(v.name())) inst.extents[v.name()] = static_cast<Coord>(1 + rng.below(max_dim));
        }
      }
      inst.inputs = random_inputs(c.parsed, inst.extents, densities[t % 3], rng.next());
      inst.expect = reference_result(c.parsed, inst.inputs, inst.extents);
      out.push_back(std::move(inst));
    }
  }
  return out;
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

void report(int n, const std::string& name, const Verdict& v, int& failures) {
  std::cout << "criterion " << n << " (" << name << "): " << (v.pass ? "PASS" : "FAIL") << " - " << v.detail << std::endl;
  if (!v.pass) ++failures;
}

template <typename F>
Verdict guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

Verdict oracle_equivalence(std::vector<Instance>& instances) {
  const auto t0 = Clock::now();
  std::size_t bad = 0;
  std::string first;
  std::map<std::string, std::size_t> per_kernel;
  for (auto& inst : instances) {
    const Compiled c = compile_kernel(*inst.kernel, SortPolicy::Coord, 64);
    ExecStats st;
    inst.result = execute(c.plan, inst.inputs, {}, &st);
    inst.stream = st.ism.inserts;
    ++per_kernel[inst.kernel->name];
    if (!(to_dense(inst.result) == inst.expect)) {
      if (bad++ == 0) first = inst.kernel->name;
    }
  }
  const double secs = seconds_since(t0);
  std::size_t fewest = instances.size();
  for (const auto& [k, n] : per_kernel) fewest = std::min(fewest, n);
  std::ostringstream d;
  d << instances.size() << " instances over " << per_kernel.size() << " kernels (min " << fewest << " each), " << bad
    << " mismatches" << (bad ? " (first: " + first + ")" : "") << ", " << secs << " s";
  return {bad == 0 && fewest >= 200 && secs < 60.0, d.str()};
}

Verdict policy_independence(const std::vector<Instance>& instances) {
  std::size_t runs = 0;
  std::size_t bad = 0;
  std::string first;
  for (const auto& inst : instances) {
    const std::size_t n = std::max<std::size_t>(inst.stream, 1);
    for (auto policy : {SortPolicy::Bucket, SortPolicy::Hash, SortPolicy::Coord}) {
      for (std::size_t cap : {std::size_t{1}, std::size_t{2}, std::size_t{7}, std::size_t{64}, n, n + 1}) {
        const Compiled c = compile_kernel(*inst.kernel, policy, cap);
        ++runs;
        if (!(execute(c.plan, inst.inputs) == inst.result)) {
          if (bad++ == 0) first = inst.kernel->name + " " + to_string(policy) + " cap " + std::to_string(cap);
        }
      }
    }
  }
  std::ostringstream d;
  d << runs << " runs (3 policies x capacities {1,2,7,64,N,N+1}), " << bad << " differ from the reference run"
    << (bad ? " (first: " + first + ")" : "");
  return {bad == 0, d.str()};
}

Verdict taxonomy() {
  const std::vector<std::pair<std::string, std::string>> cells{{"elementwise", "appending, order 0"},
                                                               {"transpose-csr", "appending, order 2"},
                                                               {"spgemm-inner", "scattering, order 0"},
                                                               {"spgemm-rowwise", "scattering, order 1"},
                                                               {"spgemm-outer", "scattering, order 2"}};
  std::ostringstream d;
  bool ok = true;
  for (const auto& [name, expect] : cells) {
    RunConfig cfg;
    if (name == "transpose-csr") {
      cfg.expr = "A(j,i) = B(i,j)";
      cfg.order = "ij";
      cfg.formats = {"A=CSR"};
    } else {
      cfg.kernel = name;
    }
    const std::string report = cmd_classify(cfg);
    const bool hit = report.find("classification: " + expect + "\n") != std::string::npos;
    ok &= hit;
    d << name << "=\"" << expect << "\"" << (hit ? "" : " MISSING") << "; ";
  }
  return {ok, d.str()};
}

Verdict reconstruction() {
  const char* schedule = "reorder(i,k,j); fuse(i,k,f); pos(f,fpos,B); split(fpos,f0,f1,4); reorder(f0,f1,j)";
  CompileOptions o;
  o.order = "ikj";
  o.schedule = schedule;
  const Compiled c = compile("A(j,i) = B(i,k) * C(k,j)", {{"A", formats::csr()}}, o);
  const IndexVars input = reconstruct_input_order(c.scheduled);
  const auto cmp = compare_orders(input, c.parsed.lhs.access_order());
  const std::string desc = c.decision.descriptor ? c.decision.descriptor->to_string() : "(none)";
  bool ok = input == parse_index_list("ikj") && cmp.ow_order == std::vector<int>{1, 0} &&
            desc.rfind("SpFormat(2, Coord), {I,J}, {1,0}", 0) == 0;
  std::ostringstream d;
  d << "input_order " << to_string(input) << ", ow_order [" << (cmp.ow_order.size() == 2 ? std::to_string(cmp.ow_order[0]) + "," + std::to_string(cmp.ow_order[1]) : "?")
    << "], descriptor " << desc;

  SplitMix64 rng(2024);
  const IndexVars originals{"i", "j", "k", "l"};
  int inverted = 0;
  int applied = 0;
  const int trials = 1000;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t n = 2 + rng.below(3);
    IndexVars order(originals.begin(), originals.begin() + static_cast<std::ptrdiff_t>(n));
    for (std::size_t x = n; x-- > 1;) std::swap(order[x], order[rng.below(x + 1)]);
    std::string text = "A(" + order[0].name() + ") = B(";
    for (std::size_t x = 0; x < n; ++x) text += (x ? "," : "") + originals[x].name();
    text += ")";
    const auto p = parse_assignment(text, {{"B", formats::csf(static_cast<int>(n))}});
    Stmt s = from_einsum(p.lhs, p.rhs, order);
    const Access b = accesses(p.rhs)[0];
    const auto depth = 1 + rng.below(4);
    for (std::uint64_t step = 0; step < depth; ++step) {
      const IndexVars chain = forall_chain(s);
      const std::size_t at = rng.below(chain.size());
      const std::string fresh = "v" + std::to_string(step);
      try {
        switch (rng.below(3)) {
          case 0: s = s.split(chain[at], fresh + "o", fresh + "i", 1 + rng.below(4)); break;
          case 1:
            if (at + 1 < chain.size()) s = s.fuse(chain[at], chain[at + 1], fresh + "f");
            break;
          default: s = s.pos(chain[at], fresh + "p", b); break;
        }
        ++applied;
      } catch (const Error&) {
        // Illegal combination for this nest; the sequence continues without it.
      }
    }
    if (reconstruct_input_order(s) == order) ++inverted;
  }
  ok &= inverted == trials;
  d << "; random schedules inverted " << inverted << "/" << trials << " (" << applied << " transforms applied)";
  return {ok, d.str()};
}

std::vector<std::string> tokens_in(const std::string& text, const std::vector<std::string>& vocab) {
  std::vector<std::pair<std::size_t, std::string>> found;
  for (const auto& w : vocab) {
    for (std::size_t at = text.find(w); at != std::string::npos; at = text.find(w, at + 1)) found.emplace_back(at, w);
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (const auto& f : found) out.push_back(f.second);
  return out;
}

Verdict plan_shape() {
  const auto& k = find_kernel("spgemm-outer");
  const std::string a = print_plan(compile_kernel(k, SortPolicy::Coord, 1024).plan);
  const std::string b = print_plan(compile_kernel(k, SortPolicy::Coord, 1024).plan);
  const auto toks = tokens_in(a, {"Insert(", "W.Acc.full", "Sort(", "Merge(", "Compress("});
  const std::vector<std::string> expect{"Insert(", "W.Acc.full", "Sort(", "Merge(", "Insert(", "Sort(", "Merge(", "Compress("};
  // The drain and compress must follow the innermost loop's closing brace.
  const auto last_insert = a.rfind("Insert(");
  const auto final_sort = a.find("Sort(", last_insert);
  const auto close_loops = a.find("\n  }\n", last_insert);
  const bool after_loops = close_loops != std::string::npos && final_sort != std::string::npos && close_loops < final_sort;
  std::string seq;
  for (const auto& t : toks) seq += t + " ";
  return {toks == expect && a == b && after_loops,
          "token order: " + seq + (a == b ? "; byte-stable" : "; NOT byte-stable") +
              (after_loops ? "; final drain after loops" : "; final drain misplaced")};
}

Verdict memory() {
  const bool formulas = estimate_memory(WorkspaceKind::Dense, 100000000ULL) == 1300000000ULL &&
                        estimate_memory(WorkspaceKind::Sparse, 1000000ULL) == 12000000ULL &&
                        estimate_memory(WorkspaceKind::Dense, 7) == 91 && estimate_memory(WorkspaceKind::Sparse, 7) == 84;
  SyntheticSpec spec;
  spec.dims = {10000, 10000};
  spec.nnz_per_column = 10;
  spec.column_fraction = 0.1;
  spec.seed = 3;
  const auto pair = synthesize(spec, formats::csc(), formats::csr());
  const Compiled c = compile_kernel(find_kernel("spgemm-outer"), SortPolicy::Bucket, 1 << 16);
  const Tensor out = execute(c.plan, {{"B", pair.b}, {"C", pair.c}});
  const std::uint64_t nnz = stored_nonzeros(out);
  const double ratio = static_cast<double>(estimate_memory(WorkspaceKind::Dense, 10000ULL * 10000ULL)) /
                       static_cast<double>(estimate_memory(WorkspaceKind::Sparse, nnz));
  std::ostringstream d;
  d << "formulas " << (formulas ? "exact" : "WRONG") << "; 10^4 x 10^4 synthetic outer SpGEMM nnz_out " << nnz
    << ", dense/sparse " << ratio << "x";
  return {formulas && ratio >= 100.0 && nnz >= 90000 && nnz <= 110000, d.str()};
}

Verdict operation_counts() {
  const std::size_t n = 100000;
  const Coord side = 1000;
  SplitMix64 rng(77);
  std::vector<std::vector<Coord>> stream(n);
  for (auto& c : stream) c = {static_cast<Coord>(rng.below(side)), static_cast<Coord>(rng.below(side))};
  const auto count = [&](std::size_t cap) {
    IsmOptions o;
    o.policy = SortPolicy::Coord;
    o.capacity = cap;
    o.double_buffer = false;
    SparseWorkspace ws({side, side}, o);
    for (const auto& c : stream) ws.insert(c, 1.0);
    ws.finish();
    return ws.counters().comparisons;
  };
  const auto root = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  const auto c1 = count(1);
  const auto cr = count(root);
  const auto cn = count(n);
  std::ostringstream d;
  d << "comparisons C=1: " << c1 << ", C=" << root << ": " << cr << ", C=N: " << cn;
  return {c1 > cr && cr <= 2 * cn, d.str()};
}

Verdict concurrency(const std::vector<Instance>& instances) {
  std::size_t runs = 0;
  std::size_t bad = 0;
  std::string first;
  for (const auto& inst : instances) {
    const Compiled c = compile_kernel(*inst.kernel, SortPolicy::Coord, 7);
    ExecOptions seq;
    seq.double_buffer = false;
    const Tensor base = execute(c.plan, inst.inputs, seq);
    ExecOptions piped;
    piped.pipelined = true;
    piped.double_buffer = false;
    ExecOptions dbuf;
    dbuf.double_buffer = true;
    for (int rep = 0; rep < 20; ++rep) {
      for (const auto* eo : {&piped, &dbuf}) {
        ++runs;
        if (!(execute(c.plan, inst.inputs, *eo) == base)) {
          if (bad++ == 0) first = inst.kernel->name + (eo->pipelined ? " pipelined" : " double-buffered");
        }
      }
    }
  }
  std::ostringstream d;
  d << runs << " pipelined/double-buffered runs vs sequential, " << bad << " differ" << (bad ? " (first: " + first + ")" : "");
  return {bad == 0, d.str()};
}

Verdict dense_workspace() {
  const auto& k = find_kernel("spgemm-rowwise");
  const Compiled c = compile_kernel(k, SortPolicy::Coord, 64);
  const bool decided = c.decision.action == InsertAction::DenseWorkspace;
  const auto& rhs = c.parsed.rhs;
  const TensorVar w = TensorVar::sparse_ws("W", {2, {"I", "J"}, SortPolicy::Coord, 64, {0, 1}, 0});
  const LoopPlan sparse = lower(c.scheduled.precompute(rhs, {"i", "j"}, {"i", "j"}, w));
  SplitMix64 rng(9);
  int bad = 0;
  const int trials = 60;
  for (int t = 0; t < trials; ++t) {
    std::map<std::string, Coord> ext{{"i", static_cast<Coord>(1 + rng.below(64))},
                                     {"j", static_cast<Coord>(1 + rng.below(64))},
                                     {"k", static_cast<Coord>(1 + rng.below(64))}};
    const auto in = random_inputs(c.parsed, ext, t % 2 ? 0.05 : 0.3, rng.next());
    const Tensor dense_path = execute(c.plan, in);
    const Tensor sparse_path = execute(sparse, in);
    if (!(dense_path == sparse_path) || !(to_dense(dense_path) == reference_result(c.parsed, in, ext))) ++bad;
  }
  std::ostringstream d;
  d << "insertion decision: " << to_string(c.decision.action) << "; " << trials - bad << "/" << trials
    << " instances equal to the sparse-workspace output and the oracle";
  return {decided && bad == 0, d.str()};
}

} // namespace

int main() {
  int failures = 0;
  const auto t0 = Clock::now();
  std::vector<Instance> instances;
  try {
    instances = make_instances(200, 1);
  } catch (const std::exception& e) {
    std::cout << "instance generation failed: " << e.what() << std::endl;
    return 1;
  }
  report(1, "oracle equivalence", guarded([&] { return oracle_equivalence(instances); }), failures);
  report(2, "policy and capacity independence", guarded([&] { return policy_independence(instances); }), failures);
  report(3, "taxonomy goldens", guarded(taxonomy), failures);
  report(4, "order reconstruction", guarded(reconstruction), failures);
  report(5, "plan shape", guarded(plan_shape), failures);
  report(6, "memory estimates", guarded(memory), failures);
  report(7, "operation-count trend", guarded(operation_counts), failures);
  report(8, "concurrency determinism", guarded([&] { return concurrency(instances); }), failures);
  report(9, "dense workspace path", guarded(dense_workspace), failures);
  std::cout << "acceptance: " << 9 - failures << "/9 passed in " << seconds_since(t0) << " s" << std::endl;
  return failures == 0 ? 0 : 1;
}
