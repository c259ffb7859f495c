#include "spws/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "spws/error.hpp"

namespace spws {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur.erase(0, cur.find_first_not_of(" \t"));
    cur.erase(cur.find_last_not_of(" \t") + 1);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::pair<std::string, std::string> key_value(const std::string& item, const char* what) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(std::string(what) + " entry '" + item + "' must look like key=value");
  return {item.substr(0, eq), item.substr(eq + 1)};
}

std::uint64_t to_uint(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error("'" + key + "' needs a nonnegative integer, got '" + v + "'");
  }
}

std::string read_script(const std::string& s) {
  if (s.empty() || s[0] != '@') return s;
  std::ifstream in(s.substr(1));
  if (!in) throw Error("cannot open schedule file " + s.substr(1));
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

std::string dims_text(const std::vector<Coord>& dims) {
  std::string s;
  for (auto d : dims) s += (s.empty() ? "" : "x") + std::to_string(d);
  return s;
}

Compiled compile_config(const RunConfig& cfg, SortPolicy policy, std::size_t capacity) {
  CompileOptions o;
  o.order = cfg.loop_order();
  o.schedule = read_script(cfg.schedule);
  o.policy = policy;
  o.capacity = capacity;
  o.auto_insert = cfg.auto_insert;
  const std::string expr = cfg.expression();
  return compile(expr, parse_format_overrides(expr, cfg.format_specs()), o);
}

struct Measured {
  Tensor out;
  ExecStats stats;
  std::uint64_t mean_ns = 0;
};

Measured measure(const LoopPlan& plan, const std::map<std::string, Tensor>& in, const ExecOptions& eo, int warmups,
                 int reps, BenchReport& report) {
  Measured m;
  for (int w = 0; w < warmups; ++w) {
    execute(plan, in, eo);
    ++report.executions;
  }
  std::uint64_t total = 0;
  for (int r = 0; r < reps; ++r) {
    ExecStats st;
    const auto t0 = std::chrono::steady_clock::now();
    Tensor out = execute(plan, in, eo, &st);
    const auto t1 = std::chrono::steady_clock::now();
    total += static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
    ++report.executions;
    ++report.timed;
    m.out = std::move(out);
    m.stats = st;
  }
  m.mean_ns = total / static_cast<std::uint64_t>(reps);
  return m;
}

std::string mode_of(const ExecOptions& eo) {
  std::string m = eo.pipelined ? "pipe" : "seq";
  if (eo.double_buffer) m += "+db";
  if (eo.grow) m += "+grow";
  return m;
}

BenchRow make_row(const RunConfig& cfg, const std::map<std::string, Tensor>& in, const Measured& m,
                  SortPolicy policy, std::size_t capacity, const ExecOptions& eo) {
  BenchRow r;
  r.kernel = cfg.kernel.empty() ? "custom" : cfg.kernel;
  r.policy = to_string(policy);
  r.capacity = capacity;
  r.dims = dims_text(m.out.dims());
  for (const auto& [name, t] : in) r.nnz_in += stored_nonzeros(t);
  r.nnz_out = stored_nonzeros(m.out);
  r.time_ns = m.mean_ns;
  r.peak_bytes = m.stats.ism.peak_bytes;
  r.comparisons = m.stats.ism.comparisons;
  r.dedups = m.stats.ism.dedups;
  std::uint64_t shape = 1;
  for (auto d : m.out.dims()) shape *= d;
  r.est_dense_bytes = estimate_memory(WorkspaceKind::Dense, shape);
  r.est_sparse_bytes = estimate_memory(WorkspaceKind::Sparse, r.nnz_out, eo.double_buffer);
  r.mode = mode_of(eo);
  return r;
}

ExecOptions exec_options(const RunConfig& cfg) {
  ExecOptions eo;
  eo.pipelined = cfg.pipelined;
  eo.double_buffer = cfg.double_buffer;
  eo.grow = cfg.grow;
  return eo;
}

bool verified(const Compiled& c, const std::map<std::string, Tensor>& in, const Tensor& out) {
  std::map<std::string, Coord> ext = extents_of(c.parsed, in);
  for (std::size_t m = 0; m < c.parsed.lhs.vars.size(); ++m) ext.emplace(c.parsed.lhs.vars[m].name(), out.dim(static_cast<int>(m)));
  return to_dense(out) == reference_result(c.parsed, in, ext);
}

} // namespace

void RunConfig::validate() const {
  if (kernel.empty() && expr.empty()) throw Error("give --kernel or --expr");
  if (warmups < 0) throw Error("warmups must be >= 0");
  if (repetitions < 1) throw Error("repetitions must be >= 1");
  if (policies.empty()) throw Error("at least one policy is required");
  if (capacities.empty()) throw Error("at least one capacity is required");
  for (auto c : capacities) {
    if (c == 0) throw Error("capacity must be positive");
  }
  if (!(density >= 0.0 && density <= 1.0)) throw Error("density must be in [0, 1]");
}

std::string RunConfig::expression() const { return expr.empty() ? find_kernel(kernel).expr : expr; }

std::string RunConfig::loop_order() const {
  if (!order.empty() || !expr.empty()) return order;
  return find_kernel(kernel).order;
}

std::vector<std::string> RunConfig::format_specs() const {
  std::vector<std::string> specs;
  if (expr.empty() && !kernel.empty()) {
    for (const auto& [t, f] : find_kernel(kernel).formats) specs.push_back(t + "=" + f);
  }
  specs.insert(specs.end(), formats.begin(), formats.end());
  return specs;
}

SyntheticSpec parse_synthetic(const std::string& text, std::uint64_t seed) {
  SyntheticSpec s;
  s.seed = seed;
  s.dims = {0, 0};
  for (const auto& item : split(text, ',')) {
    const auto [k, v] = key_value(item, "synthetic");
    if (k == "I") {
      s.dims[0] = static_cast<Coord>(to_uint(v, k));
    } else if (k == "K") {
      s.dims[1] = static_cast<Coord>(to_uint(v, k));
    } else if (k == "nnz") {
      s.nnz_per_column = static_cast<std::size_t>(to_uint(v, k));
    } else if (k == "frac") {
      try {
        s.column_fraction = std::stod(v);
      } catch (const std::exception&) {
        throw Error("'frac' needs a number, got '" + v + "'");
      }
    } else if (k == "shift") {
      s.shift = to_uint(v, k) != 0;
    } else if (k == "seed") {
      s.seed = to_uint(v, k);
    } else {
      throw Error("unknown synthetic key '" + k + "' (I, K, nnz, frac, shift, seed)");
    }
  }
  s.validate();
  return s;
}

std::map<std::string, Tensor> load_inputs(const RunConfig& cfg, const ParsedAssignment& p) {
  std::map<std::string, Format> fmt;
  std::vector<Access> operands;
  for (const auto& a : accesses(p.rhs)) {
    if (fmt.emplace(a.tensor.name, a.tensor.format).second) operands.push_back(a);
  }
  std::map<std::string, Tensor> in;
  for (const auto& item : cfg.inputs) {
    const auto [name, path] = key_value(item, "input");
    const auto it = fmt.find(name);
    if (it == fmt.end()) throw Error("input names unknown operand " + name);
    in.emplace(name, read_tensor_file(path, it->second));
  }
  if (!cfg.synthetic.empty()) {
    if (operands.size() < 2 || operands[0].vars.size() != 2 || operands[1].vars.size() != 2) {
      throw Error("synthetic inputs need two matrix operands");
    }
    const auto pair = synthesize(parse_synthetic(cfg.synthetic, cfg.seed), operands[0].tensor.format,
                                 operands[1].tensor.format);
    in.insert_or_assign(operands[0].tensor.name, pair.b);
    in.insert_or_assign(operands[1].tensor.name, pair.c);
  }
  std::map<std::string, Coord> ext;
  for (const auto& a : operands) {
    const auto it = in.find(a.tensor.name);
    if (it == in.end()) continue;
    for (std::size_t m = 0; m < a.vars.size() && m < it->second.dims().size(); ++m) {
      ext.emplace(a.vars[m].name(), it->second.dims()[m]);
    }
  }
  for (const auto& item : split(cfg.dims, ',')) {
    const auto [k, v] = key_value(item, "dims");
    ext.insert_or_assign(k, static_cast<Coord>(to_uint(v, k)));
  }
  for (const auto& a : operands) {
    for (const auto& v : a.vars) ext.emplace(v.name(), cfg.size);
  }
  std::uint64_t stream = 0;
  for (const auto& a : operands) {
    ++stream;
    if (in.count(a.tensor.name)) continue;
    std::vector<Coord> dims;
    for (const auto& v : a.vars) dims.push_back(ext.at(v.name()));
    const double d = a.tensor.format.all_dense() ? 1.0 : cfg.density;
    in.emplace(a.tensor.name, random_tensor(dims, d, cfg.seed * 1000003 + stream, a.tensor.format));
  }
  return in;
}

std::string cmd_classify(const RunConfig& cfg) {
  const Compiled c = compile_config(cfg, cfg.policies.front(), cfg.capacities.front());
  return classify_report(c.scheduled, cfg.policies.front(), cfg.capacities.front());
}

std::string cmd_explain(const RunConfig& cfg) {
  const Compiled c = compile_config(cfg, cfg.policies.front(), cfg.capacities.front());
  std::string out;
  if (cfg.auto_insert) out += "insertion: " + to_string(c.decision.action) + "\n";
  return out + print_plan(c.plan);
}

BenchReport cmd_bench(const RunConfig& cfg) {
  cfg.validate();
  BenchReport report;
  const ExecOptions eo = exec_options(cfg);
  std::map<std::string, Tensor> in;
  for (auto policy : cfg.policies) {
    for (auto cap : cfg.capacities) {
      const Compiled c = compile_config(cfg, policy, cap);
      if (in.empty()) in = load_inputs(cfg, c.parsed);
      const Measured m = measure(c.plan, in, eo, cfg.warmups, cfg.repetitions, report);
      if (cfg.verify && !verified(c, in, m.out)) ++report.verify_failures;
      report.rows.push_back(make_row(cfg, in, m, policy, cap, eo));
    }
  }
  return report;
}

BenchReport cmd_ablation(const RunConfig& cfg) {
  cfg.validate();
  BenchReport report;
  const Compiled probe = compile_config(cfg, SortPolicy::Coord, 1024);
  const std::map<std::string, Tensor> in = load_inputs(cfg, probe.parsed);
  ExecStats st;
  const Tensor expect = execute(probe.plan, in, {}, &st);
  const std::size_t n = st.ism.inserts;
  if (n == 0) throw Error("ablation needs a sparse workspace; the compiled kernel inserts nothing");
  if (cfg.verify && !verified(probe, in, expect)) ++report.verify_failures;
  std::vector<std::size_t> caps;
  for (std::size_t c = 1; c < n; c *= 2) caps.push_back(c);
  caps.push_back(n);
  for (auto policy : cfg.policies) {
    for (auto cap : caps) {
      const Compiled c = compile_config(cfg, policy, cap);
      for (bool pipe : {false, true}) {
        for (bool db : {false, true}) {
          ExecOptions eo;
          eo.pipelined = pipe;
          eo.double_buffer = db;
          eo.grow = cfg.grow;
          const Measured m = measure(c.plan, in, eo, cfg.warmups, cfg.repetitions, report);
          if (!(m.out == expect)) {
            throw Error("ablation: " + to_string(policy) + " cap " + std::to_string(cap) + " " + mode_of(eo) +
                        " changed the result");
          }
          BenchRow r = make_row(cfg, in, m, policy, cap, eo);
          r.label = cap == 1 ? "map-extreme" : cap == n ? "vector-extreme" : "batched";
          report.rows.push_back(std::move(r));
        }
      }
    }
  }
  for (const auto& r : report.rows) {
    if (r.nnz_out != report.rows.front().nnz_out) throw Error("ablation: rows disagree on nnz_out");
  }
  return report;
}

namespace {

void add_common(CLI::App* app, RunConfig& cfg, std::vector<std::string>& policies, std::vector<std::size_t>& caps) {
  app->add_option("--kernel", cfg.kernel, "suite kernel name");
  app->add_option("--expr", cfg.expr, "tensor index expression, e.g. \"A(i,j) = B(i,k) * C(k,j)\"");
  app->add_option("--order", cfg.order, "loop order, e.g. kij");
  app->add_option("--schedule", cfg.schedule, "schedule script, or @file");
  app->add_option("--format", cfg.formats, "format override T=CSR (repeatable)");
  app->add_option("--policy", policies, "bucket, hash or coord (repeatable or comma separated)")->delimiter(',');
  app->add_option("--cap", caps, "accumulation array capacity (repeatable or comma separated)")->delimiter(',');
  app->add_flag("--no-insert", [&cfg](std::int64_t) { cfg.auto_insert = false; }, "skip automatic workspace insertion");
}

void add_run(CLI::App* app, RunConfig& cfg) {
  app->add_flag("--pipeline", cfg.pipelined, "sort and merge on a background worker");
  app->add_flag("--double-buffer", cfg.double_buffer, "double-buffered all array");
  app->add_flag("--grow", cfg.grow, "grow the accumulation capacity after each drain");
  app->add_option("--input", cfg.inputs, "operand file T=path.mtx|path.tns (repeatable)");
  app->add_option("--synthetic", cfg.synthetic, "I=..,K=..,nnz=..,frac=..[,shift=0|1] for the two matrix operands");
  app->add_option("--dims", cfg.dims, "index extents, e.g. i=16,j=16,k=32");
  app->add_option("--size", cfg.size, "extent of unlisted indices");
  app->add_option("--density", cfg.density, "density of random operands");
  app->add_option("--seed", cfg.seed, "random seed");
  app->add_flag("--verify", cfg.verify, "compare against the dense oracle");
}

void apply_lists(RunConfig& cfg, const std::vector<std::string>& policies, const std::vector<std::size_t>& caps,
                 bool all_policies_default) {
  if (!policies.empty()) {
    cfg.policies.clear();
    for (const auto& p : policies) cfg.policies.push_back(parse_policy(p));
  } else if (all_policies_default) {
    cfg.policies = {SortPolicy::Bucket, SortPolicy::Hash, SortPolicy::Coord};
  }
  if (!caps.empty()) cfg.capacities = caps;
}

void emit_csv(const BenchReport& r, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    write_bench_csv(out, r.rows);
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  write_bench_csv(f, r.rows);
  out << "wrote " << r.rows.size() << " rows to " << path << "\n";
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse workspace compiler: classify, explain, run and benchmark tensor expressions"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::vector<std::string> policies;
  std::vector<std::size_t> caps;
  std::string csv;
  std::string output;

  auto* classify = app.add_subcommand("classify", "report loop/access orders, p1, p2, ordering and insertion");
  add_common(classify, cfg, policies, caps);
  auto* explain = app.add_subcommand("explain", "print the lowered loop plan");
  add_common(explain, cfg, policies, caps);
  auto* run = app.add_subcommand("run", "execute once and summarize the result");
  add_common(run, cfg, policies, caps);
  add_run(run, cfg);
  run->add_option("--output", output, "write the result as .mtx or .tns");
  auto* bench = app.add_subcommand("bench", "timed runs per policy and capacity, as CSV");
  add_common(bench, cfg, policies, caps);
  add_run(bench, cfg);
  bench->add_option("--reps", cfg.repetitions, "timed repetitions");
  bench->add_option("--warmups", cfg.warmups, "untimed warmup runs");
  bench->add_option("--csv", csv, "CSV output path (default stdout)");
  auto* ablation = app.add_subcommand("ablation", "capacity, policy and buffering sweep, as CSV");
  add_common(ablation, cfg, policies, caps);
  add_run(ablation, cfg);
  ablation->add_option("--reps", cfg.repetitions, "timed repetitions")->default_val(1);
  ablation->add_option("--warmups", cfg.warmups, "untimed warmup runs")->default_val(0);
  ablation->add_option("--csv", csv, "CSV output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    apply_lists(cfg, policies, caps, ablation->parsed());
    cfg.validate();
    if (classify->parsed()) {
      out << cmd_classify(cfg);
    } else if (explain->parsed()) {
      out << cmd_explain(cfg);
    } else if (run->parsed()) {
      const Compiled c = compile_config(cfg, cfg.policies.front(), cfg.capacities.front());
      const auto in = load_inputs(cfg, c.parsed);
      ExecStats st;
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor result = execute(c.plan, in, exec_options(cfg), &st);
      const auto t1 = std::chrono::steady_clock::now();
      out << "expression: " << cfg.expression() << "\n";
      if (cfg.auto_insert) out << "insertion:  " << to_string(c.decision.action) << "\n";
      for (const auto& [name, t] : in) out << "input " << name << ": " << dims_text(t.dims()) << ", nnz " << stored_nonzeros(t) << "\n";
      out << "result " << c.parsed.lhs.tensor.name << ": " << dims_text(result.dims()) << ", nnz "
          << stored_nonzeros(result) << "\n";
      out << "time_ns: " << std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count() << "\n";
      out << "ism: inserts " << st.ism.inserts << ", dedups " << st.ism.dedups << ", comparisons " << st.ism.comparisons
          << ", merges " << st.ism.merges << ", drains " << st.drains << ", peak_bytes " << st.ism.peak_bytes << "\n";
      if (!output.empty()) {
        if (output.size() > 4 && output.substr(output.size() - 4) == ".mtx") {
          write_matrix_market(output, result);
        } else {
          write_frostt(output, result);
        }
      }
      if (cfg.verify) {
        const bool ok = verified(c, in, result);
        out << "verify: " << (ok ? "ok" : "MISMATCH") << "\n";
        if (!ok) return 2;
      }
    } else {
      const BenchReport r = bench->parsed() ? cmd_bench(cfg) : cmd_ablation(cfg);
      emit_csv(r, csv, out);
      if (r.verify_failures > 0) {
        err << "verify: " << r.verify_failures << " row(s) disagree with the oracle\n";
        return 2;
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

} // namespace spws
