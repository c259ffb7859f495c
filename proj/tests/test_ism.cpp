#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <random>

#include "spws/error.hpp"
#include "spws/ism.hpp"

using namespace spws;

namespace {

using Key = std::vector<Coord>;

struct Stream {
  std::vector<Key> crds;
  std::vector<double> vals;
};

Stream random_stream(std::size_t n, std::vector<Coord> dims, unsigned seed) {
  std::mt19937 rng(seed);
  Stream s;
  for (std::size_t e = 0; e < n; ++e) {
    Key k;
    for (auto d : dims) k.push_back(static_cast<Coord>(rng() % d));
    s.crds.push_back(k);
    s.vals.push_back(static_cast<double>(rng() % 7) - 3.0);
  }
  return s;
}

std::map<Key, double> reference(const Stream& s) {
  std::map<Key, double> m;
  for (std::size_t e = 0; e < s.vals.size(); ++e) m[s.crds[e]] += s.vals[e];
  return m;
}

std::map<Key, double> contents(const AllArray& all) {
  std::map<Key, double> m;
  for (std::size_t e = 0; e < all.size(); ++e) {
    Key k;
    for (int l = 0; l < all.order(); ++l) k.push_back(all.crd(l)[e]);
    m[k] = all.vals()[e];
  }
  return m;
}

std::map<Key, double> run(const Stream& s, const std::vector<Coord>& dims, IsmOptions o, IsmCounters* out = nullptr) {
  SparseWorkspace ws(dims, o);
  for (std::size_t e = 0; e < s.vals.size(); ++e) ws.insert(s.crds[e], s.vals[e]);
  ws.finish();
  ws.all().check_sorted_unique();
  if (out) *out = ws.counters();
  return contents(ws.all());
}

} // namespace

TEST_CASE("capacity growth and default hash size") {
  CHECK(grow_capacity(1024) == 2048);
  CHECK(grow_capacity(std::size_t{1} << 20) == (std::size_t{3} << 19));
  CHECK(grow_capacity(std::size_t{1} << 23) == (std::size_t{5} << 21));
  CHECK(hash_default_L(1000) == 1024);
  CHECK(hash_default_L(1024) == 1024);
  CHECK(hash_default_L(1025) == 2048);
  CHECK(hash_default_L(0) == 1);
}

TEST_CASE("bucket policy deduplicates on insert") {
  IsmCounters c;
  AccArray acc({4, 4}, SortPolicy::Bucket, 4);
  CHECK(acc.buckets() == 4);
  const Key a{2, 2};
  CHECK(acc.try_insert(a, 3, c));
  CHECK(acc.try_insert(a, 8, c));
  CHECK(acc.size() == 1);
  CHECK(c.dedups == 1);
  const auto& ids = acc.sort(c);
  REQUIRE(ids.size() == 1);
  CHECK(acc.val(ids[0]) == 11);
}

TEST_CASE("coord policy keeps duplicates until sort") {
  IsmCounters c;
  AccArray acc({4, 4}, SortPolicy::Coord, 8);
  for (const auto& [k, v] : std::vector<std::pair<Key, double>>{{{2, 2}, 3}, {{0, 3}, 1}, {{2, 2}, 8}, {{0, 1}, 5}}) {
    acc.insert(k, v, c);
  }
  CHECK(acc.size() == 4);
  CHECK(c.dedups == 0);
  const auto& ids = acc.sort(c);
  REQUIRE(ids.size() == 3);
  CHECK(acc.crd(0, ids[0]) == 0);
  CHECK(acc.crd(1, ids[0]) == 1);
  CHECK(acc.crd(1, ids[1]) == 3);
  CHECK(acc.val(ids[2]) == 11);
  CHECK(c.dedups == 1);
}

TEST_CASE("hash policy sorts across buckets") {
  IsmCounters c;
  AccArray acc({8, 8}, SortPolicy::Hash, 16, 3);
  for (const Key& k : std::vector<Key>{{7, 1}, {0, 5}, {3, 3}, {0, 2}, {7, 0}}) acc.insert(k, 1, c);
  const auto& ids = acc.sort(c);
  std::vector<Key> got;
  for (auto id : ids) got.push_back({acc.crd(0, id), acc.crd(1, id)});
  CHECK(got == std::vector<Key>{{0, 2}, {0, 5}, {3, 3}, {7, 0}, {7, 1}});
}

TEST_CASE("full arrays reject new slots but still absorb duplicates") {
  IsmCounters c;
  AccArray bucket({4}, SortPolicy::Bucket, 1);
  CHECK(bucket.try_insert(Key{1}, 1, c));
  CHECK(bucket.try_insert(Key{1}, 1, c));
  CHECK_FALSE(bucket.try_insert(Key{2}, 1, c));
  CHECK_THROWS_AS(bucket.insert(Key{2}, 1, c), Error);
  AccArray coord({4}, SortPolicy::Coord, 1);
  CHECK(coord.try_insert(Key{1}, 1, c));
  CHECK_FALSE(coord.try_insert(Key{1}, 1, c));
  CHECK_THROWS_AS(coord.try_insert(Key{4}, 1, c), Error);
  CHECK_THROWS_AS(AccArray({4}, SortPolicy::Coord, 0), Error);
}

TEST_CASE("merge sums equal coordinates") {
  for (bool db : {true, false}) {
    IsmCounters c;
    AllArray all(2, db);
    AccArray acc({4, 4}, SortPolicy::Coord, 8);
    acc.insert(Key{1, 1}, 1, c);
    acc.insert(Key{0, 2}, 2, c);
    acc.sort(c);
    all.merge(acc, c);
    CHECK(acc.empty());
    acc.insert(Key{1, 1}, 10, c);
    acc.insert(Key{3, 0}, 4, c);
    acc.sort(c);
    all.merge(acc, c);
    CHECK(contents(all) == std::map<Key, double>{{{0, 2}, 2}, {{1, 1}, 11}, {{3, 0}, 4}});
    CHECK(c.merges == 2);
    all.check_sorted_unique();
    // An empty accumulation array leaves the all array and merge count alone.
    acc.sort(c);
    all.merge(acc, c);
    CHECK(c.merges == 2);
    CHECK(all.size() == 3);
  }
}

TEST_CASE("results are independent of policy, capacity and buffering") {
  const std::vector<Coord> dims{16, 8, 4};
  const std::size_t n = 600;
  const Stream s = random_stream(n, dims, 3);
  const auto expect = reference(s);
  for (auto policy : {SortPolicy::Bucket, SortPolicy::Hash, SortPolicy::Coord}) {
    for (std::size_t cap : {std::size_t{1}, std::size_t{2}, std::size_t{7}, std::size_t{64}, n, n + 1}) {
      for (bool db : {true, false}) {
        for (bool pipe : {false, true}) {
          for (bool grow : {false, true}) {
            IsmOptions o;
            o.policy = policy;
            o.capacity = cap;
            o.double_buffer = db;
            o.pipelined = pipe;
            o.grow = grow;
            CAPTURE(to_string(policy));
            CAPTURE(cap);
            CHECK(run(s, dims, o) == expect);
          }
        }
      }
    }
  }
}

TEST_CASE("drain counts and growth") {
  const std::vector<Coord> dims{1000};
  Stream s;
  for (Coord x = 0; x < 100; ++x) {
    s.crds.push_back({x});
    s.vals.push_back(1);
  }
  IsmOptions o;
  o.capacity = 10;
  IsmCounters c;
  run(s, dims, o, &c);
  CHECK(c.merges == 10);
  CHECK(c.inserts == 100);
  o.grow = true;
  SparseWorkspace ws(dims, o);
  for (std::size_t e = 0; e < s.vals.size(); ++e) ws.insert(s.crds[e], s.vals[e]);
  ws.finish();
  // 10 + 20 + 40 + 30 remaining.
  CHECK(ws.drains() == 4);
  CHECK(ws.all().size() == 100);
}

TEST_CASE("counters agree between sequential and pipelined runs") {
  const std::vector<Coord> dims{32, 32};
  const Stream s = random_stream(2000, dims, 9);
  for (auto policy : {SortPolicy::Bucket, SortPolicy::Hash, SortPolicy::Coord}) {
    IsmOptions o;
    o.policy = policy;
    o.capacity = 100;
    IsmCounters seq;
    IsmCounters pipe;
    run(s, dims, o, &seq);
    o.pipelined = true;
    run(s, dims, o, &pipe);
    CHECK(seq.inserts == pipe.inserts);
    CHECK(seq.dedups == pipe.dedups);
    CHECK(seq.merges == pipe.merges);
    CHECK(seq.comparisons == pipe.comparisons);
    CHECK(seq.peak_bytes > 0);
    CHECK(pipe.peak_bytes > 0);
  }
}

TEST_CASE("tiny capacities pay for repeated merges") {
  const std::vector<Coord> dims{64, 64};
  const Stream s = random_stream(20000, dims, 5);
  std::uint64_t prev = 0;
  for (std::size_t cap : {std::size_t{1000}, std::size_t{50}, std::size_t{5}}) {
    IsmOptions o;
    o.capacity = cap;
    IsmCounters c;
    run(s, dims, o, &c);
    CHECK(c.comparisons > prev);
    prev = c.comparisons;
  }
}

TEST_CASE("drain_and_compress builds the target format") {
  // Workspace storage order (j, i) feeding a CSC result.
  SparseWorkspace ws({3, 2}, IsmOptions{});
  ws.insert(Key{2, 0}, 5);
  ws.insert(Key{0, 1}, 1);
  ws.insert(Key{2, 0}, 1);
  const Tensor t = ws.drain_and_compress(formats::csc(), {2, 3});
  t.check_invariants();
  const auto comps = t.components();
  REQUIRE(comps.size() == 2);
  CHECK(comps[0] == Component{{1, 0}, 1});
  CHECK(comps[1] == Component{{0, 2}, 6});
  SparseWorkspace bad({3, 2}, IsmOptions{});
  CHECK_THROWS_AS(bad.drain_and_compress(formats::csr(), {2, 3}), Error);
}

TEST_CASE("reset starts a fresh round") {
  IsmOptions o;
  o.capacity = 2;
  o.pipelined = true;
  SparseWorkspace ws({4}, o);
  ws.insert(Key{1}, 1);
  ws.insert(Key{2}, 1);
  ws.insert(Key{3}, 1);
  ws.finish();
  CHECK(ws.all().size() == 3);
  ws.reset();
  CHECK(ws.all().size() == 0);
  ws.insert(Key{0}, 2);
  ws.finish();
  CHECK(contents(ws.all()) == std::map<Key, double>{{{0}, 2}});
}
