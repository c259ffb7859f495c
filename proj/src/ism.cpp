#include "spws/ism.hpp"

#include <algorithm>
#include <bit>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "spws/error.hpp"

namespace spws {

namespace {

constexpr std::uint32_t kNone = 0xffffffffu;

} // namespace

IsmCounters& IsmCounters::operator+=(const IsmCounters& o) {
  inserts += o.inserts;
  dedups += o.dedups;
  merges += o.merges;
  comparisons += o.comparisons;
  peak_bytes = std::max(peak_bytes, o.peak_bytes);
  return *this;
}

std::size_t grow_capacity(std::size_t capacity) {
  if (capacity == 0) return 1;
  if (capacity < (std::size_t{1} << 16)) return capacity * 2;
  if (capacity < (std::size_t{1} << 22)) return capacity + capacity / 2;
  return capacity + capacity / 4;
}

std::size_t hash_default_L(std::size_t nnz) {
  std::size_t L = 1;
  while (L < nnz) L <<= 1;
  return L;
}

AccArray::AccArray(std::vector<Coord> dims, SortPolicy policy, std::size_t capacity, std::size_t hash_buckets)
    : dims_(std::move(dims)), policy_(policy), capacity_(capacity) {
  if (dims_.empty()) throw Error("AccArray: a workspace needs at least one mode");
  if (capacity_ == 0) throw Error("AccArray: capacity must be positive");
  if (capacity_ >= kNone) throw Error("AccArray: capacity exceeds the 32-bit id range");
  crds_.resize(dims_.size());
  const std::size_t hint = std::min<std::size_t>(capacity_, std::size_t{1} << 20);
  for (auto& c : crds_) c.reserve(hint);
  vals_.reserve(hint);
  switch (policy_) {
    case SortPolicy::Bucket: buckets_ = std::max<std::size_t>(dims_[0], 1); break;
    case SortPolicy::Hash: buckets_ = hash_buckets ? hash_buckets : hash_default_L(capacity_); break;
    case SortPolicy::Coord: buckets_ = 0; break;
  }
  head_.assign(buckets_, kNone);
  tail_.assign(buckets_, kNone);
}

std::size_t AccArray::bucket_of(std::span<const Coord> crds) const {
  if (policy_ == SortPolicy::Bucket) return crds[0];
  std::uint64_t linear = 0;
  for (std::size_t m = 0; m < dims_.size(); ++m) linear = linear * dims_[m] + crds[m];
  return static_cast<std::size_t>(linear % buckets_);
}

bool AccArray::equal(std::uint32_t id, std::span<const Coord> crds) const {
  for (std::size_t m = 0; m < crds_.size(); ++m) {
    if (crds_[m][id] != crds[m]) return false;
  }
  return true;
}

bool AccArray::less(std::uint32_t a, std::uint32_t b) const {
  for (const auto& c : crds_) {
    if (c[a] != c[b]) return c[a] < c[b];
  }
  return false;
}

bool AccArray::try_insert(std::span<const Coord> crds, double val, IsmCounters& counters) {
  if (crds.size() != dims_.size()) throw Error("AccArray: coordinate arity mismatch");
  for (std::size_t m = 0; m < crds.size(); ++m) {
    if (crds[m] >= dims_[m]) throw Error("AccArray: coordinate out of bounds");
  }
  std::size_t b = 0;
  if (policy_ != SortPolicy::Coord) {
    b = bucket_of(crds);
    for (std::uint32_t id = head_[b]; id != kNone; id = next_[id]) {
      ++counters.comparisons;
      if (equal(id, crds)) {
        vals_[id] += val;
        ++counters.dedups;
        ++counters.inserts;
        return true;
      }
    }
  }
  if (full()) return false;
  const auto id = static_cast<std::uint32_t>(vals_.size());
  for (std::size_t m = 0; m < crds.size(); ++m) crds_[m].push_back(crds[m]);
  vals_.push_back(val);
  if (policy_ != SortPolicy::Coord) {
    next_.push_back(kNone);
    if (head_[b] == kNone) {
      head_[b] = id;
      touched_.push_back(static_cast<std::uint32_t>(b));
    } else {
      next_[tail_[b]] = id;
    }
    tail_[b] = id;
  }
  ++counters.inserts;
  return true;
}

void AccArray::insert(std::span<const Coord> crds, double val, IsmCounters& counters) {
  if (!try_insert(crds, val, counters)) throw Error("AccArray: insert into a full accumulation array");
}

const std::vector<std::uint32_t>& AccArray::sort(IsmCounters& counters) {
  sorted_.clear();
  std::uint64_t& cmp = counters.comparisons;
  const auto counted_less = [&](std::uint32_t a, std::uint32_t b) {
    ++cmp;
    return less(a, b);
  };
  switch (policy_) {
    case SortPolicy::Bucket: {
      // Buckets are already ordered on the first coordinate.
      std::sort(touched_.begin(), touched_.end());
      for (auto b : touched_) {
        const std::size_t start = sorted_.size();
        for (std::uint32_t id = head_[b]; id != kNone; id = next_[id]) sorted_.push_back(id);
        std::sort(sorted_.begin() + static_cast<std::ptrdiff_t>(start), sorted_.end(), counted_less);
      }
      break;
    }
    case SortPolicy::Hash: {
      for (auto b : touched_) {
        for (std::uint32_t id = head_[b]; id != kNone; id = next_[id]) sorted_.push_back(id);
      }
      std::sort(sorted_.begin(), sorted_.end(), counted_less);
      break;
    }
    case SortPolicy::Coord: {
      sorted_.resize(vals_.size());
      std::iota(sorted_.begin(), sorted_.end(), 0u);
      // Ties keep stream order, so duplicates are summed in insertion order.
      std::sort(sorted_.begin(), sorted_.end(), [&](std::uint32_t a, std::uint32_t b) {
        ++cmp;
        for (const auto& c : crds_) {
          if (c[a] != c[b]) return c[a] < c[b];
        }
        return a < b;
      });
      std::size_t w = 0;
      for (std::size_t r = 0; r < sorted_.size(); ++r) {
        if (w > 0) {
          ++cmp;
          if (!less(sorted_[w - 1], sorted_[r])) {
            vals_[sorted_[w - 1]] += vals_[sorted_[r]];
            ++counters.dedups;
            continue;
          }
        }
        sorted_[w++] = sorted_[r];
      }
      sorted_.resize(w);
      break;
    }
  }
  return sorted_;
}

void AccArray::clear() {
  for (auto& c : crds_) c.clear();
  vals_.clear();
  sorted_.clear();
  for (auto b : touched_) {
    head_[b] = kNone;
    tail_[b] = kNone;
  }
  touched_.clear();
  next_.clear();
}

void AccArray::set_capacity(std::size_t capacity) {
  if (!empty()) throw Error("AccArray: capacity can only change while empty");
  if (capacity == 0 || capacity >= kNone) throw Error("AccArray: invalid capacity");
  capacity_ = capacity;
}

std::size_t AccArray::bytes() const {
  // Components, sorted ids, and bucket heads/tails plus chain links.
  std::size_t b = capacity_ * (dims_.size() * sizeof(Coord) + sizeof(double) + sizeof(std::uint32_t));
  if (policy_ != SortPolicy::Coord) b += buckets_ * 2 * sizeof(std::uint32_t) + capacity_ * sizeof(std::uint32_t);
  return b;
}

AllArray::AllArray(int order, bool double_buffer) : order_(order), double_buffer_(double_buffer) {
  for (auto& b : buffers_) b.crds.resize(static_cast<std::size_t>(order));
}

void AllArray::merge(AccArray& acc, IsmCounters& counters) {
  if (acc.order() != order_) throw Error("AllArray: order mismatch in merge");
  const auto& ids = acc.sorted_ids();
  if (ids.empty()) {
    acc.clear();
    return;
  }
  Buffer& src = buffers_[active_];
  const std::size_t n = src.vals.size();
  const std::size_t m = ids.size();
  const auto cmp = [&](std::size_t e, std::uint32_t id) {
    ++counters.comparisons;
    for (std::size_t l = 0; l < src.crds.size(); ++l) {
      const Coord x = src.crds[l][e];
      const Coord y = acc.crd(static_cast<int>(l), id);
      if (x != y) return x < y ? -1 : 1;
    }
    return 0;
  };

  // Locate every accumulated component: galloping search when the batch is
  // small relative to the all array, a linear scan otherwise.
  const bool gallop = 2 * m * (std::bit_width(n / m + 1) + 1) < n + m;
  pos_.resize(m);
  equal_.assign(m, 0);
  std::size_t cursor = 0;
  std::size_t fresh = 0;
  for (std::size_t a = 0; a < m; ++a) {
    std::size_t lo = cursor;
    std::size_t hi = n;
    std::size_t hit = n;
    if (gallop) {
      for (std::size_t step = 1; lo + step - 1 < n; step *= 2) {
        const std::size_t probe = lo + step - 1;
        const int c = cmp(probe, ids[a]);
        if (c >= 0) {
          hi = probe;
          if (c == 0) hit = probe;
          break;
        }
        lo = probe + 1;
      }
      while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        const int c = cmp(mid, ids[a]);
        if (c < 0) {
          lo = mid + 1;
        } else {
          hi = mid;
          if (c == 0) hit = mid;
        }
      }
    } else {
      while (lo < n) {
        const int c = cmp(lo, ids[a]);
        if (c > 0) break;
        if (c == 0) {
          hit = lo;
          break;
        }
        ++lo;
      }
    }
    pos_[a] = lo;
    if (hit == lo && lo < n) {
      equal_[a] = 1;
      ++counters.dedups;
      cursor = lo + 1;
    } else {
      ++fresh;
      cursor = lo;
    }
  }

  const auto put_acc = [&](Buffer& b, std::size_t at, std::uint32_t id) {
    for (std::size_t l = 0; l < b.crds.size(); ++l) b.crds[l][at] = acc.crd(static_cast<int>(l), id);
    b.vals[at] = acc.val(id);
  };
  if (double_buffer_) {
    Buffer& dst = buffers_[active_ ^ 1];
    dst.crds.resize(static_cast<std::size_t>(order_));
    for (auto& c : dst.crds) c.resize(n + fresh);
    dst.vals.resize(n + fresh);
    std::size_t r = 0;
    std::size_t w = 0;
    const auto copy_run = [&](std::size_t to) {
      for (std::size_t l = 0; l < dst.crds.size(); ++l) {
        std::copy(src.crds[l].begin() + static_cast<std::ptrdiff_t>(r), src.crds[l].begin() + static_cast<std::ptrdiff_t>(to),
                  dst.crds[l].begin() + static_cast<std::ptrdiff_t>(w));
      }
      std::copy(src.vals.begin() + static_cast<std::ptrdiff_t>(r), src.vals.begin() + static_cast<std::ptrdiff_t>(to),
                dst.vals.begin() + static_cast<std::ptrdiff_t>(w));
      w += to - r;
      r = to;
    };
    for (std::size_t a = 0; a < m; ++a) {
      if (equal_[a]) {
        copy_run(pos_[a] + 1);
        dst.vals[w - 1] += acc.val(ids[a]);
      } else {
        copy_run(pos_[a]);
        put_acc(dst, w++, ids[a]);
      }
    }
    copy_run(n);
    active_ ^= 1;
  } else {
    // In place: fold duplicates, then shift runs backwards to open slots.
    for (std::size_t a = 0; a < m; ++a) {
      if (equal_[a]) src.vals[pos_[a]] += acc.val(ids[a]);
    }
    for (auto& c : src.crds) c.resize(n + fresh);
    src.vals.resize(n + fresh);
    std::size_t r = n;
    std::size_t w = n + fresh;
    for (std::size_t a = m; a-- > 0;) {
      if (equal_[a]) continue;
      const std::size_t from = pos_[a];
      for (auto& c : src.crds) {
        std::move_backward(c.begin() + static_cast<std::ptrdiff_t>(from), c.begin() + static_cast<std::ptrdiff_t>(r),
                           c.begin() + static_cast<std::ptrdiff_t>(w));
      }
      std::move_backward(src.vals.begin() + static_cast<std::ptrdiff_t>(from),
                         src.vals.begin() + static_cast<std::ptrdiff_t>(r), src.vals.begin() + static_cast<std::ptrdiff_t>(w));
      w -= r - from;
      r = from;
      put_acc(src, --w, ids[a]);
    }
  }
  ++counters.merges;
  acc.clear();
}

void AllArray::clear() {
  for (auto& b : buffers_) {
    for (auto& c : b.crds) c.clear();
    b.vals.clear();
  }
  active_ = 0;
}

std::size_t AllArray::bytes() const {
  const std::size_t per = static_cast<std::size_t>(order_) * sizeof(Coord) + sizeof(double);
  std::size_t b = buffers_[active_].vals.size() * per;
  if (double_buffer_) b += buffers_[active_ ^ 1].vals.size() * per;
  return b;
}

void AllArray::check_sorted_unique() const {
  const Buffer& b = active();
  for (std::size_t e = 1; e < b.vals.size(); ++e) {
    bool less = false;
    for (const auto& c : b.crds) {
      if (c[e - 1] != c[e]) {
        less = c[e - 1] < c[e];
        break;
      }
    }
    if (!less) throw Error("AllArray: entries are not strictly increasing at " + std::to_string(e));
  }
}

struct SparseWorkspace::Worker {
  std::thread thread;
  std::mutex m;
  std::condition_variable cv;
  AccArray* pending = nullptr;
  std::size_t pending_acc_bytes = 0;
  bool busy = false;
  bool stop = false;
  std::exception_ptr error;
  IsmCounters counters;
};

SparseWorkspace::SparseWorkspace(std::vector<Coord> dims, IsmOptions options)
    : dims_(std::move(dims)), options_(options), all_(static_cast<int>(dims_.size()), options.double_buffer) {
  if (options_.policy == SortPolicy::Hash && options_.hash_buckets == 0) {
    options_.hash_buckets = hash_default_L(options_.capacity);
  }
  const int buffers = options_.pipelined ? 2 : 1;
  for (int b = 0; b < buffers; ++b) {
    accs_.push_back(std::make_unique<AccArray>(dims_, options_.policy, options_.capacity, options_.hash_buckets));
  }
  note_bytes();
  if (options_.pipelined) {
    worker_ = std::make_unique<Worker>();
    worker_->thread = std::thread([this] {
      Worker& w = *worker_;
      std::unique_lock lk(w.m);
      for (;;) {
        w.cv.wait(lk, [&] { return w.stop || w.pending != nullptr; });
        if (w.pending == nullptr) return;
        AccArray* acc = w.pending;
        const std::size_t acc_bytes = w.pending_acc_bytes;
        w.pending = nullptr;
        w.busy = true;
        lk.unlock();
        try {
          sort_merge(*acc, w.counters);
          w.counters.peak_bytes = std::max(w.counters.peak_bytes, acc_bytes + all_.bytes());
        } catch (...) {
          lk.lock();
          w.error = std::current_exception();
          lk.unlock();
        }
        lk.lock();
        w.busy = false;
        w.cv.notify_all();
      }
    });
  }
}

SparseWorkspace::~SparseWorkspace() {
  if (worker_) {
    {
      std::lock_guard lk(worker_->m);
      worker_->stop = true;
    }
    worker_->cv.notify_all();
    worker_->thread.join();
  }
}

void SparseWorkspace::sort_merge(AccArray& acc, IsmCounters& counters) {
  acc.sort(counters);
  all_.merge(acc, counters);
}

void SparseWorkspace::note_bytes() {
  std::size_t b = all_.bytes();
  for (const auto& a : accs_) b += a->bytes();
  counters_.peak_bytes = std::max(counters_.peak_bytes, b);
}

bool SparseWorkspace::try_insert(std::span<const Coord> crds, double val) {
  return open().try_insert(crds, val, counters_);
}

void SparseWorkspace::insert(std::span<const Coord> crds, double val) {
  if (try_insert(crds, val)) return;
  drain();
  if (!try_insert(crds, val)) throw Error("SparseWorkspace: insert failed after drain");
}

void SparseWorkspace::drain() {
  if (open().empty()) return;
  const std::size_t next_cap = options_.grow ? grow_capacity(open().capacity()) : open().capacity();
  if (!worker_) {
    sort_merge(open(), counters_);
    note_bytes();
  } else {
    Worker& w = *worker_;
    std::size_t acc_bytes = 0;
    for (const auto& a : accs_) acc_bytes += a->bytes();
    {
      std::unique_lock lk(w.m);
      w.cv.wait(lk, [&] { return w.pending == nullptr && !w.busy; });
      if (w.error) std::rethrow_exception(w.error);
      w.pending = &open();
      w.pending_acc_bytes = acc_bytes;
    }
    w.cv.notify_all();
    open_ ^= 1;
  }
  ++drains_;
  if (next_cap != open().capacity()) open().set_capacity(next_cap);
}

void SparseWorkspace::finish() {
  drain();
  if (worker_) {
    Worker& w = *worker_;
    std::unique_lock lk(w.m);
    w.cv.wait(lk, [&] { return w.pending == nullptr && !w.busy; });
    if (w.error) std::rethrow_exception(w.error);
  }
}

void SparseWorkspace::reset() {
  finish();
  all_.clear();
  for (auto& a : accs_) {
    a->clear();
    a->set_capacity(options_.capacity);
  }
  open_ = 0;
}

const AllArray& SparseWorkspace::all() const { return all_; }

Tensor SparseWorkspace::drain_and_compress(const Format& target, const std::vector<Coord>& dims) {
  finish();
  if (target.order() != all_.order() || dims.size() != dims_.size()) {
    throw Error("drain_and_compress: target order does not match the workspace");
  }
  for (int l = 0; l < target.order(); ++l) {
    if (dims[static_cast<std::size_t>(target.mode_of_level(l))] != dims_[static_cast<std::size_t>(l)]) {
      throw Error("drain_and_compress: target dimensions do not match the workspace");
    }
  }
  std::vector<std::span<const Coord>> levels;
  for (int l = 0; l < all_.order(); ++l) levels.push_back(all_.crd(l));
  return compress_levels(levels, all_.vals(), target, dims);
}

std::size_t SparseWorkspace::capacity() const { return accs_[open_]->capacity(); }

IsmCounters SparseWorkspace::counters() const {
  IsmCounters c = counters_;
  if (worker_) {
    std::lock_guard lk(worker_->m);
    c += worker_->counters;
  }
  return c;
}

} // namespace spws
