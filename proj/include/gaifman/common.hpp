#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace gaifman {

/// Dense handle for a domain object. Ids are contiguous 0..|D|-1.
using ObjectId = std::uint32_t;
/// Dense handle for a relation symbol. Ids are contiguous 0..|R|-1.
using RelationId = std::uint32_t;

inline constexpr ObjectId kInvalidObject = std::numeric_limits<ObjectId>::max();
inline constexpr RelationId kInvalidRelation = std::numeric_limits<RelationId>::max();

/// Sentinel for an unbounded neighborhood size (k = infinity).
inline constexpr std::uint32_t kUnboundedK = std::numeric_limits<std::uint32_t>::max();

/// Data/validation failure; the CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, 64-bit). Used for content hashes of KBs, feature sets and
// for deriving RNG streams from tuple values.
// ---------------------------------------------------------------------------

struct Fnv64 {
  static constexpr std::uint64_t kOffset = 14695981039346656037ULL;
  static constexpr std::uint64_t kPrime = 1099511628211ULL;

  std::uint64_t state = kOffset;

  void add_byte(unsigned char b) {
    state ^= b;
    state *= kPrime;
  }
  void add_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) add_byte(p[i]);
  }
  void add_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) add_byte(static_cast<unsigned char>(v >> (8 * i)));
  }
  void add_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) add_byte(static_cast<unsigned char>(v >> (8 * i)));
  }
  void add_string(std::string_view s) {
    add_u64(s.size());
    add_bytes(s.data(), s.size());
  }
  std::uint64_t value() const { return state; }
};

inline std::uint64_t fnv64(std::string_view s) {
  Fnv64 h;
  h.add_bytes(s.data(), s.size());
  return h.value();
}

// ---------------------------------------------------------------------------
// Counter-based, seed-splittable RNG.
//
// Every stream is identified by a 64-bit key; drawing the i-th value applies
// a strong 64->64 mixer to (key, i). derive() produces an independent child
// stream from the parent key and caller-chosen labels, so parallel work can
// assign one stream per (tuple, sample-index) and remain reproducible
// regardless of scheduling.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class SplitRng {
 public:
  SplitRng() : SplitRng(0) {}
  explicit SplitRng(std::uint64_t seed) : key_(splitmix64(seed ^ 0x5851f42d4c957f2dULL)) {}

  /// Independent child stream labelled by (a, b, c).
  SplitRng derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    SplitRng child;
    std::uint64_t k = key_;
    k = splitmix64(k ^ (0x9e3779b97f4a7c15ULL * (a + 1)));
    k = splitmix64(k ^ (0xc2b2ae3d27d4eb4fULL * (b + 1)));
    k = splitmix64(k ^ (0x165667b19e3779f9ULL * (c + 1)));
    child.key_ = k;
    child.counter_ = 0;
    return child;
  }

  std::uint64_t next_u64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform integer in [0, bound), unbiased. bound must be >= 1.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = bound * (std::numeric_limits<std::uint64_t>::max() / bound);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  /// Uniform double in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Moves m uniformly chosen elements (without replacement) to the front of
  /// v; returns m clamped to v.size().
  template <typename T>
  std::size_t partial_sample(std::vector<T>& v, std::size_t m) {
    if (m > v.size()) m = v.size();
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t j = i + static_cast<std::size_t>(below(v.size() - i));
      std::swap(v[i], v[j]);
    }
    return m;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Parallelism helper. fn(i) must only touch state owned by index i; results
// are then independent of scheduling and identical to a serial run.
// ---------------------------------------------------------------------------

inline unsigned default_jobs() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

template <typename Fn>
void parallel_for(unsigned jobs, std::size_t n, Fn&& fn) {
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (jobs > n) jobs = static_cast<unsigned>(n);
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (unsigned t = 0; t < jobs; ++t) {
    workers.emplace_back([t, jobs, n, &fn] {
      for (std::size_t i = t; i < n; i += jobs) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

// ---------------------------------------------------------------------------
// Deterministic number formatting (shortest round-trip form, locale-free).
// ---------------------------------------------------------------------------

inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

/// Fixed-precision form for reports (e.g. "84.67" with digits=2).
inline std::string format_fixed(double x, int digits) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

/// Progress callback: fn(done, total). Invoked from the producing thread.
using ProgressFn = std::function<void(std::size_t, std::size_t)>;

}  // namespace gaifman
