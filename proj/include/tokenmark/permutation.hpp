#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tokenmark/error.hpp"
#include "tokenmark/rng.hpp"
#include "tokenmark/types.hpp"

namespace tokenmark {

// Two interchangeable ways to realize the keyed vocabulary permutation.
// The backend is part of the watermark protocol: text watermarked with one
// backend does not verify under the other, so the choice is recorded in the
// manifest.
enum class PermBackend {
  fisher_yates,  // seeded shuffle, O(|V|) to materialize, cached
  feistel_prp,   // format-preserving 4-round Feistel, O(1) per index
};

inline std::string to_string(PermBackend b) {
  return b == PermBackend::fisher_yates ? "fisher-yates" : "feistel-prp";
}

inline PermBackend parse_backend(const std::string& s) {
  if (s == "fisher-yates") return PermBackend::fisher_yates;
  if (s == "feistel-prp") return PermBackend::feistel_prp;
  raise(ErrorKind::config, "unknown permutation backend \"" + s +
                               "\" (expected fisher-yates or feistel-prp)");
}

// forward[i] = slot of token i. A permutation of [0, size).
struct Permutation {
  std::vector<std::uint32_t> forward;

  std::uint32_t size() const {
    return static_cast<std::uint32_t>(forward.size());
  }
};

// Fisher-Yates shuffle driven by splitmix64 with rejection sampling for the
// bounded draws; bit-identical output on every platform for a given key.
inline Permutation fisher_yates_permutation(PermKey key, std::uint32_t size) {
  Permutation p;
  p.forward.resize(size);
  for (std::uint32_t i = 0; i < size; ++i) p.forward[i] = i;
  SplitMix64 rng(key.value);
  for (std::uint32_t i = size; i > 1; --i) {
    const std::uint32_t j = static_cast<std::uint32_t>(rng.next_below(i));
    std::swap(p.forward[i - 1], p.forward[j]);
  }
  return p;
}

namespace detail {

// splitmix64 finalizer as a stateless 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Balanced 4-round Feistel network over the smallest even-bit-width domain
// covering [0, size), with cycle walking to stay inside the domain.
// A different permutation family than the seeded shuffle; the two never
// agree and are not meant to.
class FeistelPermuter {
 public:
  FeistelPermuter(PermKey key, std::uint32_t size) : key_(key.value), size_(size) {
    if (size < 1) raise(ErrorKind::config, "permutation domain must be non-empty");
    unsigned bits = 2;
    while ((std::uint64_t{1} << bits) < size) bits += 2;
    half_bits_ = bits / 2;
    half_mask_ = (std::uint32_t{1} << half_bits_) - 1;
  }

  std::uint32_t forward(std::uint32_t x) const {
    check_range(x);
    do {
      x = encrypt(x);
    } while (x >= size_);
    return x;
  }

  std::uint32_t inverse(std::uint32_t y) const {
    check_range(y);
    do {
      y = decrypt(y);
    } while (y >= size_);
    return y;
  }

 private:
  void check_range(std::uint32_t v) const {
    if (v >= size_)
      raise(ErrorKind::config, "index " + std::to_string(v) +
                                   " outside permutation domain of size " +
                                   std::to_string(size_));
  }

  std::uint32_t round_f(unsigned round, std::uint32_t half) const {
    const std::uint64_t x =
        key_ ^ (0xD1B54A32D192ED03ULL * (round + 1)) ^ half;
    return static_cast<std::uint32_t>(detail::mix64(x)) & half_mask_;
  }

  std::uint32_t encrypt(std::uint32_t x) const {
    std::uint32_t left = x >> half_bits_;
    std::uint32_t right = x & half_mask_;
    for (unsigned r = 0; r < 4; ++r) {
      const std::uint32_t next_right = left ^ round_f(r, right);
      left = right;
      right = next_right;
    }
    return (left << half_bits_) | right;
  }

  std::uint32_t decrypt(std::uint32_t y) const {
    std::uint32_t left = y >> half_bits_;
    std::uint32_t right = y & half_mask_;
    for (int r = 3; r >= 0; --r) {
      const std::uint32_t prev_left = right ^ round_f(static_cast<unsigned>(r), left);
      right = left;
      left = prev_left;
    }
    return (left << half_bits_) | right;
  }

  std::uint64_t key_;
  std::uint32_t size_;
  unsigned half_bits_;
  std::uint32_t half_mask_;
};

// Uncached materialization for either backend.
inline Permutation make_permutation(PermBackend backend, PermKey key,
                                    std::uint32_t size) {
  if (backend == PermBackend::fisher_yates)
    return fisher_yates_permutation(key, size);
  FeistelPermuter f(key, size);
  Permutation p;
  p.forward.resize(size);
  for (std::uint32_t i = 0; i < size; ++i) p.forward[i] = f.forward(i);
  return p;
}

// out[forward[i]] = vec[i]: element i of vec lands in its permuted slot.
template <typename T>
std::vector<T> apply_permutation(const Permutation& p,
                                 std::span<const T> vec) {
  if (vec.size() != p.forward.size())
    raise(ErrorKind::config, "vector length " + std::to_string(vec.size()) +
                                 " does not match permutation size " +
                                 std::to_string(p.forward.size()));
  std::vector<T> out(vec.size());
  for (std::size_t i = 0; i < vec.size(); ++i) out[p.forward[i]] = vec[i];
  return out;
}

template <typename T>
std::vector<T> apply_permutation(const Permutation& p, const std::vector<T>& vec) {
  return apply_permutation(p, std::span<const T>(vec));
}

// Inverse of apply_permutation: out[i] = vec[forward[i]].
template <typename T>
std::vector<T> invert_permutation(const Permutation& p,
                                  std::span<const T> vec) {
  if (vec.size() != p.forward.size())
    raise(ErrorKind::config, "vector length " + std::to_string(vec.size()) +
                                 " does not match permutation size " +
                                 std::to_string(p.forward.size()));
  std::vector<T> out(vec.size());
  for (std::size_t i = 0; i < vec.size(); ++i) out[i] = vec[p.forward[i]];
  return out;
}

template <typename T>
std::vector<T> invert_permutation(const Permutation& p, const std::vector<T>& vec) {
  return invert_permutation(p, std::span<const T>(vec));
}

// Arithmetic mean of apply_permutation over a set of keys. As the number of
// distinct keys grows this flattens any vector toward its global mean at the
// usual K^(-1/2) rate.
inline std::vector<double> average_permuted(PermBackend backend,
                                            std::span<const PermKey> keys,
                                            std::span<const double> vec) {
  if (keys.empty()) raise(ErrorKind::config, "average over zero keys");
  std::vector<double> acc(vec.size(), 0.0);
  for (const PermKey& key : keys) {
    const Permutation p =
        make_permutation(backend, key, static_cast<std::uint32_t>(vec.size()));
    for (std::size_t i = 0; i < vec.size(); ++i) acc[p.forward[i]] += vec[i];
  }
  const double inv = 1.0 / static_cast<double>(keys.size());
  for (double& v : acc) v *= inv;
  return acc;
}

// Thread-safe bounded cache of materialized permutations keyed by PermKey.
// Shared by generation, verification and scanning; hits return the same
// object. Eviction is least-recently-stamped within a shard.
class PermutationEngine {
 public:
  PermutationEngine(PermBackend backend, std::uint32_t vocab_size,
                    std::size_t cache_capacity = 4096)
      : backend_(backend), vocab_size_(vocab_size) {
    if (vocab_size < 2)
      raise(ErrorKind::config, "vocab_size must be at least 2");
    if (cache_capacity < 1)
      raise(ErrorKind::config, "cache capacity must be at least 1");
    shard_count_ = cache_capacity >= 64 ? 16 : 1;
    per_shard_cap_ = cache_capacity / shard_count_;
    shards_ = std::vector<Shard>(shard_count_);
  }

  PermBackend backend() const { return backend_; }
  std::uint32_t vocab_size() const { return vocab_size_; }

  std::size_t capacity() const { return per_shard_cap_ * shard_count_; }

  std::size_t cache_entries() const {
    std::size_t n = 0;
    for (const Shard& s : shards_) {
      std::shared_lock lock(s.mutex);
      n += s.map.size();
    }
    return n;
  }

  std::uint64_t cache_hits() const { return hits_.load(std::memory_order_relaxed); }
  std::uint64_t cache_misses() const { return misses_.load(std::memory_order_relaxed); }

  std::shared_ptr<const Permutation> materialize(PermKey key) {
    Shard& shard = shards_[key.value % shard_count_];
    {
      std::shared_lock lock(shard.mutex);
      auto it = shard.map.find(key.value);
      if (it != shard.map.end()) {
        it->second->last_used.store(tick_.fetch_add(1, std::memory_order_relaxed),
                                    std::memory_order_relaxed);
        hits_.fetch_add(1, std::memory_order_relaxed);
        return it->second->perm;
      }
    }
    misses_.fetch_add(1, std::memory_order_relaxed);
    auto built = std::make_shared<Entry>();
    built->perm = std::make_shared<const Permutation>(
        make_permutation(backend_, key, vocab_size_));
    built->last_used.store(tick_.fetch_add(1, std::memory_order_relaxed),
                           std::memory_order_relaxed);
    std::unique_lock lock(shard.mutex);
    auto [it, inserted] = shard.map.try_emplace(key.value, built);
    if (!inserted) return it->second->perm;  // lost a race; reuse the winner
    if (shard.map.size() > per_shard_cap_) evict_one(shard, key.value);
    return built->perm;
  }

  // Slot of `token` under the permutation for `key`. O(1) for the Feistel
  // backend; cache lookup plus array index for the seeded shuffle.
  std::uint32_t forward_index(PermKey key, TokenId token) {
    if (token >= vocab_size_)
      raise(ErrorKind::data, "token id " + std::to_string(token) +
                                 " outside vocabulary of size " +
                                 std::to_string(vocab_size_));
    if (backend_ == PermBackend::feistel_prp)
      return FeistelPermuter(key, vocab_size_).forward(token);
    return materialize(key)->forward[token];
  }

 private:
  struct Entry {
    std::shared_ptr<const Permutation> perm;
    std::atomic<std::uint64_t> last_used{0};
  };

  struct Shard {
    mutable std::shared_mutex mutex;
    std::unordered_map<std::uint64_t, std::shared_ptr<Entry>> map;
  };

  void evict_one(Shard& shard, std::uint64_t keep) {
    auto victim = shard.map.end();
    std::uint64_t oldest = ~std::uint64_t{0};
    for (auto it = shard.map.begin(); it != shard.map.end(); ++it) {
      if (it->first == keep) continue;
      const std::uint64_t stamp = it->second->last_used.load(std::memory_order_relaxed);
      if (stamp <= oldest) {
        oldest = stamp;
        victim = it;
      }
    }
    if (victim != shard.map.end()) shard.map.erase(victim);
  }

  PermBackend backend_;
  std::uint32_t vocab_size_;
  std::size_t shard_count_;
  std::size_t per_shard_cap_;
  std::vector<Shard> shards_;
  std::atomic<std::uint64_t> tick_{0};
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

}  // namespace tokenmark
