#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tokenmark {

// Token ids are dense indices into a vocabulary of size |V|; every id < |V|.
using TokenId = std::uint32_t;
using TokenStream = std::vector<TokenId>;
using LogitVector = std::vector<double>;

// 64-bit key addressing one vocabulary permutation.
struct PermKey {
  std::uint64_t value = 0;

  friend bool operator==(const PermKey&, const PermKey&) = default;
};

// Slot-indexed occurrence counts in permuted vocabulary space.
// n_counted = number of counted positions (stream length minus the first
// n-1 positions, which have no in-stream prefix).
// Provenance fields let combine_counts refuse incompatible vectors.
struct CountVector {
  std::vector<std::uint64_t> counts;
  std::uint64_t n_counted = 0;
  std::string mu_hex;
  unsigned window_n = 0;
  std::string backend;

  std::size_t vocab_size() const { return counts.size(); }
};

}  // namespace tokenmark
