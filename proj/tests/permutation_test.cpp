#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "tokenmark/error.hpp"
#include "tokenmark/permutation.hpp"
#include "tokenmark/rng.hpp"

#include "oracle.hpp"

using namespace tokenmark;

namespace {

const PermBackend kBackends[] = {PermBackend::fisher_yates,
                                 PermBackend::feistel_prp};

TEST(Permutation, InverseComposedWithForwardIsIdentity) {
  SplitMix64 rng(2024);
  for (PermBackend backend : kBackends) {
    for (int c = 0; c < 1000; ++c) {
      const std::uint32_t size = 2 + static_cast<std::uint32_t>(rng.next_below(63));
      const Permutation p = make_permutation(backend, PermKey{rng.next()}, size);
      std::vector<double> vec(size);
      for (double& v : vec) v = rng.next_unit();
      const std::vector<double> round = invert_permutation(p, apply_permutation(p, vec));
      ASSERT_EQ(round, vec) << to_string(backend) << " size " << size;
    }
  }
}

TEST(Permutation, EveryBackendProducesABijection) {
  SplitMix64 rng(7);
  for (PermBackend backend : kBackends) {
    for (std::uint32_t size : {2u, 3u, 16u, 97u, 1000u}) {
      const Permutation p = make_permutation(backend, PermKey{rng.next()}, size);
      std::vector<bool> seen(size, false);
      for (std::uint32_t v : p.forward) {
        ASSERT_LT(v, size);
        ASSERT_FALSE(seen[v]);
        seen[v] = true;
      }
    }
  }
}

TEST(Permutation, SizeOneHasTheOnlyPossibleForm) {
  for (PermBackend backend : kBackends) {
    const Permutation p = make_permutation(backend, PermKey{99}, 1);
    EXPECT_EQ(p.forward, std::vector<std::uint32_t>{0});
  }
}

// Averaging a vector over every permutation of its slots puts the global
// mean everywhere: [3,2,1] -> [2,2,2], exactly, because each slot receives
// each entry the same number of times.
TEST(Permutation, AveragingOverAllSixPermutationsFlattensExactly) {
  const std::vector<double> vec = {3.0, 2.0, 1.0};
  std::vector<std::uint32_t> forward = {0, 1, 2};
  std::vector<double> acc(3, 0.0);
  unsigned count = 0;
  do {
    Permutation p;
    p.forward = forward;
    const std::vector<double> moved = apply_permutation(p, vec);
    for (std::size_t i = 0; i < 3; ++i) acc[i] += moved[i];
    ++count;
  } while (std::next_permutation(forward.begin(), forward.end()));
  ASSERT_EQ(count, 6u);
  for (double v : acc) EXPECT_DOUBLE_EQ(v / 6.0, 2.0);
}

TEST(Permutation, FisherYatesMatchesIndependentImplementation) {
  SplitMix64 rng(11);
  for (int c = 0; c < 50; ++c) {
    const std::uint64_t key = rng.next();
    const std::uint32_t size = 2 + static_cast<std::uint32_t>(rng.next_below(200));
    const Permutation p =
        make_permutation(PermBackend::fisher_yates, PermKey{key}, size);
    EXPECT_EQ(p.forward, oracle::fisher_yates(key, size));
  }
}

// 6000 random keys over size 3: each of the 6 possible permutations should
// appear about 1000 times. The +-150 window is ~5 sigma of Binomial(6000,
// 1/6), so a correct generator fails this with negligible probability.
TEST(Permutation, SmallDomainFrequenciesAreUniform) {
  for (PermBackend backend : kBackends) {
    std::map<std::vector<std::uint32_t>, unsigned> hist;
    SplitMix64 rng(backend == PermBackend::fisher_yates ? 5u : 6u);
    for (int c = 0; c < 6000; ++c) {
      const Permutation p = make_permutation(backend, PermKey{rng.next()}, 3);
      ++hist[p.forward];
    }
    ASSERT_EQ(hist.size(), 6u) << to_string(backend);
    for (const auto& [perm, count] : hist) {
      EXPECT_NEAR(count, 1000u, 150u) << to_string(backend);
    }
  }
}

TEST(Permutation, FeistelForwardIndexAgreesWithMaterialized) {
  PermutationEngine engine(PermBackend::feistel_prp, 1000);
  SplitMix64 rng(13);
  for (int c = 0; c < 100; ++c) {
    const PermKey key{rng.next()};
    const auto perm = engine.materialize(key);
    for (TokenId t : {0u, 1u, 499u, 998u, 999u})
      EXPECT_EQ(engine.forward_index(key, t), perm->forward[t]);
  }
}

TEST(Permutation, FeistelCycleWalkingCoversOddSizes) {
  for (std::uint32_t size : {3u, 101u, 997u}) {
    FeistelPermuter f(PermKey{0x1234}, size);
    for (std::uint32_t x = 0; x < size; ++x) {
      const std::uint32_t y = f.forward(x);
      ASSERT_LT(y, size);
      ASSERT_EQ(f.inverse(y), x);
    }
  }
}

TEST(Permutation, DistinctKeysProduceNearlyDisjointPlacements) {
  for (PermBackend backend : kBackends) {
    const std::uint32_t size = 32768;
    const Permutation a = make_permutation(backend, PermKey{1}, size);
    const Permutation b = make_permutation(backend, PermKey{2}, size);
    std::uint32_t agree = 0;
    for (std::uint32_t i = 0; i < size; ++i)
      if (a.forward[i] == b.forward[i]) ++agree;
    // Fixed-point agreements between two random permutations ~ Poisson(1).
    EXPECT_LT(agree, size / 100) << to_string(backend);
  }
}

// Averaging a fixed vector over K random permutations leaves residual
// fluctuations around the global mean that shrink like K^(-1/2). The
// log-log slope over a decade-per-step grid should sit near -0.5.
TEST(Permutation, AverageResidualsShrinkAsRootK) {
  const std::uint32_t size = 256;
  std::vector<double> vec(size, 0.0);
  SplitMix64 vec_rng(321);
  for (double& v : vec) v = vec_rng.next_unit() * 10.0;
  const double grand = oracle::mean(vec);

  std::vector<double> log_k, log_rms;
  SplitMix64 key_rng(654);
  for (std::size_t k_count : {100u, 1000u, 10000u}) {
    std::vector<PermKey> keys(k_count);
    for (PermKey& k : keys) k.value = key_rng.next();
    const std::vector<double> avg =
        average_permuted(PermBackend::fisher_yates, keys, vec);
    double rss = 0.0;
    for (double v : avg) rss += (v - grand) * (v - grand);
    log_k.push_back(std::log(static_cast<double>(k_count)));
    log_rms.push_back(std::log(std::sqrt(rss / size)));
  }
  const double slope = (log_rms.back() - log_rms.front()) /
                       (log_k.back() - log_k.front());
  EXPECT_NEAR(slope, -0.5, 0.1);
}

TEST(PermutationEngine, CacheHitsReturnTheSameObject) {
  PermutationEngine engine(PermBackend::fisher_yates, 64, 8);
  const auto first = engine.materialize(PermKey{42});
  const auto second = engine.materialize(PermKey{42});
  EXPECT_EQ(first.get(), second.get());
  EXPECT_EQ(engine.cache_hits(), 1u);
  EXPECT_EQ(engine.cache_misses(), 1u);
}

TEST(PermutationEngine, EvictionKeepsEntriesWithinCapacity) {
  PermutationEngine engine(PermBackend::fisher_yates, 16, 4);
  for (std::uint64_t k = 0; k < 100; ++k) engine.materialize(PermKey{k});
  EXPECT_LE(engine.cache_entries(), engine.capacity());
  // Evicted keys still rebuild correctly.
  const auto p = engine.materialize(PermKey{0});
  EXPECT_EQ(p->forward, oracle::fisher_yates(0, 16));
}

TEST(PermutationEngine, RejectsOutOfRangeTokensAndBadConfig) {
  PermutationEngine engine(PermBackend::fisher_yates, 16);
  EXPECT_THROW(engine.forward_index(PermKey{1}, 16), Error);
  EXPECT_THROW(PermutationEngine(PermBackend::fisher_yates, 1), Error);
  EXPECT_THROW(PermutationEngine(PermBackend::fisher_yates, 16, 0), Error);
}

TEST(Permutation, ApplyRejectsSizeMismatch) {
  const Permutation p = make_permutation(PermBackend::fisher_yates, PermKey{1}, 4);
  const std::vector<double> wrong(5, 0.0);
  EXPECT_THROW(apply_permutation(p, wrong), Error);
  EXPECT_THROW(invert_permutation(p, wrong), Error);
}

TEST(Permutation, BackendNamesRoundTrip) {
  EXPECT_EQ(parse_backend("fisher-yates"), PermBackend::fisher_yates);
  EXPECT_EQ(parse_backend("feistel-prp"), PermBackend::feistel_prp);
  EXPECT_THROW(parse_backend("unknown"), Error);
}

}  // namespace
