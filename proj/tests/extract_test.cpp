// Key extraction: the FFT route must agree with the direct per-key scan,
// and both must recover planted keys from counts and from generated text.
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "tokenmark/eval.hpp"
#include "tokenmark/extract.hpp"
#include "tokenmark/generate.hpp"
#include "tokenmark/provider.hpp"

namespace {

using namespace tokenmark;

CountVector make_counts(std::vector<std::uint64_t> counts) {
  CountVector cv;
  cv.n_counted = std::accumulate(counts.begin(), counts.end(),
                                 std::uint64_t{0});
  cv.counts = std::move(counts);
  cv.mu_hex = "ab";
  cv.window_n = 2;
  cv.backend = "fisher-yates";
  return cv;
}

CountVector random_counts(SplitMix64& rng, std::uint32_t vocab) {
  std::vector<std::uint64_t> c(vocab);
  for (auto& v : c) v = rng.next_below(100);
  return make_counts(std::move(c));
}

// Counts shaped like 1 + phi_k concentrate spectral mass on key k.
CountVector wave_counts(PerturbFamily family, std::uint32_t vocab,
                        std::uint32_t k) {
  const BasisEvaluator basis(family, vocab, k);
  std::vector<std::uint64_t> c(vocab);
  for (std::uint32_t v = 0; v < vocab; ++v)
    c[v] = static_cast<std::uint64_t>(
        std::llround(1000.0 * (1.0 + basis(v))));
  return make_counts(std::move(c));
}

TEST(Extract, RecoversPlantedFourierFrequency) {
  const CountVector cv = wave_counts(PerturbFamily::fourier, 64, 7);
  const auto via_fft = extract_key(cv, PerturbFamily::fourier);
  const auto via_direct =
      extract_key(cv, PerturbFamily::fourier, ExtractMethod::direct);
  EXPECT_EQ(via_fft.k_p_hat, 7u);
  EXPECT_EQ(via_fft.method, "fft");
  EXPECT_EQ(via_direct.k_p_hat, 7u);
  EXPECT_EQ(via_direct.method, "direct");
  EXPECT_GT(via_fft.margin, 0.0);
}

TEST(Extract, RecoversPlantedKeysAcrossFamilies) {
  for (std::uint32_t k : {3u, 7u, 11u, 31u}) {
    const auto r = extract_key(wave_counts(PerturbFamily::fourier, 64, k),
                               PerturbFamily::fourier);
    EXPECT_EQ(r.k_p_hat, k) << "fourier key " << k;
  }
  for (std::uint32_t k : {1u, 2u, 5u, 7u}) {
    const auto r = extract_key(wave_counts(PerturbFamily::square, 16, k),
                               PerturbFamily::square);
    EXPECT_EQ(r.k_p_hat, k) << "square key " << k;
    EXPECT_GT(r.margin, 0.0);
  }
}

TEST(Extract, FftAgreesWithDirectScan) {
  SplitMix64 rng(0xFF7);
  const struct {
    std::uint32_t vocab;
    int vectors;
  } grid[] = {{64, 30}, {1024, 10}, {32768, 3}};
  for (const auto& g : grid) {
    for (int i = 0; i < g.vectors; ++i) {
      const CountVector cv = random_counts(rng, g.vocab);
      const auto fft = extract_key(cv, PerturbFamily::fourier,
                                   ExtractMethod::fft, /*keep_scores=*/true);
      const auto direct =
          extract_key(cv, PerturbFamily::fourier, ExtractMethod::direct,
                      /*keep_scores=*/true);
      ASSERT_TRUE(fft.scores.has_value());
      ASSERT_TRUE(direct.scores.has_value());
      ASSERT_EQ(fft.scores->size(), direct.scores->size());
      for (std::size_t j = 0; j < fft.scores->size(); ++j) {
        EXPECT_EQ((*fft.scores)[j].first, (*direct.scores)[j].first);
        EXPECT_NEAR((*fft.scores)[j].second, (*direct.scores)[j].second, 1e-9)
            << "vocab " << g.vocab << " key " << (*fft.scores)[j].first;
      }
      EXPECT_EQ(fft.k_p_hat, direct.k_p_hat) << "vocab " << g.vocab;
      EXPECT_NEAR(fft.best_score, direct.best_score, 1e-9);
      EXPECT_NEAR(fft.margin, direct.margin, 1e-9);
    }
  }
}

TEST(Extract, UniformCountsTieOnSmallestKey) {
  const auto r = extract_key(make_counts(std::vector<std::uint64_t>(16, 4)),
                             PerturbFamily::square);
  EXPECT_EQ(r.k_p_hat, 1u);
  EXPECT_EQ(r.best_score, 0.0);
  EXPECT_EQ(r.margin, 0.0);
}

TEST(Extract, SingleCandidateHasZeroMargin) {
  // Fourier at |V|=2 admits exactly one key.
  const auto r = extract_key(make_counts({9, 3}), PerturbFamily::fourier,
                             ExtractMethod::automatic, /*keep_scores=*/true);
  EXPECT_EQ(r.k_p_hat, 1u);
  EXPECT_EQ(r.margin, 0.0);
  ASSERT_TRUE(r.scores.has_value());
  EXPECT_EQ(r.scores->size(), 1u);
}

TEST(Extract, KeptScoresAreOrderedAndConsistent) {
  SplitMix64 rng(0x5C0);
  const CountVector cv = random_counts(rng, 64);
  const auto r = extract_key(cv, PerturbFamily::fourier,
                             ExtractMethod::automatic, /*keep_scores=*/true);
  ASSERT_TRUE(r.scores.has_value());
  ASSERT_EQ(r.scores->size(), 63u);
  double best = -1e300, second = -1e300;
  std::uint32_t argmax = 0;
  for (std::size_t j = 0; j < r.scores->size(); ++j) {
    EXPECT_EQ((*r.scores)[j].first, j + 1);
    const double q = (*r.scores)[j].second;
    if (q > best) {
      second = best;
      best = q;
      argmax = (*r.scores)[j].first;
    } else if (q > second) {
      second = q;
    }
  }
  EXPECT_EQ(r.k_p_hat, argmax);
  EXPECT_DOUBLE_EQ(r.best_score, best);
  EXPECT_DOUBLE_EQ(r.margin, best - second);
}

TEST(Extract, RouteSelectionAndErrors) {
  const auto odd = extract_key(make_counts(std::vector<std::uint64_t>(9, 2)),
                               PerturbFamily::fourier);
  EXPECT_EQ(odd.method, "direct");
  const auto even = extract_key(make_counts(std::vector<std::uint64_t>(8, 2)),
                                PerturbFamily::fourier);
  EXPECT_EQ(even.method, "fft");
  const auto sq = extract_key(make_counts(std::vector<std::uint64_t>(8, 2)),
                              PerturbFamily::square);
  EXPECT_EQ(sq.method, "direct");

  try {
    extract_key(make_counts(std::vector<std::uint64_t>(8, 2)),
                PerturbFamily::square, ExtractMethod::fft);
    FAIL() << "expected config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  try {
    extract_key(make_counts(std::vector<std::uint64_t>(9, 2)),
                PerturbFamily::fourier, ExtractMethod::fft);
    FAIL() << "expected config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  try {
    extract_key(make_counts(std::vector<std::uint64_t>(8, 0)),
                PerturbFamily::fourier);
    FAIL() << "expected too-short error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::too_short);
  }
}

TEST(Extract, ParseMethodRoundTrip) {
  EXPECT_EQ(parse_extract_method("auto"), ExtractMethod::automatic);
  EXPECT_EQ(parse_extract_method("direct"), ExtractMethod::direct);
  EXPECT_EQ(parse_extract_method("fft"), ExtractMethod::fft);
  EXPECT_STREQ(to_string(ExtractMethod::fft), "fft");
  try {
    parse_extract_method("dft");
    FAIL() << "expected usage error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::usage);
  }
}

TEST(CombineCounts, SumsChunksElementwise) {
  SplitMix64 rng(0xC0);
  CountVector a = random_counts(rng, 32);
  CountVector b = random_counts(rng, 32);
  const CountVector total = combine_counts({a, b});
  EXPECT_EQ(total.n_counted, a.n_counted + b.n_counted);
  for (std::uint32_t v = 0; v < 32; ++v)
    EXPECT_EQ(total.counts[v], a.counts[v] + b.counts[v]);
  EXPECT_EQ(total.mu_hex, a.mu_hex);
  EXPECT_EQ(total.window_n, a.window_n);
}

TEST(CombineCounts, DoublingLeavesScoreUnchanged) {
  SplitMix64 rng(0xC1);
  const CountVector cv = random_counts(rng, 64);
  const CountVector doubled = combine_counts({cv, cv});
  for (std::uint32_t k = 1; k < 64; ++k)
    EXPECT_EQ(score(cv, PerturbFamily::fourier, k),
              score(doubled, PerturbFamily::fourier, k))
        << k;
}

TEST(CombineCounts, RejectsProtocolMismatch) {
  SplitMix64 rng(0xC2);
  const CountVector a = random_counts(rng, 32);
  CountVector other_mu = a;
  other_mu.mu_hex = "cd";
  CountVector other_n = a;
  other_n.window_n = 3;
  CountVector other_backend = a;
  other_backend.backend = "feistel-prp";
  CountVector other_vocab = random_counts(rng, 16);
  for (const CountVector& bad :
       {other_mu, other_n, other_backend, other_vocab}) {
    try {
      combine_counts({a, bad});
      FAIL() << "expected protocol error";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::protocol);
    }
  }
  try {
    combine_counts({});
    FAIL() << "expected config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

// End to end: text watermarked with key 5 hands back key 5 from counts
// alone, on nearly every trial at this strength.
TEST(Extract, RecoversKeyFromWatermarkedText) {
  const std::uint32_t vocab = 64;
  const TokenStream walk = synthetic_walk(vocab, 8, 4096, 7);
  const ReplayProvider lm(walk, 2, 1e-3, vocab);
  const WatermarkId mu = WatermarkId::from_integer(0xE27);

  WatermarkParams params;
  params.vocab_size = vocab;
  params.n = 2;
  params.family = PerturbFamily::fourier;
  params.k_p = 5;
  params.kappa = 8.0;
  params.sampling.max_tokens = 800;
  PermutationEngine engine(params.backend, vocab, 4096);

  int hits = 0;
  const int trials = 30;
  for (int i = 0; i < trials; ++i) {
    WatermarkParams p = params;
    p.sampling.rng_seed = derive_seed(0xE27E27, i);
    const auto r = watermark_stream({}, mu, p, lm, engine);
    const CountVector cv = count_tokens(r.tokens, mu, p.n, engine);
    hits += extract_key(cv, p.family).k_p_hat == p.k_p;
  }
  EXPECT_GE(hits, trials * 8 / 10);
}

}  // namespace
