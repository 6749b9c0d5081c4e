#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "tokenmark/error.hpp"
#include "tokenmark/eval.hpp"
#include "tokenmark/provider.hpp"
#include "tokenmark/rng.hpp"
#include "tokenmark/vocab.hpp"

using namespace tokenmark;

namespace {

double logit_sum_exp(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return std::exp(mx) * z;
}

TEST(UniformProvider, AllLogitsZero) {
  UniformProvider p(16);
  const std::vector<double> l = p.logits(std::vector<TokenId>{1, 2});
  for (double v : l) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(UniformProvider(1), Error);
}

TEST(PeakedProvider, FollowsItsScript) {
  PeakedProvider p(8, {3, 5}, 10.0);
  const std::vector<double> at0 = p.logits(std::vector<TokenId>{});
  const std::vector<double> at1 = p.logits(std::vector<TokenId>{3});
  EXPECT_EQ(at0[3], 10.0);
  EXPECT_EQ(at1[5], 10.0);
  EXPECT_EQ(at0[5], 0.0);
  EXPECT_THROW(PeakedProvider(8, {}), Error);
  EXPECT_THROW(PeakedProvider(8, {9}), Error);
}

// Word vocabulary reserves <bos>=0, <eos>=1, <oov>=2; "a" and "b" land on
// 3 and 4. Training order 1 on "a b" records exactly one transition.
TEST(ToyMarkovLM, CountsOneTransitionFromTinyCorpus) {
  const VocabModel vocab = VocabModel::word_vocab("a b", 16);
  const TokenStream stream = vocab.encode("a b");
  ASSERT_EQ(stream, (TokenStream{3, 4}));

  ToyMarkovLM lm(1, 0.1, vocab.size());
  lm.add_stream(stream);
  const auto& counts = lm.raw_counts();
  ASSERT_EQ(counts.size(), 1u);
  const auto& [key, row] = *counts.begin();
  EXPECT_EQ(ToyMarkovLM::unpack_key(key), (std::vector<TokenId>{3}));
  ASSERT_EQ(row.size(), 1u);
  EXPECT_EQ(row.at(4), 1u);
}

TEST(ToyMarkovLM, TrainedTransitionIsTheUniqueArgmax) {
  const std::uint32_t v = 8;
  // "a b a b a b" with a=0, b=1.
  const TokenStream stream = {0, 1, 0, 1, 0, 1};
  ToyMarkovLM lm(1, 0.01, v);
  lm.add_stream(stream);
  const std::vector<double> after_a = lm.logits(std::vector<TokenId>{0});
  const auto best = std::max_element(after_a.begin(), after_a.end());
  EXPECT_EQ(best - after_a.begin(), 1);
  for (std::size_t i = 0; i < v; ++i)
    if (i != 1) ASSERT_LT(after_a[i], after_a[1]);
}

TEST(ToyMarkovLM, UnseenContextFallsBackToUniform) {
  ToyMarkovLM lm(2, 0.5, 8);
  lm.add_stream(TokenStream{0, 1, 2});
  const std::vector<double> l = lm.logits(std::vector<TokenId>{6, 7});
  for (double v : l) ASSERT_EQ(v, l[0]);
  // Uniform means probability 1/|V| each.
  EXPECT_NEAR(std::exp(l[0]), 1.0 / 8.0, 1e-12);
  EXPECT_FALSE(lm.context_seen(std::vector<TokenId>{6, 7}));
  EXPECT_TRUE(lm.context_seen(std::vector<TokenId>{9, 0, 1}));
}

TEST(ToyMarkovLM, LogitsAreNormalizedLogProbabilities) {
  SplitMix64 rng(3);
  ToyMarkovLM lm(2, 0.25, 32);
  TokenStream stream(500);
  for (TokenId& t : stream) t = static_cast<TokenId>(rng.next_below(32));
  lm.add_stream(stream);
  for (const std::vector<TokenId> ctx :
       {std::vector<TokenId>{stream[0], stream[1]}, std::vector<TokenId>{31, 31}}) {
    EXPECT_NEAR(logit_sum_exp(lm.logits(ctx)), 1.0, 1e-12);
  }
}

TEST(ToyMarkovLM, OnlyTheTrailingOrderTokensMatter) {
  ToyMarkovLM lm(1, 0.1, 8);
  lm.add_stream(TokenStream{2, 3, 2, 5});
  const std::vector<double> bare = lm.logits(std::vector<TokenId>{2});
  const std::vector<double> longer = lm.logits(std::vector<TokenId>{7, 6, 2});
  EXPECT_EQ(bare, longer);
}

TEST(ToyMarkovLM, RetrainingIsDeterministic) {
  const TokenStream stream = {4, 2, 7, 2, 4, 1, 0, 3};
  ToyMarkovLM a(2, 0.1, 8);
  ToyMarkovLM b(2, 0.1, 8);
  a.add_stream(stream);
  b.add_stream(stream);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(ToyMarkovLM, SerializationRoundTripsExactly) {
  SplitMix64 rng(12);
  ToyMarkovLM lm(2, 0.05, 16, TokenId{1});
  TokenStream stream(300);
  for (TokenId& t : stream) t = static_cast<TokenId>(rng.next_below(16));
  lm.add_stream(stream);

  const nlohmann::json doc = lm.to_json("hash-abc");
  const ToyMarkovLM back = ToyMarkovLM::from_json(doc, "hash-abc");
  EXPECT_EQ(back.order(), 2u);
  EXPECT_EQ(back.eos_id(), std::optional<TokenId>{1});
  EXPECT_EQ(doc.dump(), back.to_json("hash-abc").dump());
  const std::vector<TokenId> ctx = {stream[0], stream[1]};
  EXPECT_EQ(lm.logits(ctx), back.logits(ctx));
}

TEST(ToyMarkovLM, RejectsVocabHashMismatchAndBadDocs) {
  ToyMarkovLM lm(1, 0.1, 8);
  lm.add_stream(TokenStream{0, 1, 2});
  const nlohmann::json doc = lm.to_json("vocab-A");
  EXPECT_THROW(ToyMarkovLM::from_json(doc, "vocab-B"), Error);
  EXPECT_NO_THROW(ToyMarkovLM::from_json(doc, "vocab-A"));
  EXPECT_NO_THROW(ToyMarkovLM::from_json(doc));  // unspecified hash accepted
  EXPECT_THROW(ToyMarkovLM::from_json(nlohmann::json::object()), Error);
}

TEST(ToyMarkovLM, RejectsBadConstruction) {
  EXPECT_THROW(ToyMarkovLM(0, 0.1, 8), Error);
  EXPECT_THROW(ToyMarkovLM(1, 0.0, 8), Error);
  EXPECT_THROW(ToyMarkovLM(1, -1.0, 8), Error);
  EXPECT_THROW(ToyMarkovLM(1, 0.1, 1), Error);
  ToyMarkovLM lm(1, 0.1, 8);
  EXPECT_THROW(lm.add_stream(TokenStream{0, 8}), Error);
}

TEST(ToyMarkovLM, CyclicTrainingWrapsAround) {
  ToyMarkovLM lm(1, 0.001, 8);
  lm.add_stream(TokenStream{5, 6}, /*cyclic=*/true);
  // The ring 5 -> 6 -> 5 makes both transitions present.
  const std::vector<double> after6 = lm.logits(std::vector<TokenId>{6});
  const auto best = std::max_element(after6.begin(), after6.end());
  EXPECT_EQ(best - after6.begin(), 5);
}

// A model trained on structured text should explain that text better than a
// model trained on a shuffled copy of it, almost always.
TEST(ToyMarkovLM, BeatsOrderDestroyedTraining) {
  SplitMix64 rng(88);
  unsigned wins = 0;
  const unsigned kTrials = 50;
  for (unsigned trial = 0; trial < kTrials; ++trial) {
    const TokenStream text =
        synthetic_walk(32, 2, 240, derive_seed(1000, trial));
    TokenStream shuffled = text;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rng.next_below(i)]);
    ToyMarkovLM trained(1, 0.1, 32);
    ToyMarkovLM destroyed(1, 0.1, 32);
    trained.add_stream(text);
    destroyed.add_stream(shuffled);
    if (trained.log_likelihood(text) > destroyed.log_likelihood(text)) ++wins;
  }
  EXPECT_GE(wins, kTrials - 2);
}

TEST(MarkovTrain, AggregatesMultipleStreams) {
  const std::vector<TokenStream> corpus = {{0, 1}, {0, 2}, {0, 1}};
  const ToyMarkovLM lm = markov_train(corpus, 1, 0.1, 4);
  const std::vector<double> l = lm.logits(std::vector<TokenId>{0});
  EXPECT_GT(l[1], l[2]);
  EXPECT_GT(l[2], l[3]);
}

TEST(ReplayProvider, ReplaysTheSourceVerbatimUnderGreedyFollowing) {
  const TokenStream source = {3, 1, 4, 1, 5, 9, 2, 6};
  ReplayProvider replay(source, 2, 1e-4, 16);
  EXPECT_EQ(replay.vocab_size(), 16u);
  // From any in-source bigram the argmax is the source's next token.
  for (std::size_t i = 0; i + 2 < source.size(); ++i) {
    const std::vector<TokenId> ctx = {source[i], source[i + 1]};
    const std::vector<double> l = replay.logits(ctx);
    const auto best = std::max_element(l.begin(), l.end());
    EXPECT_EQ(static_cast<TokenId>(best - l.begin()), source[i + 2]) << i;
  }
}

TEST(ReplayProvider, BacksOffToShorterContexts) {
  // Bigram (9, 1) was never seen, but unigram context (1) was: the order-1
  // level answers, steering back onto the source rather than to uniform.
  const TokenStream source = {3, 1, 4, 1, 5};
  ReplayProvider replay(source, 2, 1e-4, 16);
  const std::vector<double> l = replay.logits(std::vector<TokenId>{9, 1});
  const auto best = std::max_element(l.begin(), l.end());
  const TokenId picked = static_cast<TokenId>(best - l.begin());
  EXPECT_TRUE(picked == 4 || picked == 5);
  EXPECT_NEAR(logit_sum_exp(l), 1.0, 1e-12);
}

TEST(ReplayProvider, BottomsOutAtSourceUnigramsNotUniform) {
  const TokenStream source = {0, 1, 2, 3, 4};
  const double alpha = 1e-3;
  ReplayProvider replay(source, 2, alpha, 8);
  // Token 7 never appears, so both markov levels miss.
  const std::vector<double> l = replay.logits(std::vector<TokenId>{7, 7});
  const double den = std::log(5.0 + alpha * 8.0);
  for (TokenId t = 0; t < 5; ++t)
    ASSERT_NEAR(l[t], std::log(1.0 + alpha) - den, 1e-12);
  for (TokenId t = 5; t < 8; ++t) ASSERT_NEAR(l[t], std::log(alpha) - den, 1e-12);
}

TEST(ReplayProvider, RejectsBadInputs) {
  EXPECT_THROW(ReplayProvider(TokenStream{}, 2, 0.1, 8), Error);
  EXPECT_THROW(ReplayProvider(TokenStream{0, 1}, 0, 0.1, 8), Error);
  EXPECT_THROW(ReplayProvider(TokenStream{0, 9}, 1, 0.1, 8), Error);
}

}  // namespace
