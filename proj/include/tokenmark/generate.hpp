#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tokenmark/basis.hpp"
#include "tokenmark/error.hpp"
#include "tokenmark/keying.hpp"
#include "tokenmark/manifest.hpp"
#include "tokenmark/params.hpp"
#include "tokenmark/permutation.hpp"
#include "tokenmark/provider.hpp"
#include "tokenmark/rng.hpp"
#include "tokenmark/vocab.hpp"

namespace tokenmark {

namespace detail {

inline void check_finite_logits(std::span<const double> logits) {
  for (double v : logits)
    if (!std::isfinite(v))
      raise(ErrorKind::provider, "provider produced a non-finite logit");
}

// Greedy pick: highest logit, ties to the smallest id.
inline TokenId argmax_token(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<TokenId>(best);
}

// One token from softmax(logits / temperature), optionally truncated to the
// smallest prefix of probability mass >= top_p. Exactly one RNG draw per
// call, so generation with and without nucleus truncation stays seed-aligned.
inline TokenId sample_multinomial(std::span<const double> logits,
                                  double temperature, double top_p,
                                  SplitMix64& rng) {
  const std::size_t n = logits.size();
  const double inv_t = 1.0 / temperature;
  double max_logit = logits[0];
  for (double v : logits) max_logit = std::max(max_logit, v);
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp((logits[i] - max_logit) * inv_t);
    total += w[i];
  }
  const double u = rng.next_unit();
  if (top_p >= 1.0) {
    double acc = 0.0;
    const double target = u * total;
    for (std::size_t i = 0; i < n; ++i) {
      acc += w[i];
      if (target < acc) return static_cast<TokenId>(i);
    }
    return static_cast<TokenId>(n - 1);  // guard against rounding at the top
  }
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (w[a] != w[b]) return w[a] > w[b];
    return a < b;
  });
  double kept = 0.0;
  std::size_t cut = 0;
  const double target_mass = top_p * total;
  while (cut < n) {
    kept += w[order[cut]];
    ++cut;
    if (kept >= target_mass) break;
  }
  double acc = 0.0;
  const double target = u * kept;
  for (std::size_t i = 0; i < cut; ++i) {
    acc += w[order[i]];
    if (target < acc) return order[i];
  }
  return order[cut - 1];
}

inline TokenId sample_token(std::span<const double> logits,
                            const SamplingConfig& cfg, SplitMix64& rng) {
  if (cfg.strategy == SampleStrategy::greedy) return argmax_token(logits);
  return sample_multinomial(logits, cfg.temperature, cfg.top_p, rng);
}

// Key prefix for the next position: the last n-1 tokens of context plus
// generated output. At the start of the stream the window is padded from the
// context tail; with no context it simply shortens.
inline std::vector<TokenId> current_prefix(std::span<const TokenId> context,
                                           const TokenStream& generated,
                                           unsigned n) {
  const std::size_t want = n - 1;
  std::vector<TokenId> prefix;
  prefix.reserve(want);
  const std::size_t from_gen = std::min<std::size_t>(want, generated.size());
  const std::size_t from_ctx =
      std::min<std::size_t>(want - from_gen, context.size());
  for (std::size_t i = context.size() - from_ctx; i < context.size(); ++i)
    prefix.push_back(context[i]);
  for (std::size_t i = generated.size() - from_gen; i < generated.size(); ++i)
    prefix.push_back(generated[i]);
  return prefix;
}

inline void check_setup(const WatermarkParams& params,
                        const LogitProvider& provider,
                        const PermutationEngine& engine) {
  params.validate();
  if (provider.vocab_size() != params.vocab_size)
    raise(ErrorKind::config, "provider vocab_size " +
                                 std::to_string(provider.vocab_size()) +
                                 " does not match params vocab_size " +
                                 std::to_string(params.vocab_size));
  if (engine.vocab_size() != params.vocab_size)
    raise(ErrorKind::config, "engine vocab_size does not match params");
  if (engine.backend() != params.backend)
    raise(ErrorKind::protocol, "engine backend " + to_string(engine.backend()) +
                                   " does not match params backend " +
                                   to_string(params.backend));
}

}  // namespace detail

struct StreamResult {
  TokenStream tokens;
  WatermarkManifest manifest;
};

inline WatermarkManifest make_manifest(const WatermarkId& mu,
                                       const WatermarkParams& params,
                                       const std::string& tokenizer_id) {
  WatermarkManifest m;
  m.mu = mu;
  m.k_p = params.k_p;
  m.kappa = params.kappa;
  m.n = params.n;
  m.family = params.family;
  m.backend = params.backend;
  m.vocab_size = params.vocab_size;
  m.tokenizer_id = tokenizer_id;
  m.rng_seed = params.sampling.rng_seed;
  return m;
}

// Unwatermarked baseline: same provider, same sampling, no perturbation.
inline TokenStream sample_stream(std::span<const TokenId> context,
                                 const WatermarkParams& params,
                                 const LogitProvider& provider) {
  params.validate();
  if (provider.vocab_size() != params.vocab_size)
    raise(ErrorKind::config, "provider vocab_size does not match params");
  SplitMix64 rng(params.sampling.rng_seed);
  std::vector<TokenId> full(context.begin(), context.end());
  TokenStream out;
  std::vector<double> logits(params.vocab_size);
  for (std::size_t step = 0; step < params.sampling.max_tokens; ++step) {
    provider.next_logits(full, logits);
    detail::check_finite_logits(logits);
    const TokenId tok = detail::sample_token(logits, params.sampling, rng);
    if (provider.eos_id().has_value() && tok == *provider.eos_id()) break;
    out.push_back(tok);
    full.push_back(tok);
  }
  return out;
}

// Watermarked generation. Every step keys the vocabulary permutation with
// (mu, previous n-1 tokens), adds kappa times the basis vector in permuted
// space (fused into one pass), then samples. The sampled <eos> terminates
// the stream and is not emitted, so downstream counting never sees it.
inline StreamResult watermark_stream(std::span<const TokenId> context,
                                     const WatermarkId& mu,
                                     const WatermarkParams& params,
                                     const LogitProvider& provider,
                                     PermutationEngine& engine,
                                     const std::string& tokenizer_id = "raw-v1") {
  detail::check_setup(params, provider, engine);
  const BasisEvaluator basis(params.family, params.vocab_size, params.k_p);
  SplitMix64 rng(params.sampling.rng_seed);
  std::vector<TokenId> full(context.begin(), context.end());
  TokenStream out;
  std::vector<double> logits(params.vocab_size);
  std::vector<double> perturbed(params.vocab_size);
  for (std::size_t step = 0; step < params.sampling.max_tokens; ++step) {
    provider.next_logits(full, logits);
    detail::check_finite_logits(logits);
    const std::vector<TokenId> prefix =
        detail::current_prefix(context, out, params.n);
    const PermKey key = derive_perm_key(mu, prefix);
    const auto perm = engine.materialize(key);
    for (std::size_t t = 0; t < logits.size(); ++t)
      perturbed[t] = logits[t] + params.kappa * basis(perm->forward[t]);
    const TokenId tok = detail::sample_token(perturbed, params.sampling, rng);
    if (provider.eos_id().has_value() && tok == *provider.eos_id()) break;
    out.push_back(tok);
    full.push_back(tok);
  }
  return {std::move(out), make_manifest(mu, params, tokenizer_id)};
}

// Beam-search variant. Candidate extensions are ranked by the perturbed
// logits (so a width-1 greedy beam reproduces greedy watermark_stream), while
// whole hypotheses are ranked by
//
//   sum_j [ log softmax(L_j)(w_j) + beam_lambda * kappa * phi(pi(w_j)) ]
//
// trading base-model likelihood against accumulated watermark signal.
inline StreamResult beam_watermark(std::span<const TokenId> context,
                                   const WatermarkId& mu,
                                   const WatermarkParams& params,
                                   const LogitProvider& provider,
                                   PermutationEngine& engine,
                                   const std::string& tokenizer_id = "raw-v1") {
  detail::check_setup(params, provider, engine);
  const BasisEvaluator basis(params.family, params.vocab_size, params.k_p);
  const unsigned width = params.sampling.beam_width;
  const double lambda = params.sampling.beam_lambda;

  struct Hyp {
    TokenStream tokens;
    double score = 0.0;
    bool done = false;
  };
  const auto better = [](const Hyp& a, const Hyp& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;  // deterministic tie-break
  };

  std::vector<Hyp> beam{Hyp{}};
  std::vector<double> logits(params.vocab_size);
  for (std::size_t step = 0; step < params.sampling.max_tokens; ++step) {
    bool any_live = false;
    std::vector<Hyp> pool;
    for (const Hyp& hyp : beam) {
      if (hyp.done) {
        pool.push_back(hyp);
        continue;
      }
      any_live = true;
      std::vector<TokenId> full(context.begin(), context.end());
      full.insert(full.end(), hyp.tokens.begin(), hyp.tokens.end());
      provider.next_logits(full, logits);
      detail::check_finite_logits(logits);
      const std::vector<TokenId> prefix =
          detail::current_prefix(context, hyp.tokens, params.n);
      const auto perm = engine.materialize(derive_perm_key(mu, prefix));

      std::vector<double> bumped(params.vocab_size);
      for (std::size_t t = 0; t < logits.size(); ++t)
        bumped[t] = logits[t] + params.kappa * basis(perm->forward[t]);
      // log softmax normalizer of the *base* logits.
      double base_max = logits[0];
      for (double v : logits) base_max = std::max(base_max, v);
      double z = 0.0;
      for (double v : logits) z += std::exp(v - base_max);
      const double log_z = base_max + std::log(z);

      std::vector<std::uint32_t> order(params.vocab_size);
      std::iota(order.begin(), order.end(), 0);
      const std::size_t take = std::min<std::size_t>(width, order.size());
      std::partial_sort(order.begin(), order.begin() + take, order.end(),
                        [&](std::uint32_t a, std::uint32_t b) {
                          if (bumped[a] != bumped[b]) return bumped[a] > bumped[b];
                          return a < b;
                        });
      for (std::size_t c = 0; c < take; ++c) {
        const TokenId tok = order[c];
        Hyp next = hyp;
        const double bonus = params.kappa * basis(perm->forward[tok]);
        next.score += (logits[tok] - log_z) + lambda * bonus;
        if (provider.eos_id().has_value() && tok == *provider.eos_id()) {
          next.done = true;  // <eos> closes the hypothesis and is not emitted
        } else {
          next.tokens.push_back(tok);
        }
        pool.push_back(std::move(next));
      }
    }
    if (!any_live) break;
    std::sort(pool.begin(), pool.end(), better);
    if (pool.size() > width) pool.resize(width);
    beam = std::move(pool);
  }
  const Hyp* best = &beam.front();
  for (const Hyp& h : beam)
    if (better(h, *best)) best = &h;
  return {best->tokens, make_manifest(mu, params, tokenizer_id)};
}

struct TextResult {
  std::string text;
  TokenStream tokens;
  WatermarkManifest manifest;
};

// Text-level convenience: tokenize, prepend the vocabulary's context marker,
// generate with the provider conditioned on the input, detokenize.
inline TextResult watermark_text(const std::string& text, const WatermarkId& mu,
                                 const WatermarkParams& params,
                                 const LogitProvider& provider,
                                 const VocabModel& vocab,
                                 PermutationEngine& engine) {
  if (vocab.size() != params.vocab_size)
    raise(ErrorKind::config, "vocab size does not match params vocab_size");
  TokenStream context = vocab.encode(text);
  if (context.empty())
    raise(ErrorKind::data, "input text tokenizes to nothing");
  if (vocab.bos_id().has_value())
    context.insert(context.begin(), *vocab.bos_id());
  StreamResult res =
      params.sampling.strategy == SampleStrategy::beam
          ? beam_watermark(context, mu, params, provider, engine,
                           vocab.tokenizer_id())
          : watermark_stream(context, mu, params, provider, engine,
                             vocab.tokenizer_id());
  return {vocab.decode(res.tokens), std::move(res.tokens),
          std::move(res.manifest)};
}

}  // namespace tokenmark
