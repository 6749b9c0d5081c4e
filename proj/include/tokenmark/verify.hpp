#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokenmark/basis.hpp"
#include "tokenmark/error.hpp"
#include "tokenmark/keying.hpp"
#include "tokenmark/params.hpp"
#include "tokenmark/permutation.hpp"
#include "tokenmark/types.hpp"

namespace tokenmark {

// Occurrence counts in permuted-vocabulary space. Position i >= n-1
// contributes one increment at the slot of token i under the permutation
// keyed by (mu, tokens[i-n+1 .. i-1]); the first n-1 positions have no
// in-stream prefix and are skipped. Duplicate n-grams count every time.
inline CountVector count_tokens(std::span<const TokenId> tokens,
                                const WatermarkId& mu, unsigned n,
                                PermutationEngine& engine) {
  if (n < 1) raise(ErrorKind::config, "n must be at least 1");
  if (tokens.size() < n)
    raise(ErrorKind::too_short,
          "stream of " + std::to_string(tokens.size()) +
              " tokens is shorter than the n-gram window n=" + std::to_string(n));
  const std::uint32_t vocab = engine.vocab_size();
  for (TokenId t : tokens)
    if (t >= vocab)
      raise(ErrorKind::data, "token id " + std::to_string(t) +
                                 " outside vocabulary of size " +
                                 std::to_string(vocab));
  CountVector cv;
  cv.counts.assign(vocab, 0);
  cv.mu_hex = mu.hex();
  cv.window_n = n;
  cv.backend = to_string(engine.backend());

  if (n == 2) {
    // Hot path: the key depends only on the previous token, so memoize the
    // derived key per token id instead of hashing at every position.
    std::vector<std::uint64_t> key_of(vocab, 0);
    std::vector<bool> have(vocab, false);
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const TokenId prev = tokens[i - 1];
      if (!have[prev]) {
        const TokenId pfx[1] = {prev};
        key_of[prev] = derive_perm_key(mu, pfx).value;
        have[prev] = true;
      }
      ++cv.counts[engine.forward_index(PermKey{key_of[prev]}, tokens[i])];
    }
  } else {
    for (std::size_t i = n - 1; i < tokens.size(); ++i) {
      const auto prefix = tokens.subspan(i - (n - 1), n - 1);
      const PermKey key = derive_perm_key(mu, prefix);
      ++cv.counts[engine.forward_index(key, tokens[i])];
    }
  }
  cv.n_counted = tokens.size() - (n - 1);
  return cv;
}

// q = < counts / n_counted , phi / ||phi|| >. Positive when occupancy leans
// toward the positive half of the basis vector; ~N(0, 1/(n_counted*|V|))
// for text that never saw this key.
inline double score(const CountVector& cv, PerturbFamily family,
                    std::uint32_t k_p) {
  if (cv.n_counted < 1)
    raise(ErrorKind::too_short, "count vector has no counted positions");
  const std::uint32_t vocab = static_cast<std::uint32_t>(cv.counts.size());
  const BasisEvaluator basis(family, vocab, k_p);
  double acc = 0.0;
  for (std::uint32_t v = 0; v < vocab; ++v)
    if (cv.counts[v] != 0)
      acc += static_cast<double>(cv.counts[v]) * basis(v);
  return acc / (static_cast<double>(cv.n_counted) * basis.norm());
}

// Empirical (1 - fpr) quantile of the null scores, with midpoint
// interpolation when the quantile falls exactly between two order
// statistics. Needs enough nulls for the tail to mean anything.
inline double calibrate_threshold(std::vector<double> null_scores, double fpr) {
  if (null_scores.size() < 100)
    raise(ErrorKind::config,
          "threshold calibration needs at least 100 null scores, got " +
              std::to_string(null_scores.size()));
  if (!(fpr > 0.0) || !(fpr < 1.0))
    raise(ErrorKind::config, "fpr must lie strictly between 0 and 1");
  for (double s : null_scores)
    if (!std::isfinite(s))
      raise(ErrorKind::data, "null scores must be finite");
  std::sort(null_scores.begin(), null_scores.end());
  const std::size_t n = null_scores.size();
  const double kf = (1.0 - fpr) * static_cast<double>(n);
  const double rounded = std::nearbyint(kf);
  if (std::abs(kf - rounded) < 1e-9 * static_cast<double>(n)) {
    const std::size_t k = static_cast<std::size_t>(rounded);
    if (k < 1) return null_scores.front();
    if (k >= n) return null_scores.back();
    return 0.5 * (null_scores[k - 1] + null_scores[k]);
  }
  const std::size_t k = static_cast<std::size_t>(std::ceil(kf));
  if (k < 1) return null_scores.front();
  if (k > n) return null_scores.back();
  return null_scores[k - 1];
}

// Either a fixed decision threshold or "calibrate to this false-positive
// rate against these null scores".
struct ThresholdSpec {
  double fixed_value = 0.0;
  std::optional<double> fpr;
  std::vector<double> null_scores;

  static ThresholdSpec fixed(double v) { return {v, std::nullopt, {}}; }
  static ThresholdSpec at_fpr(double fpr, std::vector<double> nulls) {
    return {0.0, fpr, std::move(nulls)};
  }

  double resolve() const {
    if (!fpr.has_value()) return fixed_value;
    return calibrate_threshold(null_scores, *fpr);
  }
};

struct NullStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t samples = 0;
};

struct VerificationReport {
  std::string mu_hex;
  std::uint32_t k_p = 0;
  double q = 0.0;
  std::uint64_t n_counted = 0;
  double threshold = 0.0;
  bool decision = false;
  std::string family;
  std::string backend;
  std::uint32_t vocab_size = 0;
  std::optional<NullStats> null_stats;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["backend"] = backend;
    j["decision"] = decision;
    j["family"] = family;
    j["k_p"] = k_p;
    j["mu"] = mu_hex;
    j["n_counted"] = n_counted;
    j["q"] = q;
    j["threshold"] = threshold;
    j["vocab_size"] = vocab_size;
    if (null_stats.has_value()) {
      j["null_stats"] = {{"mean", null_stats->mean},
                         {"stddev", null_stats->stddev},
                         {"samples", null_stats->samples}};
    }
    return j;
  }
};

// Full verification of one stream against one (mu, k_p) pair.
inline VerificationReport verify(std::span<const TokenId> tokens,
                                 const WatermarkId& mu, std::uint32_t k_p,
                                 const WatermarkParams& params,
                                 PermutationEngine& engine,
                                 const ThresholdSpec& threshold) {
  check_key(params.family, params.vocab_size, k_p);
  if (engine.vocab_size() != params.vocab_size)
    raise(ErrorKind::config, "engine vocab_size does not match params");
  if (engine.backend() != params.backend)
    raise(ErrorKind::protocol, "engine backend does not match params backend");
  const CountVector cv = count_tokens(tokens, mu, params.n, engine);
  VerificationReport report;
  report.mu_hex = mu.hex();
  report.k_p = k_p;
  report.q = score(cv, params.family, k_p);
  report.n_counted = cv.n_counted;
  report.threshold = threshold.resolve();
  report.decision = report.q >= report.threshold;
  report.family = to_string(params.family);
  report.backend = to_string(params.backend);
  report.vocab_size = params.vocab_size;
  if (threshold.fpr.has_value() && !threshold.null_scores.empty()) {
    NullStats ns;
    ns.samples = threshold.null_scores.size();
    double mean = 0.0;
    for (double s : threshold.null_scores) mean += s;
    mean /= static_cast<double>(ns.samples);
    double var = 0.0;
    for (double s : threshold.null_scores) var += (s - mean) * (s - mean);
    ns.mean = mean;
    ns.stddev = ns.samples > 1
                    ? std::sqrt(var / static_cast<double>(ns.samples - 1))
                    : 0.0;
    report.null_stats = ns;
  }
  return report;
}

}  // namespace tokenmark
