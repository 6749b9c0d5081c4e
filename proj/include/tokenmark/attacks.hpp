#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokenmark/error.hpp"
#include "tokenmark/generate.hpp"
#include "tokenmark/params.hpp"
#include "tokenmark/provider.hpp"
#include "tokenmark/rng.hpp"
#include "tokenmark/types.hpp"

namespace tokenmark {

// `requested` is how many edits the rate asked for, `applied` how many
// actually landed, `skipped` how many could not land (e.g. no substitution
// candidates for the token drawn). `warning` is empty unless the attack left
// the stream in a degenerate state the caller should know about.
struct AttackResult {
  TokenStream tokens;
  std::uint64_t requested = 0;
  std::uint64_t applied = 0;
  std::uint64_t skipped = 0;
  std::string warning;
};

namespace detail {

inline void check_rate(double rate, bool allow_one) {
  if (!(rate >= 0.0 && rate <= 1.0) || (!allow_one && rate == 1.0))
    raise(ErrorKind::config, allow_one ? "attack rate must lie in [0, 1]"
                                       : "attack rate must lie in [0, 1)");
}

// First m entries of a uniformly random m-subset of [0, len), selection
// order. Partial Fisher-Yates over an index array.
inline std::vector<std::size_t> draw_positions(std::size_t len, std::size_t m,
                                               SplitMix64& rng) {
  std::vector<std::size_t> idx(len);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.next_below(
                static_cast<std::uint64_t>(len - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  return idx;
}

}  // namespace detail

// Inserts floor(rate * len) uniformly random tokens at uniformly random
// positions, one at a time (later draws see earlier insertions). Rate 1
// would double the stream rather than touch every token, so it is excluded.
inline AttackResult insertion_attack(const TokenStream& input, double rate,
                                     std::uint32_t vocab_size,
                                     std::uint64_t seed) {
  detail::check_rate(rate, /*allow_one=*/false);
  if (vocab_size < 1) raise(ErrorKind::config, "vocab_size must be positive");
  AttackResult result;
  result.tokens = input;
  result.requested =
      static_cast<std::uint64_t>(rate * static_cast<double>(input.size()));
  SplitMix64 rng(seed);
  for (std::uint64_t i = 0; i < result.requested; ++i) {
    const std::size_t pos = static_cast<std::size_t>(
        rng.next_below(static_cast<std::uint64_t>(result.tokens.size()) + 1));
    const TokenId tok = static_cast<TokenId>(rng.next_below(vocab_size));
    result.tokens.insert(result.tokens.begin() +
                             static_cast<std::ptrdiff_t>(pos),
                         tok);
  }
  result.applied = result.requested;
  return result;
}

// Removes floor(rate * len) distinct uniformly random positions. Callers
// that need a minimum surviving length to stay scorable (the counting
// window width, typically) pass it as `min_length`; a shorter survivor
// carries a warning rather than an error.
inline AttackResult deletion_attack(const TokenStream& input, double rate,
                                    std::uint64_t seed,
                                    std::size_t min_length = 1) {
  detail::check_rate(rate, /*allow_one=*/true);
  AttackResult result;
  result.tokens = input;
  const std::size_t m =
      static_cast<std::size_t>(rate * static_cast<double>(input.size()));
  result.requested = m;
  SplitMix64 rng(seed);
  std::vector<std::size_t> positions =
      detail::draw_positions(input.size(), m, rng);
  std::sort(positions.begin(), positions.end(),
            std::greater<std::size_t>());
  for (std::size_t pos : positions)
    result.tokens.erase(result.tokens.begin() +
                        static_cast<std::ptrdiff_t>(pos));
  result.applied = m;
  if (result.tokens.size() < min_length)
    result.warning =
        result.tokens.empty()
            ? "deletion removed every token"
            : "deletion left " + std::to_string(result.tokens.size()) +
                  " tokens, fewer than the minimum " +
                  std::to_string(min_length);
  return result;
}

// Maps a token to plausible same-context replacements, most similar first.
struct SubstitutionTable {
  std::uint32_t vocab_size = 0;
  std::map<TokenId, std::vector<TokenId>> entries;

  const std::vector<TokenId>* lookup(TokenId t) const {
    const auto it = entries.find(t);
    return it == entries.end() ? nullptr : &it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "tokenmark-subst-v1";
    j["vocab_size"] = vocab_size;
    nlohmann::json e = nlohmann::json::object();
    for (const auto& [tok, cands] : entries)
      e[std::to_string(tok)] = cands;
    j["entries"] = std::move(e);
    return j;
  }

  static SubstitutionTable from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::data, std::string("substitution table is not valid JSON: ") +
                                 e.what());
    }
    if (!j.is_object() || j.value("format", "") != "tokenmark-subst-v1")
      raise(ErrorKind::data, "substitution table has unknown format");
    SubstitutionTable table;
    if (!j.contains("vocab_size") || !j["vocab_size"].is_number_unsigned())
      raise(ErrorKind::data, "substitution table lacks vocab_size");
    table.vocab_size = j["vocab_size"].get<std::uint32_t>();
    if (!j.contains("entries") || !j["entries"].is_object())
      raise(ErrorKind::data, "substitution table lacks entries");
    for (const auto& [key, value] : j["entries"].items()) {
      TokenId tok = 0;
      try {
        const unsigned long parsed = std::stoul(key);
        if (parsed >= table.vocab_size) throw std::out_of_range("id");
        tok = static_cast<TokenId>(parsed);
      } catch (const std::exception&) {
        raise(ErrorKind::data, "substitution table key '" + key +
                                   "' is not a token id in range");
      }
      if (!value.is_array())
        raise(ErrorKind::data, "substitution candidates must be an array");
      std::vector<TokenId> cands;
      for (const auto& c : value) {
        if (!c.is_number_unsigned() ||
            c.get<std::uint64_t>() >= table.vocab_size)
          raise(ErrorKind::data, "substitution candidate out of range");
        cands.push_back(c.get<TokenId>());
      }
      if (cands.empty())
        raise(ErrorKind::data, "substitution candidate list for token '" +
                                   key + "' is empty");
      if (std::all_of(cands.begin(), cands.end(),
                      [&](TokenId c) { return c == tok; }))
        raise(ErrorKind::data,
              "token '" + key + "' may not map only to itself");
      table.entries.emplace(tok, std::move(cands));
    }
    return table;
  }
};

// Ranks replacement candidates by cosine similarity between left-context
// occurrence profiles: tokens that follow the same predecessors with similar
// relative frequency swap well. Per-context successor lists are truncated to
// the heaviest `max_context_fanout` entries to bound the pair accumulation.
inline SubstitutionTable build_substitution_table(
    std::span<const TokenStream> streams, std::uint32_t vocab_size,
    unsigned top_k = 4, unsigned max_context_fanout = 128) {
  if (vocab_size < 2) raise(ErrorKind::config, "vocab_size must be at least 2");
  if (top_k < 1) raise(ErrorKind::config, "top_k must be at least 1");

  // contexts[prev] = (successor, count), built from bigram occurrences.
  std::vector<std::map<TokenId, std::uint64_t>> contexts(vocab_size);
  for (const TokenStream& s : streams) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (s[i - 1] >= vocab_size || s[i] >= vocab_size)
        raise(ErrorKind::data, "token id outside vocabulary");
      ++contexts[s[i - 1]][s[i]];
    }
  }

  struct Hit {
    TokenId context;
    std::uint64_t count;
  };
  std::vector<std::vector<Hit>> profile(vocab_size);  // token -> its contexts
  std::vector<std::vector<std::pair<TokenId, std::uint64_t>>> fanout(
      vocab_size);  // context -> truncated successor list
  std::vector<double> norm(vocab_size, 0.0);
  for (std::uint32_t prev = 0; prev < vocab_size; ++prev) {
    auto& list = fanout[prev];
    list.assign(contexts[prev].begin(), contexts[prev].end());
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (list.size() > max_context_fanout) list.resize(max_context_fanout);
    for (const auto& [succ, cnt] : contexts[prev]) {
      profile[succ].push_back({static_cast<TokenId>(prev), cnt});
      norm[succ] += static_cast<double>(cnt) * static_cast<double>(cnt);
    }
  }
  for (double& v : norm) v = std::sqrt(v);

  SubstitutionTable table;
  table.vocab_size = vocab_size;
  std::vector<double> acc(vocab_size, 0.0);
  std::vector<TokenId> touched;
  for (std::uint32_t t = 0; t < vocab_size; ++t) {
    if (profile[t].empty()) continue;
    touched.clear();
    for (const Hit& hit : profile[t]) {
      const auto it = contexts[hit.context].find(t);
      const double weight = static_cast<double>(it->second);
      for (const auto& [succ, cnt] : fanout[hit.context]) {
        if (succ == t) continue;
        if (acc[succ] == 0.0) touched.push_back(succ);
        acc[succ] += weight * static_cast<double>(cnt);
      }
    }
    std::vector<std::pair<double, TokenId>> ranked;
    ranked.reserve(touched.size());
    for (TokenId s : touched) {
      ranked.emplace_back(acc[s] / (norm[t] * norm[s]), s);
      acc[s] = 0.0;
    }
    const std::size_t keep = std::min<std::size_t>(top_k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + keep, ranked.end(),
                      [](const auto& a, const auto& b) {
                        return a.first != b.first ? a.first > b.first
                                                  : a.second < b.second;
                      });
    if (keep == 0) continue;
    std::vector<TokenId> cands;
    for (std::size_t i = 0; i < keep; ++i) cands.push_back(ranked[i].second);
    table.entries.emplace(t, std::move(cands));
  }
  return table;
}

// Replaces floor(rate * len) distinct positions with a uniformly drawn
// candidate from the table; positions whose token has no candidates are
// counted as skipped and left unchanged.
inline AttackResult substitution_attack(const TokenStream& input, double rate,
                                        const SubstitutionTable& table,
                                        std::uint64_t seed) {
  detail::check_rate(rate, /*allow_one=*/true);
  AttackResult result;
  result.tokens = input;
  const std::size_t m =
      static_cast<std::size_t>(rate * static_cast<double>(input.size()));
  result.requested = m;
  SplitMix64 rng(seed);
  std::vector<std::size_t> positions =
      detail::draw_positions(input.size(), m, rng);
  std::sort(positions.begin(), positions.end());
  for (std::size_t pos : positions) {
    const std::vector<TokenId>* cands = table.lookup(result.tokens[pos]);
    if (cands == nullptr || cands->empty()) {
      ++result.skipped;
      continue;
    }
    const std::size_t pick = static_cast<std::size_t>(
        rng.next_below(static_cast<std::uint64_t>(cands->size())));
    result.tokens[pos] = (*cands)[pick];
    ++result.applied;
  }
  return result;
}

// Re-generates the stream through a replay model fitted to the input alone,
// while embedding a second watermark. Replayed steps reproduce the input's
// n-grams and keep the first watermark's counts largely intact; steps where
// the second perturbation overrides the replay carry the second watermark.
inline AttackResult overlap_attack(const TokenStream& input,
                                   const WatermarkId& mu2,
                                   WatermarkParams params, unsigned order,
                                   double alpha, PermutationEngine& engine) {
  if (input.empty()) raise(ErrorKind::too_short, "cannot paraphrase an empty stream");
  ReplayProvider replay(input, order, alpha, params.vocab_size);
  const std::size_t ctx_len = std::min<std::size_t>(order, input.size());
  const TokenStream context(input.begin(),
                            input.begin() + static_cast<std::ptrdiff_t>(ctx_len));
  params.sampling.max_tokens =
      input.size() > ctx_len ? input.size() - ctx_len : 1;
  const StreamResult generated =
      watermark_stream(context, mu2, params, replay, engine);
  AttackResult result;
  result.tokens = context;
  result.tokens.insert(result.tokens.end(), generated.tokens.begin(),
                       generated.tokens.end());
  result.requested = input.size();
  result.applied = result.tokens.size();
  return result;
}

}  // namespace tokenmark
