#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokenmark/error.hpp"
#include "tokenmark/types.hpp"

namespace tokenmark {

// Source of next-token logits. Implementations must be pure: the same
// context always yields the same logits, all finite, exactly vocab_size of
// them. Generation and scoring hold only const references.
class LogitProvider {
 public:
  virtual ~LogitProvider() = default;

  virtual std::uint32_t vocab_size() const = 0;
  virtual std::optional<TokenId> eos_id() const { return std::nullopt; }
  virtual void next_logits(std::span<const TokenId> context,
                           std::span<double> out) const = 0;

  std::vector<double> logits(std::span<const TokenId> context) const {
    std::vector<double> v(vocab_size());
    next_logits(context, v);
    return v;
  }
};

class UniformProvider : public LogitProvider {
 public:
  explicit UniformProvider(std::uint32_t vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size < 2) raise(ErrorKind::config, "vocab_size must be at least 2");
  }

  std::uint32_t vocab_size() const override { return vocab_size_; }

  void next_logits(std::span<const TokenId>, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }

 private:
  std::uint32_t vocab_size_;
};

// Walks a scripted token sequence: at context length L the script token
// L mod |script| gets `peak` logits, everything else 0. With a one-token
// script this is a fixed spike.
class PeakedProvider : public LogitProvider {
 public:
  PeakedProvider(std::uint32_t vocab_size, std::vector<TokenId> script,
                 double peak = 10.0)
      : vocab_size_(vocab_size), script_(std::move(script)), peak_(peak) {
    if (vocab_size < 2) raise(ErrorKind::config, "vocab_size must be at least 2");
    if (script_.empty()) raise(ErrorKind::config, "script must be non-empty");
    for (TokenId t : script_)
      if (t >= vocab_size)
        raise(ErrorKind::config, "script token outside vocabulary");
  }

  std::uint32_t vocab_size() const override { return vocab_size_; }

  void next_logits(std::span<const TokenId> context,
                   std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[script_[context.size() % script_.size()]] = peak_;
  }

 private:
  std::uint32_t vocab_size_;
  std::vector<TokenId> script_;
  double peak_;
};

// Order-n count model with add-alpha smoothing:
//
//   logit(t | ctx) = log((count(ctx, t) + alpha) / (total(ctx) + alpha*|V|))
//
// Only the last `order` context tokens matter. Unseen contexts fall back to
// the uniform distribution. Small alpha makes generation replay training
// n-grams almost verbatim; large alpha washes the model toward uniform.
class ToyMarkovLM : public LogitProvider {
 public:
  ToyMarkovLM(unsigned order, double alpha, std::uint32_t vocab_size,
              std::optional<TokenId> eos = std::nullopt)
      : order_(order), alpha_(alpha), vocab_size_(vocab_size), eos_(eos) {
    if (order < 1) raise(ErrorKind::config, "order must be at least 1");
    if (vocab_size < 2) raise(ErrorKind::config, "vocab_size must be at least 2");
    if (!(alpha > 0.0) || !std::isfinite(alpha))
      raise(ErrorKind::config, "alpha must be positive and finite");
    log_alpha_ = std::log(alpha_);
    unseen_base_ = log_alpha_ - std::log(alpha_ * vocab_size_);
  }

  // Counts every length-(order+1) window of every stream. With cyclic=true
  // each stream is treated as a ring, so its final tokens continue into its
  // beginning; a model trained cyclically on one text random-walks through
  // that text's n-grams indefinitely.
  void add_stream(std::span<const TokenId> stream, bool cyclic = false) {
    const std::size_t len = stream.size();
    if (len < order_ + 1 && !cyclic) return;
    if (cyclic && len < 2) return;
    const std::size_t windows = cyclic ? len : len - order_;
    for (std::size_t i = 0; i < windows; ++i) {
      std::string key;
      key.reserve(order_ * 4);
      for (unsigned d = 0; d < order_; ++d)
        append_token(key, stream[(i + d) % len]);
      const TokenId next = stream[(i + order_) % len];
      check_token(next);
      ++counts_[key][next];
      finalized_ = false;
    }
  }

  std::uint32_t vocab_size() const override { return vocab_size_; }
  std::optional<TokenId> eos_id() const override { return eos_; }
  unsigned order() const { return order_; }
  double alpha() const { return alpha_; }

  // True when the trailing `order` tokens of `context` were observed during
  // training.
  bool context_seen(std::span<const TokenId> context) const {
    finalize();
    return find_row(context) != nullptr;
  }

  void next_logits(std::span<const TokenId> context,
                   std::span<double> out) const override {
    finalize();
    const Row* row = find_row(context);
    if (row == nullptr) {
      std::fill(out.begin(), out.end(), unseen_base_);
      return;
    }
    std::fill(out.begin(), out.end(), log_alpha_ - row->log_den);
    for (std::size_t i = 0; i < row->tokens.size(); ++i)
      out[row->tokens[i]] = row->log_counts[i] - row->log_den;
  }

  // Log-likelihood of a stream under the model. The first `order` positions
  // have no trained context and score against the uniform fallback.
  double log_likelihood(std::span<const TokenId> stream) const {
    std::vector<double> buf(vocab_size_);
    double ll = 0.0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
      next_logits(stream.subspan(0, i), buf);
      check_token(stream[i]);
      ll += buf[stream[i]];
    }
    return ll;
  }

  nlohmann::json to_json(const std::string& vocab_hash = "") const {
    finalize();
    nlohmann::json rows = nlohmann::json::array();
    std::vector<const std::string*> keys;
    keys.reserve(counts_.size());
    for (const auto& [key, row] : counts_) keys.push_back(&key);
    std::sort(keys.begin(), keys.end(),
              [](const std::string* a, const std::string* b) { return *a < *b; });
    for (const std::string* key : keys) {
      const auto& row = counts_.at(*key);
      nlohmann::json entry;
      entry["c"] = unpack_key(*key);
      nlohmann::json cont = nlohmann::json::array();
      for (const auto& [tok, cnt] : row) cont.push_back({tok, cnt});
      entry["t"] = std::move(cont);
      rows.push_back(std::move(entry));
    }
    nlohmann::json j;
    j["format"] = "tokenmark-markov-v1";
    j["order"] = order_;
    j["alpha"] = alpha_;
    j["vocab_size"] = vocab_size_;
    if (eos_.has_value())
      j["eos_id"] = *eos_;
    else
      j["eos_id"] = nullptr;
    j["vocab_hash"] = vocab_hash;
    j["rows"] = std::move(rows);
    return j;
  }

  static ToyMarkovLM from_json(const nlohmann::json& j,
                               const std::string& expected_vocab_hash = "") {
    if (!j.is_object() || j.value("format", "") != "tokenmark-markov-v1")
      raise(ErrorKind::data, "not a tokenmark-markov-v1 document");
    std::optional<TokenId> eos;
    if (!j.at("eos_id").is_null()) eos = j.at("eos_id").get<TokenId>();
    ToyMarkovLM m(j.at("order").get<unsigned>(), j.at("alpha").get<double>(),
                  j.at("vocab_size").get<std::uint32_t>(), eos);
    const std::string stored_hash = j.value("vocab_hash", "");
    if (!expected_vocab_hash.empty() && !stored_hash.empty() &&
        stored_hash != expected_vocab_hash)
      raise(ErrorKind::protocol, "model was trained against a different vocabulary");
    for (const auto& entry : j.at("rows")) {
      std::string key;
      for (const auto& t : entry.at("c")) {
        const std::uint64_t v = t.get<std::uint64_t>();
        if (v >= m.vocab_size_) raise(ErrorKind::data, "model context token outside vocabulary");
        append_token(key, static_cast<TokenId>(v));
      }
      if (key.size() != m.order_ * 4)
        raise(ErrorKind::data, "model context length does not match order");
      auto& row = m.counts_[key];
      for (const auto& pair : entry.at("t")) {
        const TokenId tok = pair.at(0).get<TokenId>();
        m.check_token(tok);
        row[tok] += pair.at(1).get<std::uint64_t>();
      }
    }
    m.finalized_ = false;
    return m;
  }

  // Raw bigram-style statistics, used by the substitution-table builder.
  const std::map<std::string, std::map<TokenId, std::uint64_t>>& raw_counts() const {
    return counts_;
  }

  static std::vector<TokenId> unpack_key(const std::string& key) {
    std::vector<TokenId> out;
    for (std::size_t i = 0; i + 4 <= key.size(); i += 4)
      out.push_back((static_cast<TokenId>(static_cast<unsigned char>(key[i])) << 24) |
                    (static_cast<TokenId>(static_cast<unsigned char>(key[i + 1])) << 16) |
                    (static_cast<TokenId>(static_cast<unsigned char>(key[i + 2])) << 8) |
                    static_cast<TokenId>(static_cast<unsigned char>(key[i + 3])));
    return out;
  }

 private:
  struct Row {
    std::vector<TokenId> tokens;
    std::vector<double> log_counts;  // log(count + alpha), aligned with tokens
    double log_den = 0.0;            // log(total + alpha*|V|)
  };

  static void append_token(std::string& key, TokenId t) {
    key.push_back(static_cast<char>((t >> 24) & 0xFF));
    key.push_back(static_cast<char>((t >> 16) & 0xFF));
    key.push_back(static_cast<char>((t >> 8) & 0xFF));
    key.push_back(static_cast<char>(t & 0xFF));
  }

  void check_token(TokenId t) const {
    if (t >= vocab_size_)
      raise(ErrorKind::data, "token id " + std::to_string(t) +
                                 " outside vocabulary of size " +
                                 std::to_string(vocab_size_));
  }

  const Row* find_row(std::span<const TokenId> context) const {
    if (context.size() < order_) return nullptr;  // short contexts were never trained
    std::string key;
    key.reserve(order_ * 4);
    for (std::size_t i = context.size() - order_; i < context.size(); ++i) {
      if (context[i] >= vocab_size_) check_token(context[i]);
      append_token(key, context[i]);
    }
    auto it = rows_.find(key);
    return it == rows_.end() ? nullptr : &it->second;
  }

  void finalize() const {
    if (finalized_) return;
    rows_.clear();
    for (const auto& [key, cont] : counts_) {
      Row row;
      std::uint64_t total = 0;
      row.tokens.reserve(cont.size());
      row.log_counts.reserve(cont.size());
      for (const auto& [tok, cnt] : cont) {
        row.tokens.push_back(tok);
        row.log_counts.push_back(std::log(static_cast<double>(cnt) + alpha_));
        total += cnt;
      }
      row.log_den = std::log(static_cast<double>(total) +
                             alpha_ * static_cast<double>(vocab_size_));
      rows_.emplace(key, std::move(row));
    }
    finalized_ = true;
  }

  unsigned order_;
  double alpha_;
  std::uint32_t vocab_size_;
  std::optional<TokenId> eos_;
  double log_alpha_ = 0.0;
  double unseen_base_ = 0.0;
  std::map<std::string, std::map<TokenId, std::uint64_t>> counts_;
  mutable std::unordered_map<std::string, Row> rows_;
  mutable bool finalized_ = false;
};

inline ToyMarkovLM markov_train(std::span<const TokenStream> corpus, unsigned order,
                                double alpha, std::uint32_t vocab_size,
                                std::optional<TokenId> eos = std::nullopt,
                                bool cyclic = false) {
  ToyMarkovLM m(order, alpha, vocab_size, eos);
  for (const TokenStream& stream : corpus) m.add_stream(stream, cyclic);
  return m;
}

// Paraphrase model fitted to a single source stream: a backoff chain of
// cyclically trained n-gram models, answering each query from the longest
// context the source actually contains (bottoming out at the source's
// unigram distribution). When a sampling step leaves the source's n-gram
// graph, the next query re-anchors onto the source instead of falling to
// the uniform distribution, so generation keeps reproducing source n-grams.
class ReplayProvider : public LogitProvider {
 public:
  ReplayProvider(std::span<const TokenId> source, unsigned order, double alpha,
                 std::uint32_t vocab_size)
      : vocab_size_(vocab_size), unigram_logits_(vocab_size) {
    if (order < 1) raise(ErrorKind::config, "order must be at least 1");
    if (source.empty())
      raise(ErrorKind::too_short, "replay source must not be empty");
    levels_.reserve(order);
    for (unsigned o = order; o >= 1; --o) {
      ToyMarkovLM level(o, alpha, vocab_size);
      level.add_stream(source, /*cyclic=*/true);
      levels_.push_back(std::move(level));
    }
    std::vector<std::uint64_t> counts(vocab_size, 0);
    for (TokenId t : source) {
      if (t >= vocab_size)
        raise(ErrorKind::data, "token id " + std::to_string(t) +
                                   " outside vocabulary of size " +
                                   std::to_string(vocab_size));
      ++counts[t];
    }
    const double den = std::log(static_cast<double>(source.size()) +
                                alpha * static_cast<double>(vocab_size));
    for (std::uint32_t v = 0; v < vocab_size; ++v)
      unigram_logits_[v] =
          std::log(static_cast<double>(counts[v]) + alpha) - den;
  }

  std::uint32_t vocab_size() const override { return vocab_size_; }

  void next_logits(std::span<const TokenId> context,
                   std::span<double> out) const override {
    for (const ToyMarkovLM& level : levels_) {
      if (level.context_seen(context)) {
        level.next_logits(context, out);
        return;
      }
    }
    std::copy(unigram_logits_.begin(), unigram_logits_.end(), out.begin());
  }

 private:
  std::uint32_t vocab_size_;
  std::vector<ToyMarkovLM> levels_;
  std::vector<double> unigram_logits_;
};

}  // namespace tokenmark
