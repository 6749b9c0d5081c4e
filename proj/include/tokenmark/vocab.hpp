#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokenmark/bytes.hpp"
#include "tokenmark/error.hpp"
#include "tokenmark/keying.hpp"
#include "tokenmark/types.hpp"

namespace tokenmark {

enum class OovPolicy { reserved_token, byte_fallback };

inline std::string to_string(OovPolicy p) {
  return p == OovPolicy::reserved_token ? "reserved-oov-token" : "byte-fallback";
}

inline OovPolicy parse_oov_policy(const std::string& s) {
  if (s == "reserved-oov-token") return OovPolicy::reserved_token;
  if (s == "byte-fallback") return OovPolicy::byte_fallback;
  raise(ErrorKind::config, "unknown oov policy \"" + s + "\"");
}

// Maps text to dense token ids < |V| and back. Two tokenizers:
//  - byte-v1: ids are raw byte values, |V| = 256, no reserved tokens;
//  - word-v1: whitespace-separated words with reserved <bos>/<eos> markers
//    and either a reserved <oov> id or per-byte fallback ids for unknown
//    words.
// decode is a right-inverse of encode on id streams: encode(decode(ids))
// returns ids unchanged.
class VocabModel {
 public:
  static VocabModel byte_vocab() {
    VocabModel v;
    v.kind_ = Kind::byte;
    return v;
  }

  // Builds the word vocabulary from whitespace-tokenized text. Keeps the
  // max_size most frequent words (ties broken lexicographically) after the
  // reserved entries; everything else encodes via the oov policy.
  static VocabModel word_vocab(const std::string& corpus_text,
                               std::size_t max_size,
                               OovPolicy policy = OovPolicy::reserved_token) {
    std::map<std::string, std::uint64_t> freq;
    for (const std::string& w : split_words(corpus_text)) ++freq[w];
    std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    VocabModel v;
    v.kind_ = Kind::word;
    v.policy_ = policy;
    v.push_token("<bos>");
    v.push_token("<eos>");
    if (policy == OovPolicy::reserved_token) v.push_token("<oov>");
    if (policy == OovPolicy::byte_fallback)
      for (unsigned b = 0; b < 256; ++b) v.push_token(byte_token_string(static_cast<std::uint8_t>(b)));
    if (max_size < v.tokens_.size())
      raise(ErrorKind::config, "vocab size cap " + std::to_string(max_size) +
                                   " below the " + std::to_string(v.tokens_.size()) +
                                   " reserved entries");
    for (const auto& [word, count] : ranked) {
      if (v.tokens_.size() >= max_size) break;
      if (!v.index_.contains(word)) v.push_token(word);
    }
    return v;
  }

  std::uint32_t size() const {
    return kind_ == Kind::byte ? 256u : static_cast<std::uint32_t>(tokens_.size());
  }

  std::optional<TokenId> bos_id() const {
    return kind_ == Kind::word ? std::optional<TokenId>(0) : std::nullopt;
  }
  std::optional<TokenId> eos_id() const {
    return kind_ == Kind::word ? std::optional<TokenId>(1) : std::nullopt;
  }
  std::optional<TokenId> oov_id() const {
    return kind_ == Kind::word && policy_ == OovPolicy::reserved_token
               ? std::optional<TokenId>(2)
               : std::nullopt;
  }

  // Stable identifier recorded in manifests; verification refuses to pair a
  // manifest with a different tokenizer.
  std::string tokenizer_id() const {
    if (kind_ == Kind::byte) return "byte-v1";
    return "word-v1:" + vocab_hash().substr(0, 16);
  }

  std::string vocab_hash() const {
    Bytes blob;
    blob.push_back(policy_ == OovPolicy::reserved_token ? 0 : 1);
    for (const std::string& t : tokens_) {
      append_u32_be(blob, static_cast<std::uint32_t>(t.size()));
      blob.insert(blob.end(), t.begin(), t.end());
    }
    return to_hex(sha256(blob));
  }

  TokenStream encode(const std::string& text) const {
    TokenStream out;
    if (kind_ == Kind::byte) {
      out.reserve(text.size());
      for (unsigned char c : text) out.push_back(c);
      return out;
    }
    for (const std::string& w : split_words(text)) {
      auto it = index_.find(w);
      if (it != index_.end()) {
        out.push_back(it->second);
      } else if (policy_ == OovPolicy::reserved_token) {
        out.push_back(*oov_id());
      } else {
        for (unsigned char c : w)
          out.push_back(index_.at(byte_token_string(c)));
      }
    }
    return out;
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    if (kind_ == Kind::byte) {
      for (TokenId id : ids) {
        if (id >= 256) raise_range(id);
        out.push_back(static_cast<char>(id));
      }
      return out;
    }
    bool prev_byte = false;
    for (TokenId id : ids) {
      if (id >= tokens_.size()) raise_range(id);
      const std::string& tok = tokens_[id];
      const bool is_byte = is_byte_token(tok);
      if (!out.empty() && !(prev_byte && is_byte)) out.push_back(' ');
      if (is_byte)
        out.push_back(static_cast<char>(from_hex(tok.substr(3, 2))[0]));
      else
        out += tok;
      prev_byte = is_byte;
    }
    return out;
  }

  std::string decode(const TokenStream& ids) const {
    return decode(std::span<const TokenId>(ids));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "tokenmark-vocab-v1";
    j["kind"] = kind_ == Kind::byte ? "byte" : "word";
    if (kind_ == Kind::word) {
      j["oov_policy"] = to_string(policy_);
      j["tokens"] = tokens_;
    }
    return j;
  }

  static VocabModel from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "tokenmark-vocab-v1")
      raise(ErrorKind::data, "not a tokenmark-vocab-v1 document");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "byte") return byte_vocab();
    if (kind != "word") raise(ErrorKind::data, "unknown vocab kind \"" + kind + "\"");
    VocabModel v;
    v.kind_ = Kind::word;
    v.policy_ = parse_oov_policy(j.at("oov_policy").get<std::string>());
    for (const auto& t : j.at("tokens")) v.push_token(t.get<std::string>());
    if (v.tokens_.size() < 2) raise(ErrorKind::data, "vocab has fewer than 2 tokens");
    return v;
  }

  static std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
  }

 private:
  enum class Kind { byte, word };

  static std::string byte_token_string(std::uint8_t b) {
    return "<0x" + to_hex({b}) + ">";
  }

  static bool is_byte_token(const std::string& t) {
    return t.size() == 6 && t.rfind("<0x", 0) == 0 && t.back() == '>';
  }

  [[noreturn]] void raise_range(TokenId id) const {
    raise(ErrorKind::data, "token id " + std::to_string(id) +
                               " outside vocabulary of size " +
                               std::to_string(size()));
  }

  void push_token(const std::string& t) {
    if (index_.contains(t)) return;
    index_.emplace(t, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(t);
  }

  Kind kind_ = Kind::byte;
  OovPolicy policy_ = OovPolicy::reserved_token;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace tokenmark
