#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokenmark/error.hpp"
#include "tokenmark/rng.hpp"
#include "tokenmark/types.hpp"
#include "tokenmark/vocab.hpp"

namespace tokenmark {

// ---------------------------------------------------------------------------
// JSONL corpus records: one JSON object per line, {"id":..., "text":...} or
// {"id":..., "tokens":[...]}.
// ---------------------------------------------------------------------------

struct CorpusRecord {
  std::string id;
  std::optional<std::string> text;
  std::optional<TokenStream> tokens;
  // Set only by the lenient reader for lines that failed to parse; such
  // records carry neither text nor tokens and must be reported, not decoded.
  std::optional<std::string> parse_error;

  TokenStream to_tokens(const VocabModel& vocab) const {
    if (tokens.has_value()) {
      for (TokenId t : *tokens)
        if (t >= vocab.size())
          raise(ErrorKind::data, "record " + id + ": token id " +
                                     std::to_string(t) + " outside vocabulary");
      return *tokens;
    }
    return vocab.encode(*text);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["id"] = id;
    if (text.has_value()) j["text"] = *text;
    if (tokens.has_value()) j["tokens"] = *tokens;
    return j;
  }

  static CorpusRecord from_json_text(const std::string& line) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::data, std::string("record is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) raise(ErrorKind::data, "record must be a JSON object");
    static const std::set<std::string> known = {"id", "text", "tokens"};
    for (const auto& [key, value] : j.items())
      if (!known.contains(key))
        raise(ErrorKind::data, "record: unknown field \"" + key + "\"");
    CorpusRecord r;
    try {
      r.id = j.at("id").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      raise(ErrorKind::data, "record: missing or mistyped \"id\"");
    }
    const bool has_text = j.contains("text");
    const bool has_tokens = j.contains("tokens");
    if (!has_text && !has_tokens)
      raise(ErrorKind::data, "record " + r.id + ": needs \"text\" or \"tokens\"");
    if (has_text) {
      if (!j["text"].is_string())
        raise(ErrorKind::data, "record " + r.id + ": \"text\" must be a string");
      r.text = j["text"].get<std::string>();
    }
    if (has_tokens) {
      if (!j["tokens"].is_array())
        raise(ErrorKind::data, "record " + r.id + ": \"tokens\" must be an array");
      TokenStream ts;
      for (const auto& v : j["tokens"]) {
        if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xFFFFFFFFULL)
          raise(ErrorKind::data,
                "record " + r.id + ": token ids must be integers in [0, 2^32)");
        ts.push_back(static_cast<TokenId>(v.get<std::uint64_t>()));
      }
      r.tokens = std::move(ts);
    }
    return r;
  }
};

inline std::vector<CorpusRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::no_input, "cannot open corpus file " + path);
  std::vector<CorpusRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(CorpusRecord::from_json_text(line));
    } catch (const Error& e) {
      raise(ErrorKind::data,
            path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

// Bulk-scanning variant: a line that fails to parse becomes a record whose
// parse_error holds the failure and whose id names the offending line, so
// one corrupt line costs one error entry instead of the whole run.
inline std::vector<CorpusRecord> read_jsonl_lenient(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::no_input, "cannot open corpus file " + path);
  std::vector<CorpusRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(CorpusRecord::from_json_text(line));
    } catch (const Error& e) {
      CorpusRecord bad;
      bad.id = path + ":" + std::to_string(lineno);
      bad.parse_error = e.what();
      records.push_back(std::move(bad));
    }
  }
  return records;
}

inline void write_jsonl(const std::string& path,
                        const std::vector<CorpusRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::io, "cannot write corpus file " + path);
  for (const CorpusRecord& r : records) out << r.to_json().dump() << "\n";
}

// ---------------------------------------------------------------------------
// Deterministic synthetic corpus. A stand-in for natural text with the
// statistics the toy model cares about: Zipf-ranked content words, a skeleton
// of high-frequency function words, and slowly drifting topics so n-gram
// counts have real structure. Identical seeds produce identical corpora on
// every platform.
// ---------------------------------------------------------------------------

struct SyntheticCorpusConfig {
  std::uint64_t seed = 1337;
  std::size_t sentences = 12000;
  std::size_t content_words = 3000;
  std::size_t topics = 24;
  std::size_t topic_span = 400;   // content ranks visible to one topic
  double topic_switch = 0.08;     // per-sentence probability
  double function_word_rate = 0.45;
};

namespace detail {

inline const std::vector<std::string>& function_words() {
  static const std::vector<std::string> words = {
      "the", "and",  "of",    "to",   "a",    "in",   "is",   "was",  "for",
      "with", "as",   "on",    "at",   "by",   "from", "or",   "an",   "be",
      "this", "that", "it",    "not",  "are",  "were", "but",  "had",  "has",
      "have", "his",  "her",   "their", "its",  "one",  "all",  "out",  "up",
      "so",   "no",   "if",    "when", "then", "they", "we",   "he",   "she",
      "you",  "who",  "which", "will", "would"};
  return words;
}

inline std::string synth_word(std::uint64_t index) {
  static const std::vector<std::string> onsets = {
      "b", "br", "c", "cr", "d", "dr", "f", "fl", "g", "gr", "h", "j",
      "k", "kl", "l", "m", "n", "p", "pr", "r", "s", "st", "t", "tr",
      "v", "w", "z", "sh", "th", "ch"};
  static const std::vector<std::string> nuclei = {"a", "e", "i", "o", "u",
                                                  "ar", "er", "or", "an", "en",
                                                  "in", "on", "el", "il", "ol"};
  SplitMix64 rng(0x5EEDC0DE ^ (index * 0x9E3779B97F4A7C15ULL));
  const unsigned syllables = 2 + static_cast<unsigned>(rng.next_below(3));
  std::string w;
  for (unsigned s = 0; s < syllables; ++s) {
    w += onsets[rng.next_below(onsets.size())];
    w += nuclei[rng.next_below(nuclei.size())];
  }
  // Suffix the rank so words are unique without affecting the distribution.
  w += 'q';
  std::uint64_t v = index;
  do {
    w += static_cast<char>('a' + (v % 26));
    v /= 26;
  } while (v != 0);
  return w;
}

}  // namespace detail

inline std::string synthetic_corpus(const SyntheticCorpusConfig& cfg = {}) {
  if (cfg.topics < 1 || cfg.content_words < cfg.topic_span || cfg.topic_span < 1)
    raise(ErrorKind::config, "inconsistent synthetic corpus configuration");
  std::vector<std::string> content;
  content.reserve(cfg.content_words);
  for (std::size_t i = 0; i < cfg.content_words; ++i)
    content.push_back(detail::synth_word(i));

  // Zipf weights over content ranks; per-topic cumulative tables for O(log n)
  // weighted draws.
  std::vector<double> weight(cfg.content_words);
  for (std::size_t i = 0; i < cfg.content_words; ++i)
    weight[i] = 1.0 / std::pow(static_cast<double>(i) + 10.0, 1.05);
  const std::size_t stride =
      cfg.topics == 1
          ? 0
          : (cfg.content_words - cfg.topic_span) / (cfg.topics - 1);
  std::vector<std::vector<double>> topic_cdf(cfg.topics);
  for (std::size_t t = 0; t < cfg.topics; ++t) {
    topic_cdf[t].resize(cfg.topic_span);
    double acc = 0.0;
    for (std::size_t i = 0; i < cfg.topic_span; ++i) {
      acc += weight[t * stride + i];
      topic_cdf[t][i] = acc;
    }
  }

  const auto& fw = detail::function_words();
  SplitMix64 rng(cfg.seed);
  std::size_t topic = 0;
  std::ostringstream out;
  for (std::size_t s = 0; s < cfg.sentences; ++s) {
    if (rng.next_unit() < cfg.topic_switch)
      topic = rng.next_below(cfg.topics);
    const std::size_t length = 6 + rng.next_below(13);
    for (std::size_t i = 0; i < length; ++i) {
      if (i > 0) out << ' ';
      if (rng.next_unit() < cfg.function_word_rate) {
        out << fw[rng.next_below(fw.size())];
      } else {
        const auto& cdf = topic_cdf[topic];
        const double u = rng.next_unit() * cdf.back();
        const std::size_t idx = static_cast<std::size_t>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        out << content[topic * stride + std::min(idx, cfg.topic_span - 1)];
      }
    }
    out << '\n';
  }
  return out.str();
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(std::move(cur));
  return lines;
}

// Tokenizes corpus lines for model training; optionally terminates each line
// with the vocabulary's <eos> marker so trained models can emit it.
inline std::vector<TokenStream> tokenize_lines(const std::string& corpus_text,
                                               const VocabModel& vocab,
                                               bool append_eos = false) {
  std::vector<TokenStream> streams;
  for (const std::string& line : split_lines(corpus_text)) {
    if (line.empty()) continue;
    TokenStream ts = vocab.encode(line);
    if (append_eos && vocab.eos_id().has_value()) ts.push_back(*vocab.eos_id());
    if (!ts.empty()) streams.push_back(std::move(ts));
  }
  return streams;
}

}  // namespace tokenmark
