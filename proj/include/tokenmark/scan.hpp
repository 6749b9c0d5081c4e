#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokenmark/corpus.hpp"
#include "tokenmark/error.hpp"
#include "tokenmark/keying.hpp"
#include "tokenmark/parallel.hpp"
#include "tokenmark/params.hpp"
#include "tokenmark/verify.hpp"
#include "tokenmark/vocab.hpp"

namespace tokenmark {

// One watermark hypothesis to test every record against.
struct ScanTarget {
  WatermarkId mu;
  std::uint32_t k_p = 1;
  std::string label;  // optional display name; defaults to mu hex
};

// Outcome of testing one record against one target. Records that fail to
// verify (too short, bad token ids, ...) produce a row with `error` set
// instead of aborting the whole scan.
struct ScanRow {
  std::string record_id;
  std::string mu_hex;
  std::uint32_t k_p = 0;
  std::optional<double> q;
  std::optional<std::uint64_t> n_counted;
  std::optional<bool> decision;
  std::optional<std::string> error;

  nlohmann::json to_json(double threshold) const {
    nlohmann::json j;
    j["id"] = record_id;
    j["k_p"] = k_p;
    j["mu"] = mu_hex;
    if (error.has_value()) {
      j["error"] = *error;
    } else {
      j["decision"] = *decision;
      j["n_counted"] = *n_counted;
      j["q"] = *q;
      j["threshold"] = threshold;
    }
    return j;
  }
};

struct ScanReport {
  std::vector<ScanRow> rows;  // record-major, then target order
  double threshold = 0.0;
  std::uint64_t flagged = 0;
  std::uint64_t errored = 0;
};

// Scores every (record, target) pair. Rows come back in deterministic
// record-major order regardless of worker count; each worker owns a private
// permutation engine so the scan never contends on the cache locks.
inline ScanReport scan_corpus(const std::vector<CorpusRecord>& records,
                              const std::vector<ScanTarget>& targets,
                              const VocabModel* vocab,
                              const WatermarkParams& params,
                              const ThresholdSpec& threshold, unsigned jobs) {
  if (targets.empty()) raise(ErrorKind::config, "scan needs at least one target");
  for (const ScanTarget& t : targets)
    check_key(params.family, params.vocab_size, t.k_p);

  ScanReport report;
  report.threshold = threshold.resolve();
  report.rows.resize(records.size() * targets.size());

  const unsigned workers = plan_workers(records.size(), jobs);
  std::vector<std::unique_ptr<PermutationEngine>> engines;
  engines.reserve(workers);
  for (unsigned w = 0; w < workers; ++w)
    engines.push_back(std::make_unique<PermutationEngine>(
        params.backend, params.vocab_size, params.cache_capacity));

  parallel_for_workers(records.size(), jobs, [&](unsigned worker,
                                                 std::size_t r) {
    PermutationEngine& engine = *engines[worker];
    const CorpusRecord& rec = records[r];
    TokenStream tokens;
    std::string decode_error;
    if (rec.parse_error.has_value()) {
      decode_error = *rec.parse_error;
    } else {
      try {
        if (rec.tokens.has_value()) {
          tokens = *rec.tokens;  // ids validated inside count_tokens
        } else if (!rec.text.has_value()) {
          raise(ErrorKind::data,
                "record " + rec.id + " carries neither text nor tokens");
        } else if (vocab != nullptr) {
          tokens = vocab->encode(*rec.text);
        } else {
          raise(ErrorKind::data,
                "record " + rec.id + " is text but no vocabulary was provided");
        }
      } catch (const Error& e) {
        decode_error = e.what();
      }
    }
    for (std::size_t t = 0; t < targets.size(); ++t) {
      ScanRow& row = report.rows[r * targets.size() + t];
      row.record_id = rec.id;
      row.mu_hex = targets[t].mu.hex();
      row.k_p = targets[t].k_p;
      if (!decode_error.empty()) {
        row.error = decode_error;
        continue;
      }
      try {
        const CountVector cv =
            count_tokens(tokens, targets[t].mu, params.n, engine);
        row.q = score(cv, params.family, targets[t].k_p);
        row.n_counted = cv.n_counted;
        row.decision = *row.q >= report.threshold;
      } catch (const Error& e) {
        row.error = e.what();
      }
    }
  });

  for (const ScanRow& row : report.rows) {
    if (row.error.has_value())
      ++report.errored;
    else if (*row.decision)
      ++report.flagged;
  }
  return report;
}

// One JSON object per line, rows in their deterministic scan order.
inline void write_scan_report(std::ostream& out, const ScanReport& report) {
  for (const ScanRow& row : report.rows)
    out << row.to_json(report.threshold).dump() << '\n';
}

}  // namespace tokenmark
