// Corpus scanning: deterministic row order across worker counts, per-row
// error isolation, and the worker-pool primitives underneath it.
#include <atomic>
#include <cstdint>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "tokenmark/scan.hpp"

namespace {

using namespace tokenmark;

CorpusRecord token_record(const std::string& id, TokenStream tokens) {
  CorpusRecord r;
  r.id = id;
  r.tokens = std::move(tokens);
  return r;
}

TokenStream random_stream(SplitMix64& rng, std::uint32_t vocab,
                          std::size_t len) {
  TokenStream s(len);
  for (auto& t : s) t = static_cast<TokenId>(rng.next_below(vocab));
  return s;
}

WatermarkParams small_params(std::uint32_t vocab) {
  WatermarkParams p;
  p.vocab_size = vocab;
  p.n = 2;
  return p;
}

TEST(PlanWorkers, ClampsToCountAndValidatesJobs) {
  EXPECT_EQ(plan_workers(100, 4), 4u);
  EXPECT_EQ(plan_workers(3, 8), 3u);
  EXPECT_EQ(plan_workers(1, 8), 1u);
  EXPECT_EQ(plan_workers(0, 8), 1u);
  try {
    plan_workers(10, 0);
    FAIL() << "expected config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  EXPECT_GE(default_jobs(), 1u);
}

TEST(ParallelForWorkers, VisitsEveryIndexExactlyOnce) {
  const std::size_t count = 1000;
  std::vector<std::atomic<int>> seen(count);
  const unsigned planned = plan_workers(count, 8);
  parallel_for_workers(count, 8, [&](unsigned worker, std::size_t i) {
    EXPECT_LT(worker, planned);
    seen[i].fetch_add(1);
  });
  for (std::size_t i = 0; i < count; ++i) EXPECT_EQ(seen[i].load(), 1);
}

TEST(ParallelForWorkers, SingleLaneRunsOnCallerThread) {
  const auto caller = std::this_thread::get_id();
  parallel_for_workers(10, 1, [&](unsigned worker, std::size_t) {
    EXPECT_EQ(worker, 0u);
    EXPECT_EQ(std::this_thread::get_id(), caller);
  });
}

TEST(ParallelForWorkers, RethrowsFirstBodyException) {
  try {
    parallel_for_workers(500, 8, [&](unsigned, std::size_t i) {
      if (i == 137) raise(ErrorKind::data, "poisoned item");
    });
    FAIL() << "expected data error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_STREQ(e.what(), "poisoned item");
  }
}

TEST(ScanCorpus, OneRecordTwoTargetsMakesTwoRows) {
  SplitMix64 rng(1);
  const WatermarkParams params = small_params(32);
  const std::vector<CorpusRecord> records = {
      token_record("doc-1", random_stream(rng, 32, 60))};
  const std::vector<ScanTarget> targets = {
      {WatermarkId::from_integer(0xA), 1, "first"},
      {WatermarkId::from_integer(0xB), 2, "second"}};

  const ScanReport r = scan_corpus(records, targets, nullptr, params,
                                   ThresholdSpec::fixed(-1.0), 1);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].record_id, "doc-1");
  EXPECT_EQ(r.rows[0].mu_hex, targets[0].mu.hex());
  EXPECT_EQ(r.rows[1].mu_hex, targets[1].mu.hex());
  EXPECT_EQ(r.rows[1].k_p, 2u);
  for (const ScanRow& row : r.rows) {
    ASSERT_TRUE(row.q.has_value());
    EXPECT_EQ(*row.n_counted, 59u);
    EXPECT_TRUE(*row.decision);  // threshold -1 flags everything scorable
  }
  EXPECT_EQ(r.flagged, 2u);
  EXPECT_EQ(r.errored, 0u);

  const ScanReport strict = scan_corpus(records, targets, nullptr, params,
                                        ThresholdSpec::fixed(1.0), 1);
  EXPECT_EQ(strict.flagged, 0u);
}

TEST(ScanCorpus, RowOrderIsRecordMajorAndJobsInvariant) {
  SplitMix64 rng(2);
  const std::uint32_t vocab = 256;
  const WatermarkParams params = small_params(vocab);
  std::vector<CorpusRecord> records;
  for (int i = 0; i < 200; ++i)
    records.push_back(token_record("rec-" + std::to_string(i),
                                   random_stream(rng, vocab, 100)));
  const std::vector<ScanTarget> targets = {
      {WatermarkId::from_integer(0xA1), 1, ""},
      {WatermarkId::from_integer(0xB2), 3, ""}};

  const ScanReport one = scan_corpus(records, targets, nullptr, params,
                                     ThresholdSpec::fixed(0.0), 1);
  const ScanReport many = scan_corpus(records, targets, nullptr, params,
                                      ThresholdSpec::fixed(0.0), 8);
  std::ostringstream s1, s8;
  write_scan_report(s1, one);
  write_scan_report(s8, many);
  EXPECT_EQ(s1.str(), s8.str());

  for (std::size_t r = 0; r < records.size(); ++r)
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const ScanRow& row = one.rows[r * targets.size() + t];
      EXPECT_EQ(row.record_id, records[r].id);
      EXPECT_EQ(row.mu_hex, targets[t].mu.hex());
    }
}

TEST(ScanCorpus, BrokenRecordsErrorWithoutAbortingTheScan) {
  SplitMix64 rng(3);
  const WatermarkParams params = small_params(32);

  CorpusRecord text_no_vocab;
  text_no_vocab.id = "text-only";
  text_no_vocab.text = "hello there";
  CorpusRecord out_of_vocab = token_record("oov", {1, 2, 99});
  CorpusRecord too_short = token_record("short", {5});
  CorpusRecord unparsed;
  unparsed.id = "corpus.jsonl:17";
  unparsed.parse_error = "line 17 is not valid JSON";
  CorpusRecord hollow;
  hollow.id = "hollow";
  const CorpusRecord good =
      token_record("good", random_stream(rng, 32, 40));

  const std::vector<CorpusRecord> records = {
      text_no_vocab, out_of_vocab, too_short, unparsed, hollow, good};
  const std::vector<ScanTarget> targets = {
      {WatermarkId::from_integer(0xC3), 1, ""}};

  const ScanReport r = scan_corpus(records, targets, nullptr, params,
                                   ThresholdSpec::fixed(0.0), 2);
  ASSERT_EQ(r.rows.size(), 6u);
  EXPECT_EQ(r.errored, 5u);
  EXPECT_NE(r.rows[0].error->find("no vocabulary"), std::string::npos);
  EXPECT_NE(r.rows[1].error->find("outside vocabulary"), std::string::npos);
  EXPECT_TRUE(r.rows[2].error.has_value());
  EXPECT_EQ(*r.rows[3].error, "line 17 is not valid JSON");
  EXPECT_NE(r.rows[4].error->find("neither text nor tokens"),
            std::string::npos);
  EXPECT_TRUE(r.rows[5].q.has_value());
}

TEST(ScanCorpus, TextRecordsEncodeThroughTheVocabulary) {
  const VocabModel vocab = VocabModel::word_vocab("alpha beta gamma delta");
  const WatermarkParams params = [&] {
    WatermarkParams p = small_params(vocab.size());
    return p;
  }();
  CorpusRecord rec;
  rec.id = "text-1";
  rec.text = "alpha beta gamma delta alpha beta";
  const std::vector<ScanTarget> targets = {
      {WatermarkId::from_integer(0xD4), 1, ""}};

  const ScanReport r = scan_corpus({rec}, targets, &vocab, params,
                                   ThresholdSpec::fixed(0.0), 1);
  ASSERT_EQ(r.rows.size(), 1u);
  ASSERT_TRUE(r.rows[0].q.has_value()) << r.rows[0].error.value_or("");
  EXPECT_EQ(*r.rows[0].n_counted, 5u);
}

TEST(ScanCorpus, ValidatesTargetsUpFront) {
  const WatermarkParams params = small_params(32);
  const std::vector<CorpusRecord> records = {token_record("a", {1, 2, 3})};
  try {
    scan_corpus(records, {}, nullptr, params, ThresholdSpec::fixed(0.0), 1);
    FAIL() << "expected config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  const std::vector<ScanTarget> bad_key = {
      {WatermarkId::from_integer(1), 32, ""}};
  EXPECT_THROW(scan_corpus(records, bad_key, nullptr, params,
                           ThresholdSpec::fixed(0.0), 1),
               Error);
}

TEST(ScanReportOutput, OneJsonObjectPerRow) {
  SplitMix64 rng(4);
  const WatermarkParams params = small_params(32);
  const std::vector<CorpusRecord> records = {
      token_record("ok", random_stream(rng, 32, 30)),
      token_record("bad", {77})};
  const std::vector<ScanTarget> targets = {
      {WatermarkId::from_integer(0xE5), 1, ""}};
  const ScanReport r = scan_corpus(records, targets, nullptr, params,
                                   ThresholdSpec::fixed(0.25), 1);

  std::ostringstream out;
  write_scan_report(out, r);
  std::istringstream in(out.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("id"));
    EXPECT_TRUE(j.contains("mu"));
    EXPECT_TRUE(j.contains("k_p"));
    if (j.contains("error")) {
      EXPECT_FALSE(j.contains("q"));
    } else {
      EXPECT_TRUE(j.contains("q"));
      EXPECT_TRUE(j.contains("n_counted"));
      EXPECT_TRUE(j.contains("decision"));
      EXPECT_DOUBLE_EQ(j["threshold"].get<double>(), 0.25);
    }
    ++lines;
  }
  EXPECT_EQ(lines, r.rows.size());
}

}  // namespace
