#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokenmark/attacks.hpp"
#include "tokenmark/error.hpp"
#include "tokenmark/generate.hpp"
#include "tokenmark/keying.hpp"
#include "tokenmark/params.hpp"
#include "tokenmark/scan.hpp"
#include "tokenmark/verify.hpp"

namespace tokenmark {

// Probability that a random positive outscores a random negative, computed
// from ranks with tied scores counted half. Equals the pair-counting
// definition exactly.
inline double auroc(std::span<const double> positives,
                    std::span<const double> negatives) {
  if (positives.empty() || negatives.empty())
    raise(ErrorKind::config, "auroc needs both positive and negative scores");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(positives.size() + negatives.size());
  for (double s : positives) items.push_back({s, true});
  for (double s : negatives) items.push_back({s, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k)
      if (items[k].positive) rank_sum_pos += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

namespace detail {

// Stable shortest-ish decimal formatting for CSV output.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double mean(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

// Fixed lane offsets keep every drawn seed in the harness disjoint.
constexpr std::uint64_t kLanePositive = 0x100000;
constexpr std::uint64_t kLaneNegative = 0x200000;
constexpr std::uint64_t kLaneAttack = 0x300000;
constexpr std::uint64_t kLaneWrongId = 0x400000;
constexpr std::uint64_t kMuBase = 0x1000;
constexpr std::uint64_t kMu2Base = 0x50000;

}  // namespace detail

// Deterministic token walk over a pseudorandom successor graph: every token
// has `out_degree` fixed successors (a keyed hash of the token), and each
// step picks one uniformly. Training an n-gram model on the walk yields
// contexts with a handful of genuinely repeated continuations — enough
// entropy to embed a watermark, enough structure that likelihood drops when
// sampling is biased away from the graph.
inline TokenStream synthetic_walk(std::uint32_t vocab_size,
                                  unsigned out_degree, std::size_t length,
                                  std::uint64_t seed) {
  if (vocab_size < 2) raise(ErrorKind::config, "vocab_size must be at least 2");
  if (out_degree < 1) raise(ErrorKind::config, "out_degree must be at least 1");
  if (length < 2) raise(ErrorKind::config, "walk length must be at least 2");
  SplitMix64 rng(derive_seed(seed, 0xA11CE));
  TokenStream walk;
  walk.reserve(length);
  TokenId cur = static_cast<TokenId>(rng.next_below(vocab_size));
  for (std::size_t i = 0; i < length; ++i) {
    walk.push_back(cur);
    const std::uint64_t j = rng.next_below(out_degree);
    const std::uint64_t edge =
        0x8000000000000000ULL | (static_cast<std::uint64_t>(cur) << 32) | j;
    cur = static_cast<TokenId>(
        SplitMix64(derive_seed(seed, edge)).next_below(vocab_size));
  }
  return walk;
}

// Mean per-token log-likelihood of a stream under a provider (softmax of its
// logits at each prefix). The fidelity proxy: stronger perturbation pushes
// sampling off the provider's preferred continuations and this drops.
inline double mean_token_log_likelihood(const LogitProvider& provider,
                                        std::span<const TokenId> stream) {
  if (stream.empty()) raise(ErrorKind::too_short, "stream must be non-empty");
  const std::uint32_t vocab = provider.vocab_size();
  std::vector<double> logits(vocab);
  double total = 0.0;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (stream[i] >= vocab)
      raise(ErrorKind::data, "token id outside vocabulary");
    provider.next_logits(stream.subspan(0, i), logits);
    const double hi = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - hi);
    total += logits[stream[i]] - hi - std::log(z);
  }
  return total / static_cast<double>(stream.size());
}

// Stated on every report: what the negative class is. The scheme's natural
// null would be "same text, other people's ids"; ours is fresh unwatermarked
// text, which is the harder, more conservative comparison for generation.
inline constexpr const char* kNullDefinition =
    "negatives are unwatermarked generations from the same provider";

struct SweepPoint {
  double kappa = 0.0;
  unsigned stream_len = 0;
  double auroc = 0.0;
  double mean_q_pos = 0.0;
  double mean_q_neg = 0.0;
  // Fidelity proxy: mean per-token log-likelihood under the generating
  // provider. The pos-neg gap is what the perturbation costs.
  double mean_ll_pos = 0.0;
  double mean_ll_neg = 0.0;
  std::vector<double> pos_scores;
  std::vector<double> neg_scores;
};

struct VerifiabilityReport {
  WatermarkParams params;
  unsigned trials = 0;
  std::uint64_t seed = 0;
  std::vector<SweepPoint> points;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["backend"] = to_string(params.backend);
    j["family"] = to_string(params.family);
    j["k_p"] = params.k_p;
    j["n"] = params.n;
    j["null_definition"] = kNullDefinition;
    j["seed"] = seed;
    j["trials"] = trials;
    j["vocab_size"] = params.vocab_size;
    nlohmann::json pts = nlohmann::json::array();
    for (const SweepPoint& p : points)
      pts.push_back({{"auroc", p.auroc},
                     {"kappa", p.kappa},
                     {"mean_ll_neg", p.mean_ll_neg},
                     {"mean_ll_pos", p.mean_ll_pos},
                     {"mean_q_neg", p.mean_q_neg},
                     {"mean_q_pos", p.mean_q_pos},
                     {"neg_scores", p.neg_scores},
                     {"pos_scores", p.pos_scores},
                     {"stream_len", p.stream_len}});
    j["points"] = std::move(pts);
    return j;
  }

  void write_csv(std::ostream& out) const {
    out << "kappa,stream_len,auroc,mean_q_pos,mean_q_neg,mean_ll_pos,"
           "mean_ll_neg\n";
    for (const SweepPoint& p : points)
      out << detail::format_double(p.kappa) << ',' << p.stream_len << ','
          << detail::format_double(p.auroc) << ','
          << detail::format_double(p.mean_q_pos) << ','
          << detail::format_double(p.mean_q_neg) << ','
          << detail::format_double(p.mean_ll_pos) << ','
          << detail::format_double(p.mean_ll_neg) << '\n';
  }
};

// For each (kappa, stream length) grid cell: generate `trials` watermarked
// streams (one watermark id per trial) plus unwatermarked twins, score both
// against the trial's id, and summarize separability as AUROC. Fully
// determined by `seed`.
inline VerifiabilityReport run_verifiability_sweep(
    const LogitProvider& provider, WatermarkParams params,
    std::span<const double> kappas, std::span<const unsigned> stream_lens,
    unsigned trials, std::uint64_t seed) {
  if (trials < 2) raise(ErrorKind::config, "sweep needs at least 2 trials");
  if (kappas.empty()) raise(ErrorKind::config, "sweep needs at least one kappa");
  if (stream_lens.empty())
    raise(ErrorKind::config, "sweep needs at least one stream length");
  PermutationEngine engine(params.backend, params.vocab_size,
                           params.cache_capacity);
  VerifiabilityReport report;
  report.trials = trials;
  report.seed = seed;

  for (std::size_t ki = 0; ki < kappas.size(); ++ki) {
    for (std::size_t ni = 0; ni < stream_lens.size(); ++ni) {
      params.kappa = kappas[ki];
      params.sampling.max_tokens = stream_lens[ni];
      const std::size_t cell = ki * stream_lens.size() + ni;
      SweepPoint point;
      point.kappa = params.kappa;
      point.stream_len = stream_lens[ni];
      std::vector<double> ll_pos, ll_neg;
      for (unsigned t = 0; t < trials; ++t) {
        const WatermarkId mu =
            WatermarkId::from_integer(detail::kMuBase + t);
        const std::uint64_t trial_lane = cell * trials + t;
        params.sampling.rng_seed =
            derive_seed(seed, detail::kLanePositive + trial_lane);
        const StreamResult marked =
            watermark_stream({}, mu, params, provider, engine);
        params.sampling.rng_seed =
            derive_seed(seed, detail::kLaneNegative + trial_lane);
        const TokenStream plain = sample_stream({}, params, provider);
        point.pos_scores.push_back(
            score(count_tokens(marked.tokens, mu, params.n, engine),
                  params.family, params.k_p));
        point.neg_scores.push_back(
            score(count_tokens(plain, mu, params.n, engine), params.family,
                  params.k_p));
        ll_pos.push_back(mean_token_log_likelihood(provider, marked.tokens));
        ll_neg.push_back(mean_token_log_likelihood(provider, plain));
      }
      point.auroc = auroc(point.pos_scores, point.neg_scores);
      point.mean_q_pos = detail::mean(point.pos_scores);
      point.mean_q_neg = detail::mean(point.neg_scores);
      point.mean_ll_pos = detail::mean(ll_pos);
      point.mean_ll_neg = detail::mean(ll_neg);
      report.points.push_back(std::move(point));
    }
  }
  report.params = params;
  return report;
}

struct AttackSpec {
  std::string kind;   // none | insertion | deletion | substitution | overlap
  double rate = 0.0;  // edit rate; ignored for none and overlap
};

struct RobustnessPoint {
  std::string attack;
  double rate = 0.0;
  double auroc = 0.0;
  double mean_q_pos = 0.0;
  std::uint64_t applied = 0;
  std::uint64_t skipped = 0;
  std::vector<double> pos_scores;
  std::vector<double> neg_scores;
};

struct RobustnessReport {
  WatermarkParams params;
  unsigned trials = 0;
  unsigned stream_len = 0;
  std::uint64_t seed = 0;
  std::vector<RobustnessPoint> points;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["backend"] = to_string(params.backend);
    j["family"] = to_string(params.family);
    j["k_p"] = params.k_p;
    j["kappa"] = params.kappa;
    j["n"] = params.n;
    j["null_definition"] = kNullDefinition;
    j["seed"] = seed;
    j["stream_len"] = stream_len;
    j["trials"] = trials;
    j["vocab_size"] = params.vocab_size;
    nlohmann::json pts = nlohmann::json::array();
    for (const RobustnessPoint& p : points)
      pts.push_back({{"applied", p.applied},
                     {"attack", p.attack},
                     {"auroc", p.auroc},
                     {"mean_q_pos", p.mean_q_pos},
                     {"neg_scores", p.neg_scores},
                     {"pos_scores", p.pos_scores},
                     {"rate", p.rate},
                     {"skipped", p.skipped}});
    j["points"] = std::move(pts);
    return j;
  }

  void write_csv(std::ostream& out) const {
    out << "attack,rate,auroc,mean_q_pos,applied,skipped\n";
    for (const RobustnessPoint& p : points)
      out << p.attack << ',' << detail::format_double(p.rate) << ','
          << detail::format_double(p.auroc) << ','
          << detail::format_double(p.mean_q_pos) << ',' << p.applied << ','
          << p.skipped << '\n';
  }
};

struct OverlapConfig {
  unsigned order = 2;
  double alpha = 1e-4;
};

// Measures watermark survival under token-level edits and re-watermarking.
// Both the watermarked stream and its unwatermarked twin receive the same
// attack before scoring, so the null distribution sees identical handling.
inline RobustnessReport run_robustness_sweep(
    const LogitProvider& provider, WatermarkParams params,
    std::span<const AttackSpec> attacks, unsigned trials, unsigned stream_len,
    std::uint64_t seed, const SubstitutionTable* table = nullptr,
    const OverlapConfig& overlap = {}) {
  if (trials < 2) raise(ErrorKind::config, "sweep needs at least 2 trials");
  if (attacks.empty()) raise(ErrorKind::config, "sweep needs at least one attack");
  params.sampling.max_tokens = stream_len;
  PermutationEngine engine(params.backend, params.vocab_size,
                           params.cache_capacity);
  RobustnessReport report;
  report.params = params;
  report.trials = trials;
  report.stream_len = stream_len;
  report.seed = seed;

  // Generate the trial streams once; every attack point reuses them.
  std::vector<TokenStream> marked(trials), plain(trials);
  std::vector<WatermarkId> mus(trials);
  for (unsigned t = 0; t < trials; ++t) {
    mus[t] = WatermarkId::from_integer(detail::kMuBase + t);
    params.sampling.rng_seed = derive_seed(seed, detail::kLanePositive + t);
    marked[t] = watermark_stream({}, mus[t], params, provider, engine).tokens;
    params.sampling.rng_seed = derive_seed(seed, detail::kLaneNegative + t);
    plain[t] = sample_stream({}, params, provider);
  }

  for (const AttackSpec& spec : attacks) {
    RobustnessPoint point;
    std::vector<double>& pos = point.pos_scores;
    std::vector<double>& neg = point.neg_scores;
    point.attack = spec.kind;
    point.rate = spec.rate;
    for (unsigned t = 0; t < trials; ++t) {
      const std::uint64_t attack_seed =
          derive_seed(seed, detail::kLaneAttack + t);
      auto run_attack = [&](const TokenStream& input,
                            std::uint64_t lane_bump) -> AttackResult {
        if (spec.kind == "none") return {input, 0, 0, 0};
        if (spec.kind == "insertion")
          return insertion_attack(input, spec.rate, params.vocab_size,
                                  attack_seed + lane_bump);
        if (spec.kind == "deletion")
          return deletion_attack(input, spec.rate, attack_seed + lane_bump,
                                 params.n);
        if (spec.kind == "substitution") {
          if (table == nullptr)
            raise(ErrorKind::config,
                  "substitution attack needs a substitution table");
          return substitution_attack(input, spec.rate, *table,
                                     attack_seed + lane_bump);
        }
        if (spec.kind == "overlap") {
          WatermarkParams p2 = params;
          p2.sampling.rng_seed = attack_seed + lane_bump;
          return overlap_attack(input,
                                WatermarkId::from_integer(detail::kMu2Base + t),
                                p2, overlap.order, overlap.alpha, engine);
        }
        raise(ErrorKind::config, "unknown attack kind '" + spec.kind + "'");
      };
      const AttackResult ap = run_attack(marked[t], 0);
      const AttackResult an = run_attack(plain[t], 1);
      point.applied += ap.applied;
      point.skipped += ap.skipped;
      pos.push_back(score(count_tokens(ap.tokens, mus[t], params.n, engine),
                          params.family, params.k_p));
      neg.push_back(score(count_tokens(an.tokens, mus[t], params.n, engine),
                          params.family, params.k_p));
    }
    point.auroc = auroc(pos, neg);
    point.mean_q_pos = detail::mean(pos);
    report.points.push_back(std::move(point));
  }
  return report;
}

// Quantiles of the per-wrong-id AUROC distribution, nearest-rank convention.
struct WrongIdQuantiles {
  double min = 0.0;
  double p1 = 0.0;
  double p5 = 0.0;
  double median = 0.0;
  double max = 0.0;
};

struct ScalabilityReport {
  WatermarkParams params;
  unsigned trials = 0;
  unsigned stream_len = 0;
  unsigned id_count = 0;
  std::uint64_t seed = 0;
  double true_auroc = 0.0;  // marked-under-mu0 vs unmarked-under-mu0
  WrongIdQuantiles wrong_auroc;
  double wrong_mean = 0.0;  // pooled scores of the corpus under wrong ids
  double wrong_stddev = 0.0;
  double wrong_mean_sigmas = 0.0;  // |wrong_mean| / (stddev / sqrt(count))

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["backend"] = to_string(params.backend);
    j["family"] = to_string(params.family);
    j["id_count"] = id_count;
    j["k_p"] = params.k_p;
    j["kappa"] = params.kappa;
    j["n"] = params.n;
    j["null_definition"] =
        "true_auroc: " + std::string(kNullDefinition) +
        "; wrong_auroc: negatives are the marked corpus under the wrong id";
    j["seed"] = seed;
    j["stream_len"] = stream_len;
    j["trials"] = trials;
    j["true_auroc"] = true_auroc;
    j["vocab_size"] = params.vocab_size;
    j["wrong_auroc"] = {{"max", wrong_auroc.max},
                        {"median", wrong_auroc.median},
                        {"min", wrong_auroc.min},
                        {"p1", wrong_auroc.p1},
                        {"p5", wrong_auroc.p5}};
    j["wrong_mean"] = wrong_mean;
    j["wrong_mean_sigmas"] = wrong_mean_sigmas;
    j["wrong_stddev"] = wrong_stddev;
    return j;
  }
};

namespace detail {

// kth smallest with k = max(1, ceil(p*n)); `sorted` must be ascending.
inline double nearest_rank(std::span<const double> sorted, double p) {
  const double kf = std::ceil(p * static_cast<double>(sorted.size()));
  const std::size_t k =
      std::max<std::size_t>(1, static_cast<std::size_t>(kf));
  return sorted[std::min(k, sorted.size()) - 1];
}

}  // namespace detail

// One watermark id against many impostors: marks `trials` streams with mu0,
// then scores that corpus under mu0 and under `id_count` random wrong ids.
// Reported per wrong id: AUROC of true-id scores vs that id's scores. A
// usable scheme keeps every quantile of that distribution near 1 while the
// pooled wrong-id scores stay statistically indistinguishable from zero.
inline ScalabilityReport run_scalability_check(const LogitProvider& provider,
                                               WatermarkParams params,
                                               unsigned id_count,
                                               unsigned trials,
                                               unsigned stream_len,
                                               std::uint64_t seed) {
  if (id_count < 100)
    raise(ErrorKind::config, "wrong-id study needs at least 100 ids");
  if (trials < 2) raise(ErrorKind::config, "sweep needs at least 2 trials");
  params.sampling.max_tokens = stream_len;
  PermutationEngine engine(params.backend, params.vocab_size,
                           params.cache_capacity);
  ScalabilityReport report;
  report.params = params;
  report.trials = trials;
  report.stream_len = stream_len;
  report.id_count = id_count;
  report.seed = seed;

  const WatermarkId mu0 = WatermarkId::from_integer(detail::kMuBase);
  std::vector<TokenStream> marked(trials);
  std::vector<double> true_scores(trials), plain_scores(trials);
  for (unsigned t = 0; t < trials; ++t) {
    params.sampling.rng_seed = derive_seed(seed, detail::kLanePositive + t);
    marked[t] = watermark_stream({}, mu0, params, provider, engine).tokens;
    params.sampling.rng_seed = derive_seed(seed, detail::kLaneNegative + t);
    const TokenStream plain = sample_stream({}, params, provider);
    true_scores[t] = score(count_tokens(marked[t], mu0, params.n, engine),
                           params.family, params.k_p);
    plain_scores[t] = score(count_tokens(plain, mu0, params.n, engine),
                            params.family, params.k_p);
  }
  report.true_auroc = auroc(true_scores, plain_scores);

  std::vector<double> id_aurocs(id_count);
  double pool_sum = 0.0, pool_sq = 0.0;
  const std::size_t pool_count =
      static_cast<std::size_t>(id_count) * trials;
  std::vector<double> wrong_scores(trials);
  for (unsigned j = 0; j < id_count; ++j) {
    WatermarkId wrong;
    SplitMix64 rng(derive_seed(seed, detail::kLaneWrongId + j));
    wrong.bytes.resize(16);
    for (std::size_t b = 0; b < wrong.bytes.size(); ++b)
      wrong.bytes[b] = static_cast<std::uint8_t>(rng.next_below(256));
    for (unsigned t = 0; t < trials; ++t) {
      const double q = score(count_tokens(marked[t], wrong, params.n, engine),
                             params.family, params.k_p);
      wrong_scores[t] = q;
      pool_sum += q;
      pool_sq += q * q;
    }
    id_aurocs[j] = auroc(true_scores, wrong_scores);
  }
  std::sort(id_aurocs.begin(), id_aurocs.end());
  report.wrong_auroc = {id_aurocs.front(),
                        detail::nearest_rank(id_aurocs, 0.01),
                        detail::nearest_rank(id_aurocs, 0.05),
                        detail::nearest_rank(id_aurocs, 0.50),
                        id_aurocs.back()};
  const double n = static_cast<double>(pool_count);
  report.wrong_mean = pool_sum / n;
  const double var =
      (pool_sq - pool_sum * pool_sum / n) / (n - 1.0);
  report.wrong_stddev = var > 0.0 ? std::sqrt(var) : 0.0;
  report.wrong_mean_sigmas =
      report.wrong_stddev > 0.0
          ? std::abs(report.wrong_mean) / (report.wrong_stddev / std::sqrt(n))
          : 0.0;
  return report;
}

struct VerifyTiming {
  std::uint32_t vocab_size = 0;
  double cold_ms = 0.0;  // fresh engine, nothing cached
  double warm_ms = 0.0;  // same stream scored again
};

struct ScanTiming {
  std::size_t records = 0;
  std::size_t targets = 0;
  unsigned jobs_hi = 1;
  double jobs1_ms = 0.0;
  double jobs_hi_ms = 0.0;
  double speedup = 0.0;
  bool identical_output = false;
};

struct PerformanceReport {
  std::vector<VerifyTiming> verify;
  ScanTiming scan;

  nlohmann::json to_json() const {
    nlohmann::json j;
    nlohmann::json v = nlohmann::json::array();
    for (const VerifyTiming& t : verify)
      v.push_back({{"cold_ms", t.cold_ms},
                   {"vocab_size", t.vocab_size},
                   {"warm_ms", t.warm_ms}});
    j["verify"] = std::move(v);
    j["scan"] = {{"identical_output", scan.identical_output},
                 {"jobs1_ms", scan.jobs1_ms},
                 {"jobs_hi", scan.jobs_hi},
                 {"jobs_hi_ms", scan.jobs_hi_ms},
                 {"records", scan.records},
                 {"speedup", scan.speedup},
                 {"targets", scan.targets}};
    return j;
  }
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

inline TokenStream random_stream(std::uint32_t vocab_size, std::size_t len,
                                 std::uint64_t seed) {
  SplitMix64 rng(seed);
  TokenStream s(len);
  for (std::size_t i = 0; i < len; ++i)
    s[i] = static_cast<TokenId>(rng.next_below(vocab_size));
  return s;
}

inline std::string serialize_rows(const ScanReport& r) {
  std::string out;
  for (const ScanRow& row : r.rows) {
    out += row.to_json(r.threshold).dump();
    out += '\n';
  }
  return out;
}

}  // namespace detail

// Wall-clock behaviour: single-verify latency across vocabulary sizes (cold
// vs key-cache-warm) and multi-threaded scan throughput, with a byte-equality
// check between the jobs=1 and jobs=hi row streams. Timings depend on the
// host; everything else is deterministic.
inline PerformanceReport run_performance_check(
    WatermarkParams params, std::span<const std::uint32_t> vocab_sizes,
    std::size_t stream_len, std::size_t scan_records, std::size_t scan_targets,
    unsigned jobs_hi, std::uint64_t seed) {
  PerformanceReport report;
  const WatermarkId mu = WatermarkId::from_integer(detail::kMuBase);
  for (std::uint32_t vs : vocab_sizes) {
    WatermarkParams p = params;
    p.vocab_size = vs;
    check_key(p.family, vs, p.k_p);
    const TokenStream stream =
        detail::random_stream(vs, stream_len, derive_seed(seed, vs));
    VerifyTiming timing;
    timing.vocab_size = vs;
    PermutationEngine engine(p.backend, vs, p.cache_capacity);
    auto t0 = std::chrono::steady_clock::now();
    const double q_cold =
        score(count_tokens(stream, mu, p.n, engine), p.family, p.k_p);
    timing.cold_ms = detail::elapsed_ms(t0);
    t0 = std::chrono::steady_clock::now();
    const double q_warm =
        score(count_tokens(stream, mu, p.n, engine), p.family, p.k_p);
    timing.warm_ms = detail::elapsed_ms(t0);
    if (q_cold != q_warm)
      raise(ErrorKind::internal, "warm re-verification changed the score");
    report.verify.push_back(timing);
  }

  std::vector<CorpusRecord> records(scan_records);
  for (std::size_t r = 0; r < scan_records; ++r) {
    records[r].id = "r" + std::to_string(r);
    records[r].tokens = detail::random_stream(
        params.vocab_size, stream_len, derive_seed(seed, 0x9000 + r));
  }
  std::vector<ScanTarget> targets(scan_targets);
  for (std::size_t t = 0; t < scan_targets; ++t)
    targets[t] = {WatermarkId::from_integer(detail::kMuBase + t), params.k_p,
                  ""};
  const ThresholdSpec threshold = ThresholdSpec::fixed(0.01);

  report.scan.records = scan_records;
  report.scan.targets = scan_targets;
  report.scan.jobs_hi = jobs_hi;
  auto t0 = std::chrono::steady_clock::now();
  const ScanReport scan1 =
      scan_corpus(records, targets, nullptr, params, threshold, 1);
  report.scan.jobs1_ms = detail::elapsed_ms(t0);
  t0 = std::chrono::steady_clock::now();
  const ScanReport scanN =
      scan_corpus(records, targets, nullptr, params, threshold, jobs_hi);
  report.scan.jobs_hi_ms = detail::elapsed_ms(t0);
  report.scan.speedup = report.scan.jobs_hi_ms > 0.0
                            ? report.scan.jobs1_ms / report.scan.jobs_hi_ms
                            : 0.0;
  report.scan.identical_output =
      detail::serialize_rows(scan1) == detail::serialize_rows(scanN);
  return report;
}

// Per-slot average occupancy against the basis curve, ready for plotting.
// A count vector with nothing counted yields a header-only table.
inline void emit_distribution_plotdata(std::ostream& out,
                                       const CountVector& cv,
                                       PerturbFamily family,
                                       std::uint32_t k_p) {
  if (cv.n_counted < 1) {
    out << "slot,c_bar,phi\n";
    return;
  }
  const std::uint32_t n = cv.vocab_size();
  const BasisEvaluator basis(family, n, k_p);
  out << "slot,c_bar,phi\n";
  for (std::uint32_t v = 0; v < n; ++v) {
    const double c_bar = static_cast<double>(cv.counts[v]) /
                         static_cast<double>(cv.n_counted);
    out << v << ',' << detail::format_double(c_bar) << ','
        << detail::format_double(basis(v)) << '\n';
  }
}

}  // namespace tokenmark
