// Command-line front end. Every subcommand is a thin file-and-flags adapter
// over the library; all randomness flows from --seed and outputs are
// byte-reproducible (timing goes to stderr only).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tokenmark/tokenmark.hpp"

namespace {

using namespace tokenmark;

// sysexits-style table; documented in the README.
int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return 64;
    case ErrorKind::data: return 65;
    case ErrorKind::too_short: return 65;
    case ErrorKind::no_input: return 66;
    case ErrorKind::provider: return 69;
    case ErrorKind::internal: return 70;
    case ErrorKind::io: return 74;
    case ErrorKind::protocol: return 76;
    case ErrorKind::config: return 78;
  }
  return 70;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::no_input, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::io, "cannot write " + path);
  out << content;
  if (!out) raise(ErrorKind::io, "short write to " + path);
}

// "-" sends output to stdout; anything else is a file path.
class OutputTarget {
 public:
  explicit OutputTarget(const std::string& path) {
    if (path != "-") {
      file_.open(path, std::ios::binary);
      if (!file_) raise(ErrorKind::io, "cannot write " + path);
      use_file_ = true;
    }
  }
  std::ostream& stream() { return use_file_ ? file_ : std::cout; }

 private:
  std::ofstream file_;
  bool use_file_ = false;
};

std::string trimmed(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Hex on the command line, or @path to read the hex from a file.
WatermarkId parse_mu_arg(const std::string& arg, const char* flag) {
  std::string hex = arg;
  if (!arg.empty() && arg[0] == '@') hex = trimmed(read_text_file(arg.substr(1)));
  try {
    return WatermarkId::from_hex(hex);
  } catch (const Error& e) {
    raise(ErrorKind::usage,
          std::string(flag) + ": '" + arg + "' is not a hex id (" + e.what() + ")");
  }
}

double parse_double_strict(const std::string& s, const char* what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    raise(ErrorKind::usage, std::string(what) + ": '" + s + "' is not a number");
  }
  if (pos != s.size())
    raise(ErrorKind::usage, std::string(what) + ": '" + s + "' is not a number");
  return v;
}

// One score per nonempty line: either a bare JSON number or an object with a
// numeric "q" field (the shape verify/scan emit).
std::vector<double> load_null_scores(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<double> scores;
  std::size_t lineno = 0;
  for (const std::string& raw : split_lines(text)) {
    ++lineno;
    const std::string line = trimmed(raw);
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      raise(ErrorKind::data,
            path + ":" + std::to_string(lineno) + ": not a JSON number or object");
    }
    if (j.is_number()) {
      scores.push_back(j.get<double>());
    } else if (j.is_object() && j.contains("q") && j["q"].is_number()) {
      scores.push_back(j["q"].get<double>());
    } else {
      raise(ErrorKind::data, path + ":" + std::to_string(lineno) +
                                 ": expected a number or an object with \"q\"");
    }
  }
  return scores;
}

// `--threshold 0.015` fixes the decision threshold; `--threshold
// fpr:0.01@nulls.jsonl` calibrates it against a null-score file.
ThresholdSpec parse_threshold_arg(const std::string& arg) {
  if (arg.rfind("fpr:", 0) == 0) {
    const std::string rest = arg.substr(4);
    const auto at = rest.find('@');
    if (at == std::string::npos)
      raise(ErrorKind::usage,
            "--threshold fpr form is fpr:RATE@NULLFILE, got '" + arg + "'");
    const double fpr = parse_double_strict(rest.substr(0, at), "--threshold fpr");
    return ThresholdSpec::at_fpr(fpr, load_null_scores(rest.substr(at + 1)));
  }
  return ThresholdSpec::fixed(parse_double_strict(arg, "--threshold"));
}

// Protocol-shape flags shared by the reading-side subcommands. The shape
// either comes whole from a manifest or whole from flags; mixing the two is
// a protocol error so a manifest can never be silently reinterpreted.
struct ProtocolFlags {
  std::string manifest_path;
  unsigned n = 2;
  std::string family = "fourier";
  std::string backend = "fisher-yates";
  std::uint32_t vocab_size = 0;
  std::uint32_t k_p = 0;     // 0 = take manifest value / default 1
  double kappa = -1.0;       // <0 = take manifest value / default 4.0
  std::size_t cache_capacity = 4096;

  CLI::Option* opt_n = nullptr;
  CLI::Option* opt_family = nullptr;
  CLI::Option* opt_backend = nullptr;
  CLI::Option* opt_vocab_size = nullptr;
};

void add_protocol_flags(CLI::App* cmd, ProtocolFlags& pf, bool with_kappa) {
  cmd->add_option("--manifest", pf.manifest_path,
                  "Manifest JSON carrying the protocol parameters");
  pf.opt_n = cmd->add_option("--n", pf.n, "n-gram window length");
  pf.opt_family =
      cmd->add_option("--family", pf.family, "Basis family: fourier or square");
  pf.opt_backend = cmd->add_option(
      "--backend", pf.backend, "Permutation backend: fisher-yates or feistel-prp");
  pf.opt_vocab_size =
      cmd->add_option("--vocab-size", pf.vocab_size, "Vocabulary size");
  cmd->add_option("--k-p", pf.k_p, "Perturbation key (default: manifest value or 1)")
      ->expected(1);
  if (with_kappa)
    cmd->add_option("--kappa", pf.kappa,
                    "Perturbation strength (default: manifest value or 4)");
  cmd->add_option("--cache-capacity", pf.cache_capacity,
                  "Permutation cache entries");
}

// Resolves the protocol shape. Returns the manifest when one was loaded so
// callers can reuse its mu / tokenizer id.
std::optional<WatermarkManifest> resolve_protocol(const ProtocolFlags& pf,
                                                  WatermarkParams& params) {
  std::optional<WatermarkManifest> manifest;
  if (!pf.manifest_path.empty()) {
    for (const CLI::Option* opt :
         {pf.opt_n, pf.opt_family, pf.opt_backend, pf.opt_vocab_size})
      if (opt != nullptr && opt->count() > 0)
        raise(ErrorKind::protocol,
              opt->get_name() +
                  " conflicts with --manifest; the manifest fixes the protocol shape");
    manifest = WatermarkManifest::load(pf.manifest_path);
    params = params_from_manifest(*manifest);
  } else {
    if (pf.vocab_size == 0)
      raise(ErrorKind::usage, "either --manifest or --vocab-size is required");
    params.vocab_size = pf.vocab_size;
    params.n = pf.n;
    params.family = parse_family(pf.family);
    params.backend = parse_backend(pf.backend);
    params.k_p = 1;
    params.kappa = 4.0;
  }
  if (pf.k_p != 0) params.k_p = pf.k_p;
  if (pf.kappa >= 0.0) params.kappa = pf.kappa;
  params.cache_capacity = pf.cache_capacity;
  check_key(params.family, params.vocab_size, params.k_p);
  return manifest;
}

std::optional<VocabModel> load_vocab(const std::string& path) {
  if (path.empty()) return std::nullopt;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::data, path + ": not valid JSON: " + e.what());
  }
  return VocabModel::from_json(j);
}

TokenStream record_tokens(const CorpusRecord& rec,
                          const std::optional<VocabModel>& vocab,
                          std::uint32_t vocab_size) {
  if (rec.tokens.has_value()) {
    for (TokenId t : *rec.tokens)
      if (t >= vocab_size)
        raise(ErrorKind::data, "record " + rec.id + ": token id " +
                                   std::to_string(t) + " outside vocabulary");
    return *rec.tokens;
  }
  if (!vocab.has_value())
    raise(ErrorKind::config,
          "record " + rec.id + " holds text; pass --vocab to tokenize it");
  return vocab->encode(*rec.text);
}

nlohmann::json record_out_json(const std::string& id, const TokenStream& tokens,
                               const std::optional<VocabModel>& vocab) {
  nlohmann::json j;
  j["id"] = id;
  if (vocab.has_value()) j["text"] = vocab->decode(tokens);
  j["tokens"] = tokens;
  return j;
}

nlohmann::json error_entry(const std::string& id, const std::string& message) {
  nlohmann::json j;
  j["error"] = message;
  j["id"] = id;
  return j;
}

// ---------------------------------------------------------------- gen-corpus

struct GenCorpusOpts {
  std::string out = "-";
  std::string format = "text";
  SyntheticCorpusConfig cfg;
};

int run_gen_corpus(const GenCorpusOpts& o) {
  const std::string corpus = synthetic_corpus(o.cfg);
  OutputTarget out(o.out);
  if (o.format == "text") {
    out.stream() << corpus;
  } else {
    std::size_t i = 0;
    for (const std::string& line : split_lines(corpus)) {
      if (line.empty()) continue;
      nlohmann::json j;
      char id[16];
      std::snprintf(id, sizeof(id), "s%06zu", i++);
      j["id"] = id;
      j["text"] = line;
      out.stream() << j.dump() << '\n';
    }
  }
  return 0;
}

// ---------------------------------------------------------------- make-vocab

struct MakeVocabOpts {
  std::string corpus;
  std::string out = "-";
  std::string kind = "word";
  std::string oov = "reserved";
  std::size_t max_size = 4096;
};

int run_make_vocab(const MakeVocabOpts& o) {
  VocabModel vocab;
  if (o.kind == "byte") {
    vocab = VocabModel::byte_vocab();
  } else {
    if (o.corpus.empty())
      raise(ErrorKind::usage, "--corpus is required for a word vocabulary");
    const OovPolicy policy = o.oov == "bytes" ? OovPolicy::byte_fallback
                                              : OovPolicy::reserved_token;
    vocab = VocabModel::word_vocab(read_text_file(o.corpus), o.max_size, policy);
  }
  OutputTarget out(o.out);
  out.stream() << vocab.to_json().dump() << '\n';
  std::cerr << "vocabulary: " << vocab.size() << " tokens, id "
            << vocab.tokenizer_id() << "\n";
  return 0;
}

// --------------------------------------------------------------------- train

struct TrainOpts {
  std::string corpus;
  std::string vocab;
  std::string out = "-";
  unsigned order = 2;
  double alpha = 0.1;
  bool append_eos = false;
  bool cyclic = false;
};

int run_train(const TrainOpts& o) {
  const std::optional<VocabModel> vocab = load_vocab(o.vocab);
  if (!vocab.has_value()) raise(ErrorKind::usage, "--vocab is required");
  const std::vector<TokenStream> streams =
      tokenize_lines(read_text_file(o.corpus), *vocab, o.append_eos);
  if (streams.empty()) raise(ErrorKind::data, "training corpus has no usable lines");
  std::optional<TokenId> eos;
  if (o.append_eos) eos = vocab->eos_id();
  const ToyMarkovLM model =
      markov_train(streams, o.order, o.alpha, vocab->size(), eos, o.cyclic);
  OutputTarget out(o.out);
  out.stream() << model.to_json(vocab->vocab_hash()).dump() << '\n';
  std::cerr << "trained order-" << o.order << " model on " << streams.size()
            << " lines\n";
  return 0;
}

// ----------------------------------------------------------------- watermark

struct WatermarkOpts {
  std::string in;
  std::string out = "-";
  std::string manifest_out;
  std::string mu;
  std::string vocab_path;
  std::string provider = "replay";
  std::uint32_t vocab_size = 0;
  unsigned n = 2;
  std::string family = "fourier";
  std::string backend = "fisher-yates";
  std::uint32_t k_p = 1;
  double kappa = 4.0;
  std::size_t cache_capacity = 4096;
  std::string strategy = "multinomial";
  double temperature = 1.0;
  double top_p = 1.0;
  unsigned beam_width = 4;
  double beam_lambda = 1.0;
  std::size_t max_tokens = 256;
  std::uint64_t seed = 0;
  unsigned replay_order = 2;
  double replay_alpha = 1e-4;
};

int run_watermark(const WatermarkOpts& o) {
  const WatermarkId mu = parse_mu_arg(o.mu, "--mu");
  const std::optional<VocabModel> vocab = load_vocab(o.vocab_path);

  // Provider spec: replay | uniform | markov:PATH | remote:URL.
  std::string kind = o.provider, arg;
  if (const auto colon = o.provider.find(':'); colon != std::string::npos) {
    kind = o.provider.substr(0, colon);
    arg = o.provider.substr(colon + 1);
  }
  std::unique_ptr<ToyMarkovLM> markov;
  if (kind == "markov") {
    if (arg.empty()) raise(ErrorKind::usage, "--provider markov needs markov:PATH");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(arg));
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::data, arg + ": not valid JSON: " + e.what());
    }
    markov = std::make_unique<ToyMarkovLM>(ToyMarkovLM::from_json(
        j, vocab.has_value() ? vocab->vocab_hash() : ""));
  }

  WatermarkParams params;
  params.vocab_size = vocab.has_value() ? vocab->size()
                      : o.vocab_size != 0 ? o.vocab_size
                      : markov != nullptr ? markov->vocab_size()
                                          : 0;
  if (params.vocab_size == 0)
    raise(ErrorKind::usage,
          "vocabulary size unknown: pass --vocab, --vocab-size, or a markov provider");
  params.n = o.n;
  params.family = parse_family(o.family);
  params.backend = parse_backend(o.backend);
  params.k_p = o.k_p;
  params.kappa = o.kappa;
  params.cache_capacity = o.cache_capacity;
  params.sampling.strategy = parse_strategy(o.strategy);
  params.sampling.temperature = o.temperature;
  params.sampling.top_p = o.top_p;
  params.sampling.beam_width = o.beam_width;
  params.sampling.beam_lambda = o.beam_lambda;
  params.sampling.max_tokens = o.max_tokens;
  params.sampling.rng_seed = o.seed;
  params.validate();

  std::unique_ptr<LogitProvider> fixed_provider;
  if (kind == "uniform") {
    fixed_provider = std::make_unique<UniformProvider>(params.vocab_size);
  } else if (kind == "markov") {
    fixed_provider = std::move(markov);
  } else if (kind == "remote") {
    if (arg.empty()) raise(ErrorKind::usage, "--provider remote needs remote:URL");
    std::optional<TokenId> eos;
    if (vocab.has_value()) eos = vocab->eos_id();
    fixed_provider =
        std::make_unique<RemoteProvider>(arg, params.vocab_size, eos);
  } else if (kind != "replay") {
    raise(ErrorKind::usage, "unknown provider '" + o.provider +
                                "' (expected replay, uniform, markov:PATH, remote:URL)");
  }

  const std::string tokenizer_id =
      vocab.has_value() ? vocab->tokenizer_id() : "raw-v1";
  std::string manifest_path = o.manifest_out;
  if (manifest_path.empty()) {
    if (o.out == "-")
      raise(ErrorKind::usage,
            "--manifest-out is required when the output goes to stdout");
    manifest_path = o.out + ".manifest.json";
  }

  const std::vector<CorpusRecord> records = read_jsonl(o.in);
  PermutationEngine engine(params.backend, params.vocab_size,
                           params.cache_capacity);
  OutputTarget out(o.out);
  std::size_t failures = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const CorpusRecord& rec = records[i];
    try {
      const TokenStream input = record_tokens(rec, vocab, params.vocab_size);
      WatermarkParams p = params;
      p.sampling.rng_seed = derive_seed(o.seed, i);
      TokenStream marked;
      if (kind == "replay") {
        if (input.empty())
          raise(ErrorKind::too_short, "record " + rec.id + " is empty");
        ReplayProvider replay(input, o.replay_order, o.replay_alpha,
                              p.vocab_size);
        const std::size_t ctx_len =
            std::min<std::size_t>(o.replay_order, input.size());
        const TokenStream context(input.begin(), input.begin() + ctx_len);
        p.sampling.max_tokens =
            input.size() > ctx_len ? input.size() - ctx_len : 1;
        const StreamResult r =
            p.sampling.strategy == SampleStrategy::beam
                ? beam_watermark(context, mu, p, replay, engine, tokenizer_id)
                : watermark_stream(context, mu, p, replay, engine, tokenizer_id);
        marked = context;
        marked.insert(marked.end(), r.tokens.begin(), r.tokens.end());
      } else {
        const StreamResult r =
            p.sampling.strategy == SampleStrategy::beam
                ? beam_watermark(input, mu, p, *fixed_provider, engine,
                                 tokenizer_id)
                : watermark_stream(input, mu, p, *fixed_provider, engine,
                                   tokenizer_id);
        marked = r.tokens;
      }
      out.stream() << record_out_json(rec.id, marked, vocab).dump() << '\n';
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::provider) throw;  // infrastructure, not data
      ++failures;
      out.stream() << error_entry(rec.id, e.what()).dump() << '\n';
    }
  }
  const WatermarkManifest manifest = make_manifest(mu, params, tokenizer_id);
  manifest.save(manifest_path);
  std::cerr << "watermarked " << (records.size() - failures) << "/"
            << records.size() << " records; manifest: " << manifest_path << "\n";
  return failures == 0 ? 0 : 2;
}

// -------------------------------------------------------------------- verify

struct VerifyOpts {
  std::string in;
  std::string out = "-";
  std::string mu;
  std::string threshold = "0.0";
  std::string vocab_path;
  ProtocolFlags proto;
};

int run_verify(const VerifyOpts& o) {
  WatermarkParams params;
  const std::optional<WatermarkManifest> manifest =
      resolve_protocol(o.proto, params);
  WatermarkId mu;
  if (!o.mu.empty())
    mu = parse_mu_arg(o.mu, "--mu");
  else if (manifest.has_value())
    mu = manifest->mu;
  else
    raise(ErrorKind::usage, "--mu is required when no manifest is given");
  const ThresholdSpec threshold = parse_threshold_arg(o.threshold);
  const std::optional<VocabModel> vocab = load_vocab(o.vocab_path);

  const std::vector<CorpusRecord> records = read_jsonl(o.in);
  PermutationEngine engine(params.backend, params.vocab_size,
                           params.cache_capacity);
  OutputTarget out(o.out);
  std::size_t failures = 0, flagged = 0;
  for (const CorpusRecord& rec : records) {
    try {
      const TokenStream tokens = record_tokens(rec, vocab, params.vocab_size);
      const VerificationReport report =
          verify(tokens, mu, params.k_p, params, engine, threshold);
      nlohmann::json j = report.to_json();
      j["id"] = rec.id;
      if (report.decision) ++flagged;
      out.stream() << j.dump() << '\n';
    } catch (const Error& e) {
      ++failures;
      out.stream() << error_entry(rec.id, e.what()).dump() << '\n';
    }
  }
  std::cerr << "verified " << (records.size() - failures) << "/"
            << records.size() << " records, " << flagged << " flagged\n";
  return failures == 0 ? 0 : 2;
}

// ---------------------------------------------------------------------- scan

struct ScanOpts {
  std::string in;
  std::string out = "-";
  std::string targets_path;
  std::vector<std::string> mus;
  std::string threshold = "0.0";
  std::string vocab_path;
  unsigned jobs = 1;
  ProtocolFlags proto;
};

int run_scan(const ScanOpts& o) {
  WatermarkParams params;
  resolve_protocol(o.proto, params);
  const ThresholdSpec threshold = parse_threshold_arg(o.threshold);
  const std::optional<VocabModel> vocab = load_vocab(o.vocab_path);

  std::vector<ScanTarget> targets;
  if (!o.targets_path.empty()) {
    const std::string text = read_text_file(o.targets_path);
    std::size_t lineno = 0;
    for (const std::string& raw : split_lines(text)) {
      ++lineno;
      const std::string line = trimmed(raw);
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        raise(ErrorKind::data, o.targets_path + ":" + std::to_string(lineno) +
                                   ": not a JSON object");
      }
      if (!j.is_object() || !j.contains("mu") || !j["mu"].is_string())
        raise(ErrorKind::data, o.targets_path + ":" + std::to_string(lineno) +
                                   ": target needs a string \"mu\"");
      ScanTarget t;
      t.mu = parse_mu_arg(j["mu"].get<std::string>(), "targets mu");
      t.k_p = j.value("k_p", params.k_p);
      t.label = j.value("label", "");
      targets.push_back(std::move(t));
    }
  }
  for (const std::string& m : o.mus)
    targets.push_back({parse_mu_arg(m, "--mu"), params.k_p, ""});
  if (targets.empty())
    raise(ErrorKind::usage, "scan needs --targets or at least one --mu");

  const std::vector<CorpusRecord> records = read_jsonl_lenient(o.in);
  const ScanReport report =
      scan_corpus(records, targets, vocab.has_value() ? &*vocab : nullptr,
                  params, threshold, o.jobs);
  OutputTarget out(o.out);
  write_scan_report(out.stream(), report);
  std::cerr << "scanned " << records.size() << " records x " << targets.size()
            << " targets: " << report.flagged << " flagged, " << report.errored
            << " errors\n";
  return report.errored == 0 ? 0 : 2;
}

// ------------------------------------------------------------------- extract

struct ExtractOpts {
  std::string in;
  std::string out = "-";
  std::string mu;
  std::string method = "auto";
  bool combine = false;
  bool scores = false;
  std::string vocab_path;
  ProtocolFlags proto;
};

nlohmann::json extraction_json(const ExtractionResult& r, double guess_baseline) {
  nlohmann::json j;
  j["guess_baseline"] = guess_baseline;
  j["k_p_hat"] = r.k_p_hat;
  j["margin"] = r.margin;
  j["method"] = r.method;
  j["score"] = r.best_score;
  if (r.scores.has_value()) {
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [k, q] : *r.scores) s[std::to_string(k)] = q;
    j["scores"] = std::move(s);
  }
  return j;
}

int run_extract(const ExtractOpts& o) {
  WatermarkParams params;
  const std::optional<WatermarkManifest> manifest =
      resolve_protocol(o.proto, params);
  WatermarkId mu;
  if (!o.mu.empty())
    mu = parse_mu_arg(o.mu, "--mu");
  else if (manifest.has_value())
    mu = manifest->mu;
  else
    raise(ErrorKind::usage, "--mu is required when no manifest is given");
  const ExtractMethod method = parse_extract_method(o.method);
  const std::optional<VocabModel> vocab = load_vocab(o.vocab_path);
  const auto [lo, hi] = key_range(params.family, params.vocab_size);
  const double guess_baseline = 1.0 / static_cast<double>(hi - lo + 1);

  const std::vector<CorpusRecord> records = read_jsonl(o.in);
  PermutationEngine engine(params.backend, params.vocab_size,
                           params.cache_capacity);
  OutputTarget out(o.out);
  std::size_t failures = 0;
  if (o.combine) {
    std::vector<CountVector> parts;
    for (const CorpusRecord& rec : records) {
      try {
        const TokenStream tokens = record_tokens(rec, vocab, params.vocab_size);
        parts.push_back(count_tokens(tokens, mu, params.n, engine));
      } catch (const Error& e) {
        ++failures;
        std::cerr << "skipping record " << rec.id << ": " << e.what() << "\n";
      }
    }
    if (parts.empty())
      raise(ErrorKind::data, "no record could be counted; nothing to combine");
    const ExtractionResult r =
        extract_key(combine_counts(parts), params.family, method, o.scores);
    nlohmann::json j = extraction_json(r, guess_baseline);
    j["records_failed"] = failures;
    j["records_used"] = parts.size();
    out.stream() << j.dump() << '\n';
  } else {
    for (const CorpusRecord& rec : records) {
      try {
        const TokenStream tokens = record_tokens(rec, vocab, params.vocab_size);
        const ExtractionResult r = extract_key(
            count_tokens(tokens, mu, params.n, engine), params.family, method,
            o.scores);
        nlohmann::json j = extraction_json(r, guess_baseline);
        j["id"] = rec.id;
        out.stream() << j.dump() << '\n';
      } catch (const Error& e) {
        ++failures;
        out.stream() << error_entry(rec.id, e.what()).dump() << '\n';
      }
    }
  }
  return failures == 0 ? 0 : 2;
}

// -------------------------------------------------------------------- attack

struct AttackOpts {
  std::string in;
  std::string out = "-";
  std::string kind = "delete";
  double rate = 0.1;
  std::uint64_t seed = 0;
  std::string table_path;
  std::string vocab_path;
  std::string mu2;
  unsigned order = 2;
  double alpha = 1e-4;
  ProtocolFlags proto;
};

int run_attack(const AttackOpts& o) {
  const std::optional<VocabModel> vocab = load_vocab(o.vocab_path);
  std::optional<SubstitutionTable> table;
  if (o.kind == "substitute") {
    if (o.table_path.empty())
      raise(ErrorKind::usage, "--kind substitute needs --table");
    table = SubstitutionTable::from_json_text(read_text_file(o.table_path));
  }

  // Vocabulary size: --vocab wins, then the table / protocol shape.
  std::uint32_t vocab_size = vocab.has_value() ? vocab->size() : 0;
  WatermarkParams params;
  std::optional<PermutationEngine> engine;
  WatermarkId mu2;
  if (o.kind == "overlap") {
    resolve_protocol(o.proto, params);
    if (vocab_size == 0) vocab_size = params.vocab_size;
    if (params.vocab_size != vocab_size)
      raise(ErrorKind::config, "--vocab and protocol vocab_size disagree");
    if (o.mu2.empty())
      raise(ErrorKind::usage, "--kind overlap needs --mu2 (the second id)");
    mu2 = parse_mu_arg(o.mu2, "--mu2");
    engine.emplace(params.backend, params.vocab_size, params.cache_capacity);
  } else if (vocab_size == 0) {
    if (table.has_value())
      vocab_size = table->vocab_size;
    else if (o.proto.vocab_size != 0)
      vocab_size = o.proto.vocab_size;
    else if (o.kind == "insert")
      raise(ErrorKind::usage, "--kind insert needs --vocab or --vocab-size");
  }

  const std::vector<CorpusRecord> records = read_jsonl(o.in);
  OutputTarget out(o.out);
  std::size_t failures = 0;
  std::uint64_t requested = 0, applied = 0, skipped = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const CorpusRecord& rec = records[i];
    try {
      const TokenStream input = record_tokens(
          rec, vocab,
          vocab_size != 0 ? vocab_size : std::numeric_limits<std::uint32_t>::max());
      const std::uint64_t rec_seed = derive_seed(o.seed, i);
      AttackResult r;
      if (o.kind == "insert") {
        r = insertion_attack(input, o.rate, vocab_size, rec_seed);
      } else if (o.kind == "delete") {
        r = deletion_attack(input, o.rate, rec_seed, o.proto.n);
      } else if (o.kind == "substitute") {
        r = substitution_attack(input, o.rate, *table, rec_seed);
      } else if (o.kind == "overlap") {
        WatermarkParams p = params;
        p.sampling.rng_seed = rec_seed;
        r = overlap_attack(input, mu2, p, o.order, o.alpha, *engine);
      } else {
        raise(ErrorKind::usage,
              "unknown --kind '" + o.kind +
                  "' (expected insert, delete, substitute, overlap)");
      }
      requested += r.requested;
      applied += r.applied;
      skipped += r.skipped;
      if (!r.warning.empty())
        std::cerr << "warning: record " << rec.id << ": " << r.warning << '\n';
      out.stream() << record_out_json(rec.id, r.tokens, vocab).dump() << '\n';
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::usage) throw;
      ++failures;
      out.stream() << error_entry(rec.id, e.what()).dump() << '\n';
    }
  }
  std::cerr << "attack " << o.kind << ": requested " << requested
            << ", applied " << applied << ", skipped " << skipped << ", failed "
            << failures << " records\n";
  return failures == 0 ? 0 : 2;
}

// ---------------------------------------------------------------- make-subst

struct MakeSubstOpts {
  std::string in;
  std::string out = "-";
  std::string vocab_path;
  std::uint32_t vocab_size = 0;
  unsigned top_k = 4;
  unsigned fanout = 128;
};

int run_make_subst(const MakeSubstOpts& o) {
  const std::optional<VocabModel> vocab = load_vocab(o.vocab_path);
  const std::uint32_t vocab_size =
      vocab.has_value() ? vocab->size() : o.vocab_size;
  if (vocab_size == 0)
    raise(ErrorKind::usage, "--vocab or --vocab-size is required");
  const std::vector<CorpusRecord> records = read_jsonl(o.in);
  std::vector<TokenStream> streams;
  streams.reserve(records.size());
  for (const CorpusRecord& rec : records)
    streams.push_back(record_tokens(rec, vocab, vocab_size));
  const SubstitutionTable table =
      build_substitution_table(streams, vocab_size, o.top_k, o.fanout);
  OutputTarget out(o.out);
  out.stream() << table.to_json().dump() << '\n';
  std::cerr << "substitution table: " << table.entries.size()
            << " tokens have candidates\n";
  return 0;
}

// ----------------------------------------------------------------- calibrate

struct CalibrateOpts {
  std::string null_path;
  double fpr = 0.05;
  std::string out = "-";
};

int run_calibrate(const CalibrateOpts& o) {
  const std::vector<double> nulls = load_null_scores(o.null_path);
  const double threshold = calibrate_threshold(nulls, o.fpr);
  nlohmann::json j;
  j["fpr"] = o.fpr;
  j["samples"] = nulls.size();
  j["threshold"] = threshold;
  OutputTarget out(o.out);
  out.stream() << j.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------- eval

struct EvalOpts {
  std::string config_path;
  std::string out_dir;
};

std::unique_ptr<LogitProvider> provider_from_config(const nlohmann::json& cfg,
                                                    std::uint32_t vocab_size) {
  if (!cfg.is_object() || !cfg.contains("kind"))
    raise(ErrorKind::config, "eval config: provider needs a \"kind\"");
  const std::string kind = cfg["kind"].get<std::string>();
  if (kind == "uniform") return std::make_unique<UniformProvider>(vocab_size);
  if (kind == "markov") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(cfg.at("path").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::data, std::string("provider model: ") + e.what());
    }
    auto model = std::make_unique<ToyMarkovLM>(ToyMarkovLM::from_json(j));
    if (model->vocab_size() != vocab_size)
      raise(ErrorKind::config, "provider vocab_size does not match params");
    return model;
  }
  if (kind == "markov-train") {
    const std::optional<VocabModel> vocab =
        load_vocab(cfg.at("vocab").get<std::string>());
    const std::vector<TokenStream> streams = tokenize_lines(
        read_text_file(cfg.at("corpus").get<std::string>()), *vocab,
        cfg.value("append_eos", false));
    std::optional<TokenId> eos;
    if (cfg.value("append_eos", false)) eos = vocab->eos_id();
    auto model = std::make_unique<ToyMarkovLM>(
        markov_train(streams, cfg.value("order", 2u), cfg.value("alpha", 0.1),
                     vocab->size(), eos, cfg.value("cyclic", false)));
    if (model->vocab_size() != vocab_size)
      raise(ErrorKind::config, "provider vocab_size does not match params");
    return model;
  }
  if (kind == "walk") {
    // Self-contained structured model: a backoff n-gram chain fitted to a
    // synthetic token walk. Needs no corpus or vocabulary files.
    const TokenStream walk = synthetic_walk(
        vocab_size, cfg.value("out_degree", 8u),
        cfg.value("length", std::size_t{16384}),
        cfg.value("walk_seed", std::uint64_t{7}));
    return std::make_unique<ReplayProvider>(walk, cfg.value("order", 2u),
                                            cfg.value("alpha", 1e-3),
                                            vocab_size);
  }
  raise(ErrorKind::config, "eval config: unknown provider kind '" + kind + "'");
}

WatermarkParams params_from_config(const nlohmann::json& cfg) {
  if (!cfg.is_object()) raise(ErrorKind::config, "eval config: params must be an object");
  WatermarkParams p;
  p.vocab_size = cfg.at("vocab_size").get<std::uint32_t>();
  p.n = cfg.value("n", 2u);
  p.family = parse_family(cfg.value("family", "fourier"));
  p.k_p = cfg.value("k_p", 1u);
  p.kappa = cfg.value("kappa", 4.0);
  p.backend = parse_backend(cfg.value("backend", "fisher-yates"));
  p.cache_capacity = cfg.value("cache_capacity", std::size_t{4096});
  check_key(p.family, p.vocab_size, p.k_p);
  return p;
}

int run_eval(const EvalOpts& o) {
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(read_text_file(o.config_path));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::data, o.config_path + ": not valid JSON: " + e.what());
  }
  if (!cfg.is_object()) raise(ErrorKind::data, "eval config must be a JSON object");
  const std::string mode = cfg.value("mode", "");
  std::filesystem::create_directories(o.out_dir);
  const auto out_path = [&](const char* name) {
    return (std::filesystem::path(o.out_dir) / name).string();
  };

  // The config layer wants statistically meaningful cells; the library
  // functions themselves accept smaller counts for targeted experiments.
  const auto config_trials = [&cfg]() {
    const unsigned trials = cfg.value("trials", 50u);
    if (trials < 30)
      raise(ErrorKind::config, "eval config: trials must be at least 30");
    return trials;
  };

  if (mode == "verifiability" || mode == "robustness") {
    const WatermarkParams params = params_from_config(cfg.at("params"));
    const std::unique_ptr<LogitProvider> provider =
        provider_from_config(cfg.at("provider"), params.vocab_size);
    const unsigned trials = config_trials();
    const unsigned stream_len = cfg.value("stream_len", 300u);
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{1});

    if (mode == "verifiability") {
      const std::vector<double> kappas =
          cfg.at("kappas").get<std::vector<double>>();
      std::vector<unsigned> stream_lens{stream_len};
      if (cfg.contains("stream_lens"))
        stream_lens = cfg.at("stream_lens").get<std::vector<unsigned>>();
      const VerifiabilityReport report = run_verifiability_sweep(
          *provider, params, kappas, stream_lens, trials, seed);
      write_text_file(out_path("report.json"), report.to_json().dump() + "\n");
      std::ostringstream csv;
      report.write_csv(csv);
      write_text_file(out_path("sweep.csv"), csv.str());
    } else {
      std::vector<AttackSpec> attacks;
      for (const auto& a : cfg.at("attacks"))
        attacks.push_back({a.at("kind").get<std::string>(), a.value("rate", 0.0)});
      std::optional<SubstitutionTable> table;
      if (cfg.contains("subst_table")) {
        table = SubstitutionTable::from_json_text(
            read_text_file(cfg.at("subst_table").get<std::string>()));
      } else if (cfg.value("subst_streams", 0u) > 0) {
        // Self-contained table: built from unwatermarked sample streams.
        const unsigned count = cfg.at("subst_streams").get<unsigned>();
        WatermarkParams p = params;
        p.sampling.max_tokens = stream_len;
        std::vector<TokenStream> streams;
        streams.reserve(count);
        for (unsigned i = 0; i < count; ++i) {
          p.sampling.rng_seed = derive_seed(seed, 0x700000 + i);
          streams.push_back(sample_stream({}, p, *provider));
        }
        table = build_substitution_table(streams, params.vocab_size,
                                         cfg.value("subst_top_k", 4u),
                                         cfg.value("subst_fanout", 128u));
      }
      OverlapConfig overlap;
      if (cfg.contains("overlap")) {
        overlap.order = cfg["overlap"].value("order", 2u);
        overlap.alpha = cfg["overlap"].value("alpha", 1e-4);
      }
      const RobustnessReport report = run_robustness_sweep(
          *provider, params, attacks, trials, stream_len, seed,
          table.has_value() ? &*table : nullptr, overlap);
      write_text_file(out_path("report.json"), report.to_json().dump() + "\n");
      std::ostringstream csv;
      report.write_csv(csv);
      write_text_file(out_path("sweep.csv"), csv.str());
    }
    return 0;
  }

  if (mode == "scalability") {
    const WatermarkParams params = params_from_config(cfg.at("params"));
    const std::unique_ptr<LogitProvider> provider =
        provider_from_config(cfg.at("provider"), params.vocab_size);
    const ScalabilityReport report = run_scalability_check(
        *provider, params, cfg.value("id_count", 1000u), config_trials(),
        cfg.value("stream_len", 400u), cfg.value("seed", std::uint64_t{1}));
    write_text_file(out_path("report.json"), report.to_json().dump() + "\n");
    return 0;
  }

  if (mode == "performance") {
    const WatermarkParams params = params_from_config(cfg.at("params"));
    const std::vector<std::uint32_t> vocab_sizes =
        cfg.at("vocab_sizes").get<std::vector<std::uint32_t>>();
    const PerformanceReport report = run_performance_check(
        params, vocab_sizes, cfg.value("stream_len", std::size_t{400}),
        cfg.value("records", std::size_t{1000}),
        cfg.value("targets", std::size_t{4}), cfg.value("jobs", 8u),
        cfg.value("seed", std::uint64_t{1}));
    // Timings go to stderr so the file artifact stays byte-reproducible.
    std::cerr << report.to_json().dump(2) << "\n";
    nlohmann::json stable;
    stable["identical_output"] = report.scan.identical_output;
    stable["jobs"] = report.scan.jobs_hi;
    stable["records"] = report.scan.records;
    stable["targets"] = report.scan.targets;
    nlohmann::json sizes = nlohmann::json::array();
    for (const VerifyTiming& t : report.verify) sizes.push_back(t.vocab_size);
    stable["vocab_sizes"] = std::move(sizes);
    write_text_file(out_path("report.json"), stable.dump() + "\n");
    return 0;
  }

  raise(ErrorKind::config,
        "eval config: mode must be verifiability, robustness, scalability, "
        "or performance");
}

// ------------------------------------------------------------------ plotdata

struct PlotdataOpts {
  std::string in;
  std::string out = "-";
  std::string mu;
  std::string vocab_path;
  ProtocolFlags proto;
};

int run_plotdata(const PlotdataOpts& o) {
  WatermarkParams params;
  const std::optional<WatermarkManifest> manifest =
      resolve_protocol(o.proto, params);
  WatermarkId mu;
  if (!o.mu.empty())
    mu = parse_mu_arg(o.mu, "--mu");
  else if (manifest.has_value())
    mu = manifest->mu;
  else
    raise(ErrorKind::usage, "--mu is required when no manifest is given");
  const std::optional<VocabModel> vocab = load_vocab(o.vocab_path);

  const std::vector<CorpusRecord> records = read_jsonl(o.in);
  PermutationEngine engine(params.backend, params.vocab_size,
                           params.cache_capacity);
  std::vector<CountVector> parts;
  std::size_t failures = 0;
  for (const CorpusRecord& rec : records) {
    try {
      const TokenStream tokens = record_tokens(rec, vocab, params.vocab_size);
      parts.push_back(count_tokens(tokens, mu, params.n, engine));
    } catch (const Error& e) {
      ++failures;
      std::cerr << "skipping record " << rec.id << ": " << e.what() << "\n";
    }
  }
  if (parts.empty()) raise(ErrorKind::data, "no record could be counted");
  OutputTarget out(o.out);
  emit_distribution_plotdata(out.stream(), combine_counts(parts), params.family,
                             params.k_p);
  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Statistical text watermarking: embed, verify, scan, extract"};
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  GenCorpusOpts gen;
  CLI::App* cmd_gen = app.add_subcommand(
      "gen-corpus", "Generate the deterministic synthetic text corpus");
  cmd_gen->add_option("--out", gen.out, "Output path or - for stdout");
  cmd_gen->add_option("--format", gen.format, "text (lines) or jsonl (records)")
      ->check(CLI::IsMember({"text", "jsonl"}));
  cmd_gen->add_option("--seed", gen.cfg.seed, "Corpus seed");
  cmd_gen->add_option("--sentences", gen.cfg.sentences, "Sentence count");
  cmd_gen->add_option("--content-words", gen.cfg.content_words,
                      "Content vocabulary size");
  cmd_gen->add_option("--topics", gen.cfg.topics, "Topic count");
  cmd_gen->add_option("--topic-span", gen.cfg.topic_span,
                      "Content words reachable per topic");

  MakeVocabOpts mv;
  CLI::App* cmd_mv =
      app.add_subcommand("make-vocab", "Build a tokenizer vocabulary");
  cmd_mv->add_option("--corpus", mv.corpus, "Training text (one line per sentence)");
  cmd_mv->add_option("--out", mv.out, "Output path or - for stdout");
  cmd_mv->add_option("--kind", mv.kind, "word or byte")
      ->check(CLI::IsMember({"word", "byte"}));
  cmd_mv->add_option("--oov", mv.oov, "Unknown-word policy: reserved or bytes")
      ->check(CLI::IsMember({"reserved", "bytes"}));
  cmd_mv->add_option("--max-size", mv.max_size, "Maximum vocabulary size");

  TrainOpts tr;
  CLI::App* cmd_tr =
      app.add_subcommand("train", "Train the n-gram language model");
  cmd_tr->add_option("--corpus", tr.corpus, "Training text")->required();
  cmd_tr->add_option("--vocab", tr.vocab, "Vocabulary JSON")->required();
  cmd_tr->add_option("--out", tr.out, "Output path or - for stdout");
  cmd_tr->add_option("--order", tr.order, "Context length in tokens");
  cmd_tr->add_option("--alpha", tr.alpha, "Additive smoothing");
  cmd_tr->add_flag("--append-eos", tr.append_eos,
                   "Terminate each line with the end token");
  cmd_tr->add_flag("--cyclic", tr.cyclic, "Count windows around the line ends");

  WatermarkOpts wm;
  CLI::App* cmd_wm = app.add_subcommand(
      "watermark", "Embed a watermark while generating from each record");
  cmd_wm->add_option("--in", wm.in, "Input records (JSONL)")->required();
  cmd_wm->add_option("--out", wm.out, "Output path or - for stdout");
  cmd_wm->add_option("--manifest-out", wm.manifest_out,
                     "Manifest path (default: OUT.manifest.json)");
  cmd_wm->add_option("--mu", wm.mu, "Watermark id as hex, or @file")->required();
  cmd_wm->add_option("--vocab", wm.vocab_path, "Vocabulary JSON for text records");
  cmd_wm->add_option("--provider", wm.provider,
                     "replay | uniform | markov:PATH | remote:URL");
  cmd_wm->add_option("--vocab-size", wm.vocab_size,
                     "Vocabulary size when no --vocab is given");
  cmd_wm->add_option("--n", wm.n, "n-gram window length");
  cmd_wm->add_option("--family", wm.family, "Basis family: fourier or square");
  cmd_wm->add_option("--backend", wm.backend,
                     "Permutation backend: fisher-yates or feistel-prp");
  cmd_wm->add_option("--k-p", wm.k_p, "Perturbation key");
  cmd_wm->add_option("--kappa", wm.kappa, "Perturbation strength");
  cmd_wm->add_option("--cache-capacity", wm.cache_capacity,
                     "Permutation cache entries");
  cmd_wm->add_option("--strategy", wm.strategy,
                     "multinomial, greedy, or beam");
  cmd_wm->add_option("--temperature", wm.temperature, "Softmax temperature");
  cmd_wm->add_option("--top-p", wm.top_p, "Nucleus sampling mass");
  cmd_wm->add_option("--beam-width", wm.beam_width, "Beam width");
  cmd_wm->add_option("--beam-lambda", wm.beam_lambda,
                     "Beam bonus weight on the watermark term");
  cmd_wm->add_option("--max-tokens", wm.max_tokens,
                     "Generation length for non-replay providers");
  cmd_wm->add_option("--seed", wm.seed, "Master sampling seed");
  cmd_wm->add_option("--replay-order", wm.replay_order,
                     "Replay provider context length");
  cmd_wm->add_option("--replay-alpha", wm.replay_alpha,
                     "Replay provider smoothing");

  VerifyOpts vf;
  CLI::App* cmd_vf = app.add_subcommand(
      "verify", "Score records against one watermark id (no model needed)");
  cmd_vf->add_option("--in", vf.in, "Input records (JSONL)")->required();
  cmd_vf->add_option("--out", vf.out, "Report path or - for stdout");
  cmd_vf->add_option("--mu", vf.mu,
                     "Watermark id as hex or @file (default: manifest id)");
  cmd_vf->add_option("--threshold", vf.threshold,
                     "Decision threshold: VALUE or fpr:RATE@NULLFILE");
  cmd_vf->add_option("--vocab", vf.vocab_path, "Vocabulary JSON for text records");
  add_protocol_flags(cmd_vf, vf.proto, /*with_kappa=*/false);

  ScanOpts sc;
  CLI::App* cmd_sc = app.add_subcommand(
      "scan", "Score a corpus against many watermark ids in parallel");
  cmd_sc->add_option("--in", sc.in, "Input records (JSONL)")->required();
  cmd_sc->add_option("--out", sc.out, "Report path or - for stdout");
  cmd_sc->add_option("--targets", sc.targets_path,
                     "Targets JSONL: {\"mu\":HEX,\"k_p\":K,\"label\":...}");
  cmd_sc->add_option("--mu", sc.mus, "Watermark id as hex or @file (repeatable)");
  cmd_sc->add_option("--threshold", sc.threshold,
                     "Decision threshold: VALUE or fpr:RATE@NULLFILE");
  cmd_sc->add_option("--vocab", sc.vocab_path, "Vocabulary JSON for text records");
  cmd_sc->add_option("--jobs", sc.jobs, "Worker threads");
  add_protocol_flags(cmd_sc, sc.proto, /*with_kappa=*/false);

  ExtractOpts ex;
  CLI::App* cmd_ex = app.add_subcommand(
      "extract", "Recover the perturbation key from counts alone");
  cmd_ex->add_option("--in", ex.in, "Input records (JSONL)")->required();
  cmd_ex->add_option("--out", ex.out, "Report path or - for stdout");
  cmd_ex->add_option("--mu", ex.mu,
                     "Watermark id as hex or @file (default: manifest id)");
  cmd_ex->add_option("--method", ex.method, "auto, direct, or fft")
      ->check(CLI::IsMember({"auto", "direct", "fft"}));
  cmd_ex->add_flag("--combine", ex.combine,
                   "Pool all records into a single extraction");
  cmd_ex->add_flag("--scores", ex.scores, "Include the full per-key score map");
  cmd_ex->add_option("--vocab", ex.vocab_path, "Vocabulary JSON for text records");
  add_protocol_flags(cmd_ex, ex.proto, /*with_kappa=*/false);

  AttackOpts at;
  CLI::App* cmd_at =
      app.add_subcommand("attack", "Apply a robustness attack to each record");
  cmd_at->add_option("--in", at.in, "Input records (JSONL)")->required();
  cmd_at->add_option("--out", at.out, "Output path or - for stdout");
  cmd_at->add_option("--kind", at.kind, "insert, delete, substitute, or overlap")
      ->check(CLI::IsMember({"insert", "delete", "substitute", "overlap"}));
  cmd_at->add_option("--rate", at.rate, "Edit rate in [0,1]");
  cmd_at->add_option("--seed", at.seed, "Attack seed");
  cmd_at->add_option("--table", at.table_path, "Substitution table JSON");
  cmd_at->add_option("--vocab", at.vocab_path, "Vocabulary JSON for text records");
  cmd_at->add_option("--mu2", at.mu2, "Second watermark id for overlap");
  cmd_at->add_option("--order", at.order, "Overlap replay context length");
  cmd_at->add_option("--alpha", at.alpha, "Overlap replay smoothing");
  add_protocol_flags(cmd_at, at.proto, /*with_kappa=*/true);

  MakeSubstOpts ms;
  CLI::App* cmd_ms = app.add_subcommand(
      "make-subst", "Build a substitution table from a token corpus");
  cmd_ms->add_option("--in", ms.in, "Input records (JSONL)")->required();
  cmd_ms->add_option("--out", ms.out, "Output path or - for stdout");
  cmd_ms->add_option("--vocab", ms.vocab_path, "Vocabulary JSON for text records");
  cmd_ms->add_option("--vocab-size", ms.vocab_size,
                     "Vocabulary size when no --vocab is given");
  cmd_ms->add_option("--top-k", ms.top_k, "Candidates kept per token");
  cmd_ms->add_option("--fanout", ms.fanout,
                     "Successors considered per context");

  CalibrateOpts ca;
  CLI::App* cmd_ca = app.add_subcommand(
      "calibrate", "Turn null scores into a decision threshold");
  cmd_ca->add_option("--null", ca.null_path, "Null scores (numbers or verify output)")
      ->required();
  cmd_ca->add_option("--fpr", ca.fpr, "Target false-positive rate");
  cmd_ca->add_option("--out", ca.out, "Report path or - for stdout");

  EvalOpts ev;
  CLI::App* cmd_ev = app.add_subcommand(
      "eval", "Run a sweep described by a config file");
  cmd_ev->add_option("--config", ev.config_path, "Experiment config JSON")
      ->required();
  cmd_ev->add_option("--out-dir", ev.out_dir, "Directory for report files")
      ->required();

  PlotdataOpts pd;
  CLI::App* cmd_pd = app.add_subcommand(
      "plotdata", "Emit per-slot occupancy vs. basis value as CSV");
  cmd_pd->add_option("--in", pd.in, "Input records (JSONL)")->required();
  cmd_pd->add_option("--out", pd.out, "CSV path or - for stdout");
  cmd_pd->add_option("--mu", pd.mu,
                     "Watermark id as hex or @file (default: manifest id)");
  cmd_pd->add_option("--vocab", pd.vocab_path, "Vocabulary JSON for text records");
  add_protocol_flags(cmd_pd, pd.proto, /*with_kappa=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 64;
  }

  try {
    if (cmd_gen->parsed()) return run_gen_corpus(gen);
    if (cmd_mv->parsed()) return run_make_vocab(mv);
    if (cmd_tr->parsed()) return run_train(tr);
    if (cmd_wm->parsed()) return run_watermark(wm);
    if (cmd_vf->parsed()) return run_verify(vf);
    if (cmd_sc->parsed()) return run_scan(sc);
    if (cmd_ex->parsed()) return run_extract(ex);
    if (cmd_at->parsed()) return run_attack(at);
    if (cmd_ms->parsed()) return run_make_subst(ms);
    if (cmd_ca->parsed()) return run_calibrate(ca);
    if (cmd_ev->parsed()) return run_eval(ev);
    if (cmd_pd->parsed()) return run_plotdata(pd);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 70;
  }
  return 70;  // unreachable: a subcommand is required
}
