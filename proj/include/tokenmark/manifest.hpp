#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "tokenmark/error.hpp"
#include "tokenmark/keying.hpp"
#include "tokenmark/params.hpp"
#include "tokenmark/version.hpp"

namespace tokenmark {

// Everything a verifier needs, and nothing it does not: the watermark has no
// other shared state. Serialized as canonical JSON (sorted keys, no
// insignificant whitespace) so equal manifests are byte-equal.
struct WatermarkManifest {
  WatermarkId mu;
  std::uint32_t k_p = 1;
  double kappa = 0.0;
  unsigned n = 2;
  PerturbFamily family = PerturbFamily::fourier;
  PermBackend backend = PermBackend::fisher_yates;
  std::uint32_t vocab_size = 0;
  std::string tokenizer_id;
  std::uint64_t rng_seed = 0;
  std::string tool_version = kToolVersion;

  void validate() const {
    if (vocab_size < 2) raise(ErrorKind::data, "manifest: vocab_size must be at least 2");
    if (n < 1) raise(ErrorKind::data, "manifest: n must be at least 1");
    const auto [lo, hi] = key_range(family, vocab_size);
    if (k_p < lo || k_p > hi)
      raise(ErrorKind::data, "manifest: k_p=" + std::to_string(k_p) +
                                 " outside [" + std::to_string(lo) + ", " +
                                 std::to_string(hi) + "] for family " +
                                 to_string(family));
    if (!std::isfinite(kappa) || kappa < 0.0)
      raise(ErrorKind::data, "manifest: kappa must be finite and non-negative");
  }

  std::string to_canonical_json() const {
    nlohmann::json j;  // object keys serialize sorted
    j["backend"] = to_string(backend);
    j["family"] = to_string(family);
    j["k_p"] = k_p;
    j["kappa"] = kappa;
    j["mu"] = mu.hex();
    j["n"] = n;
    j["rng_seed"] = rng_seed;
    j["tokenizer_id"] = tokenizer_id;
    j["tool_version"] = tool_version;
    j["vocab_size"] = vocab_size;
    return j.dump();
  }

  static WatermarkManifest from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::data, std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) raise(ErrorKind::data, "manifest must be a JSON object");
    static const std::set<std::string> known = {
        "backend", "family", "k_p", "kappa", "mu", "n",
        "rng_seed", "tokenizer_id", "tool_version", "vocab_size"};
    for (const auto& [key, value] : j.items())
      if (!known.contains(key))
        raise(ErrorKind::data, "manifest: unknown field \"" + key + "\"");
    WatermarkManifest m;
    try {
      m.backend = parse_backend(j.at("backend").get<std::string>());
      m.family = parse_family(j.at("family").get<std::string>());
      m.k_p = j.at("k_p").get<std::uint32_t>();
      m.kappa = j.at("kappa").get<double>();
      m.mu = WatermarkId::from_hex(j.at("mu").get<std::string>());
      m.n = j.at("n").get<unsigned>();
      m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
      m.tokenizer_id = j.at("tokenizer_id").get<std::string>();
      m.tool_version = j.at("tool_version").get<std::string>();
      m.vocab_size = j.at("vocab_size").get<std::uint32_t>();
    } catch (const Error&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::data, std::string("manifest: missing or mistyped field: ") + e.what());
    }
    m.validate();
    return m;
  }

  static WatermarkManifest load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::no_input, "cannot open manifest file " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return from_json_text(text);
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(ErrorKind::io, "cannot write manifest file " + path);
    out << to_canonical_json() << "\n";
  }

  friend bool operator==(const WatermarkManifest&, const WatermarkManifest&) = default;
};

// Derives the generation-side parameter block from a manifest.
inline WatermarkParams params_from_manifest(const WatermarkManifest& m) {
  WatermarkParams p;
  p.vocab_size = m.vocab_size;
  p.n = m.n;
  p.family = m.family;
  p.k_p = m.k_p;
  p.kappa = m.kappa;
  p.backend = m.backend;
  p.sampling.rng_seed = m.rng_seed;
  return p;
}

}  // namespace tokenmark
