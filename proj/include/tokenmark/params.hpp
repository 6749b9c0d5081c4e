#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "tokenmark/basis.hpp"
#include "tokenmark/error.hpp"
#include "tokenmark/permutation.hpp"

namespace tokenmark {

enum class SampleStrategy { multinomial, greedy, beam };

inline std::string to_string(SampleStrategy s) {
  switch (s) {
    case SampleStrategy::multinomial: return "multinomial";
    case SampleStrategy::greedy: return "greedy";
    case SampleStrategy::beam: return "beam";
  }
  return "multinomial";
}

inline SampleStrategy parse_strategy(const std::string& s) {
  if (s == "multinomial") return SampleStrategy::multinomial;
  if (s == "greedy") return SampleStrategy::greedy;
  if (s == "beam") return SampleStrategy::beam;
  raise(ErrorKind::config, "unknown sampling strategy \"" + s + "\"");
}

struct SamplingConfig {
  SampleStrategy strategy = SampleStrategy::multinomial;
  double temperature = 1.0;  // applied after the perturbation
  double top_p = 1.0;        // nucleus mass; 1.0 keeps the full distribution
  unsigned beam_width = 4;
  double beam_lambda = 1.0;  // weight of the perturbation bonus in beam scores
  std::size_t max_tokens = 256;
  std::uint64_t rng_seed = 0;
};

struct WatermarkParams {
  std::uint32_t vocab_size = 0;
  unsigned n = 2;  // n-gram window; the key prefix is the previous n-1 tokens
  PerturbFamily family = PerturbFamily::fourier;
  std::uint32_t k_p = 1;
  double kappa = 4.0;  // logit units, applied before temperature
  PermBackend backend = PermBackend::fisher_yates;
  SamplingConfig sampling;
  std::size_t cache_capacity = 4096;

  void validate() const {
    if (vocab_size < 2) raise(ErrorKind::config, "vocab_size must be at least 2");
    if (n < 1) raise(ErrorKind::config, "n must be at least 1");
    check_key(family, vocab_size, k_p);
    if (!std::isfinite(kappa) || kappa < 0.0)
      raise(ErrorKind::config, "kappa must be finite and non-negative");
    if (!(sampling.temperature > 0.0) || !std::isfinite(sampling.temperature))
      raise(ErrorKind::config, "temperature must be positive");
    if (!(sampling.top_p > 0.0) || sampling.top_p > 1.0)
      raise(ErrorKind::config, "top_p must lie in (0, 1]");
    if (sampling.beam_width < 1)
      raise(ErrorKind::config, "beam_width must be at least 1");
    if (!std::isfinite(sampling.beam_lambda))
      raise(ErrorKind::config, "beam_lambda must be finite");
    if (sampling.max_tokens < 1)
      raise(ErrorKind::config, "max_tokens must be at least 1");
    if (cache_capacity < 1)
      raise(ErrorKind::config, "cache_capacity must be at least 1");
  }
};

}  // namespace tokenmark
