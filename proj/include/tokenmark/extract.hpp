#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "tokenmark/basis.hpp"
#include "tokenmark/error.hpp"
#include "tokenmark/types.hpp"
#include "tokenmark/verify.hpp"

namespace tokenmark {

enum class ExtractMethod { automatic, direct, fft };

inline const char* to_string(ExtractMethod m) {
  switch (m) {
    case ExtractMethod::automatic: return "auto";
    case ExtractMethod::direct: return "direct";
    case ExtractMethod::fft: return "fft";
  }
  raise(ErrorKind::internal, "unknown extract method");
}

inline ExtractMethod parse_extract_method(const std::string& s) {
  if (s == "auto") return ExtractMethod::automatic;
  if (s == "direct") return ExtractMethod::direct;
  if (s == "fft") return ExtractMethod::fft;
  raise(ErrorKind::usage, "unknown extract method '" + s +
                              "' (expected auto, direct, or fft)");
}

struct ExtractionResult {
  std::uint32_t k_p_hat = 0;
  double best_score = 0.0;
  double margin = 0.0;  // best minus runner-up; 0 when only one candidate
  std::string method;   // route actually taken
  std::optional<std::vector<std::pair<std::uint32_t, double>>> scores;
};

// Sums per-chunk count vectors taken under the same protocol. Chunks must
// agree on mu, n, backend, and vocabulary size; scores over the combined
// vector equal scores over the concatenated streams' counts.
inline CountVector combine_counts(const std::vector<CountVector>& parts) {
  if (parts.empty())
    raise(ErrorKind::config, "combine_counts needs at least one count vector");
  CountVector total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const CountVector& p = parts[i];
    if (p.counts.size() != total.counts.size() || p.mu_hex != total.mu_hex ||
        p.window_n != total.window_n || p.backend != total.backend)
      raise(ErrorKind::protocol,
            "count vectors disagree on mu/n/backend/vocab and cannot be combined");
    for (std::size_t v = 0; v < total.counts.size(); ++v)
      total.counts[v] += p.counts[v];
    total.n_counted += p.n_counted;
  }
  return total;
}

namespace detail {

// FFTW plan creation and destruction share global state.
inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

// Scores every key in one pass over the count vector per key. Ascending key
// order with strict improvement keeps ties on the smallest key.
inline ExtractionResult extract_direct(const CountVector& cv,
                                       PerturbFamily family,
                                       bool keep_scores) {
  const std::uint32_t n = cv.vocab_size();
  const auto [lo, hi] = key_range(family, n);
  std::vector<std::uint32_t> nonzero;
  nonzero.reserve(cv.counts.size());
  for (std::uint32_t v = 0; v < n; ++v)
    if (cv.counts[v] != 0) nonzero.push_back(v);

  ExtractionResult result;
  result.method = "direct";
  if (keep_scores) result.scores.emplace();
  double best = -std::numeric_limits<double>::infinity();
  double second = best;
  for (std::uint32_t k = lo; k <= hi; ++k) {
    const BasisEvaluator basis(family, n, k);
    double acc = 0.0;
    for (std::uint32_t v : nonzero)
      acc += static_cast<double>(cv.counts[v]) * basis(v);
    const double q = acc / (static_cast<double>(cv.n_counted) * basis.norm());
    if (keep_scores) result.scores->emplace_back(k, q);
    if (q > best) {
      second = best;
      best = q;
      result.k_p_hat = k;
    } else if (q > second) {
      second = q;
    }
  }
  result.best_score = best;
  result.margin = std::isinf(second) ? 0.0 : best - second;
  return result;
}

// One real-to-complex transform covers every key. Basis slots are 1-based
// (slot j carries angle 2*pi*k*(j+1)/N), which shows up against the DFT
// S_k = sum_j c_j e^{-2*pi*i*k*j/N} as a rotation by theta_k = 2*pi*k/N:
//   cos key k:            numer = Re S_k cos(theta_k) + Im S_k sin(theta_k)
//   sin key N/2 + k':     numer = Re S_k' sin(theta_k') - Im S_k' cos(theta_k')
// The rotation factors come from the shared trig table so this route agrees
// with the table-gathering direct route to within accumulation noise. Needs
// even N so every sine key lands on an integer frequency bin.
inline ExtractionResult extract_fft(const CountVector& cv, bool keep_scores) {
  const std::uint32_t n = cv.vocab_size();
  if (n % 2 != 0)
    raise(ErrorKind::config, "fft extraction requires an even vocabulary size");
  std::vector<double> in(n);
  for (std::uint32_t v = 0; v < n; ++v)
    in[v] = static_cast<double>(cv.counts[v]);
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  if (plan == nullptr) raise(ErrorKind::internal, "fftw plan creation failed");
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }

  const double denom_half =
      static_cast<double>(cv.n_counted) * std::sqrt(n / 2.0);
  const double denom_full =
      static_cast<double>(cv.n_counted) * std::sqrt(static_cast<double>(n));
  const std::shared_ptr<const detail::TrigTable> table = detail::trig_table(n);
  ExtractionResult result;
  result.method = "fft";
  if (keep_scores) result.scores.emplace();
  double best = -std::numeric_limits<double>::infinity();
  double second = best;
  auto consider = [&](std::uint32_t k, double q) {
    if (keep_scores) result.scores->emplace_back(k, q);
    if (q > best) {
      second = best;
      best = q;
      result.k_p_hat = k;
    } else if (q > second) {
      second = q;
    }
  };
  for (std::uint32_t k = 1; k <= n / 2; ++k) {
    const std::uint64_t m = (2 * std::uint64_t{k}) % (2 * std::uint64_t{n});
    const double numer =
        out[k].real() * table->cos_v[m] + out[k].imag() * table->sin_v[m];
    consider(k, numer / (k == n / 2 ? denom_full : denom_half));
  }
  for (std::uint32_t k = n / 2 + 1; k <= n - 1; ++k) {
    const std::uint32_t kk = k - n / 2;
    const std::uint64_t m = (2 * std::uint64_t{kk}) % (2 * std::uint64_t{n});
    const double numer =
        out[kk].real() * table->sin_v[m] - out[kk].imag() * table->cos_v[m];
    consider(k, numer / denom_half);
  }
  result.best_score = best;
  result.margin = std::isinf(second) ? 0.0 : best - second;
  return result;
}

}  // namespace detail

// Recovers the most likely perturbation key from occupancy counts alone by
// scoring every admissible key and taking the argmax (smallest key on ties).
inline ExtractionResult extract_key(const CountVector& cv,
                                    PerturbFamily family,
                                    ExtractMethod method = ExtractMethod::automatic,
                                    bool keep_scores = false) {
  if (cv.n_counted < 1)
    raise(ErrorKind::too_short, "count vector has no counted positions");
  const std::uint32_t n = cv.vocab_size();
  if (method == ExtractMethod::automatic)
    method = (family == PerturbFamily::fourier && n % 2 == 0)
                 ? ExtractMethod::fft
                 : ExtractMethod::direct;
  if (method == ExtractMethod::fft) {
    if (family != PerturbFamily::fourier)
      raise(ErrorKind::config, "fft extraction applies to the fourier family only");
    return detail::extract_fft(cv, keep_scores);
  }
  return detail::extract_direct(cv, family, keep_scores);
}

}  // namespace tokenmark
