#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "tokenmark/error.hpp"

namespace tokenmark {

// Families of zero-mean vectors over vocabulary slots, mutually orthogonal
// within a family. The perturbation key k_p selects one member.
enum class PerturbFamily { fourier, square };

inline std::string to_string(PerturbFamily f) {
  return f == PerturbFamily::fourier ? "fourier" : "square";
}

inline PerturbFamily parse_family(const std::string& s) {
  if (s == "fourier") return PerturbFamily::fourier;
  if (s == "square") return PerturbFamily::square;
  raise(ErrorKind::config,
        "unknown perturbation family \"" + s + "\" (expected fourier or square)");
}

namespace detail {

// Shared sine/cosine tables at half-period resolution: entry m holds
// cos(pi*m/N) and sin(pi*m/N) for m in [0, 2N). All basis evaluations reduce
// their angle to this grid first, so a slot value is one table lookup and
// repeated evaluations are bit-identical.
struct TrigTable {
  std::vector<double> cos_v, sin_v;

  explicit TrigTable(std::uint32_t n) : cos_v(2 * std::size_t{n}), sin_v(2 * std::size_t{n}) {
    const double step = std::numbers::pi / static_cast<double>(n);
    for (std::size_t m = 0; m < cos_v.size(); ++m) {
      const double angle = step * static_cast<double>(m);
      cos_v[m] = std::cos(angle);
      sin_v[m] = std::sin(angle);
    }
  }
};

// Tables persist for the process lifetime; only a handful of vocabulary
// sizes ever appear and each table is 32 bytes per slot.
inline std::shared_ptr<const TrigTable> trig_table(std::uint32_t n) {
  static std::mutex mu;
  static std::map<std::uint32_t, std::shared_ptr<const TrigTable>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_shared<const TrigTable>(n);
  return slot;
}

// Largest k with 2^k dividing n.
inline unsigned pow2_exponent(std::uint32_t n) {
  return static_cast<unsigned>(std::countr_zero(n));
}

}  // namespace detail

// Inclusive range of valid perturbation keys for a family at vocab size n.
inline std::pair<std::uint32_t, std::uint32_t> key_range(PerturbFamily family,
                                                         std::uint32_t n) {
  if (n < 2) raise(ErrorKind::config, "vocab_size must be at least 2");
  if (family == PerturbFamily::fourier)
    return {1, n - 1};
  const unsigned k_n = detail::pow2_exponent(n);
  if (k_n < 2)
    raise(ErrorKind::config,
          "square family requires vocab_size divisible by 4, got " +
              std::to_string(n));
  return {1, 2 * k_n - 1};
}

inline void check_key(PerturbFamily family, std::uint32_t n, std::uint32_t k_p) {
  const auto [lo, hi] = key_range(family, n);
  if (k_p < lo || k_p > hi)
    raise(ErrorKind::config, "k_p=" + std::to_string(k_p) + " outside [" +
                                 std::to_string(lo) + ", " + std::to_string(hi) +
                                 "] for family " + to_string(family) +
                                 " at vocab_size " + std::to_string(n));
}

// Evaluator for one basis vector; cheap to construct, O(1) per slot.
class BasisEvaluator {
 public:
  BasisEvaluator(PerturbFamily family, std::uint32_t n, std::uint32_t k_p)
      : family_(family), n_(n), k_p_(k_p) {
    check_key(family, n, k_p);
    if (family == PerturbFamily::fourier) {
      table_ = detail::trig_table(n);
      // Slot j (1-based) carries cos(2*pi*k_p*j/n) for k_p <= n/2 and
      // sin(2*pi*(k_p - n/2)*j/n) above. Both reduce to an exact integer
      // index on the half-period grid: 2*k_p*j mod 2n, resp.
      // (2*k_p - n)*j mod 2n, which also covers odd n where k_p - n/2 is
      // half-integral.
      use_cos_ = (2 * std::uint64_t{k_p} <= n);
      step_ = use_cos_ ? (2 * std::uint64_t{k_p}) % (2 * std::uint64_t{n})
                       : (2 * std::uint64_t{k_p} - n) % (2 * std::uint64_t{n});
    } else {
      const unsigned k_n = detail::pow2_exponent(n);
      shifted_ = k_p > k_n;
      shift_exp_ = shifted_ ? k_p - k_n : k_p;
    }
  }

  std::uint32_t size() const { return n_; }

  double operator()(std::uint32_t slot) const {
    const std::uint64_t j = std::uint64_t{slot} + 1;  // formulas are 1-based
    if (family_ == PerturbFamily::fourier) {
      const std::uint64_t idx = (step_ * j) % (2 * std::uint64_t{n_});
      return use_cos_ ? table_->cos_v[idx] : table_->sin_v[idx];
    }
    using u128 = unsigned __int128;
    if (!shifted_) {
      // sign = (-1)^floor(2^k * j / n)
      const u128 q = (u128{1} << shift_exp_) * j / n_;
      return (q & 1) ? -1.0 : 1.0;
    }
    // sign = (-1)^floor(2^(k-k_N) * j / n + 1/2), done in exact integers.
    const u128 q = ((u128{1} << (shift_exp_ + 1)) * j + n_) / (2 * u128{n_});
    return (q & 1) ? -1.0 : 1.0;
  }

  // Squared L2 norm, exact for every defined key: the square vectors are
  // +-1 everywhere; the trigonometric ones sum to n/2 except the alternating
  // k_p = n/2 vector (even n), which has unit entries.
  double norm_squared() const {
    if (family_ == PerturbFamily::square) return static_cast<double>(n_);
    if (n_ % 2 == 0 && k_p_ == n_ / 2) return static_cast<double>(n_);
    return static_cast<double>(n_) / 2.0;
  }

  double norm() const { return std::sqrt(norm_squared()); }

 private:
  PerturbFamily family_;
  std::uint32_t n_;
  std::uint32_t k_p_;
  std::shared_ptr<const detail::TrigTable> table_;
  bool use_cos_ = false;
  std::uint64_t step_ = 0;
  bool shifted_ = false;
  unsigned shift_exp_ = 0;
};

inline std::vector<double> basis_vector(PerturbFamily family, std::uint32_t n,
                                        std::uint32_t k_p) {
  const BasisEvaluator eval(family, n, k_p);
  std::vector<double> out(n);
  for (std::uint32_t slot = 0; slot < n; ++slot) out[slot] = eval(slot);
  return out;
}

}  // namespace tokenmark
