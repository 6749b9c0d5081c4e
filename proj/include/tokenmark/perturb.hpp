#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tokenmark/basis.hpp"
#include "tokenmark/error.hpp"
#include "tokenmark/permutation.hpp"

namespace tokenmark {

// Watermark operator on a logit vector, fused form:
//
//   out[t] = logits[t] + kappa * phi[forward[t]]
//
// i.e. permute the vocabulary, add the scaled basis vector in permuted
// space, permute back. The composition below spells that out; both paths
// produce bit-identical doubles because each output element is the same
// two-operand expression either way.
inline std::vector<double> perturb_logits(std::span<const double> logits,
                                          double kappa,
                                          const BasisEvaluator& basis,
                                          const Permutation& perm) {
  if (logits.size() != perm.forward.size() || basis.size() != perm.forward.size())
    raise(ErrorKind::config, "perturbation operands disagree on vocab size");
  std::vector<double> out(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t)
    out[t] = logits[t] + kappa * basis(perm.forward[t]);
  return out;
}

inline std::vector<double> perturb_logits(std::span<const double> logits,
                                          double kappa, PerturbFamily family,
                                          std::uint32_t k_p,
                                          const Permutation& perm) {
  return perturb_logits(logits, kappa,
                        BasisEvaluator(family, perm.size(), k_p), perm);
}

// Reference composition: scatter to permuted space, add, gather back.
inline std::vector<double> perturb_logits_composed(std::span<const double> logits,
                                                   double kappa,
                                                   const BasisEvaluator& basis,
                                                   const Permutation& perm) {
  if (logits.size() != perm.forward.size() || basis.size() != perm.forward.size())
    raise(ErrorKind::config, "perturbation operands disagree on vocab size");
  std::vector<double> permuted = apply_permutation(perm, logits);
  for (std::size_t s = 0; s < permuted.size(); ++s)
    permuted[s] = permuted[s] + kappa * basis(static_cast<std::uint32_t>(s));
  return invert_permutation(perm, permuted);
}

}  // namespace tokenmark
