#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <span>
#include <string>

#include "tokenmark/bytes.hpp"
#include "tokenmark/error.hpp"
#include "tokenmark/types.hpp"

namespace tokenmark {

// Watermark identity: an opaque byte string. Integer ids use the minimal
// big-endian encoding, so 0 encodes to the empty string and 0x41 to "41".
struct WatermarkId {
  Bytes bytes;

  static WatermarkId from_integer(std::uint64_t v) {
    WatermarkId id;
    bool started = false;
    for (int shift = 56; shift >= 0; shift -= 8) {
      const std::uint8_t b = static_cast<std::uint8_t>((v >> shift) & 0xFF);
      if (b != 0) started = true;
      if (started) id.bytes.push_back(b);
    }
    return id;
  }

  static WatermarkId from_hex(const std::string& hex) {
    return WatermarkId{tokenmark::from_hex(hex)};
  }

  std::string hex() const { return to_hex(bytes); }

  friend bool operator==(const WatermarkId&, const WatermarkId&) = default;
};

// Injective byte encoding of (mu, prefix):
//   u64 big-endian length of mu || mu bytes || one u32 big-endian per token.
// The length prefix on mu keeps distinct (mu, prefix) splits distinct; token
// ids are fixed width so the prefix needs no length field of its own.
inline Bytes canonical_encode_key_input(const WatermarkId& mu,
                                        std::span<const TokenId> prefix) {
  Bytes out;
  out.reserve(8 + mu.bytes.size() + 4 * prefix.size());
  append_u64_be(out, static_cast<std::uint64_t>(mu.bytes.size()));
  out.insert(out.end(), mu.bytes.begin(), mu.bytes.end());
  for (TokenId t : prefix) append_u32_be(out, t);
  return out;
}

inline Bytes sha256(const Bytes& data) {
  Bytes digest(32);
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != 32)
    raise(ErrorKind::internal, "SHA-256 computation failed");
  return digest;
}

// Permutation key = first 8 bytes of SHA-256(canonical encoding), read
// big-endian. 64 bits keeps the cache key small; collisions across the
// handful of prefixes a document exercises are negligible.
inline PermKey derive_perm_key(const WatermarkId& mu,
                               std::span<const TokenId> prefix) {
  const Bytes digest = sha256(canonical_encode_key_input(mu, prefix));
  return PermKey{read_u64_be(digest.data())};
}

}  // namespace tokenmark
