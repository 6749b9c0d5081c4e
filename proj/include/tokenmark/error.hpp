#pragma once

#include <stdexcept>
#include <string>

namespace tokenmark {

// Error taxonomy. Each kind maps onto one CLI exit code (see tools/).
enum class ErrorKind {
  usage,      // bad flags / malformed request
  config,     // parameter out of range, inconsistent configuration
  data,       // malformed input data (records, manifests, models)
  no_input,   // an input file is missing or unreadable
  io,         // other file I/O failure (write, create, ...)
  protocol,   // manifest/verifier mismatch (backend, vocab, tokenizer)
  provider,   // logit provider unavailable or misbehaving
  too_short,  // stream shorter than the n-gram window
  internal,   // invariant violation; a bug, not a user error
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace tokenmark
