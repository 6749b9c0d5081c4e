#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "tokenmark/error.hpp"
#include "tokenmark/provider.hpp"

namespace tokenmark {

// Logit provider backed by an HTTP service:
//
//   POST {base_url}/v1/logits
//   request  {"context_ids": [...], "vocab_size": N}
//   response {"logits": [...]}  -- exactly N finite numbers
//
// Anything else (connection failure, non-200, wrong length, NaN/inf) raises
// a provider error. The server is trusted to be pure; this client only
// transports.
class RemoteProvider : public LogitProvider {
 public:
  RemoteProvider(std::string base_url, std::uint32_t vocab_size,
                 std::optional<TokenId> eos = std::nullopt,
                 int timeout_seconds = 10)
      : base_url_(std::move(base_url)), vocab_size_(vocab_size), eos_(eos),
        client_(base_url_) {
    if (vocab_size < 2) raise(ErrorKind::config, "vocab_size must be at least 2");
    client_.set_connection_timeout(timeout_seconds, 0);
    client_.set_read_timeout(timeout_seconds, 0);
  }

  std::uint32_t vocab_size() const override { return vocab_size_; }
  std::optional<TokenId> eos_id() const override { return eos_; }

  void next_logits(std::span<const TokenId> context,
                   std::span<double> out) const override {
    nlohmann::json body;
    body["context_ids"] = nlohmann::json::array();
    for (TokenId t : context) body["context_ids"].push_back(t);
    body["vocab_size"] = vocab_size_;
    httplib::Result res =
        client_.Post("/v1/logits", body.dump(), "application/json");
    if (!res)
      raise(ErrorKind::provider,
            "logit service unreachable at " + base_url_ + ": " +
                httplib::to_string(res.error()));
    if (res->status != 200)
      raise(ErrorKind::provider, "logit service returned HTTP " +
                                     std::to_string(res->status));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::provider,
            std::string("logit service sent invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("logits") || !j["logits"].is_array())
      raise(ErrorKind::provider, "logit service response lacks \"logits\" array");
    const auto& arr = j["logits"];
    if (arr.size() != vocab_size_)
      raise(ErrorKind::provider,
            "logit service sent " + std::to_string(arr.size()) +
                " logits, expected " + std::to_string(vocab_size_));
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number())
        raise(ErrorKind::provider, "logit service sent a non-numeric logit");
      const double v = arr[i].get<double>();
      if (!std::isfinite(v))
        raise(ErrorKind::provider, "logit service sent a non-finite logit");
      out[i] = v;
    }
  }

 private:
  std::string base_url_;
  std::uint32_t vocab_size_;
  std::optional<TokenId> eos_;
  mutable httplib::Client client_;
};

}  // namespace tokenmark
