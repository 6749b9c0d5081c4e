#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "tokenmark/error.hpp"
#include "tokenmark/remote.hpp"

using namespace tokenmark;

namespace {

// In-process logit service whose behavior is selected per test by `mode`.
class FakeService {
 public:
  FakeService() {
    server_.Post("/v1/logits", [this](const httplib::Request& req,
                                      httplib::Response& res) {
      last_body = req.body;
      const nlohmann::json j = nlohmann::json::parse(req.body);
      const std::size_t v = j.at("vocab_size").get<std::size_t>();
      if (mode == "zeros") {
        nlohmann::json out;
        out["logits"] = std::vector<double>(v, 0.0);
        res.set_content(out.dump(), "application/json");
      } else if (mode == "short") {
        nlohmann::json out;
        out["logits"] = std::vector<double>(v - 1, 0.0);
        res.set_content(out.dump(), "application/json");
      } else if (mode == "nan") {
        // 1e999 parses to infinity, tripping the finiteness check rather
        // than the JSON parser.
        std::string body = "{\"logits\": [";
        for (std::size_t i = 0; i < v; ++i)
          body += (i == 0 ? "1e999" : ", 0");
        body += "]}";
        res.set_content(body, "application/json");
      } else if (mode == "garbage") {
        res.set_content("not json {", "application/json");
      } else if (mode == "error") {
        res.status = 500;
        res.set_content("boom", "text/plain");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeService() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::string mode = "zeros";
  std::string last_body;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(RemoteProvider, AcceptsWellFormedResponse) {
  FakeService svc;
  RemoteProvider p(svc.url(), 8);
  const std::vector<double> l = p.logits(std::vector<TokenId>{1, 2, 3});
  ASSERT_EQ(l.size(), 8u);
  for (double v : l) EXPECT_EQ(v, 0.0);
  // The request carried the context and vocabulary size.
  const nlohmann::json sent = nlohmann::json::parse(svc.last_body);
  EXPECT_EQ(sent.at("context_ids"), (std::vector<TokenId>{1, 2, 3}));
  EXPECT_EQ(sent.at("vocab_size").get<std::size_t>(), 8u);
}

TEST(RemoteProvider, RejectsWrongLength) {
  FakeService svc;
  svc.mode = "short";
  RemoteProvider p(svc.url(), 8);
  try {
    p.logits(std::vector<TokenId>{});
    FAIL() << "expected a provider error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::provider);
    EXPECT_NE(std::string(e.what()).find("expected 8"), std::string::npos);
  }
}

TEST(RemoteProvider, RejectsNonFiniteLogits) {
  FakeService svc;
  svc.mode = "nan";
  RemoteProvider p(svc.url(), 4);
  try {
    p.logits(std::vector<TokenId>{});
    FAIL() << "expected a provider error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::provider);
  }
}

TEST(RemoteProvider, RejectsMalformedJson) {
  FakeService svc;
  svc.mode = "garbage";
  RemoteProvider p(svc.url(), 4);
  try {
    p.logits(std::vector<TokenId>{});
    FAIL() << "expected a provider error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::provider);
  }
}

TEST(RemoteProvider, RejectsHttpErrors) {
  FakeService svc;
  svc.mode = "error";
  RemoteProvider p(svc.url(), 4);
  try {
    p.logits(std::vector<TokenId>{});
    FAIL() << "expected a provider error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::provider);
    EXPECT_NE(std::string(e.what()).find("500"), std::string::npos);
  }
}

TEST(RemoteProvider, ReportsUnreachableService) {
  // Nothing listens on this port.
  RemoteProvider p("http://127.0.0.1:1", 4, std::nullopt, 1);
  try {
    p.logits(std::vector<TokenId>{});
    FAIL() << "expected a provider error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::provider);
  }
}

}  // namespace
