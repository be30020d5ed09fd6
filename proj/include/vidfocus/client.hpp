#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <string>

#include "vidfocus/matrix.hpp"

namespace vidfocus {

// Request body shared by the remote language-model backend, the judge and the
// augmentation client:
//   {"text": "...", "visual_tokens": [[...], ...], "max_new_tokens": n}
// The reply body is {"text": "..."}.
struct WireRequest {
  std::string text;
  Matrix visual_tokens;
  std::size_t max_new_tokens = 256;
};

std::string encode_wire_request(const WireRequest& request);
WireRequest decode_wire_request(const std::string& body);
std::string encode_wire_response(const std::string& text);
// Throws ParseError unless the body is an object with a string "text".
std::string decode_wire_response(const std::string& body);

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  // Returns the generated text. Transport failures throw BackendError.
  virtual std::string complete(const WireRequest& request) = 0;
  // True when complete() may be called from several threads at once.
  virtual bool concurrent_safe() const { return false; }
};

// Hands the encoded request JSON to a function and returns its reply verbatim.
// Used for offline stubs and for callbacks registered through the C API.
class CallbackClient : public CompletionClient {
 public:
  using Handler = std::function<std::string(const std::string& request_json)>;
  explicit CallbackClient(Handler handler, bool concurrent_safe = false)
      : handler_(std::move(handler)), concurrent_safe_(concurrent_safe) {}

  std::string complete(const WireRequest& request) override;
  bool concurrent_safe() const override { return concurrent_safe_; }

 private:
  Handler handler_;
  bool concurrent_safe_;
};

struct HttpClientConfig {
  // e.g. "http://127.0.0.1:8080/v1/generate"
  std::string url;
  // Sent as "Authorization: Bearer <key>" when non-empty.
  std::string api_key;
  std::chrono::seconds timeout{60};
};

// POSTs the wire request as application/json. Only plain http:// endpoints.
class HttpClient : public CompletionClient {
 public:
  explicit HttpClient(HttpClientConfig config);
  std::string complete(const WireRequest& request) override;
  bool concurrent_safe() const override { return true; }

 private:
  HttpClientConfig config_;
  std::string host_;
  int port_ = 80;
  std::string path_;
};

}  // namespace vidfocus
