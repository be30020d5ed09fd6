#include "vidfocus/client.hpp"

#include <httplib.h>
#include <json.hpp>

#include "vidfocus/error.hpp"

namespace vidfocus {

using json = nlohmann::ordered_json;

std::string encode_wire_request(const WireRequest& request) {
  json tokens = json::array();
  for (std::size_t i = 0; i < request.visual_tokens.rows(); ++i) {
    const auto row = request.visual_tokens.row(i);
    tokens.push_back(std::vector<double>(row.begin(), row.end()));
  }
  json j;
  j["text"] = request.text;
  j["visual_tokens"] = std::move(tokens);
  j["max_new_tokens"] = request.max_new_tokens;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

WireRequest decode_wire_request(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ParseError(std::string("wire request: ") + e.what());
  }
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw ParseError("wire request: missing string field \"text\"");
  }
  WireRequest req;
  req.text = j["text"].get<std::string>();
  if (j.contains("max_new_tokens")) {
    if (!j["max_new_tokens"].is_number_unsigned()) {
      throw ParseError("wire request: max_new_tokens must be a non-negative integer");
    }
    req.max_new_tokens = j["max_new_tokens"].get<std::size_t>();
  }
  if (j.contains("visual_tokens")) {
    const auto& rows = j["visual_tokens"];
    if (!rows.is_array()) throw ParseError("wire request: visual_tokens must be an array");
    std::vector<std::vector<double>> data;
    try {
      for (const auto& r : rows) data.push_back(r.get<std::vector<double>>());
    } catch (const json::exception& e) {
      throw ParseError(std::string("wire request: visual_tokens: ") + e.what());
    }
    try {
      req.visual_tokens = Matrix::from_rows(data);
    } catch (const Error& e) {
      throw ParseError(std::string("wire request: visual_tokens: ") + e.what());
    }
  }
  return req;
}

std::string encode_wire_response(const std::string& text) {
  json j;
  j["text"] = text;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string decode_wire_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ParseError(std::string("wire response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw ParseError("wire response: missing string field \"text\"");
  }
  return j["text"].get<std::string>();
}

std::string CallbackClient::complete(const WireRequest& request) {
  return handler_(encode_wire_request(request));
}

HttpClient::HttpClient(HttpClientConfig config) : config_(std::move(config)) {
  const std::string scheme = "http://";
  if (config_.url.rfind(scheme, 0) != 0) {
    throw InvalidArgument("http client: only http:// endpoints are supported, got '" +
                          config_.url + "'");
  }
  std::string rest = config_.url.substr(scheme.size());
  const auto slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos) {
    host_ = authority.substr(0, colon);
    try {
      port_ = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw InvalidArgument("http client: bad port in '" + config_.url + "'");
    }
  } else {
    host_ = authority;
  }
  if (host_.empty()) throw InvalidArgument("http client: no host in '" + config_.url + "'");
}

std::string HttpClient::complete(const WireRequest& request) {
  httplib::Client cli(host_, port_);
  const auto secs = static_cast<time_t>(config_.timeout.count());
  cli.set_connection_timeout(secs, 0);
  cli.set_read_timeout(secs, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }
  auto res = cli.Post(path_, headers, encode_wire_request(request), "application/json");
  if (!res) {
    throw BackendError("http client: request to " + config_.url +
                       " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw BackendError("http client: " + config_.url + " returned status " +
                       std::to_string(res->status));
  }
  try {
    return decode_wire_response(res->body);
  } catch (const ParseError& e) {
    throw BackendError(std::string("http client: ") + e.what());
  }
}

}  // namespace vidfocus
