// SPDX-License-Identifier: Apache-2.0
// Kept in its own translation unit: httplib drags in <resolv.h>, whose `_res`
// macro breaks Eigen headers.
#include "http_util.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "rescap/errors.hpp"

namespace rescap {
namespace detail {

Json post_json(const std::string& endpoint, const std::string& path, const Json& body,
               const RetryPolicy& policy) {
  const std::string payload = body.dump();
  std::string last_error = "no attempt made";
  int last_status = 0;
  for (int attempt = 1; attempt <= policy.attempts; ++attempt) {
    httplib::Client client(endpoint);
    client.set_connection_timeout(std::chrono::milliseconds(policy.connect_timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(policy.read_timeout_ms));
    auto res = client.Post(path, payload, "application/json");
    if (res) {
      last_status = res->status;
      if (res->status == 200) {
        try {
          return Json::parse(res->body);
        } catch (const Json::parse_error& e) {
          throw ParseError("response", "invalid JSON from " + endpoint + path + ": " + e.what());
        }
      }
      std::string message = "HTTP " + std::to_string(res->status);
      try {
        const auto err = Json::parse(res->body);
        if (err.contains("error")) message += ": " + err.at("error").get<std::string>();
      } catch (const Json::exception&) {
      }
      if (res->status == 404) throw NotFoundError(endpoint + path + " -> " + message);
      if (res->status >= 400 && res->status < 500)
        throw TransportError(endpoint + path + " -> " + message, attempt, res->status);
      last_error = message;
    } else {
      last_error = httplib::to_string(res.error());
      last_status = 0;
    }
    if (attempt < policy.attempts)
      std::this_thread::sleep_for(std::chrono::milliseconds(policy.backoff_base_ms << (attempt - 1)));
  }
  throw TransportError(endpoint + path + " failed after " + std::to_string(policy.attempts) +
                           " attempts: " + last_error,
                       policy.attempts, last_status);
}

}  // namespace detail

}  // namespace rescap
