// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "rescap/jsonl.hpp"

namespace rescap::detail {

struct RetryPolicy {
  int attempts = 3;
  int backoff_base_ms = 100;
  int connect_timeout_ms = 2000;
  int read_timeout_ms = 120000;
};

/// POSTs a JSON body and returns the parsed 200 response. Connection failures
/// and 5xx are retried with exponential backoff; 4xx is not. 404 maps to
/// NotFoundError, everything else that fails to TransportError.
Json post_json(const std::string& endpoint, const std::string& path, const Json& body,
               const RetryPolicy& policy);

}  // namespace rescap::detail
