// SPDX-License-Identifier: Apache-2.0
#include "rescap/errors.hpp"

namespace rescap {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::sequence_too_short: return "sequence-too-short";
    case ErrorKind::parse: return "parse";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::not_found: return "not-found";
    case ErrorKind::transport: return "transport";
    case ErrorKind::mismatch: return "mismatch";
    case ErrorKind::harmful_caption_rejected: return "harmful-caption-rejected";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::stale_lease: return "stale-lease";
    case ErrorKind::scorer_fault: return "scorer-fault";
    case ErrorKind::undefined_improvement: return "undefined-improvement";
    case ErrorKind::unregistered_backend: return "unregistered-backend";
    case ErrorKind::duplicate_id: return "duplicate-id";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

}  // namespace rescap
