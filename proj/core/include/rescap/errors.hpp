// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rescap {

/// Discriminator carried by every rescap exception so callers (and the CLI's
/// exit-code mapping) can branch without RTTI chains.
enum class ErrorKind {
  invalid_input,
  sequence_too_short,
  parse,
  dimension,
  not_found,
  transport,
  mismatch,
  harmful_caption_rejected,
  conflict,
  stale_lease,
  scorer_fault,
  undefined_improvement,
  unregistered_backend,
  duplicate_id,
  io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InvalidInputError : Error {
  explicit InvalidInputError(const std::string& m) : Error(ErrorKind::invalid_input, m) {}
};

struct SequenceTooShortError : Error {
  explicit SequenceTooShortError(const std::string& m) : Error(ErrorKind::sequence_too_short, m) {}
};

/// Raised by parsers; `component()` names the piece of input that was bad
/// (e.g. "length", "brackets", "description").
class ParseError : public Error {
 public:
  ParseError(std::string component, const std::string& m)
      : Error(ErrorKind::parse, m), component_(std::move(component)) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error(ErrorKind::dimension, m) {}
};

struct NotFoundError : Error {
  explicit NotFoundError(const std::string& m) : Error(ErrorKind::not_found, m) {}
};

class TransportError : public Error {
 public:
  TransportError(const std::string& m, int attempts, int status = 0)
      : Error(ErrorKind::transport, m), attempts_(attempts), status_(status) {}
  int attempts() const noexcept { return attempts_; }
  /// HTTP status when the peer answered, 0 when the connection itself failed.
  int status() const noexcept { return status_; }

 private:
  int attempts_;
  int status_;
};

struct MismatchError : Error {
  explicit MismatchError(const std::string& m) : Error(ErrorKind::mismatch, m) {}
};

struct HarmfulCaptionRejectedError : Error {
  explicit HarmfulCaptionRejectedError(const std::string& m)
      : Error(ErrorKind::harmful_caption_rejected, m) {}
};

struct ConflictError : Error {
  explicit ConflictError(const std::string& m) : Error(ErrorKind::conflict, m) {}
};

struct StaleLeaseError : Error {
  explicit StaleLeaseError(const std::string& m) : Error(ErrorKind::stale_lease, m) {}
};

struct ScorerFaultError : Error {
  explicit ScorerFaultError(const std::string& m) : Error(ErrorKind::scorer_fault, m) {}
};

struct UndefinedImprovementError : Error {
  explicit UndefinedImprovementError(const std::string& m)
      : Error(ErrorKind::undefined_improvement, m) {}
};

struct UnregisteredBackendError : Error {
  explicit UnregisteredBackendError(const std::string& m)
      : Error(ErrorKind::unregistered_backend, m) {}
};

struct DuplicateIdError : Error {
  explicit DuplicateIdError(const std::string& m) : Error(ErrorKind::duplicate_id, m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorKind::io, m) {}
};

}  // namespace rescap
