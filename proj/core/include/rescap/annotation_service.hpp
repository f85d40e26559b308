// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rescap/data_pipeline.hpp"

namespace rescap {

inline constexpr std::size_t kCaptionPreviewChars = 240;
inline constexpr int kDefaultServicePort = 8790;

enum class TaskStatus { pending, done };
std::string_view to_string(TaskStatus s);

struct CandidateView {
  std::string candidate_id;
  std::string restored_image_ref;  // URL path served by the HTTP layer
  std::string caption_preview;     // at most kCaptionPreviewChars bytes
  int effective_token_length = 0;
  int target_words = 0;
};

struct AnnotationTask {
  std::string pair_id;
  std::string lq_thumbnail_ref;  // URL path served by the HTTP layer
  DegradationLevel degradation_level = DegradationLevel::light;
  std::vector<CandidateView> candidates;  // schedule order
  TaskStatus status = TaskStatus::pending;
};

struct LevelProgress {
  std::size_t pending = 0;
  std::size_t done = 0;
};

struct Progress {
  std::size_t pending = 0;
  std::size_t done = 0;
  std::size_t total = 0;
  std::map<DegradationLevel, LevelProgress> per_level;
};

struct SubmitAck {
  PairRecord record;
  std::size_t pending = 0;
  std::size_t done = 0;
  /// The same triple was stored earlier; nothing was written.
  bool already_recorded = false;
};

using ServiceClock = std::function<std::chrono::system_clock::time_point()>;

struct ServiceOptions {
  std::chrono::seconds lease_ttl{600};
  int thumbnail_edge = 512;
  /// Defaults to the system clock; tests inject a manual one.
  ServiceClock clock;
};

/// Truncates at a UTF-8 boundary; a cut caption ends in "...".
std::string caption_preview(std::string_view caption, std::size_t max_chars = kCaptionPreviewChars);

/// Task handout and selection intake for one run directory. A pending task
/// is leased to at most one annotator until its lease expires.
class AnnotationService {
 public:
  /// Throws NotFoundError when the run directory does not exist.
  explicit AnnotationService(RunLayout layout, ServiceOptions options = {});

  /// Oldest pending task not leased to someone else. An annotator that
  /// already holds a live lease gets the same task back.
  std::optional<AnnotationTask> next_task(const std::string& annotator);

  /// Requires a live lease held by `annotator` unless `force`. Repeating an
  /// already stored (pair, candidate, annotator) triple is a no-op.
  SubmitAck submit_selection(const std::string& pair_id, const std::string& candidate_id,
                             const std::string& annotator, bool force = false);

  Progress progress() const;
  Json config() const;

  /// Full-size image for an LQ pair id or candidate id, or its thumbnail.
  /// Ids outside [0-9a-f-] are rejected with NotFoundError.
  std::filesystem::path image_file(const std::string& image_id, bool thumbnail);

  RunStore& store() { return store_; }
  const ServiceOptions& options() const { return options_; }

 private:
  struct Lease {
    std::string annotator;
    std::chrono::system_clock::time_point expires;
  };

  std::chrono::system_clock::time_point now() const;
  AnnotationTask make_task(const PairRecord& pair);

  RunStore store_;
  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, Lease> leases_;
};

Json to_json_value(const AnnotationTask& task);
Json to_json_value(const Progress& progress);

struct HttpServerOptions {
  std::string host = "127.0.0.1";
  int port = kDefaultServicePort;  // 0 picks a free port
  std::string cors_origin = "*";
};

/// REST front end:
///   GET  /api/tasks/next?annotator=NAME
///   POST /api/annotations {pair_id, candidate_id, annotator, force?}
///   GET  /api/progress
///   GET  /api/config
///   GET  /images/<id>.png and /images/thumbs/<id>.png (ETag cached)
class AnnotationHttpServer {
 public:
  AnnotationHttpServer(AnnotationService& service, HttpServerOptions options = {});
  ~AnnotationHttpServer();
  AnnotationHttpServer(const AnnotationHttpServer&) = delete;
  AnnotationHttpServer& operator=(const AnnotationHttpServer&) = delete;

  /// Binds the socket and returns the bound port.
  int bind();
  /// Serves until stop(); bind() must have succeeded.
  void serve();
  /// bind() plus serve() on a background thread.
  int start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rescap
