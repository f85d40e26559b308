// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "rescap/cot_captioner.hpp"
#include "rescap/errors.hpp"
#include "rescap/image.hpp"
#include "rescap/jsonl.hpp"
#include "rescap/text_conditioning.hpp"

namespace rescap {

struct RestorationRequest {
  std::string image_id;
  std::filesystem::path lq_image_ref;
  CaptionRecord caption;
  int token_repeat_k = 0;
  std::string backend = "stub";
  std::uint64_t seed = 0;
  /// Cleared only by the harmful-description ablation, which deliberately
  /// sends unfiltered captions.
  bool harmful_gate = true;
};

struct RestorationResult {
  std::string image_id;
  std::string candidate_id;
  std::filesystem::path restored_image_ref;
  std::string backend;
  int effective_token_length = kBaseWindow;
  std::int64_t latency_ms = 0;
};

/// What a backend sees: the LQ pixels, the caption text that survived
/// filtering, and the richness repeat count.
struct BackendCall {
  Image lq;
  std::string caption;
  int token_repeat_k = 0;
  std::uint64_t seed = 0;
};

class RestorationBackend {
 public:
  virtual ~RestorationBackend() = default;
  virtual Image restore(const BackendCall& call) = 0;
};

struct StubBackendOptions {
  double blur_sigma = 1.5;
  /// Unsharp-mask amount and texture-noise sigma (0-255 scale) per 77 tokens
  /// of effective length.
  double sharpen_per_window = 0.5;
  double noise_per_window = 2.0;
};

/// Deterministic stand-in for a diffusion restorer: unsharp masking plus a
/// seeded noise texture, both scaled by the effective token length, so
/// sharpness grows with caption richness.
class StubBackend final : public RestorationBackend {
 public:
  explicit StubBackend(StubBackendOptions options = {}) : options_(options) {}
  Image restore(const BackendCall& call) override;

 private:
  StubBackendOptions options_;
};

/// POST /restore {"image_b64","caption","token_repeat_k","seed"} -> {"image_b64"}.
class HttpBackend final : public RestorationBackend {
 public:
  explicit HttpBackend(std::string endpoint, HttpClientOptions options = {});
  Image restore(const BackendCall& call) override;

 private:
  std::string endpoint_;
  HttpClientOptions options_;
};

struct BatchItem {
  std::optional<RestorationResult> result;
  std::optional<ErrorKind> error_kind;
  std::string error;

  bool ok() const { return result.has_value(); }
};

struct BatchOutcome {
  std::vector<BatchItem> items;  // same order as the requests
  int ok = 0;
  int err = 0;
};

class RestorationClient {
 public:
  explicit RestorationClient(std::filesystem::path output_dir);

  /// `endpoint` is "stub" for the built-in backend or an http:// base URL.
  void register_backend(const std::string& id, const std::string& endpoint);
  void register_backend(const std::string& id, std::shared_ptr<RestorationBackend> backend);
  bool has_backend(const std::string& id) const;

  RestorationResult restore(const RestorationRequest& req) const;
  /// Runs up to `jobs` requests at once. Per-item failures are reported in
  /// place; only failing to prepare the output directory throws.
  BatchOutcome restore_batch(const std::vector<RestorationRequest>& reqs, int jobs = 1) const;

  const std::filesystem::path& output_dir() const { return output_dir_; }

 private:
  std::shared_ptr<RestorationBackend> backend(const std::string& id) const;

  std::filesystem::path output_dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<RestorationBackend>> backends_;
};

/// Stable id for the candidate a request produces.
std::string candidate_id_for(const RestorationRequest& req);

void to_json(Json& j, const RestorationRequest& r);
void from_json(const Json& j, RestorationRequest& r);
void to_json(Json& j, const RestorationResult& r);
void from_json(const Json& j, RestorationResult& r);

}  // namespace rescap
