// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "rescap/degradation_level.hpp"
#include "rescap/jsonl.hpp"

namespace rescap {

/// Length-first caption: the captioner commits to a token budget before it
/// writes the description. Serialized as "<L, description>".
struct CoTCaption {
  int predicted_length = 0;
  std::string description;

  bool operator==(const CoTCaption&) const = default;
};

struct LengthAnnotation {
  std::string image_id;
  int optimal_length = 0;
  /// Extra lengths the annotator judged equally good. mean_offset scores
  /// against whichever of {optimal_length} ∪ acceptable_lengths is nearest.
  std::vector<int> acceptable_lengths;
};

/// '<' INT ', ' TEXT '>' with '>' and '\' inside TEXT backslash-escaped.
std::string emit_cot(const CoTCaption& c);

/// Inverse of emit_cot. Throws ParseError whose component() is one of
/// "brackets", "separator", "length" or "description".
CoTCaption parse_cot(std::string_view s);

/// max(|optimal - predicted| - 15, 0) / 30.
double offset_level(int optimal_length, int predicted_length);

double mean_offset(const std::vector<LengthAnnotation>& annotations,
                   const std::map<std::string, CoTCaption>& predictions);

// Prompt templates used to build the training captions and to query the
// length-first captioner. The same text ships under core/prompts/.
inline constexpr std::string_view kCaptionGenerationPrompt =
    "Please describe the actual objects in the image in a very detailed manner. Please do not "
    "include descriptions related to the focus and bokeh of this image. Please do not include "
    "descriptions like the background is blurred. Please be careful to limit your answer to "
    "about XXX words.";
inline constexpr std::string_view kCoTInferencePrompt =
    "Please determine the appropriate caption length and then describe the actual objects in "
    "the image in a very detailed manner. Please do not include descriptions related to the "
    "focus and bokeh of this image. Please do not include descriptions like the background is "
    "blurred.";

/// Replaces every "XXX" placeholder with the decimal word target.
std::string substitute_word_target(std::string_view prompt_template, int words);

/// Loads a template from disk byte-for-byte.
std::string load_prompt_template(const std::filesystem::path& path);

struct ImageRef {
  std::string image_id;
  std::filesystem::path path;
};

/// Anything that turns an image plus prompt into a CoT caption. Failures
/// surface as TransportError, ParseError or NotFoundError, never as an empty
/// description.
class CaptionerClient {
 public:
  virtual ~CaptionerClient() = default;
  virtual CoTCaption caption(const ImageRef& image, const std::string& prompt) = 0;
};

struct LengthBucket {
  int min_tokens;
  int max_tokens;
};

struct StubCaptionerConfig {
  std::uint64_t seed = 0;
  /// Predicted-length range per degradation level for the length-first prompt.
  std::map<DegradationLevel, LengthBucket> buckets = {
      {DegradationLevel::light, {77, 137}},
      {DegradationLevel::moderate, {137, 257}},
      {DegradationLevel::heavy, {257, 457}},
  };
  /// When set, word-targeted captions end with one degradation sentence so
  /// the harmful-description filter has something to remove.
  bool append_harmful_sentence = true;
};

/// Offline captioner. Two behaviours, picked from the prompt:
///  - a prompt containing "about N words" yields an N-word description (plus
///    the optional harmful sentence) whose L is its stub token count;
///  - any other prompt yields L from the level's bucket and a one-line
///    template description naming the image.
class StubCaptioner final : public CaptionerClient {
 public:
  StubCaptioner(std::map<std::string, DegradationLevel> levels, StubCaptionerConfig config = {});
  CoTCaption caption(const ImageRef& image, const std::string& prompt) override;

  const StubCaptionerConfig& config() const { return config_; }

 private:
  std::map<std::string, DegradationLevel> levels_;
  StubCaptionerConfig config_;
};

struct HttpClientOptions {
  int attempts = 3;
  int backoff_base_ms = 100;
  int connect_timeout_ms = 2000;
  int read_timeout_ms = 120000;
  int max_in_flight = 8;
};

/// Talks to an external captioning service:
///   POST /caption {"image_id", "image_b64", "prompt"} -> 200 {"cot": "<L, ...>"}
/// Safe to share between threads; concurrent calls are capped at max_in_flight.
class HttpCaptioner final : public CaptionerClient {
 public:
  explicit HttpCaptioner(std::string endpoint, HttpClientOptions options = {});
  ~HttpCaptioner() override;
  CoTCaption caption(const ImageRef& image, const std::string& prompt) override;

 private:
  std::string endpoint_;
  HttpClientOptions options_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

void to_json(Json& j, const CoTCaption& c);
void from_json(const Json& j, CoTCaption& c);
void to_json(Json& j, const LengthAnnotation& a);
void from_json(const Json& j, LengthAnnotation& a);

}  // namespace rescap
