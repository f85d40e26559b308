// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <regex>

#include "http_util.hpp"
#include "rescap/cot_captioner.hpp"
#include "rescap/errors.hpp"
#include "rescap/ids.hpp"
#include "rescap/image.hpp"
#include "rescap/text_conditioning.hpp"

namespace rescap {

namespace {

// Content vocabulary for stub captions. Contains no filler words and nothing
// from the harmful lexicon.
constexpr const char* kNouns[] = {
    "stone", "bridge", "river", "tree", "window", "roof", "flower", "petal", "leaf", "branch",
    "wall", "door", "street", "lamp", "fence", "hill", "cloud", "boat", "bench", "path",
    "brick", "tower", "garden", "meadow", "feather", "rock", "sand", "wave", "shell", "statue"};
constexpr const char* kAdjectives[] = {
    "weathered", "bright", "green", "textured", "ornate", "tall", "narrow", "wooden", "golden",
    "rough", "smooth", "curved", "striped", "mossy", "red", "pale", "intricate", "ancient"};
constexpr const char* kLinks[] = {"beside", "under", "near", "above", "behind", "along",
                                  "with", "across", "between", "around"};

template <std::size_t N>
const char* pick(Rng& rng, const char* const (&words)[N]) {
  return words[rng() % N];
}

std::string stub_description(const std::string& image_id, int words, std::uint64_t seed) {
  Rng rng(combine_seed({fnv1a64(image_id), static_cast<std::uint64_t>(words), seed}));
  std::string out;
  int written = 0;
  while (written < words) {
    const int sentence = std::min(words - written, 8 + static_cast<int>(rng() % 7));
    for (int w = 0; w < sentence; ++w) {
      std::string word;
      switch (w % 3) {
        case 0: word = pick(rng, kAdjectives); break;
        case 1: word = pick(rng, kNouns); break;
        default: word = pick(rng, kLinks); break;
      }
      if (w == 0) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
      if (w == sentence - 1) word.push_back('.');
      if (!out.empty()) out.push_back(' ');
      out.append(word);
    }
    written += sentence;
  }
  return out;
}

}  // namespace

StubCaptioner::StubCaptioner(std::map<std::string, DegradationLevel> levels, StubCaptionerConfig config)
    : levels_(std::move(levels)), config_(std::move(config)) {}

CoTCaption StubCaptioner::caption(const ImageRef& image, const std::string& prompt) {
  const auto it = levels_.find(image.image_id);
  if (it == levels_.end()) throw NotFoundError("stub captioner: unknown image '" + image.image_id + "'");

  static const std::regex kWordTarget(R"(about (\d+) words)");
  std::smatch m;
  if (std::regex_search(prompt, m, kWordTarget)) {
    const int words = std::stoi(m[1].str());
    if (words <= 0) throw InvalidInputError("stub captioner: word target must be positive");
    std::string description = stub_description(image.image_id, words, config_.seed);
    if (config_.append_harmful_sentence) description += " The background is blurred.";
    return {stub_token_count(description), std::move(description)};
  }

  const auto bucket = config_.buckets.at(it->second);
  const auto span = static_cast<std::uint64_t>(bucket.max_tokens - bucket.min_tokens + 1);
  const auto h = combine_seed({fnv1a64(image.image_id), config_.seed, 0x636f74ULL});
  const int length = bucket.min_tokens + static_cast<int>(h % span);
  return {length, "A detailed view of image " + image.image_id +
                      " showing its main objects, their materials and the surrounding scene."};
}

HttpCaptioner::HttpCaptioner(std::string endpoint, HttpClientOptions options)
    : endpoint_(std::move(endpoint)),
      options_(options),
      in_flight_(std::make_unique<std::counting_semaphore<>>(std::max(1, options.max_in_flight))) {}

HttpCaptioner::~HttpCaptioner() = default;

CoTCaption HttpCaptioner::caption(const ImageRef& image, const std::string& prompt) {
  Json body{{"image_id", image.image_id}, {"prompt", prompt}, {"image_b64", ""}};
  if (!image.path.empty()) body["image_b64"] = base64_encode(read_file_bytes(image.path));
  in_flight_->acquire();
  Json response;
  try {
    response = detail::post_json(endpoint_, "/caption", body,
                                 {options_.attempts, options_.backoff_base_ms,
                                  options_.connect_timeout_ms, options_.read_timeout_ms});
  } catch (...) {
    in_flight_->release();
    throw;
  }
  in_flight_->release();
  if (!response.contains("cot") || !response.at("cot").is_string())
    throw ParseError("cot", "captioner response lacks a 'cot' string");
  return parse_cot(response.at("cot").get<std::string>());
}

}  // namespace rescap
