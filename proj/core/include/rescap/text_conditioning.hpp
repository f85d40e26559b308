// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rescap/jsonl.hpp"

namespace rescap {

/// Width of the base CLIP-style encoder window: BOS, up to 75 words, EOS.
inline constexpr int kBaseWindow = 77;
/// Size of the trailing block that richness extension repeats.
inline constexpr int kRichnessBlock = 20;

using EmbeddingMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row t of `embeddings` is token t. Rows after `eos_index` are padding.
struct TokenSequence {
  EmbeddingMatrix embeddings;
  int eos_index = 0;
  std::optional<std::string> source_text;

  int length() const { return static_cast<int>(embeddings.rows()); }
  int dim() const { return static_cast<int>(embeddings.cols()); }

  bool operator==(const TokenSequence& other) const;
};

/// A caption split into the part that describes image content and the spans
/// that describe degradation or photography. `content_part` is what gets sent
/// to a restoration backend.
struct CaptionRecord {
  std::string text;
  std::string content_part;
  std::vector<std::string> degradation_part;
  int word_count = 0;
  std::optional<int> declared_token_length;

  bool operator==(const CaptionRecord&) const = default;
};

enum class RemovalScope { phrase, clause, sentence };

struct HarmfulLexicon {
  std::vector<std::string> phrases;  // lowercase
  RemovalScope scope = RemovalScope::sentence;
};

// Words are maximal runs of non-whitespace.
std::vector<std::string_view> split_words(std::string_view text);
int count_words(std::string_view text);

/// Token count of `text` under the stub tokenizer: one token per word plus
/// BOS and EOS. Not truncated at the encoder window.
int stub_token_count(std::string_view text);

CaptionRecord make_caption(std::string text);

/// Deterministic stand-in for a CLIP text encoder. Always 77 rows; each word
/// maps to a vector drawn from a generator seeded by the word's hash.
TokenSequence encode_stub(std::string_view text, int dim);

/// Appends `repeats` copies of the 20 tokens preceding EOS, then EOS and the
/// original padding. Requires a 77-token sequence with eos_index >= 21.
TokenSequence extend_richness(const TokenSequence& seq, int repeats);

/// Repeat count whose extended length 77 + 20k is nearest to the target
/// (ties round down).
int richness_schedule(int target_token_length);

inline int extended_length(int repeats) { return kBaseWindow + kRichnessBlock * repeats; }

/// Replaces floor(ratio * word_count) randomly chosen words with fillers.
/// Only the alphanumeric core of a word is swapped; attached punctuation stays.
CaptionRecord perturb_relevance(const CaptionRecord& caption, double ratio, std::uint64_t seed,
                                const std::vector<std::string>& fillers = {"the", "for"});

/// Number of word positions perturb_relevance replaces for `word_count` words.
int replaced_word_count(double ratio, int word_count);

/// Moves every span of `caption.content_part` that matches a lexicon phrase
/// (at the lexicon's scope) into `degradation_part`. Repeats until no phrase
/// matches, so the result is a fixed point.
CaptionRecord filter_harmful(const CaptionRecord& caption, const HarmfulLexicon& lexicon);

/// A fresh caption built from `filtered.content_part` alone, with an empty
/// degradation part. This is the form restoration requests accept.
CaptionRecord content_only(const CaptionRecord& filtered);

HarmfulLexicon default_harmful_lexicon();

/// Validates and lowercases. Throws InvalidInputError on an empty list or an
/// empty phrase.
HarmfulLexicon make_lexicon(std::vector<std::string> phrases,
                            RemovalScope scope = RemovalScope::sentence);

RemovalScope parse_scope(std::string_view name);
std::string_view to_string(RemovalScope scope);

void to_json(Json& j, const CaptionRecord& c);
void from_json(const Json& j, CaptionRecord& c);

}  // namespace rescap
