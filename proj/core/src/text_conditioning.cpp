// SPDX-License-Identifier: Apache-2.0
#include "rescap/text_conditioning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <utility>

#include "rescap/errors.hpp"
#include "rescap/ids.hpp"

namespace rescap {
namespace {

constexpr int kMaxWords = kBaseWindow - 2;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Bytes >= 0x80 are treated as word characters so UTF-8 letters are not split.
bool is_word_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Collapses whitespace runs to one space, trims, and drops spaces that ended
// up in front of punctuation after a removal.
std::string normalize_spaces(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space && !(c == ',' || c == '.' || c == ';' || c == ':' || c == '!' || c == '?'))
      out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

float unit_float(Rng& rng) {
  // 53 random bits mapped to [-1, 1); avoids implementation-defined distributions.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return static_cast<float>(2.0 * u - 1.0);
}

void fill_row(EmbeddingMatrix& m, int row, std::string_view token, int dim) {
  Rng rng(combine_seed({fnv1a64(token), static_cast<std::uint64_t>(dim)}));
  for (int c = 0; c < dim; ++c) m(row, c) = unit_float(rng);
}

using Range = std::pair<std::size_t, std::size_t>;  // [begin, end)

bool overlaps(const Range& a, const Range& b) { return a.first < b.second && b.first < a.second; }

std::vector<Range> find_matches(std::string_view text, const std::vector<std::string>& phrases) {
  const std::string lower = to_lower(text);
  std::vector<const std::string*> ordered;
  for (const auto& p : phrases) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const std::string* a, const std::string* b) { return a->size() > b->size(); });

  std::vector<Range> matches;
  std::size_t i = 0;
  while (i < lower.size()) {
    bool hit = false;
    if (i == 0 || !is_word_char(lower[i - 1])) {
      for (const std::string* p : ordered) {
        const std::size_t end = i + p->size();
        if (end > lower.size() || lower.compare(i, p->size(), *p) != 0) continue;
        if (end < lower.size() && is_word_char(lower[end])) continue;
        matches.emplace_back(i, end);
        i = end;
        hit = true;
        break;
      }
    }
    if (!hit) ++i;
  }
  return matches;
}

bool any_overlap(const Range& unit, const std::vector<Range>& matches) {
  return std::any_of(matches.begin(), matches.end(),
                     [&](const Range& m) { return overlaps(unit, m); });
}

std::vector<Range> split_sentences(std::string_view text) {
  std::vector<Range> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i;
      while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?' ||
                                 text[j] == '"' || text[j] == '\'' || text[j] == ')'))
        ++j;
      if (j == text.size() || is_space(text[j])) {
        out.emplace_back(start, j);
        start = j;
        i = j;
        continue;
      }
    }
    ++i;
  }
  if (!trim(text.substr(start)).empty()) out.emplace_back(start, text.size());
  return out;
}

struct RemovalResult {
  std::string kept;
  std::vector<std::string> spans;
};

RemovalResult remove_phrases(std::string_view text, const std::vector<Range>& matches) {
  RemovalResult r;
  std::string kept;
  std::size_t cursor = 0;
  for (const auto& m : matches) {
    kept.append(text.substr(cursor, m.first - cursor));
    kept.push_back(' ');
    r.spans.emplace_back(text.substr(m.first, m.second - m.first));
    cursor = m.second;
  }
  kept.append(text.substr(cursor));
  r.kept = normalize_spaces(kept);
  return r;
}

RemovalResult remove_sentences(std::string_view text, const std::vector<Range>& matches) {
  RemovalResult r;
  std::string kept;
  for (const auto& s : split_sentences(text)) {
    const auto sentence = trim(text.substr(s.first, s.second - s.first));
    if (sentence.empty()) continue;
    if (any_overlap(s, matches)) {
      r.spans.emplace_back(sentence);
    } else {
      if (!kept.empty()) kept.push_back(' ');
      kept.append(sentence);
    }
  }
  r.kept = normalize_spaces(kept);
  return r;
}

// Clause boundaries inside one sentence: punctuation , ; : and the
// conjunctions while / but / whereas. Each clause remembers the raw delimiter
// in front of it so survivors can be stitched back together.
struct Clause {
  Range range;
  Range delimiter;
};

std::vector<Clause> split_clauses(std::string_view text, Range body) {
  static const std::vector<std::string> kConjunctions = {" while ", " but ", " whereas "};
  const std::string lower = to_lower(text);
  std::vector<Clause> out;
  std::size_t clause_start = body.first;
  Range delim{body.first, body.first};
  std::size_t i = body.first;
  while (i < body.second) {
    const char c = text[i];
    std::size_t delim_len = 0;
    if (c == ',' || c == ';' || c == ':') {
      delim_len = 1;
    } else {
      for (const auto& conj : kConjunctions) {
        if (i + conj.size() <= body.second && lower.compare(i, conj.size(), conj) == 0) {
          delim_len = conj.size();
          break;
        }
      }
    }
    if (delim_len > 0) {
      out.push_back({{clause_start, i}, delim});
      delim = {i, i + delim_len};
      clause_start = i + delim_len;
      i += delim_len;
    } else {
      ++i;
    }
  }
  out.push_back({{clause_start, body.second}, delim});
  return out;
}

RemovalResult remove_clauses(std::string_view text, const std::vector<Range>& matches) {
  RemovalResult r;
  std::string kept_all;
  for (const auto& s : split_sentences(text)) {
    std::size_t body_end = s.second;
    while (body_end > s.first && (text[body_end - 1] == '.' || text[body_end - 1] == '!' ||
                                  text[body_end - 1] == '?' || is_space(text[body_end - 1])))
      --body_end;
    const auto terminator = trim(text.substr(body_end, s.second - body_end));
    std::string sentence;
    bool first_kept = true;
    for (const auto& clause : split_clauses(text, {s.first, body_end})) {
      const auto clause_text = trim(text.substr(clause.range.first,
                                                clause.range.second - clause.range.first));
      if (clause_text.empty()) continue;
      if (any_overlap(clause.range, matches)) {
        r.spans.emplace_back(clause_text);
        continue;
      }
      if (!first_kept) {
        sentence.append(text.substr(clause.delimiter.first,
                                    clause.delimiter.second - clause.delimiter.first));
      }
      sentence.push_back(' ');
      sentence.append(clause_text);
      first_kept = false;
    }
    if (first_kept) continue;  // every clause removed
    std::string cleaned = normalize_spaces(sentence);
    const auto head = trim(text.substr(s.first, s.second - s.first));
    if (!head.empty() && std::isupper(static_cast<unsigned char>(head.front())) &&
        !cleaned.empty())
      cleaned.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(cleaned.front())));
    cleaned.append(terminator);
    if (!kept_all.empty()) kept_all.push_back(' ');
    kept_all.append(cleaned);
  }
  r.kept = normalize_spaces(kept_all);
  return r;
}

struct WordSlot {
  std::size_t begin;
  std::size_t end;
};

std::vector<WordSlot> word_slots(std::string_view text) {
  std::vector<WordSlot> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

std::string replace_core(std::string_view word, std::string_view filler) {
  std::size_t first = 0;
  while (first < word.size() && !is_word_char(word[first])) ++first;
  if (first == word.size()) return std::string(filler);
  std::size_t last = word.size();
  while (last > first && !is_word_char(word[last - 1])) --last;
  std::string out(word.substr(0, first));
  out.append(filler);
  out.append(word.substr(last));
  return out;
}

}  // namespace

bool TokenSequence::operator==(const TokenSequence& other) const {
  return eos_index == other.eos_index && source_text == other.source_text &&
         embeddings.rows() == other.embeddings.rows() &&
         embeddings.cols() == other.embeddings.cols() && embeddings == other.embeddings;
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> out;
  for (const auto& slot : word_slots(text)) out.push_back(text.substr(slot.begin, slot.end - slot.begin));
  return out;
}

int count_words(std::string_view text) { return static_cast<int>(word_slots(text).size()); }

int stub_token_count(std::string_view text) { return count_words(text) + 2; }

CaptionRecord make_caption(std::string text) {
  CaptionRecord c;
  c.word_count = count_words(text);
  c.content_part = text;
  c.text = std::move(text);
  return c;
}

CaptionRecord content_only(const CaptionRecord& filtered) {
  CaptionRecord c = make_caption(filtered.content_part);
  c.declared_token_length = stub_token_count(c.content_part);
  return c;
}

TokenSequence encode_stub(std::string_view text, int dim) {
  if (dim <= 0) throw InvalidInputError("encode_stub: embedding dimension must be positive");
  const auto words = split_words(text);
  if (words.empty()) throw InvalidInputError("encode_stub: text is empty");

  TokenSequence seq;
  seq.embeddings = EmbeddingMatrix::Zero(kBaseWindow, dim);
  const int used = std::min(static_cast<int>(words.size()), kMaxWords);
  seq.eos_index = used + 1;
  fill_row(seq.embeddings, 0, "<|startoftext|>", dim);
  for (int w = 0; w < used; ++w) fill_row(seq.embeddings, w + 1, words[w], dim);
  fill_row(seq.embeddings, seq.eos_index, "<|endoftext|>", dim);
  seq.source_text = std::string(text);
  return seq;
}

TokenSequence extend_richness(const TokenSequence& seq, int repeats) {
  if (repeats < 0) throw InvalidInputError("extend_richness: repeat count must be >= 0");
  if (seq.length() != kBaseWindow)
    throw InvalidInputError("extend_richness: expected a " + std::to_string(kBaseWindow) +
                            "-token sequence, got " + std::to_string(seq.length()));
  if (seq.eos_index < kRichnessBlock + 1)
    throw SequenceTooShortError("extend_richness: eos_index " + std::to_string(seq.eos_index) +
                                " leaves fewer than " + std::to_string(kRichnessBlock) +
                                " tokens before EOS");
  if (seq.eos_index >= seq.length())
    throw InvalidInputError("extend_richness: eos_index out of range");
  if (repeats == 0) return seq;

  const int eos = seq.eos_index;
  const int tail = seq.length() - eos;  // EOS plus padding
  const int grown = kRichnessBlock * repeats;

  TokenSequence out;
  out.source_text = seq.source_text;
  out.eos_index = eos + grown;
  out.embeddings.resize(seq.length() + grown, seq.dim());
  out.embeddings.topRows(eos) = seq.embeddings.topRows(eos);
  const auto block = seq.embeddings.middleRows(eos - kRichnessBlock, kRichnessBlock);
  for (int r = 0; r < repeats; ++r) out.embeddings.middleRows(eos + r * kRichnessBlock, kRichnessBlock) = block;
  out.embeddings.bottomRows(tail) = seq.embeddings.bottomRows(tail);
  return out;
}

int richness_schedule(int target_token_length) {
  if (target_token_length < kBaseWindow)
    throw InvalidInputError("richness_schedule: target " + std::to_string(target_token_length) +
                            " is below the base window of " + std::to_string(kBaseWindow));
  const int diff = target_token_length - kBaseWindow;
  const int k = diff / kRichnessBlock;
  return diff % kRichnessBlock > kRichnessBlock / 2 ? k + 1 : k;
}

int replaced_word_count(double ratio, int word_count) {
  // The epsilon absorbs products like 0.29 * 100 = 28.999999999999996.
  const auto m = static_cast<int>(std::floor(ratio * word_count + 1e-9));
  return std::clamp(m, 0, word_count);
}

CaptionRecord perturb_relevance(const CaptionRecord& caption, double ratio, std::uint64_t seed,
                                const std::vector<std::string>& fillers) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw InvalidInputError("perturb_relevance: ratio must lie in [0, 1]");
  if (fillers.empty()) throw InvalidInputError("perturb_relevance: filler set is empty");
  const auto slots = word_slots(caption.text);
  if (slots.empty()) throw InvalidInputError("perturb_relevance: caption has no words");
  const int n = static_cast<int>(slots.size());
  const int m = replaced_word_count(ratio, n);
  if (m == 0) return caption;

  Rng rng(combine_seed({seed, 0x70657274ULL}));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> pick(0, fillers.size() - 1);

  std::vector<std::string> words;
  words.reserve(n);
  for (const auto& s : slots) words.emplace_back(caption.text.substr(s.begin, s.end - s.begin));
  std::sort(order.begin(), order.begin() + m);
  for (int i = 0; i < m; ++i) words[order[i]] = replace_core(words[order[i]], fillers[pick(rng)]);

  // Rebuild with the original separators so spacing and line breaks survive.
  auto rebuild = [&](int first, int last) {
    std::string out;
    for (int w = first; w < last; ++w) {
      if (w > first) out.append(caption.text, slots[w - 1].end, slots[w].begin - slots[w - 1].end);
      out.append(words[w]);
    }
    return out;
  };

  CaptionRecord out = caption;
  out.text = caption.text.substr(0, slots.front().begin) + rebuild(0, n) +
             caption.text.substr(slots.back().end);
  if (caption.degradation_part.empty()) {
    out.content_part = out.text;
    return out;
  }

  // Carry degradation spans across by word index so the partition invariant holds.
  std::vector<bool> in_span(n, false);
  out.degradation_part.clear();
  std::size_t cursor = 0;
  for (const auto& span : caption.degradation_part) {
    const auto at = caption.text.find(span, cursor);
    if (at == std::string::npos) continue;
    const std::size_t end = at + span.size();
    int first = -1;
    int last = -1;
    for (int w = 0; w < n; ++w) {
      if (slots[w].begin >= at && slots[w].end <= end) {
        if (first < 0) first = w;
        last = w + 1;
        in_span[w] = true;
      }
    }
    if (first >= 0) out.degradation_part.push_back(rebuild(first, last));
    cursor = end;
  }
  std::string content;
  for (int w = 0; w < n; ++w) {
    if (in_span[w]) continue;
    content.push_back(' ');
    content.append(words[w]);
  }
  out.content_part = normalize_spaces(content);
  return out;
}

CaptionRecord filter_harmful(const CaptionRecord& caption, const HarmfulLexicon& lexicon) {
  const std::string& source =
      caption.content_part.empty() && caption.degradation_part.empty() ? caption.text
                                                                       : caption.content_part;
  std::string content = source;
  std::vector<std::string> spans;
  while (true) {
    const auto matches = find_matches(content, lexicon.phrases);
    if (matches.empty()) break;
    RemovalResult r;
    switch (lexicon.scope) {
      case RemovalScope::phrase: r = remove_phrases(content, matches); break;
      case RemovalScope::clause: r = remove_clauses(content, matches); break;
      case RemovalScope::sentence: r = remove_sentences(content, matches); break;
    }
    for (auto& s : r.spans) spans.push_back(std::move(s));
    content = std::move(r.kept);
  }
  if (spans.empty()) {
    CaptionRecord out = caption;
    out.content_part = source;
    out.word_count = count_words(caption.text);
    return out;
  }
  CaptionRecord out = caption;
  out.content_part = std::move(content);
  for (auto& s : spans) out.degradation_part.push_back(std::move(s));
  out.word_count = count_words(caption.text);
  return out;
}

HarmfulLexicon make_lexicon(std::vector<std::string> phrases, RemovalScope scope) {
  if (phrases.empty()) throw InvalidInputError("harmful lexicon must contain at least one phrase");
  for (auto& p : phrases) {
    p = std::string(trim(to_lower(p)));
    if (p.empty()) throw InvalidInputError("harmful lexicon contains an empty phrase");
  }
  return HarmfulLexicon{std::move(phrases), scope};
}

HarmfulLexicon default_harmful_lexicon() {
  return make_lexicon(
      {
          // degradation
          "blurred", "blurry", "blur", "motion blur", "low resolution", "low-resolution",
          "noisy", "grainy", "film grain", "compression artifacts", "jpeg artifacts",
          "pixelated", "overexposed", "underexposed", "defocused",
          // photography
          "out of focus", "out-of-focus", "soft focus", "soft-focus", "bokeh", "bokeh effect",
          "shallow depth of field", "depth of field",
      },
      RemovalScope::sentence);
}

RemovalScope parse_scope(std::string_view name) {
  if (name == "phrase") return RemovalScope::phrase;
  if (name == "clause") return RemovalScope::clause;
  if (name == "sentence") return RemovalScope::sentence;
  throw InvalidInputError("unknown removal scope '" + std::string(name) +
                          "' (expected phrase, clause or sentence)");
}

std::string_view to_string(RemovalScope scope) {
  switch (scope) {
    case RemovalScope::phrase: return "phrase";
    case RemovalScope::clause: return "clause";
    case RemovalScope::sentence: return "sentence";
  }
  return "sentence";
}

void to_json(Json& j, const CaptionRecord& c) {
  j = Json{{"text", c.text},
           {"content_part", c.content_part},
           {"degradation_part", c.degradation_part},
           {"word_count", c.word_count},
           {"declared_token_length", c.declared_token_length ? Json(*c.declared_token_length) : Json(nullptr)}};
}

void from_json(const Json& j, CaptionRecord& c) {
  if (!j.is_object() || !j.contains("text") || !j.at("text").is_string())
    throw ParseError("text", "caption record requires a string field 'text'");
  c.text = j.at("text").get<std::string>();
  c.content_part = j.value("content_part", c.text);
  c.degradation_part = j.value("degradation_part", std::vector<std::string>{});
  c.word_count = j.contains("word_count") && j.at("word_count").is_number_integer()
                     ? j.at("word_count").get<int>()
                     : count_words(c.text);
  c.declared_token_length.reset();
  if (j.contains("declared_token_length") && !j.at("declared_token_length").is_null())
    c.declared_token_length = j.at("declared_token_length").get<int>();
}

}  // namespace rescap
