// SPDX-License-Identifier: Apache-2.0
#include "rescap/data_pipeline.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <deque>

#include "rescap/errors.hpp"
#include "rescap/ids.hpp"
#include "rescap/parallel.hpp"

namespace rescap {

namespace fs = std::filesystem;

std::string_view to_string(ImageSource s) {
  switch (s) {
    case ImageSource::unsplash: return "unsplash";
    case ImageSource::imagenet: return "imagenet";
    case ImageSource::sam: return "sam";
    case ImageSource::other: return "other";
  }
  return "other";
}

ImageSource parse_source(std::string_view name) {
  if (name == "unsplash") return ImageSource::unsplash;
  if (name == "imagenet") return ImageSource::imagenet;
  if (name == "sam") return ImageSource::sam;
  if (name == "other") return ImageSource::other;
  throw InvalidInputError("unknown image source '" + std::string(name) + "'");
}

int Candidate::token_length() const {
  return caption.declared_token_length.value_or(stub_token_count(caption.content_part));
}

const Candidate* PairRecord::find_candidate(const std::string& candidate_id) const {
  for (const auto& c : candidates)
    if (c.restoration && c.restoration->candidate_id == candidate_id) return &c;
  return nullptr;
}

void LengthSchedule::validate() const {
  if (word_targets.empty()) throw InvalidInputError("length schedule is empty");
  if (word_targets.front() <= 0) throw InvalidInputError("length schedule entries must be positive");
  for (std::size_t i = 1; i < word_targets.size(); ++i) {
    if (word_targets[i] <= word_targets[i - 1])
      throw InvalidInputError("length schedule must be strictly increasing");
    if (i >= 2 && word_targets[i] - word_targets[i - 1] < word_targets[i - 1] - word_targets[i - 2])
      throw InvalidInputError("length schedule gaps must be non-decreasing");
  }
}

LengthSchedule parse_schedule(std::string_view csv) {
  LengthSchedule s;
  s.word_targets.clear();
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const auto comma = std::min(csv.find(',', pos), csv.size());
    auto field = csv.substr(pos, comma - pos);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    int value = 0;
    const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc{} || end != field.data() + field.size())
      throw InvalidInputError("bad schedule entry '" + std::string(field) + "'");
    s.word_targets.push_back(value);
    pos = comma + 1;
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::string id_for_file(const fs::path& p) { return uuid_v4(fnv1a64(p.filename().string())); }

std::uint64_t zoom_bits(double zoom) { return std::bit_cast<std::uint64_t>(zoom); }

std::string pair_id_for(const std::string& hq_id, const std::string& degrader_id, double zoom,
                        std::uint64_t seed) {
  return uuid_v4(combine_seed({fnv1a64(hq_id), fnv1a64(degrader_id), zoom_bits(zoom), seed, 0x70616972ULL}));
}

bool uses_image(const std::string& degrader_id, const std::string& hq_id, const GenerateOptions& o) {
  if (degrader_id != "realesrgan") return true;
  const auto h = combine_seed({fnv1a64(hq_id), o.seed, 0x6d6978ULL});
  return static_cast<double>(h >> 11) * 0x1.0p-53 < o.realesrgan_fraction;
}

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

std::vector<HqEntry> scan_hq_directory(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw NotFoundError("HQ directory " + dir.string() + " does not exist");
  std::vector<HqEntry> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    out.push_back({id_for_file(entry.path()), entry.path(), ImageSource::other, std::nullopt});
  }
  std::sort(out.begin(), out.end(),
            [](const HqEntry& a, const HqEntry& b) { return a.path.filename() < b.path.filename(); });
  return out;
}

std::vector<HqEntry> load_hq_manifest(const fs::path& jsonl) {
  std::vector<HqEntry> out;
  const auto base = jsonl.parent_path();
  for (const auto& row : read_jsonl(jsonl)) {
    if (!row.contains("path")) throw ParseError("manifest", "row lacks 'path'");
    HqEntry e;
    e.path = row.at("path").get<std::string>();
    if (e.path.is_relative()) e.path = base / e.path;
    e.image_id = row.contains("image_id") ? row.at("image_id").get<std::string>() : id_for_file(e.path);
    if (row.contains("source")) e.source = parse_source(row.at("source").get<std::string>());
    e.device = optional_from<std::string>(row, "device");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<PairRecord> generate_pairs(const std::vector<HqEntry>& hq, const DegraderRegistry& degraders,
                                       const std::vector<std::string>& degrader_ids,
                                       const std::vector<double>& zoom_ratios, const RunLayout& layout,
                                       const GenerateOptions& options) {
  if (hq.empty()) throw InvalidInputError("HQ manifest is empty");
  if (degrader_ids.empty()) throw InvalidInputError("no degraders selected");
  if (zoom_ratios.empty()) throw InvalidInputError("no zoom ratios selected");
  for (const auto& id : degrader_ids)
    if (!degraders.contains(id)) throw UnregisteredBackendError("degrader '" + id + "' is not registered");
  std::vector<LevelClassification> levels;
  for (double z : zoom_ratios) levels.push_back(classify_degradation(z));

  // Slot layout: for each HQ image, degraders in order, zooms in order.
  struct Slot {
    std::size_t hq;
    std::size_t degrader;
    std::size_t zoom;
  };
  std::vector<Slot> slots;
  std::vector<std::vector<std::size_t>> per_hq(hq.size());
  for (std::size_t h = 0; h < hq.size(); ++h)
    for (std::size_t d = 0; d < degrader_ids.size(); ++d) {
      if (!uses_image(degrader_ids[d], hq[h].image_id, options)) continue;
      for (std::size_t z = 0; z < zoom_ratios.size(); ++z) {
        per_hq[h].push_back(slots.size());
        slots.push_back({h, d, z});
      }
    }

  std::error_code ec;
  fs::create_directories(layout.images(), ec);
  if (ec) throw IoError("cannot create " + layout.images().string() + ": " + ec.message());

  std::vector<PairRecord> records(slots.size());
  parallel_for(hq.size(), options.jobs, [&](std::size_t h) {
    if (per_hq[h].empty()) return;
    const Image source = load_image(hq[h].path);
    for (const auto slot_index : per_hq[h]) {
      const auto& slot = slots[slot_index];
      const auto& degrader_id = degrader_ids[slot.degrader];
      const double zoom = zoom_ratios[slot.zoom];
      PairRecord& r = records[slot_index];
      r.pair_id = pair_id_for(hq[h].image_id, degrader_id, zoom, options.seed);
      r.hq_id = hq[h].image_id;
      r.hq_ref = hq[h].path;
      r.lq_ref = layout.images() / (r.pair_id + ".png");
      r.meta.image_id = r.pair_id;
      r.meta.source = hq[h].source;
      r.meta.device = hq[h].device;
      r.meta.zoom_ratio = zoom;
      r.meta.degradation_level = levels[slot.zoom].level;
      r.meta.out_of_paper_range = levels[slot.zoom].out_of_range;
      r.meta.degrader_id = degrader_id;
      const Image lq = degraders.at(degrader_id)->degrade(source, zoom, combine_seed({options.seed, fnv1a64(r.pair_id)}));
      save_png(r.lq_ref, lq);
    }
  });
  return records;
}

PairRecord generate_caption_candidates(const PairRecord& pair, CaptionerClient& captioner,
                                       const LengthSchedule& schedule, const CaptionOptions& options) {
  if (!pair.candidates.empty())
    throw InvalidInputError("pair " + pair.pair_id + " already has caption candidates");
  schedule.validate();
  PairRecord out = pair;
  for (const int words : schedule.word_targets) {
    const auto prompt = substitute_word_target(options.prompt_template, words);
    try {
      const CoTCaption cot = captioner.caption({pair.pair_id, pair.hq_ref}, prompt);
      CaptionRecord raw = make_caption(cot.description);
      Candidate c;
      if (options.filter) {
        raw = filter_harmful(raw, options.lexicon);
        c.removed_spans = raw.degradation_part;
      }
      if (count_words(raw.content_part) == 0)
        throw InvalidInputError("caption is empty after harmful-description filtering");
      c.caption = content_only(raw);
      c.target_words = words;
      out.candidates.push_back(std::move(c));
    } catch (const Error& e) {
      out.warnings.push_back("caption " + std::to_string(words) + " words: " + std::string(to_string(e.kind())) +
                             ": " + e.what());
    }
  }
  return out;
}

int repeat_count_for_length(int token_length) {
  return richness_schedule(std::max(token_length, kBaseWindow));
}

PairRecord fanout_restorations(const PairRecord& pair, const RestorationClient& client,
                               const std::string& backend_id, std::uint64_t seed, int jobs, bool harmful_gate) {
  if (pair.candidates.empty()) throw InvalidInputError("pair " + pair.pair_id + " has no caption candidates");
  const auto pair_seed = combine_seed({seed, fnv1a64(pair.pair_id)});
  std::vector<RestorationRequest> reqs;
  reqs.reserve(pair.candidates.size());
  for (const auto& c : pair.candidates) {
    RestorationRequest r;
    r.image_id = pair.pair_id;
    r.lq_image_ref = pair.lq_ref;
    r.caption = c.caption;
    r.token_repeat_k = repeat_count_for_length(c.token_length());
    r.backend = backend_id;
    r.seed = pair_seed;
    r.harmful_gate = harmful_gate;
    reqs.push_back(std::move(r));
  }
  const auto outcome = client.restore_batch(reqs, jobs);
  PairRecord out = pair;
  for (std::size_t i = 0; i < out.candidates.size(); ++i) {
    auto& c = out.candidates[i];
    const auto& item = outcome.items[i];
    if (item.ok()) {
      c.restoration = item.result;
      c.error.reset();
    } else {
      c.restoration.reset();
      c.error = std::string(to_string(*item.error_kind)) + ": " + item.error;
      out.warnings.push_back("restoration " + std::to_string(c.target_words) + " words: " + *c.error);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

RunStore::RunStore(RunLayout layout) : layout_(std::move(layout)) {
  std::error_code ec;
  if (!fs::is_directory(layout_.root, ec))
    throw NotFoundError("run directory " + layout_.root.string() + " does not exist");
  std::lock_guard lock(mutex_);
  load_locked();
}

void RunStore::load_locked() {
  pairs_.clear();
  index_.clear();
  annotations_.clear();
  if (fs::exists(layout_.pairs()))
    for (const auto& row : read_jsonl(layout_.pairs())) {
      auto p = row.get<PairRecord>();
      p.chosen_candidate_id.reset();
      p.annotator.reset();
      p.annotated_at.reset();
      index_[p.pair_id] = pairs_.size();
      pairs_.push_back(std::move(p));
    }
  if (fs::exists(layout_.annotations()))
    for (const auto& row : read_jsonl(layout_.annotations())) annotations_.push_back(row.get<AnnotationRecord>());
}

void RunStore::reload() {
  std::lock_guard lock(mutex_);
  load_locked();
}

void RunStore::save_pairs(const std::vector<PairRecord>& pairs) {
  std::map<std::string, std::size_t> index;
  std::vector<Json> rows;
  rows.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!index.emplace(pairs[i].pair_id, i).second)
      throw DuplicateIdError("pair id " + pairs[i].pair_id + " appears twice");
    PairRecord bare = pairs[i];
    bare.chosen_candidate_id.reset();
    bare.annotator.reset();
    bare.annotated_at.reset();
    rows.emplace_back(bare);
  }
  std::lock_guard lock(mutex_);
  atomic_write_jsonl(layout_.pairs(), rows);
  pairs_.clear();
  for (const auto& row : rows) pairs_.push_back(row.get<PairRecord>());
  index_ = std::move(index);
}

PairRecord RunStore::merged(const PairRecord& p) const {
  PairRecord out = p;
  for (const auto& a : annotations_)
    if (a.pair_id == p.pair_id) {
      out.chosen_candidate_id = a.candidate_id;
      out.annotator = a.annotator;
      out.annotated_at = a.annotated_at;
    }
  return out;
}

std::vector<PairRecord> RunStore::pairs() const {
  std::lock_guard lock(mutex_);
  std::vector<PairRecord> out;
  out.reserve(pairs_.size());
  for (const auto& p : pairs_) out.push_back(merged(p));
  return out;
}

std::optional<PairRecord> RunStore::pair(const std::string& pair_id) const {
  std::lock_guard lock(mutex_);
  const auto it = index_.find(pair_id);
  if (it == index_.end()) return std::nullopt;
  return merged(pairs_[it->second]);
}

std::vector<AnnotationRecord> RunStore::annotations() const {
  std::lock_guard lock(mutex_);
  return annotations_;
}

PairRecord RunStore::ingest_annotation(const std::string& pair_id, const std::string& candidate_id,
                                       const std::string& annotator, bool overwrite,
                                       const BeforeRenameHook& before_rename) {
  if (annotator.empty()) throw InvalidInputError("annotator name is empty");
  std::lock_guard lock(mutex_);
  const auto it = index_.find(pair_id);
  if (it == index_.end()) throw NotFoundError("unknown pair " + pair_id);
  const PairRecord& pair = pairs_[it->second];
  if (pair.find_candidate(candidate_id) == nullptr)
    throw NotFoundError("pair " + pair_id + " has no candidate " + candidate_id);

  auto next = annotations_;
  const auto existing = std::find_if(next.begin(), next.end(),
                                     [&](const AnnotationRecord& a) { return a.pair_id == pair_id; });
  AnnotationRecord record{pair_id, candidate_id, annotator, utc_timestamp()};
  if (existing != next.end()) {
    if (!overwrite)
      throw ConflictError("pair " + pair_id + " is already annotated by " + existing->annotator);
    *existing = record;
  } else {
    next.push_back(record);
  }
  std::vector<Json> rows(next.begin(), next.end());
  atomic_write_jsonl(layout_.annotations(), rows, before_rename);
  annotations_ = std::move(next);
  return merged(pair);
}

// ---------------------------------------------------------------------------

ExportSummary export_training_set(const std::vector<PairRecord>& records, const fs::path& out_path,
                                  const ExportOptions& options) {
  ExportSummary summary;
  summary.target = options.target;
  for (const auto level : kAllLevels) summary.per_level[level] = 0;

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.chosen_candidate_id) {
      ++summary.skipped_unannotated;
      continue;
    }
    const auto hold = options.holdout_zoom.find(r.meta.degrader_id);
    if (hold != options.holdout_zoom.end() && std::abs(hold->second - r.meta.zoom_ratio) < 1e-9) {
      ++summary.skipped_holdout;
      continue;
    }
    if (r.find_candidate(*r.chosen_candidate_id) == nullptr)
      throw MismatchError("pair " + r.pair_id + " names missing candidate " + *r.chosen_candidate_id);
    eligible.push_back(i);
  }

  std::vector<std::size_t> selected = eligible;
  if (options.limit && *options.limit < eligible.size()) {
    std::map<DegradationLevel, std::deque<std::size_t>> by_level;
    for (const auto i : eligible) by_level[records[i].meta.degradation_level].push_back(i);
    selected.clear();
    while (selected.size() < *options.limit) {
      for (const auto level : kAllLevels) {
        auto& q = by_level[level];
        if (q.empty() || selected.size() >= *options.limit) continue;
        selected.push_back(q.front());
        q.pop_front();
      }
    }
    std::sort(selected.begin(), selected.end());
  }

  std::vector<Json> rows;
  rows.reserve(selected.size());
  for (const auto i : selected) {
    const auto& r = records[i];
    const Candidate& chosen = *r.find_candidate(*r.chosen_candidate_id);
    rows.push_back(Json{{"lq_ref", r.lq_ref.string()},
                        {"cot", emit_cot({chosen.token_length(), chosen.caption.content_part})}});
    ++summary.per_level[r.meta.degradation_level];
  }
  atomic_write_jsonl(out_path, rows);
  summary.exported = rows.size();
  summary.target_met = summary.exported >= summary.target;
  return summary;
}

// ---------------------------------------------------------------------------

void to_json(Json& j, const ImageMeta& m) {
  j = Json{{"image_id", m.image_id},
           {"source", to_string(m.source)},
           {"device", optional_json(m.device)},
           {"zoom_ratio", m.zoom_ratio},
           {"degradation_level", to_string(m.degradation_level)},
           {"out_of_paper_range", m.out_of_paper_range},
           {"degrader_id", m.degrader_id}};
}

void from_json(const Json& j, ImageMeta& m) {
  m.image_id = j.at("image_id").get<std::string>();
  m.source = parse_source(j.value("source", std::string("other")));
  m.device = optional_from<std::string>(j, "device");
  m.zoom_ratio = j.at("zoom_ratio").get<double>();
  m.degrader_id = j.at("degrader_id").get<std::string>();
  const auto cls = classify_degradation(m.zoom_ratio);
  m.degradation_level = j.contains("degradation_level")
                            ? parse_level(j.at("degradation_level").get<std::string>())
                            : cls.level;
  if (m.degradation_level != cls.level)
    throw MismatchError("degradation_level disagrees with zoom ratio " + std::to_string(m.zoom_ratio));
  m.out_of_paper_range = cls.out_of_range;
}

void to_json(Json& j, const Candidate& c) {
  j = Json{{"caption", c.caption},
           {"target_words", c.target_words},
           {"removed_spans", c.removed_spans},
           {"restoration", optional_json(c.restoration)},
           {"error", optional_json(c.error)}};
}

void from_json(const Json& j, Candidate& c) {
  c.caption = j.at("caption").get<CaptionRecord>();
  c.target_words = j.at("target_words").get<int>();
  c.removed_spans = j.value("removed_spans", std::vector<std::string>{});
  c.restoration = optional_from<RestorationResult>(j, "restoration");
  c.error = optional_from<std::string>(j, "error");
}

void to_json(Json& j, const PairRecord& p) {
  j = Json{{"pair_id", p.pair_id},
           {"hq_id", p.hq_id},
           {"hq_ref", p.hq_ref.string()},
           {"lq_ref", p.lq_ref.string()},
           {"meta", p.meta},
           {"candidates", p.candidates},
           {"chosen_candidate_id", optional_json(p.chosen_candidate_id)},
           {"annotator", optional_json(p.annotator)},
           {"annotated_at", optional_json(p.annotated_at)},
           {"warnings", p.warnings}};
}

void from_json(const Json& j, PairRecord& p) {
  p.pair_id = j.at("pair_id").get<std::string>();
  p.hq_id = j.value("hq_id", std::string());
  p.hq_ref = j.at("hq_ref").get<std::string>();
  p.lq_ref = j.at("lq_ref").get<std::string>();
  p.meta = j.at("meta").get<ImageMeta>();
  p.candidates = j.value("candidates", std::vector<Candidate>{});
  p.chosen_candidate_id = optional_from<std::string>(j, "chosen_candidate_id");
  p.annotator = optional_from<std::string>(j, "annotator");
  p.annotated_at = optional_from<std::string>(j, "annotated_at");
  p.warnings = j.value("warnings", std::vector<std::string>{});
  if (p.chosen_candidate_id && p.find_candidate(*p.chosen_candidate_id) == nullptr)
    throw MismatchError("pair " + p.pair_id + " names missing candidate " + *p.chosen_candidate_id);
}

void to_json(Json& j, const AnnotationRecord& a) {
  j = Json{{"pair_id", a.pair_id},
           {"candidate_id", a.candidate_id},
           {"annotator", a.annotator},
           {"annotated_at", a.annotated_at}};
}

void from_json(const Json& j, AnnotationRecord& a) {
  a.pair_id = j.at("pair_id").get<std::string>();
  a.candidate_id = j.at("candidate_id").get<std::string>();
  a.annotator = j.at("annotator").get<std::string>();
  a.annotated_at = j.value("annotated_at", std::string());
}

void to_json(Json& j, const ExportSummary& s) {
  Json levels = Json::object();
  for (const auto& [level, n] : s.per_level) levels[std::string(to_string(level))] = n;
  j = Json{{"exported", s.exported},
           {"skipped_unannotated", s.skipped_unannotated},
           {"skipped_holdout", s.skipped_holdout},
           {"per_level", levels},
           {"target", s.target},
           {"target_met", s.target_met}};
}

}  // namespace rescap
