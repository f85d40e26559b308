// SPDX-License-Identifier: Apache-2.0
#include "rescap/annotation_service.hpp"

#include <algorithm>

#include "rescap/errors.hpp"

namespace rescap {

namespace fs = std::filesystem;

std::string_view to_string(TaskStatus s) { return s == TaskStatus::pending ? "pending" : "done"; }

std::string caption_preview(std::string_view caption, std::size_t max_chars) {
  if (caption.size() <= max_chars) return std::string(caption);
  const std::string_view ellipsis = "...";
  std::size_t cut = max_chars > ellipsis.size() ? max_chars - ellipsis.size() : 0;
  // Step back over UTF-8 continuation bytes.
  while (cut > 0 && (static_cast<unsigned char>(caption[cut]) & 0xC0) == 0x80) --cut;
  return std::string(caption.substr(0, cut)) + std::string(ellipsis);
}

AnnotationService::AnnotationService(RunLayout layout, ServiceOptions options)
    : store_(std::move(layout)), options_(std::move(options)) {
  if (options_.lease_ttl.count() <= 0) throw InvalidInputError("lease TTL must be positive");
  if (options_.thumbnail_edge <= 0) throw InvalidInputError("thumbnail edge must be positive");
}

std::chrono::system_clock::time_point AnnotationService::now() const {
  return options_.clock ? options_.clock() : std::chrono::system_clock::now();
}

AnnotationTask AnnotationService::make_task(const PairRecord& pair) {
  AnnotationTask t;
  t.pair_id = pair.pair_id;
  t.lq_thumbnail_ref = "/images/thumbs/" + pair.pair_id + ".png";
  t.degradation_level = pair.meta.degradation_level;
  t.status = pair.chosen_candidate_id ? TaskStatus::done : TaskStatus::pending;
  for (const auto& c : pair.candidates) {
    if (!c.restoration) continue;
    t.candidates.push_back({c.restoration->candidate_id, "/images/" + c.restoration->candidate_id + ".png",
                            caption_preview(c.caption.content_part), c.restoration->effective_token_length,
                            c.target_words});
  }
  return t;
}

std::optional<AnnotationTask> AnnotationService::next_task(const std::string& annotator) {
  if (annotator.empty()) throw InvalidInputError("annotator name is empty");
  const auto pairs = store_.pairs();
  std::lock_guard lock(mutex_);
  const auto t = now();
  std::erase_if(leases_, [&](const auto& kv) { return kv.second.expires <= t; });

  const PairRecord* pick = nullptr;
  for (const auto& p : pairs) {
    if (p.chosen_candidate_id) continue;
    const bool annotatable = std::any_of(p.candidates.begin(), p.candidates.end(),
                                         [](const Candidate& c) { return c.restoration.has_value(); });
    if (!annotatable) continue;
    const auto lease = leases_.find(p.pair_id);
    if (lease == leases_.end()) {
      if (!pick) pick = &p;
    } else if (lease->second.annotator == annotator) {
      pick = &p;
      break;
    }
  }
  if (!pick) return std::nullopt;
  auto& lease = leases_[pick->pair_id];
  if (lease.annotator != annotator) lease = {annotator, t + options_.lease_ttl};
  return make_task(*pick);
}

SubmitAck AnnotationService::submit_selection(const std::string& pair_id, const std::string& candidate_id,
                                              const std::string& annotator, bool force) {
  if (annotator.empty()) throw InvalidInputError("annotator name is empty");
  std::lock_guard lock(mutex_);
  const auto pair = store_.pair(pair_id);
  if (!pair) throw NotFoundError("unknown pair " + pair_id);
  if (pair->find_candidate(candidate_id) == nullptr)
    throw NotFoundError("pair " + pair_id + " has no candidate " + candidate_id);

  SubmitAck ack;
  if (pair->chosen_candidate_id == candidate_id && pair->annotator == annotator) {
    ack.record = *pair;
    ack.already_recorded = true;
  } else {
    const auto lease = leases_.find(pair_id);
    const bool live = lease != leases_.end() && lease->second.annotator == annotator && lease->second.expires > now();
    if (!live && !force)
      throw StaleLeaseError("annotator " + annotator + " holds no live lease on pair " + pair_id);
    ack.record = store_.ingest_annotation(pair_id, candidate_id, annotator);
    leases_.erase(pair_id);
  }
  const auto p = progress();
  ack.pending = p.pending;
  ack.done = p.done;
  return ack;
}

Progress AnnotationService::progress() const {
  Progress p;
  for (const auto level : kAllLevels) p.per_level[level] = {};
  for (const auto& pair : store_.pairs()) {
    auto& level = p.per_level[pair.meta.degradation_level];
    if (pair.chosen_candidate_id) {
      ++p.done;
      ++level.done;
    } else {
      ++p.pending;
      ++level.pending;
    }
  }
  p.total = p.pending + p.done;
  return p;
}

Json AnnotationService::config() const {
  return Json{{"lease_ttl_s", options_.lease_ttl.count()},
              {"thumbnail_edge", options_.thumbnail_edge},
              {"caption_preview_chars", kCaptionPreviewChars},
              {"run_dir", store_.layout().root.string()}};
}

fs::path AnnotationService::image_file(const std::string& image_id, bool thumbnail) {
  const bool valid = !image_id.empty() && std::all_of(image_id.begin(), image_id.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || c == '-';
  });
  if (!valid) throw NotFoundError("no image '" + image_id + "'");
  const auto& layout = store_.layout();
  const auto full = layout.images() / (image_id + ".png");
  std::error_code ec;
  if (!fs::is_regular_file(full, ec)) throw NotFoundError("no image '" + image_id + "'");
  if (!thumbnail) return full;
  const auto thumb = layout.thumbs() / (image_id + ".png");
  if (!fs::is_regular_file(thumb, ec)) {
    const auto bytes = encode_png(make_thumbnail(load_image(full), options_.thumbnail_edge));
    atomic_write_text(thumb, std::string(bytes.begin(), bytes.end()));
  }
  return thumb;
}

Json to_json_value(const AnnotationTask& task) {
  Json cands = Json::array();
  for (const auto& c : task.candidates)
    cands.push_back({{"candidate_id", c.candidate_id},
                     {"restored_image_ref", c.restored_image_ref},
                     {"caption_preview", c.caption_preview},
                     {"effective_token_length", c.effective_token_length},
                     {"target_words", c.target_words}});
  return Json{{"pair_id", task.pair_id},
              {"lq_thumbnail_ref", task.lq_thumbnail_ref},
              {"degradation_level", to_string(task.degradation_level)},
              {"status", to_string(task.status)},
              {"candidates", cands}};
}

Json to_json_value(const Progress& progress) {
  Json levels = Json::object();
  for (const auto& [level, lp] : progress.per_level)
    levels[std::string(to_string(level))] = {{"pending", lp.pending}, {"done", lp.done}};
  return Json{{"pending", progress.pending},
              {"done", progress.done},
              {"total", progress.total},
              {"per_level", levels}};
}

}  // namespace rescap
