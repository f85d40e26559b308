// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rescap/cot_captioner.hpp"
#include "rescap/degradation_level.hpp"
#include "rescap/image.hpp"
#include "rescap/jsonl.hpp"
#include "rescap/restoration_client.hpp"
#include "rescap/text_conditioning.hpp"

namespace rescap {

enum class ImageSource { unsplash, imagenet, sam, other };
std::string_view to_string(ImageSource s);
ImageSource parse_source(std::string_view name);

struct ImageMeta {
  std::string image_id;  // id of the LQ image (equals the pair id)
  ImageSource source = ImageSource::other;
  std::optional<std::string> device;
  double zoom_ratio = 1.0;
  DegradationLevel degradation_level = DegradationLevel::light;
  bool out_of_paper_range = false;
  std::string degrader_id;
};

struct Candidate {
  CaptionRecord caption;  // filtered; degradation_part is empty
  int target_words = 0;
  /// Spans the harmful-description filter removed from the raw caption.
  std::vector<std::string> removed_spans;
  std::optional<RestorationResult> restoration;
  std::optional<std::string> error;

  /// Stub token count of the filtered caption.
  int token_length() const;
};

struct PairRecord {
  std::string pair_id;
  std::string hq_id;
  std::filesystem::path hq_ref;
  std::filesystem::path lq_ref;
  ImageMeta meta;
  std::vector<Candidate> candidates;
  std::optional<std::string> chosen_candidate_id;
  std::optional<std::string> annotator;
  std::optional<std::string> annotated_at;
  std::vector<std::string> warnings;

  const Candidate* find_candidate(const std::string& candidate_id) const;
};

/// Word targets for the caption candidates generated per image.
struct LengthSchedule {
  std::vector<int> word_targets{80, 110, 140, 200, 260, 350, 440};

  /// Strictly increasing targets with non-decreasing gaps.
  void validate() const;
};

LengthSchedule parse_schedule(std::string_view csv);

// ---------------------------------------------------------------------------
// Degraders

class Degrader {
 public:
  virtual ~Degrader() = default;
  /// Output is (width / zoom, height / zoom) rounded, at least 1x1.
  virtual Image degrade(const Image& hq, double zoom_ratio, std::uint64_t seed) const = 0;
};

struct ClassicalDegraderOptions {
  double blur_per_zoom = 0.35;   // Gaussian sigma = blur_per_zoom * sqrt(zoom)
  double noise_base = 2.0;       // noise sigma (0-255) = noise_base + noise_per_zoom * zoom
  double noise_per_zoom = 0.25;
  int jpeg_quality_max = 92;
  int jpeg_quality_min = 35;
  int passes = 1;                // 2 gives a second-order (Real-ESRGAN-like) chain
};

/// Blur, area downsample by the zoom ratio, seeded Gaussian noise, JPEG round trip.
class ClassicalDegrader final : public Degrader {
 public:
  explicit ClassicalDegrader(ClassicalDegraderOptions options = {}) : options_(options) {}
  Image degrade(const Image& hq, double zoom_ratio, std::uint64_t seed) const override;

 private:
  ClassicalDegraderOptions options_;
};

using DegraderRegistry = std::map<std::string, std::shared_ptr<const Degrader>>;

/// "stub" (single pass) and "realesrgan" (two passes).
DegraderRegistry default_degraders();

// ---------------------------------------------------------------------------
// Run directory: runs/<run_id>/{pairs.jsonl, annotations.jsonl, export.jsonl, images/}

struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path pairs() const { return root / "pairs.jsonl"; }
  std::filesystem::path annotations() const { return root / "annotations.jsonl"; }
  std::filesystem::path export_file() const { return root / "export.jsonl"; }
  std::filesystem::path images() const { return root / "images"; }
  std::filesystem::path thumbs() const { return root / "images" / "thumbs"; }
};

struct HqEntry {
  std::string image_id;
  std::filesystem::path path;
  ImageSource source = ImageSource::other;
  std::optional<std::string> device;
};

/// Every .png/.jpg/.jpeg in `dir`, sorted by file name. Ids are derived
/// from the file name so they are stable across runs.
std::vector<HqEntry> scan_hq_directory(const std::filesystem::path& dir);
/// JSONL rows {"path", "image_id"?, "source"?, "device"?}.
std::vector<HqEntry> load_hq_manifest(const std::filesystem::path& jsonl);

struct GenerateOptions {
  std::uint64_t seed = 0;
  int jobs = 1;
  /// Share of HQ images that the "realesrgan" degrader is applied to when it
  /// is in the degrader list. Other degraders see every image.
  double realesrgan_fraction = 0.2;
};

/// One LQ image per (hq, degrader, zoom), written under images/<pair_id>.png.
std::vector<PairRecord> generate_pairs(const std::vector<HqEntry>& hq, const DegraderRegistry& degraders,
                                       const std::vector<std::string>& degrader_ids,
                                       const std::vector<double>& zoom_ratios, const RunLayout& layout,
                                       const GenerateOptions& options);

struct CaptionOptions {
  std::string prompt_template{kCaptionGenerationPrompt};
  HarmfulLexicon lexicon = default_harmful_lexicon();
  /// Only the harmful-description ablation turns this off.
  bool filter = true;
};

/// One candidate per schedule entry, in schedule order. Captioner failures are
/// recorded in `warnings`; the pair keeps the candidates that succeeded.
PairRecord generate_caption_candidates(const PairRecord& pair, CaptionerClient& captioner,
                                       const LengthSchedule& schedule, const CaptionOptions& options = {});

/// Restores every candidate with k = richness_schedule(token length). Lengths
/// below the base window use k = 0. Failures stay on the candidate. Every
/// candidate of a pair shares one backend seed.
PairRecord fanout_restorations(const PairRecord& pair, const RestorationClient& client,
                               const std::string& backend_id, std::uint64_t seed, int jobs = 1,
                               bool harmful_gate = true);

int repeat_count_for_length(int token_length);

struct AnnotationRecord {
  std::string pair_id;
  std::string candidate_id;
  std::string annotator;
  std::string annotated_at;
};

/// Persistent view of one run directory. Annotation writes go through
/// write-temp-then-rename and are serialized by an internal mutex.
class RunStore {
 public:
  explicit RunStore(RunLayout layout);

  const RunLayout& layout() const { return layout_; }

  void save_pairs(const std::vector<PairRecord>& pairs);
  /// Pairs with their annotation state merged in.
  std::vector<PairRecord> pairs() const;
  std::optional<PairRecord> pair(const std::string& pair_id) const;
  std::vector<AnnotationRecord> annotations() const;

  PairRecord ingest_annotation(const std::string& pair_id, const std::string& candidate_id,
                               const std::string& annotator, bool overwrite = false,
                               const BeforeRenameHook& before_rename = {});

  /// Re-reads both files from disk.
  void reload();

 private:
  PairRecord merged(const PairRecord& p) const;
  void load_locked();

  RunLayout layout_;
  mutable std::mutex mutex_;
  std::vector<PairRecord> pairs_;
  std::map<std::string, std::size_t> index_;
  std::vector<AnnotationRecord> annotations_;
};

struct ExportOptions {
  std::size_t target = 5500;
  std::optional<std::size_t> limit;
  /// Degrader id -> zoom ratio kept out of the training export.
  std::map<std::string, double> holdout_zoom;
};

struct ExportSummary {
  std::size_t exported = 0;
  std::size_t skipped_unannotated = 0;
  std::size_t skipped_holdout = 0;
  std::map<DegradationLevel, std::size_t> per_level;
  std::size_t target = 0;
  bool target_met = false;
};

/// Writes {"lq_ref", "cot"} lines for every annotated pair, where cot is
/// "<L, content>" for the chosen caption. With a limit, levels are sampled
/// round-robin so each bucket stays represented.
ExportSummary export_training_set(const std::vector<PairRecord>& records, const std::filesystem::path& out_path,
                                  const ExportOptions& options = {});

void to_json(Json& j, const ImageMeta& m);
void from_json(const Json& j, ImageMeta& m);
void to_json(Json& j, const Candidate& c);
void from_json(const Json& j, Candidate& c);
void to_json(Json& j, const PairRecord& p);
void from_json(const Json& j, PairRecord& p);
void to_json(Json& j, const AnnotationRecord& a);
void from_json(const Json& j, AnnotationRecord& a);
void to_json(Json& j, const ExportSummary& s);

}  // namespace rescap
