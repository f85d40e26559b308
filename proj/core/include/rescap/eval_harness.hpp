// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rescap/cot_captioner.hpp"
#include "rescap/data_pipeline.hpp"
#include "rescap/degradation_level.hpp"
#include "rescap/image.hpp"
#include "rescap/jsonl.hpp"
#include "rescap/restoration_client.hpp"

namespace rescap {

enum class Direction { higher_better, lower_better };
enum class MetricKind { no_reference, full_reference };

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view name);
std::string_view to_string(MetricKind k);

/// `reference` is null for no-reference metrics and non-null otherwise.
using Scorer = std::function<double(const Image& image, const Image* reference)>;

struct MetricSpec {
  std::string name;
  Direction direction = Direction::higher_better;
  MetricKind kind = MetricKind::no_reference;
  Scorer scorer;
};

class MetricRegistry {
 public:
  /// Throws DuplicateIdError on a repeated name.
  void register_metric(MetricSpec spec);
  const MetricSpec& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  /// Registration order.
  std::vector<std::string> names() const;
  std::vector<std::string> names(MetricKind kind) const;

  /// Throws InvalidInputError when a full-reference metric gets no reference
  /// (or a no-reference metric gets one) and ScorerFaultError on a
  /// non-finite score.
  double score(const std::string& name, const Image& image, const Image* reference = nullptr) const;

 private:
  std::vector<MetricSpec> specs_;
};

inline constexpr const char* kStubSharpness = "stub_sharpness";
inline constexpr const char* kStubFidelity = "stub_fidelity";

/// Stub scorers: Laplacian-variance sharpness (no reference) and
/// 1 - normalized MSE (full reference). Neither tracks human perception.
MetricRegistry default_metrics();

/// Signed so that a positive value is always an improvement.
double improvement_pct(double base, double ours, Direction direction);

/// Rounds half away from zero at `decimals` places, with a 1e-9 guard against
/// binary representation error (2.45 -> 2.5).
double round_half_up(double value, int decimals = 1);

// ---------------------------------------------------------------------------
// Reports

struct ResultRow {
  std::string method;
  std::string image_id;
  DegradationLevel bucket = DegradationLevel::light;
  std::string metric_name;
  double score = 0.0;
};

struct MetricColumn {
  std::string name;
  Direction direction = Direction::higher_better;
};

struct ReportCell {
  std::optional<double> mean;  // empty when no samples
  std::size_t count = 0;
};

using BucketCells = std::map<DegradationLevel, std::map<std::string, ReportCell>>;
using BucketImprovements = std::map<DegradationLevel, std::map<std::string, std::optional<double>>>;

struct MetricReport {
  std::string baseline;
  std::vector<std::string> methods;  // baseline first, then first-appearance order
  std::vector<MetricColumn> metrics;
  std::map<std::string, BucketCells> cells;
  /// Every non-baseline method; empty where either side has no samples.
  std::map<std::string, BucketImprovements> improvements;

  Json to_json() const;
  /// One row per method plus one improvement row per non-baseline method;
  /// columns are bucket x metric. Missing cells print as "n/a".
  std::string to_text() const;
};

/// Throws NotFoundError when the baseline has no rows.
MetricReport build_report(const std::vector<ResultRow>& rows, const std::string& baseline,
                          const std::vector<MetricColumn>& metrics);

/// A recorded comparison table: raw per-bucket scores plus the improvement
/// percentages printed alongside them.
struct PrintedImprovement {
  std::string baseline;
  std::string method;
  DegradationLevel bucket = DegradationLevel::light;
  std::string metric_name;
  double pct = 0.0;
};

struct TableFixture {
  std::vector<MetricColumn> metrics;
  std::vector<std::pair<std::string, std::string>> comparisons;  // (baseline, method)
  std::vector<ResultRow> rows;
  std::vector<PrintedImprovement> printed;
};

TableFixture load_table_fixture(const std::filesystem::path& path);
/// One report per comparison, restricted to that comparison's two methods.
std::vector<MetricReport> fixture_reports(const TableFixture& fixture);

// ---------------------------------------------------------------------------
// Scoring restored images

/// One row of an evaluation manifest: {method, image_id, path, zoom_ratio?,
/// bucket?, gt_path?, device?}. Bucket is classify_degradation(zoom_ratio)
/// when a zoom is given.
struct EvalEntry {
  std::string method;
  std::string image_id;
  std::filesystem::path path;
  DegradationLevel bucket = DegradationLevel::light;
  std::optional<double> zoom_ratio;
  std::optional<std::filesystem::path> gt_path;
  std::optional<std::string> device;
};

std::vector<EvalEntry> load_eval_manifest(const std::filesystem::path& jsonl);

/// Every registered metric that applies to each entry; full-reference
/// metrics only run when gt_path is set. Output order follows the entries.
std::vector<ResultRow> score_entries(const std::vector<EvalEntry>& entries, const MetricRegistry& registry,
                                     int jobs = 1);

// ---------------------------------------------------------------------------
// Ablations and sweeps

enum class AblationVariant { ours, min_len, max_len, low_rel, harmful_des };
inline constexpr AblationVariant kAllVariants[] = {AblationVariant::ours, AblationVariant::min_len,
                                                   AblationVariant::max_len, AblationVariant::low_rel,
                                                   AblationVariant::harmful_des};
std::string_view to_string(AblationVariant v);
AblationVariant parse_variant(std::string_view name);

struct AblationConfig {
  LengthSchedule schedule;
  double low_rel_ratio = 0.5;
  std::string backend = "stub";
  std::uint64_t seed = 0;
  int jobs = 1;
  HarmfulLexicon lexicon = default_harmful_lexicon();
};

struct AblationRow {
  AblationVariant variant = AblationVariant::ours;
  std::string pair_id;
  DegradationLevel bucket = DegradationLevel::light;
  int target_words = 0;
  int token_length = 0;
  int token_repeat_k = 0;
  bool harmful_gate = true;
  std::optional<RestorationResult> restoration;
  std::optional<std::string> error;
  std::map<std::string, double> scores;
};

/// Caption choice per variant:
///   ours        - length-first prediction L, then a caption of L - 2 words, filtered
///   min_len     - shortest schedule entry, filtered
///   max_len     - longest schedule entry, filtered
///   low_rel     - the ours caption with low_rel_ratio of its words swapped for fillers
///   harmful_des - the ours caption unfiltered, sent with the harmful gate off
/// Restoration uses k = repeat_count_for_length(token length of the caption).
std::vector<AblationRow> run_ablation(AblationVariant variant, const std::vector<PairRecord>& pairs,
                                      CaptionerClient& captioner, const RestorationClient& client,
                                      const MetricRegistry& registry, const AblationConfig& config);

std::vector<ResultRow> to_result_rows(const std::vector<AblationRow>& rows);

struct SweepPoint {
  int k = 0;
  int token_length = 0;
  std::map<std::string, double> scores;
  std::optional<std::string> error;
};

/// Restores one image at each k and scores it with every no-reference metric.
std::vector<SweepPoint> richness_sweep(const std::filesystem::path& lq_ref, const CaptionRecord& caption,
                                       const std::vector<int>& k_values, const RestorationClient& client,
                                       const std::string& backend, std::uint64_t seed,
                                       const MetricRegistry& registry);

/// Header "k,token_length,<metric>...,error" then one line per point.
std::string sweep_csv(const std::vector<SweepPoint>& points, const std::vector<std::string>& metrics);

void to_json(Json& j, const ResultRow& r);
void from_json(const Json& j, ResultRow& r);
void to_json(Json& j, const AblationRow& r);

}  // namespace rescap
