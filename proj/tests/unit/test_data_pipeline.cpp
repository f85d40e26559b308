// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "rescap/errors.hpp"
#include "rescap/data_pipeline.hpp"
#include "rescap/text_conditioning.hpp"
#include "test_support.hpp"

namespace rescap {
namespace {

using testing::TempDir;

/// Fails every request whose repeat count equals `bad_k`.
class FailingBackend final : public RestorationBackend {
 public:
  explicit FailingBackend(int bad_k) : bad_k_(bad_k) {}
  Image restore(const BackendCall& call) override {
    if (call.token_repeat_k == bad_k_) throw TransportError("backend down", 3, 503);
    return StubBackend().restore(call);
  }

 private:
  int bad_k_;
};

/// Fails for one word target and returns the stub caption otherwise.
class FlakyCaptioner final : public CaptionerClient {
 public:
  FlakyCaptioner(std::map<std::string, DegradationLevel> levels, std::string bad_words)
      : inner_(std::move(levels)), bad_(std::move(bad_words)) {}
  CoTCaption caption(const ImageRef& image, const std::string& prompt) override {
    if (prompt.find("about " + bad_ + " words") != std::string::npos) throw TransportError("timeout", 3);
    return inner_.caption(image, prompt);
  }

 private:
  StubCaptioner inner_;
  std::string bad_;
};

TEST(LengthSchedule, DefaultAndValidation) {
  const LengthSchedule s;
  EXPECT_EQ(s.word_targets, (std::vector<int>{80, 110, 140, 200, 260, 350, 440}));
  EXPECT_NO_THROW(s.validate());
  EXPECT_THROW((LengthSchedule{{80, 80}}).validate(), InvalidInputError);
  EXPECT_THROW((LengthSchedule{{80, 120, 130}}).validate(), InvalidInputError);
  EXPECT_THROW((LengthSchedule{{}}).validate(), InvalidInputError);
  EXPECT_EQ(parse_schedule("10, 20,30").word_targets, (std::vector<int>{10, 20, 30}));
  EXPECT_THROW(parse_schedule("10,x"), InvalidInputError);
}

TEST(Degrader, ResolutionAndDeterminism) {
  const auto hq = synthetic_image(97, 64, 3);
  const ClassicalDegrader d;
  const auto lq = d.degrade(hq, 4.0, 11);
  EXPECT_EQ(lq.width, 24);
  EXPECT_EQ(lq.height, 16);
  EXPECT_EQ(lq, d.degrade(hq, 4.0, 11));
  EXPECT_NE(lq, d.degrade(hq, 4.0, 12));
  const auto tiny = d.degrade(hq, 200.0, 1);
  EXPECT_EQ(tiny.width, 1);
  EXPECT_EQ(tiny.height, 1);
  EXPECT_THROW(d.degrade(hq, 0.0, 1), InvalidInputError);
  const auto registry = default_degraders();
  EXPECT_TRUE(registry.contains("stub"));
  EXPECT_TRUE(registry.contains("realesrgan"));
}

TEST(GeneratePairs, CartesianCountLevelsAndFiles) {
  TempDir dir("pairs");
  const auto hq = testing::write_hq_images(dir / "hq", 2);
  const RunLayout layout{dir / "run"};
  const auto pairs = generate_pairs(hq, default_degraders(), {"stub"}, {4, 9, 16}, layout, {.seed = 3});
  ASSERT_EQ(pairs.size(), 6u);
  std::set<std::string> ids;
  for (const auto& p : pairs) {
    ids.insert(p.pair_id);
    EXPECT_EQ(p.meta.image_id, p.pair_id);
    EXPECT_TRUE(std::filesystem::exists(p.lq_ref));
    EXPECT_EQ(p.meta.degradation_level, classify_degradation(p.meta.zoom_ratio).level);
    if (p.meta.zoom_ratio == 16.0) EXPECT_EQ(p.meta.degradation_level, DegradationLevel::heavy);
    if (p.meta.zoom_ratio == 9.0) EXPECT_EQ(p.meta.degradation_level, DegradationLevel::moderate);
    if (p.meta.zoom_ratio == 4.0) EXPECT_EQ(p.meta.degradation_level, DegradationLevel::light);
    EXPECT_TRUE(p.candidates.empty());
  }
  EXPECT_EQ(ids.size(), 6u);
  EXPECT_EQ(pairs[0].hq_id, pairs[2].hq_id);
  EXPECT_EQ(pairs[0].meta.zoom_ratio, 4.0);
  EXPECT_EQ(pairs[2].meta.zoom_ratio, 16.0);
}

TEST(GeneratePairs, RerunIsIdentical) {
  TempDir dir("pairs-rerun");
  const auto hq = testing::write_hq_images(dir / "hq", 2);
  const auto a = generate_pairs(hq, default_degraders(), {"stub"}, {4, 9}, {dir / "a"}, {.seed = 5, .jobs = 2});
  const auto b = generate_pairs(hq, default_degraders(), {"stub"}, {4, 9}, {dir / "b"}, {.seed = 5});
  const auto c = generate_pairs(hq, default_degraders(), {"stub"}, {4, 9}, {dir / "c"}, {.seed = 6});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].pair_id, b[i].pair_id);
    EXPECT_EQ(read_file_bytes(a[i].lq_ref), read_file_bytes(b[i].lq_ref));
    EXPECT_NE(a[i].pair_id, c[i].pair_id);
  }
}

TEST(GeneratePairs, Errors) {
  TempDir dir("pairs-err");
  const auto hq = testing::write_hq_images(dir / "hq", 1);
  const RunLayout layout{dir / "run"};
  EXPECT_THROW(generate_pairs({}, default_degraders(), {"stub"}, {4}, layout, {}), InvalidInputError);
  EXPECT_THROW(generate_pairs(hq, default_degraders(), {"ldm"}, {4}, layout, {}), UnregisteredBackendError);
  EXPECT_THROW(generate_pairs(hq, default_degraders(), {"stub"}, {-1}, layout, {}), InvalidInputError);
  auto missing = hq;
  missing[0].path = dir / "hq" / "gone.png";
  EXPECT_THROW(generate_pairs(missing, default_degraders(), {"stub"}, {4}, layout, {}), Error);
}

TEST(GeneratePairs, RealEsrganFractionSelectsSubset) {
  TempDir dir("pairs-mix");
  const auto hq = testing::write_hq_images(dir / "hq", 40, 24, 24);
  const auto pairs =
      generate_pairs(hq, default_degraders(), {"stub", "realesrgan"}, {4}, {dir / "run"}, {.seed = 1});
  std::size_t mixed = 0;
  for (const auto& p : pairs) mixed += p.meta.degrader_id == "realesrgan";
  EXPECT_EQ(pairs.size() - mixed, 40u);
  EXPECT_GT(mixed, 0u);
  EXPECT_LT(mixed, 20u);
}

TEST(HqManifest, LoadsRelativePathsAndSources) {
  TempDir dir("manifest");
  testing::write_hq_images(dir / "hq", 1);
  {
    std::ofstream m(dir / "hq.jsonl");
    m << R"({"path":"hq/hq_0.png","source":"unsplash","device":"canon"})" << "\n";
  }
  const auto entries = load_hq_manifest(dir / "hq.jsonl");
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].path, dir / "hq" / "hq_0.png");
  EXPECT_EQ(entries[0].source, ImageSource::unsplash);
  EXPECT_EQ(entries[0].device, "canon");
  EXPECT_THROW(scan_hq_directory(dir / "nope"), NotFoundError);
  EXPECT_THROW(parse_source("flickr"), InvalidInputError);
}

struct PipelineFixture {
  TempDir dir{"pipeline"};
  RunLayout layout{dir / "run"};
  std::vector<PairRecord> pairs;
  PipelineFixture() {
    pairs = generate_pairs(testing::write_hq_images(dir / "hq", 2), default_degraders(), {"stub"}, {4, 9, 16},
                           layout, {.seed = 7});
  }
};

TEST(CaptionCandidates, SevenFilteredCandidatesInScheduleOrder) {
  PipelineFixture f;
  StubCaptioner cap(testing::levels_of(f.pairs));
  const auto p = generate_caption_candidates(f.pairs[0], cap, {});
  ASSERT_EQ(p.candidates.size(), 7u);
  EXPECT_TRUE(p.warnings.empty());
  const LengthSchedule schedule;
  int previous = 0;
  for (std::size_t i = 0; i < 7; ++i) {
    const auto& c = p.candidates[i];
    EXPECT_EQ(c.target_words, schedule.word_targets[i]);
    EXPECT_TRUE(c.caption.degradation_part.empty());
    EXPECT_EQ(filter_harmful(c.caption, default_harmful_lexicon()).degradation_part.size(), 0u);
    EXPECT_FALSE(c.removed_spans.empty());
    EXPECT_GE(c.token_length(), previous);
    previous = c.token_length();
  }
  EXPECT_EQ(generate_caption_candidates(f.pairs[0], cap, {}).candidates[3].caption, p.candidates[3].caption);
  EXPECT_THROW(generate_caption_candidates(p, cap, {}), InvalidInputError);
}

TEST(CaptionCandidates, CaptionerFailureKeepsPartialPair) {
  PipelineFixture f;
  FlakyCaptioner cap(testing::levels_of(f.pairs), "200");
  const auto p = generate_caption_candidates(f.pairs[0], cap, {});
  EXPECT_EQ(p.candidates.size(), 6u);
  ASSERT_EQ(p.warnings.size(), 1u);
  EXPECT_NE(p.warnings[0].find("transport"), std::string::npos);
}

TEST(Fanout, SevenRestorationsWithMonotoneK) {
  PipelineFixture f;
  StubCaptioner cap(testing::levels_of(f.pairs));
  RestorationClient client(f.layout.images());
  client.register_backend("stub", "stub");
  const auto p = fanout_restorations(generate_caption_candidates(f.pairs[2], cap, {}), client, "stub", 7, 3);
  int previous_k = -1;
  for (const auto& c : p.candidates) {
    ASSERT_TRUE(c.restoration.has_value());
    const int k = (c.restoration->effective_token_length - 77) / 20;
    EXPECT_EQ(k, repeat_count_for_length(c.token_length()));
    EXPECT_GE(k, previous_k);
    previous_k = k;
    EXPECT_TRUE(std::filesystem::exists(c.restoration->restored_image_ref));
  }
  EXPECT_EQ(p.candidates.front().restoration->effective_token_length, 77);
}

TEST(Fanout, OneFailureLeavesOthersIntact) {
  PipelineFixture f;
  StubCaptioner cap(testing::levels_of(f.pairs));
  const auto captioned = generate_caption_candidates(f.pairs[0], cap, {});
  const int bad_k = repeat_count_for_length(captioned.candidates[3].token_length());
  RestorationClient client(f.layout.images());
  client.register_backend("flaky", std::make_shared<FailingBackend>(bad_k));
  const auto p = fanout_restorations(captioned, client, "flaky", 7);
  int ok = 0;
  for (const auto& c : p.candidates) ok += c.restoration.has_value();
  EXPECT_EQ(ok, 6);
  EXPECT_FALSE(p.candidates[3].restoration.has_value());
  ASSERT_TRUE(p.candidates[3].error.has_value());
  EXPECT_EQ(p.candidates[3].error->rfind("transport", 0), 0u);
  EXPECT_EQ(p.warnings.size(), 1u);
}

TEST(RepeatCount, ClampsShortLengths) {
  EXPECT_EQ(repeat_count_for_length(10), 0);
  EXPECT_EQ(repeat_count_for_length(82), 0);
  EXPECT_EQ(repeat_count_for_length(137), 3);
}

struct StoreFixture {
  TempDir dir{"store"};
  RunLayout layout{dir / "run"};
  std::vector<PairRecord> pairs;
  StoreFixture() { pairs = testing::build_stub_run(dir / "hq", layout.root, {4, 9, 16}, 7); }
  std::string candidate(std::size_t pair, std::size_t idx = 0) const {
    return pairs[pair].candidates[idx].restoration->candidate_id;
  }
};

TEST(RunStore, MissingDirectoryIsNotFound) {
  TempDir dir("store-missing");
  EXPECT_THROW(RunStore({dir / "nope"}), NotFoundError);
}

TEST(RunStore, PairsRoundTripThroughJsonl) {
  StoreFixture f;
  RunStore store(f.layout);
  const auto loaded = store.pairs();
  ASSERT_EQ(loaded.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(Json(loaded[i]), Json(f.pairs[i]));
    EXPECT_EQ(loaded[i].candidates.size(), 7u);
  }
}

TEST(RunStore, IngestAnnotationContract) {
  StoreFixture f;
  RunStore store(f.layout);
  const auto& pid = f.pairs[0].pair_id;
  const auto rec = store.ingest_annotation(pid, f.candidate(0, 2), "ann");
  EXPECT_EQ(rec.chosen_candidate_id, f.candidate(0, 2));
  EXPECT_EQ(rec.annotator, "ann");
  EXPECT_TRUE(rec.annotated_at.has_value());
  EXPECT_THROW(store.ingest_annotation(pid, f.candidate(0, 3), "ann"), ConflictError);
  EXPECT_THROW(store.ingest_annotation(pid, "no-such", "ann"), NotFoundError);
  EXPECT_THROW(store.ingest_annotation("no-such", f.candidate(0), "ann"), NotFoundError);
  EXPECT_THROW(store.ingest_annotation(f.pairs[1].pair_id, f.candidate(0), "ann"), NotFoundError);
  EXPECT_EQ(store.ingest_annotation(pid, f.candidate(0, 3), "ann2", true).chosen_candidate_id, f.candidate(0, 3));
  RunStore fresh(f.layout);
  ASSERT_EQ(fresh.annotations().size(), 1u);
  EXPECT_EQ(fresh.pair(pid)->chosen_candidate_id, f.candidate(0, 3));
  EXPECT_EQ(fresh.pair(pid)->annotator, "ann2");
}

TEST(RunStore, CrashBeforeRenameKeepsPreviousRecord) {
  StoreFixture f;
  RunStore store(f.layout);
  store.ingest_annotation(f.pairs[0].pair_id, f.candidate(0, 1), "ann");
  const auto before = read_text_file(f.layout.annotations());
  EXPECT_THROW(store.ingest_annotation(f.pairs[1].pair_id, f.candidate(1, 4), "ann", false,
                                       [](const std::filesystem::path&) { throw IoError("injected crash"); }),
               IoError);
  EXPECT_EQ(read_text_file(f.layout.annotations()), before);
  EXPECT_FALSE(store.pair(f.pairs[1].pair_id)->chosen_candidate_id.has_value());
  RunStore fresh(f.layout);
  EXPECT_EQ(fresh.annotations().size(), 1u);
  EXPECT_NO_THROW(store.ingest_annotation(f.pairs[1].pair_id, f.candidate(1, 4), "ann"));
}

TEST(RunStore, DuplicatePairIdsRejected) {
  StoreFixture f;
  RunStore store(f.layout);
  auto twice = f.pairs;
  twice.push_back(f.pairs[0]);
  EXPECT_THROW(store.save_pairs(twice), DuplicateIdError);
}

TEST(RunStore, MismatchedLevelIsRejectedOnLoad) {
  StoreFixture f;
  auto j = Json(f.pairs[0]);
  j["meta"]["degradation_level"] = "light";
  j["meta"]["zoom_ratio"] = 16.0;
  EXPECT_THROW(j.get<PairRecord>(), MismatchError);
}

std::vector<PairRecord> annotate(const StoreFixture& f, RunStore& store, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) store.ingest_annotation(f.pairs[i].pair_id, f.candidate(i, i % 7), "ann");
  return store.pairs();
}

TEST(Export, SkipsUnannotatedAndReportsTarget) {
  StoreFixture f;
  RunStore store(f.layout);
  auto records = annotate(f, store, 3);
  records.resize(4);
  const auto out = f.dir / "export.jsonl";
  const auto s = export_training_set(records, out);
  EXPECT_EQ(s.exported, 3u);
  EXPECT_EQ(s.skipped_unannotated, 1u);
  EXPECT_EQ(s.target, 5500u);
  EXPECT_FALSE(s.target_met);
  const auto rows = read_jsonl(out);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto cot = parse_cot(rows[i].at("cot").get<std::string>());
    const auto& chosen = f.pairs[i].candidates[i % 7];
    EXPECT_EQ(cot.description, chosen.caption.content_part);
    EXPECT_EQ(cot.predicted_length, stub_token_count(chosen.caption.content_part));
    EXPECT_EQ(filter_harmful(make_caption(cot.description), default_harmful_lexicon()).content_part,
              cot.description);
    EXPECT_EQ(rows[i].at("lq_ref"), f.pairs[i].lq_ref.string());
  }
  EXPECT_TRUE(export_training_set(records, f.dir / "small.jsonl", {.target = 3}).target_met);
}

TEST(Export, HoldoutZoomAndStratifiedLimit) {
  StoreFixture f;
  RunStore store(f.layout);
  const auto records = annotate(f, store, 6);
  const auto held = export_training_set(records, f.dir / "held.jsonl", {.holdout_zoom = {{"stub", 9.0}}});
  EXPECT_EQ(held.exported, 4u);
  EXPECT_EQ(held.skipped_holdout, 2u);
  EXPECT_EQ(held.per_level.at(DegradationLevel::moderate), 0u);

  const auto limited = export_training_set(records, f.dir / "limit.jsonl", {.limit = 3});
  EXPECT_EQ(limited.exported, 3u);
  for (const auto level : kAllLevels) EXPECT_EQ(limited.per_level.at(level), 1u);
  EXPECT_EQ(export_training_set(records, f.dir / "big.jsonl", {.limit = 100}).exported, 6u);
}

TEST(Export, UnwritablePathFails) {
  StoreFixture f;
  RunStore store(f.layout);
  const auto records = annotate(f, store, 1);
  std::ofstream(f.dir / "file") << "x";
  EXPECT_THROW(export_training_set(records, f.dir / "file" / "out.jsonl"), Error);
}

}  // namespace
}  // namespace rescap
