// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Every tolerance and time budget is a named constant below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rescap/cot_captioner.hpp"
#include "rescap/data_pipeline.hpp"
#include "rescap/degradation_adapter.hpp"
#include "rescap/degradation_level.hpp"
#include "rescap/errors.hpp"
#include "rescap/eval_harness.hpp"
#include "rescap/jsonl.hpp"
#include "rescap/text_conditioning.hpp"
#include "test_support.hpp"

namespace rescap::acceptance {
namespace {

namespace fs = std::filesystem;
using testing::Gen;

constexpr double kTableTolPct = 0.1;
constexpr double kForwardTol = 1e-10;
constexpr int kMinGradConfigs = 20;
constexpr int kAdapterMaxDim = 6;

constexpr double kBudgetOffset = 1.0;
constexpr double kBudgetTable = 1.0;
constexpr double kBudgetTokens = 5.0;
constexpr double kBudgetPerturb = 5.0;
constexpr double kBudgetAdapter = 30.0;
constexpr double kBudgetPipeline = 60.0;
constexpr double kNoBudget = 0.0;

struct Failure {
  std::string why;
};

void require(bool ok, const std::string& why) {
  if (!ok) throw Failure{why};
}

// ---------------------------------------------------------------------------

std::string offset_metric() {
  require(offset_level(140, 140) == 0.0, "offset_level(140,140) != 0");
  require(offset_level(140, 150) == 0.0, "offset_level(140,150) != 0");
  require(offset_level(200, 140) == 1.5, "offset_level(200,140) != 1.5");
  Gen gen(0xacc0001);
  for (int i = 0; i < 10000; ++i) {
    const int optimal = gen.integer(1, 1000);
    const int predicted = gen.integer(1, 1000);
    const int gap = std::abs(optimal - predicted);
    const double expected = gap <= 15 ? 0.0 : (gap - 15) / 30.0;
    const double got = offset_level(optimal, predicted);
    require(got == expected, "pair (" + std::to_string(optimal) + ", " + std::to_string(predicted) + ") gave " +
                                 std::to_string(got));
    require(got >= 0.0, "negative offset");
  }
  return "10000 random pairs";
}

std::string table_reproduction() {
  const auto fixture = load_table_fixture(fs::path(RESCAP_FIXTURE_DIR) / "improvement_table.json");
  const auto reports = fixture_reports(fixture);
  require(fixture.printed.size() == 24, "fixture holds " + std::to_string(fixture.printed.size()) + " printed cells");
  double worst = 0.0;
  for (const auto& p : fixture.printed) {
    const auto it = std::find_if(reports.begin(), reports.end(),
                                 [&](const MetricReport& r) { return r.baseline == p.baseline; });
    require(it != reports.end(), "no report for baseline " + p.baseline);
    const auto& v = it->improvements.at(p.method).at(p.bucket).at(p.metric_name);
    require(v.has_value(), "empty cell " + p.method + "/" + p.metric_name);
    const double err = std::abs(*v - p.pct);
    worst = std::max(worst, err);
    require(err <= kTableTolPct + 1e-9, p.method + " " + std::string(to_string(p.bucket)) + " " + p.metric_name +
                                           ": computed " + std::to_string(*v) + " printed " + std::to_string(p.pct));
  }
  std::ostringstream d;
  d << "24 cells, worst deviation " << worst << "pp (tol " << kTableTolPct << "pp)";
  return d.str();
}

std::string token_extension() {
  Gen gen(0xacc0003);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::string text = gen.sentence(kRichnessBlock, 74);
    const auto seq = encode_stub(text, gen.integer(1, 16));
    for (int k = 0; k <= 10; ++k) {
      const auto ext = extend_richness(seq, k);
      require(ext.length() == kBaseWindow + kRichnessBlock * k, "length law broken at k=" + std::to_string(k));
      require(ext.eos_index == seq.eos_index + kRichnessBlock * k, "eos law broken at k=" + std::to_string(k));
      for (int r = 0; r < seq.eos_index; ++r)
        for (int c = 0; c < seq.dim(); ++c)
          require(ext.embeddings(r, c) == seq.embeddings(r, c), "prefix differs at k=" + std::to_string(k));
      const auto rows = oracle::tiled_rows(seq, k);
      require(static_cast<int>(rows.size()) == ext.length(), "oracle length differs");
      for (int r = 0; r < ext.length(); ++r)
        for (int c = 0; c < ext.dim(); ++c)
          require(ext.embeddings(r, c) == rows[r][c], "tiling differs from oracle at k=" + std::to_string(k));
      ++checked;
    }
  }
  return std::to_string(checked) + " (sequence, k) cases";
}

std::string relevance_perturbation() {
  Gen gen(0xacc0004);
  const std::vector<std::string> fillers{"the", "for"};
  auto is_filler = [&](std::string_view w) { return std::find(fillers.begin(), fillers.end(), w) != fillers.end(); };
  for (int trial = 0; trial < 1000; ++trial) {
    const auto caption = make_caption(gen.sentence(1, 80));
    const int n = caption.word_count;
    const int pick = trial % 4;
    const double r = pick == 0 ? 0.0 : pick == 1 ? 1.0 : gen.real(0.0, 1.0);
    const auto out = perturb_relevance(caption, r, gen.raw(), fillers);
    require(out.word_count == n && count_words(out.text) == n, "word count changed");
    const int expected = static_cast<int>(std::floor(r * n + 1e-9));
    require(replaced_word_count(r, n) == expected, "replaced count != floor(r*n)");
    const auto before = split_words(caption.text);
    const auto after = split_words(out.text);
    int changed = 0;
    for (int i = 0; i < n; ++i) {
      if (before[i] == after[i]) continue;
      ++changed;
      std::string_view w = after[i];
      while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) w.remove_suffix(1);
      require(is_filler(w), "replacement is not a filler word");
    }
    require(changed <= expected, "more words changed than floor(r*n)");
    if (r == 0.0) require(out == caption, "r=0 is not the identity");
    if (r == 1.0)
      for (auto w : after) {
        while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) w.remove_suffix(1);
        require(is_filler(w), "r=1 left a non-filler word");
      }
  }
  return "1000 seeded cases";
}

std::string harmful_filter() {
  const std::vector<std::string> named{"shallow depth of field", "bokeh effect", "the background is blurred"};
  const auto lexicon = default_harmful_lexicon();
  Gen gen(0xacc0005);
  auto lower = [](std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
  };
  int detected = 0;
  int total = 0;
  for (int i = 0; i < 200; ++i) {
    for (const auto& phrase : named) {
      std::vector<std::string> sentences;
      const int count = gen.integer(1, 4);
      for (int s = 0; s < count; ++s) sentences.push_back(gen.sentence());
      auto& host = sentences[static_cast<std::size_t>(gen.integer(0, count - 1))];
      const auto words = split_words(host);
      const int at = gen.integer(0, static_cast<int>(words.size()) - 1);
      std::string spliced;
      for (int w = 0; w < static_cast<int>(words.size()); ++w) {
        if (w == at) spliced += (spliced.empty() ? "" : " ") + (gen.coin() ? phrase : "with " + phrase);
        spliced += (spliced.empty() ? "" : " ") + std::string(words[w]);
      }
      host = spliced;
      std::string text;
      for (const auto& s : sentences) text += (text.empty() ? "" : " ") + s;

      const auto out = filter_harmful(make_caption(text), lexicon);
      ++total;
      const bool removed = lower(out.content_part).find(phrase) == std::string::npos;
      bool reported = false;
      for (const auto& span : out.degradation_part) reported |= lower(span).find(phrase) != std::string::npos;
      if (removed && reported) ++detected;

      const auto again = filter_harmful(make_caption(out.content_part), lexicon);
      require(again.content_part == out.content_part && again.degradation_part.empty(),
              "not idempotent on: " + text);
    }
  }
  require(detected == total, std::to_string(detected) + "/" + std::to_string(total) + " detected: ");
  return std::to_string(total) + " spliced captions, 100% detected";
}

std::string adapter_numerics() {
  std::mt19937_64 rng(0xacc0006);
  double worst_forward = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const Activation a = static_cast<Activation>(trial % 3);
    const auto rc = oracle::random_case(rng, kAdapterMaxDim, a);
    const auto out = adapter_forward(rc.state, rc.features);
    const auto ref = oracle::scalar_forward(rc.state, rc.features);
    for (int t = 0; t < rc.state.config.output_tokens; ++t)
      for (int j = 0; j < rc.state.config.feature_dim; ++j)
        worst_forward = std::max(worst_forward, std::abs(out(t, j) - ref[t][j]));

    std::vector<int> perm(rc.state.config.input_tokens);
    for (int i = 0; i < static_cast<int>(perm.size()); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd shuffled(rc.features.rows(), rc.features.cols());
    for (int i = 0; i < static_cast<int>(perm.size()); ++i) shuffled.row(i) = rc.features.row(perm[i]);
    require(adapter_forward(rc.state, shuffled) == out, "forward not permutation invariant");
  }
  require(worst_forward <= kForwardTol, "forward deviates from scalar oracle by " + std::to_string(worst_forward));

  int configs = 0;
  double worst_grad = 0.0;
  int entries = 0;
  for (int attempt = 0; configs < 2 * kMinGradConfigs && attempt < 1000; ++attempt) {
    const Activation a = configs % 2 == 0 ? Activation::relu : Activation::tanh;
    const auto rc = oracle::random_case(rng, kAdapterMaxDim, a);
    if (oracle::near_kink(rc)) continue;
    const auto grads = adapter_backward(rc.state, rc.features, rc.upstream);
    const auto check = oracle::check_gradients(rc, grads);
    worst_grad = std::max(worst_grad, check.worst);
    entries += check.checked;
    ++configs;
  }
  require(configs >= kMinGradConfigs, "only " + std::to_string(configs) + " gradient configs");
  require(worst_grad <= oracle::kGradRelTol, "gradient relative error " + std::to_string(worst_grad));
  std::ostringstream d;
  d << "forward max |err| " << worst_forward << " (tol " << kForwardTol << "), " << configs
    << " FD configs / " << entries << " entries, worst rel " << worst_grad << " (tol " << oracle::kGradRelTol << ")";
  return d.str();
}

std::string cot_round_trip() {
  Gen gen(0xacc0007);
  int with_bracket = 0;
  for (int i = 0; i < 1000; ++i) {
    CoTCaption c{gen.integer(1, 2000), gen.text()};
    if (i % 4 == 0) c.description += " > " + gen.text(20);
    with_bracket += c.description.find('>') != std::string::npos;
    require(parse_cot(emit_cot(c)) == c, "round trip failed on " + emit_cot(c));
  }
  require(with_bracket >= 250, "too few cases with '>'");
  return "1000 captions, " + std::to_string(with_bracket) + " containing '>'";
}

/// Zeroes wall-clock fields so two runs can be compared.
void strip_clock_fields(Json& j) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "annotated_at" || it.key() == "latency_ms") {
        it.value() = nullptr;
      } else {
        strip_clock_fields(it.value());
      }
    }
  } else if (j.is_array()) {
    for (auto& v : j) strip_clock_fields(v);
  }
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::string body = read_text_file(e.path());
    if (e.path().extension() == ".jsonl") {
      std::istringstream in(body);
      std::string normalized;
      for (auto row : read_jsonl(in)) {
        strip_clock_fields(row);
        normalized += row.dump() + "\n";
      }
      body = normalized;
    }
    files[fs::relative(e.path(), root).string()] = body;
  }
  return files;
}

struct PipelineResult {
  std::vector<PairRecord> pairs;
  ExportSummary summary;
};

PipelineResult run_pipeline(const fs::path& hq, const fs::path& run, std::uint64_t seed) {
  PipelineResult r;
  r.pairs = testing::build_stub_run(hq, run, {4, 9, 16}, seed);
  RunStore store(RunLayout{run});
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const auto& p = r.pairs[i];
    store.ingest_annotation(p.pair_id, p.candidates[i % p.candidates.size()].restoration->candidate_id,
                            "acceptance", true);
  }
  ExportOptions eo;
  eo.target = r.pairs.size();
  r.summary = export_training_set(store.pairs(), RunLayout{run}.export_file(), eo);
  return r;
}

std::string pipeline_end_to_end() {
  testing::TempDir tmp("acceptance");
  const auto run = tmp / "run";
  const auto first = run_pipeline(tmp / "hq", run, 42);
  require(first.pairs.size() == 6, std::to_string(first.pairs.size()) + " pairs");
  for (const auto& p : first.pairs) {
    require(p.candidates.size() == 7, "pair with " + std::to_string(p.candidates.size()) + " candidates");
    for (const auto& c : p.candidates) {
      require(c.restoration.has_value(), "candidate without restoration");
      require(fs::exists(c.restoration->restored_image_ref), "restored image missing");
    }
  }
  require(first.summary.exported == 6, std::to_string(first.summary.exported) + " exported rows");
  const auto rows = read_jsonl(RunLayout{run}.export_file());
  require(rows.size() == 6, "export file holds " + std::to_string(rows.size()) + " lines");
  for (const auto& row : rows) {
    const auto cot = parse_cot(row.at("cot").get<std::string>());
    require(cot.predicted_length > 0 && !cot.description.empty(), "degenerate export row");
  }

  const auto before = snapshot(run);
  run_pipeline(tmp / "hq", run, 42);
  const auto after = snapshot(run);
  require(before.size() == after.size(), "rerun changed the file set");
  for (const auto& [name, body] : before) {
    const auto it = after.find(name);
    require(it != after.end(), "rerun dropped " + name);
    require(it->second == body, "rerun changed " + name);
  }
  return "6 pairs x 7 candidates x 7 restorations, 6 export lines, rerun identical over " +
         std::to_string(before.size()) + " files";
}

std::string degradation_bucketing() {
  const std::vector<std::pair<double, DegradationLevel>> inside{
      {3, DegradationLevel::light},     {5, DegradationLevel::light},     {7, DegradationLevel::light},
      {8, DegradationLevel::moderate},  {9, DegradationLevel::moderate},  {10, DegradationLevel::moderate},
      {15, DegradationLevel::heavy},    {20, DegradationLevel::heavy}};
  for (const auto& [zoom, level] : inside) {
    const auto c = classify_degradation(zoom);
    require(c.level == level && !c.out_of_range, "zoom " + std::to_string(zoom) + " misclassified");
  }
  for (const double gap : {1.0, 2.9, 7.5, 12.0, 14.9, 21.0, 30.0}) {
    require(classify_degradation(gap).out_of_range, "gap zoom " + std::to_string(gap) + " not flagged");
  }
  return "8 in-bucket zooms, 7 gap zooms flagged";
}

struct Criterion {
  std::string name;
  double budget_s;
  std::function<std::string()> check;
};

}  // namespace
}  // namespace rescap::acceptance

int main() {
  using namespace rescap::acceptance;
  const std::vector<Criterion> criteria{
      {"offset-metric", kBudgetOffset, offset_metric},
      {"table-improvement-reproduction", kBudgetTable, table_reproduction},
      {"token-extension", kBudgetTokens, token_extension},
      {"relevance-perturbation", kBudgetPerturb, relevance_perturbation},
      {"harmful-filter", kNoBudget, harmful_filter},
      {"adapter-numerics", kBudgetAdapter, adapter_numerics},
      {"cot-round-trip", kNoBudget, cot_round_trip},
      {"pipeline-end-to-end", kBudgetPipeline, pipeline_end_to_end},
      {"degradation-bucketing", kNoBudget, degradation_bucketing},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.check();
    } catch (const Failure& f) {
      ok = false;
      detail = f.why;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && c.budget_s > 0.0 && secs > c.budget_s) {
      ok = false;
      detail += "; over time budget";
    }
    char timing[96];
    if (c.budget_s > 0.0) {
      std::snprintf(timing, sizeof timing, "%.3fs / %.0fs", secs, c.budget_s);
    } else {
      std::snprintf(timing, sizeof timing, "%.3fs", secs);
    }
    std::cout << (ok ? "PASS " : "FAIL ") << c.name << " [" << timing << "] " << detail << std::endl;
    failed += ok ? 0 : 1;
  }
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
  return failed == 0 ? 0 : 1;
}
