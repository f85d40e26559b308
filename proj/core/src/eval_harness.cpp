// SPDX-License-Identifier: Apache-2.0
#include "rescap/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rescap/errors.hpp"
#include "rescap/ids.hpp"
#include "rescap/parallel.hpp"

namespace rescap {

namespace fs = std::filesystem;

std::string_view to_string(Direction d) {
  return d == Direction::higher_better ? "higher_better" : "lower_better";
}

Direction parse_direction(std::string_view name) {
  if (name == "higher_better") return Direction::higher_better;
  if (name == "lower_better") return Direction::lower_better;
  throw InvalidInputError("unknown metric direction '" + std::string(name) + "'");
}

std::string_view to_string(MetricKind k) {
  return k == MetricKind::no_reference ? "no_reference" : "full_reference";
}

void MetricRegistry::register_metric(MetricSpec spec) {
  if (spec.name.empty()) throw InvalidInputError("metric name is empty");
  if (!spec.scorer) throw InvalidInputError("metric '" + spec.name + "' has no scorer");
  if (contains(spec.name)) throw DuplicateIdError("metric '" + spec.name + "' is already registered");
  specs_.push_back(std::move(spec));
}

bool MetricRegistry::contains(const std::string& name) const {
  return std::any_of(specs_.begin(), specs_.end(), [&](const MetricSpec& s) { return s.name == name; });
}

const MetricSpec& MetricRegistry::get(const std::string& name) const {
  for (const auto& s : specs_)
    if (s.name == name) return s;
  throw NotFoundError("metric '" + name + "' is not registered");
}

std::vector<std::string> MetricRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& s : specs_) out.push_back(s.name);
  return out;
}

std::vector<std::string> MetricRegistry::names(MetricKind kind) const {
  std::vector<std::string> out;
  for (const auto& s : specs_)
    if (s.kind == kind) out.push_back(s.name);
  return out;
}

double MetricRegistry::score(const std::string& name, const Image& image, const Image* reference) const {
  const auto& spec = get(name);
  if (spec.kind == MetricKind::full_reference && reference == nullptr)
    throw InvalidInputError("metric '" + name + "' needs a reference image");
  if (spec.kind == MetricKind::no_reference && reference != nullptr)
    throw InvalidInputError("metric '" + name + "' takes no reference image");
  const double v = spec.scorer(image, reference);
  if (!std::isfinite(v)) throw ScorerFaultError("metric '" + name + "' returned a non-finite score");
  return v;
}

MetricRegistry default_metrics() {
  MetricRegistry r;
  r.register_metric({kStubSharpness, Direction::higher_better, MetricKind::no_reference,
                     [](const Image& img, const Image*) { return laplacian_variance(img); }});
  r.register_metric({kStubFidelity, Direction::higher_better, MetricKind::full_reference,
                     [](const Image& img, const Image* ref) { return 1.0 - normalized_mse(img, *ref); }});
  return r;
}

double improvement_pct(double base, double ours, Direction direction) {
  if (base == 0.0) throw UndefinedImprovementError("improvement over a zero baseline is undefined");
  if (!std::isfinite(base) || !std::isfinite(ours)) throw InvalidInputError("improvement of non-finite scores");
  const double delta = direction == Direction::lower_better ? base - ours : ours - base;
  return delta / base * 100.0;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double mag = std::floor(std::abs(value) * scale + 0.5 + 1e-9) / scale;
  return value < 0 ? -mag : mag;
}

// ---------------------------------------------------------------------------

namespace {

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s == "-0.0" || s == "-0.00" || s == "-0.0000") s.erase(0, 1);
  return s;
}

}  // namespace

MetricReport build_report(const std::vector<ResultRow>& rows, const std::string& baseline,
                          const std::vector<MetricColumn>& metrics) {
  if (metrics.empty()) throw InvalidInputError("report needs at least one metric");
  MetricReport report;
  report.baseline = baseline;
  report.metrics = metrics;

  struct Acc {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::map<std::string, std::map<DegradationLevel, std::map<std::string, Acc>>> acc;
  std::vector<std::string> order;
  auto wanted = [&](const std::string& m) {
    return std::any_of(metrics.begin(), metrics.end(), [&](const MetricColumn& c) { return c.name == m; });
  };
  for (const auto& r : rows) {
    if (!wanted(r.metric_name)) continue;
    if (!acc.contains(r.method)) order.push_back(r.method);
    auto& a = acc[r.method][r.bucket][r.metric_name];
    a.sum += r.score;
    ++a.count;
  }
  if (!acc.contains(baseline)) throw NotFoundError("baseline '" + baseline + "' has no rows");

  report.methods.push_back(baseline);
  for (const auto& m : order)
    if (m != baseline) report.methods.push_back(m);

  for (const auto& method : report.methods) {
    auto& cells = report.cells[method];
    for (const auto level : kAllLevels)
      for (const auto& col : metrics) {
        ReportCell cell;
        const auto& by_bucket = acc[method];
        if (const auto b = by_bucket.find(level); b != by_bucket.end())
          if (const auto m = b->second.find(col.name); m != b->second.end() && m->second.count > 0) {
            cell.count = m->second.count;
            cell.mean = m->second.sum / static_cast<double>(m->second.count);
          }
        cells[level][col.name] = cell;
      }
  }

  for (const auto& method : report.methods) {
    if (method == baseline && report.methods.size() > 1) continue;
    auto& imp = report.improvements[method];
    for (const auto level : kAllLevels)
      for (const auto& col : metrics) {
        const auto& base = report.cells[baseline][level][col.name];
        const auto& ours = report.cells[method][level][col.name];
        std::optional<double> v;
        if (base.mean && ours.mean) {
          try {
            v = improvement_pct(*base.mean, *ours.mean, col.direction);
          } catch (const UndefinedImprovementError&) {
            v.reset();
          }
        }
        imp[level][col.name] = v;
      }
  }
  return report;
}

Json MetricReport::to_json() const {
  Json j;
  j["baseline"] = baseline;
  j["methods"] = methods;
  j["metrics"] = Json::array();
  for (const auto& m : metrics) j["metrics"].push_back({{"name", m.name}, {"direction", to_string(m.direction)}});
  Json cj = Json::object();
  for (const auto& [method, by_level] : cells)
    for (const auto& [level, by_metric] : by_level)
      for (const auto& [metric, cell] : by_metric)
        cj[method][std::string(to_string(level))][metric] =
            Json{{"mean", cell.mean ? Json(*cell.mean) : Json(nullptr)}, {"count", cell.count}};
  j["cells"] = cj;
  Json ij = Json::object();
  for (const auto& [method, by_level] : improvements)
    for (const auto& [level, by_metric] : by_level)
      for (const auto& [metric, v] : by_metric)
        ij[method][std::string(to_string(level))][metric] = v ? Json(*v) : Json(nullptr);
  j["improvements"] = ij;
  return j;
}

std::string MetricReport::to_text() const {
  std::vector<std::string> header{"method"};
  for (const auto level : kAllLevels)
    for (const auto& m : metrics)
      header.push_back(std::string(to_string(level)) + ":" + m.name +
                       (m.direction == Direction::lower_better ? "(-)" : "(+)"));

  std::vector<std::vector<std::string>> table{header};
  for (const auto& method : methods) {
    std::vector<std::string> row{method};
    for (const auto level : kAllLevels)
      for (const auto& m : metrics) {
        const auto& cell = cells.at(method).at(level).at(m.name);
        row.push_back(cell.mean ? format_fixed(*cell.mean, 4) : "n/a");
      }
    table.push_back(std::move(row));
  }
  for (const auto& [method, by_level] : improvements) {
    std::vector<std::string> row{method + " vs " + baseline};
    for (const auto level : kAllLevels)
      for (const auto& m : metrics) {
        const auto& v = by_level.at(level).at(m.name);
        row.push_back(v ? format_fixed(round_half_up(*v, 1), 1) + "%" : "n/a");
      }
    table.push_back(std::move(row));
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : table)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : table) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        out << row[c] << std::string(width[c] - row[c].size(), ' ');
      } else {
        out << "  " << std::string(width[c] - row[c].size(), ' ') << row[c];
      }
    }
    out << '\n';
  }
  return out.str();
}

TableFixture load_table_fixture(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ParseError("fixture", e.what());
  }
  TableFixture f;
  for (const auto& m : j.at("metrics"))
    f.metrics.push_back({m.at("name").get<std::string>(), parse_direction(m.at("direction").get<std::string>())});
  for (const auto& c : j.at("comparisons"))
    f.comparisons.emplace_back(c.at("baseline").get<std::string>(), c.at("method").get<std::string>());
  for (const auto& r : j.at("rows")) f.rows.push_back(r.get<ResultRow>());
  if (j.contains("printed_improvements"))
    for (const auto& p : j.at("printed_improvements"))
      f.printed.push_back({p.at("baseline").get<std::string>(), p.at("method").get<std::string>(),
                           parse_level(p.at("bucket").get<std::string>()), p.at("metric_name").get<std::string>(),
                           p.at("pct").get<double>()});
  return f;
}

std::vector<MetricReport> fixture_reports(const TableFixture& fixture) {
  std::vector<MetricReport> out;
  for (const auto& [baseline, method] : fixture.comparisons) {
    std::vector<ResultRow> subset;
    std::copy_if(fixture.rows.begin(), fixture.rows.end(), std::back_inserter(subset),
                 [&](const ResultRow& r) { return r.method == baseline || r.method == method; });
    out.push_back(build_report(subset, baseline, fixture.metrics));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<EvalEntry> load_eval_manifest(const fs::path& jsonl) {
  std::vector<EvalEntry> out;
  const auto base = jsonl.parent_path();
  std::size_t line = 0;
  for (const auto& row : read_jsonl(jsonl)) {
    ++line;
    const auto where = "row " + std::to_string(line);
    if (!row.contains("method") || !row.contains("path"))
      throw ParseError("manifest", where + " needs 'method' and 'path'");
    EvalEntry e;
    e.method = row.at("method").get<std::string>();
    e.path = row.at("path").get<std::string>();
    if (e.path.is_relative()) e.path = base / e.path;
    e.image_id = row.contains("image_id") ? row.at("image_id").get<std::string>() : e.path.stem().string();
    if (row.contains("zoom_ratio") && !row.at("zoom_ratio").is_null()) e.zoom_ratio = row.at("zoom_ratio").get<double>();
    const bool has_bucket = row.contains("bucket") && !row.at("bucket").is_null();
    if (e.zoom_ratio) {
      e.bucket = classify_degradation(*e.zoom_ratio).level;
      if (has_bucket && parse_level(row.at("bucket").get<std::string>()) != e.bucket)
        throw MismatchError(where + ": bucket disagrees with zoom ratio");
    } else if (has_bucket) {
      e.bucket = parse_level(row.at("bucket").get<std::string>());
    } else {
      throw ParseError("manifest", where + " needs 'zoom_ratio' or 'bucket'");
    }
    if (row.contains("gt_path") && !row.at("gt_path").is_null()) {
      fs::path gt = row.at("gt_path").get<std::string>();
      e.gt_path = gt.is_relative() ? base / gt : gt;
    }
    if (row.contains("device") && !row.at("device").is_null()) e.device = row.at("device").get<std::string>();
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ResultRow> score_entries(const std::vector<EvalEntry>& entries, const MetricRegistry& registry,
                                     int jobs) {
  std::vector<std::vector<ResultRow>> per(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    const auto& e = entries[i];
    const Image image = load_image(e.path);
    std::optional<Image> gt;
    if (e.gt_path) gt = resize_image(load_image(*e.gt_path), image.width, image.height);
    for (const auto& name : registry.names()) {
      const auto& spec = registry.get(name);
      if (spec.kind == MetricKind::full_reference && !gt) continue;
      const Image* ref = spec.kind == MetricKind::full_reference ? &*gt : nullptr;
      per[i].push_back({e.method, e.image_id, e.bucket, name, registry.score(name, image, ref)});
    }
  });
  std::vector<ResultRow> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::ours: return "ours";
    case AblationVariant::min_len: return "min_len";
    case AblationVariant::max_len: return "max_len";
    case AblationVariant::low_rel: return "low_rel";
    case AblationVariant::harmful_des: return "harmful_des";
  }
  return "ours";
}

AblationVariant parse_variant(std::string_view name) {
  for (const auto v : kAllVariants)
    if (to_string(v) == name) return v;
  throw InvalidInputError("unknown ablation variant '" + std::string(name) + "'");
}

namespace {

std::map<std::string, double> score_restored(const fs::path& restored, const fs::path& hq_ref,
                                             const MetricRegistry& registry) {
  std::map<std::string, double> scores;
  const Image image = load_image(restored);
  std::optional<Image> ref;
  std::error_code ec;
  if (!hq_ref.empty() && fs::exists(hq_ref, ec)) ref = resize_image(load_image(hq_ref), image.width, image.height);
  for (const auto& name : registry.names()) {
    const auto& spec = registry.get(name);
    if (spec.kind == MetricKind::full_reference) {
      if (ref) scores[name] = registry.score(name, image, &*ref);
    } else {
      scores[name] = registry.score(name, image, nullptr);
    }
  }
  return scores;
}

}  // namespace

std::vector<AblationRow> run_ablation(AblationVariant variant, const std::vector<PairRecord>& pairs,
                                      CaptionerClient& captioner, const RestorationClient& client,
                                      const MetricRegistry& registry, const AblationConfig& config) {
  config.schedule.validate();
  const bool uses_prediction = variant == AblationVariant::ours || variant == AblationVariant::low_rel ||
                               variant == AblationVariant::harmful_des;
  const std::string cot_prompt(kCoTInferencePrompt);

  std::vector<AblationRow> rows(pairs.size());
  std::vector<RestorationRequest> reqs;
  std::vector<std::size_t> req_row;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    auto& row = rows[i];
    row.variant = variant;
    row.pair_id = pair.pair_id;
    row.bucket = pair.meta.degradation_level;
    row.harmful_gate = variant != AblationVariant::harmful_des;
    try {
      const ImageRef ref{pair.pair_id, pair.hq_ref};
      int words = 0;
      if (uses_prediction) {
        words = std::max(1, captioner.caption(ref, cot_prompt).predicted_length - 2);
      } else if (variant == AblationVariant::min_len) {
        words = config.schedule.word_targets.front();
      } else {
        words = config.schedule.word_targets.back();
      }
      row.target_words = words;
      const auto generated = captioner.caption(
          ref, substitute_word_target(kCaptionGenerationPrompt, words));
      CaptionRecord caption = make_caption(generated.description);
      if (variant != AblationVariant::harmful_des) caption = content_only(filter_harmful(caption, config.lexicon));
      if (variant == AblationVariant::low_rel)
        caption = perturb_relevance(caption, config.low_rel_ratio,
                                    combine_seed({config.seed, fnv1a64(pair.pair_id)}));
      row.token_length = stub_token_count(caption.content_part);
      row.token_repeat_k = repeat_count_for_length(row.token_length);

      RestorationRequest req;
      req.image_id = pair.pair_id;
      req.lq_image_ref = pair.lq_ref;
      req.caption = std::move(caption);
      req.token_repeat_k = row.token_repeat_k;
      req.backend = config.backend;
      req.seed = combine_seed({config.seed, fnv1a64(pair.pair_id)});
      req.harmful_gate = row.harmful_gate;
      reqs.push_back(std::move(req));
      req_row.push_back(i);
    } catch (const Error& e) {
      row.error = std::string(to_string(e.kind())) + ": " + e.what();
    }
  }

  const auto outcome = client.restore_batch(reqs, config.jobs);
  for (std::size_t r = 0; r < reqs.size(); ++r) {
    auto& row = rows[req_row[r]];
    const auto& item = outcome.items[r];
    if (item.ok()) {
      row.restoration = item.result;
    } else {
      row.error = std::string(to_string(*item.error_kind)) + ": " + item.error;
    }
  }

  parallel_for(rows.size(), config.jobs, [&](std::size_t i) {
    auto& row = rows[i];
    if (!row.restoration) return;
    try {
      row.scores = score_restored(row.restoration->restored_image_ref, pairs[i].hq_ref, registry);
    } catch (const Error& e) {
      row.error = std::string(to_string(e.kind())) + ": " + e.what();
    }
  });
  return rows;
}

std::vector<ResultRow> to_result_rows(const std::vector<AblationRow>& rows) {
  std::vector<ResultRow> out;
  for (const auto& r : rows)
    for (const auto& [metric, score] : r.scores)
      out.push_back({std::string(to_string(r.variant)), r.pair_id, r.bucket, metric, score});
  return out;
}

std::vector<SweepPoint> richness_sweep(const fs::path& lq_ref, const CaptionRecord& caption,
                                       const std::vector<int>& k_values, const RestorationClient& client,
                                       const std::string& backend, std::uint64_t seed,
                                       const MetricRegistry& registry) {
  if (k_values.empty()) throw InvalidInputError("richness sweep needs at least one k");
  std::vector<SweepPoint> points;
  for (const int k : k_values) {
    SweepPoint p;
    p.k = k;
    p.token_length = k >= 0 ? extended_length(k) : 0;
    try {
      RestorationRequest req;
      req.image_id = lq_ref.stem().string();
      req.lq_image_ref = lq_ref;
      req.caption = caption;
      req.token_repeat_k = k;
      req.backend = backend;
      req.seed = seed;
      const auto result = client.restore(req);
      const Image restored = load_image(result.restored_image_ref);
      for (const auto& name : registry.names(MetricKind::no_reference))
        p.scores[name] = registry.score(name, restored, nullptr);
    } catch (const Error& e) {
      p.error = std::string(to_string(e.kind())) + ": " + e.what();
    }
    points.push_back(std::move(p));
  }
  return points;
}

std::string sweep_csv(const std::vector<SweepPoint>& points, const std::vector<std::string>& metrics) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (const char c : s) {
      if (c == '"') q.push_back('"');
      q.push_back(c);
    }
    return q + "\"";
  };
  std::ostringstream out;
  out << "k,token_length";
  for (const auto& m : metrics) out << ',' << quote(m);
  out << ",error\n";
  for (const auto& p : points) {
    out << p.k << ',' << p.token_length;
    for (const auto& m : metrics) {
      out << ',';
      if (const auto it = p.scores.find(m); it != p.scores.end()) out << format_fixed(it->second, 6);
    }
    out << ',' << quote(p.error.value_or("")) << '\n';
  }
  return out.str();
}

void to_json(Json& j, const ResultRow& r) {
  j = Json{{"method", r.method},
           {"image_id", r.image_id},
           {"bucket", to_string(r.bucket)},
           {"metric_name", r.metric_name},
           {"score", r.score}};
}

void from_json(const Json& j, ResultRow& r) {
  r.method = j.at("method").get<std::string>();
  r.image_id = j.value("image_id", std::string());
  r.bucket = parse_level(j.at("bucket").get<std::string>());
  r.metric_name = j.at("metric_name").get<std::string>();
  r.score = j.at("score").get<double>();
}

void to_json(Json& j, const AblationRow& r) {
  j = Json{{"variant", to_string(r.variant)},
           {"pair_id", r.pair_id},
           {"bucket", to_string(r.bucket)},
           {"target_words", r.target_words},
           {"token_length", r.token_length},
           {"token_repeat_k", r.token_repeat_k},
           {"harmful_gate", r.harmful_gate},
           {"restoration", r.restoration ? Json(*r.restoration) : Json(nullptr)},
           {"error", r.error ? Json(*r.error) : Json(nullptr)},
           {"scores", r.scores}};
}

}  // namespace rescap
