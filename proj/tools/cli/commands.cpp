// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "rescap/annotation_service.hpp"
#include "rescap/cot_captioner.hpp"
#include "rescap/data_pipeline.hpp"
#include "rescap/errors.hpp"
#include "rescap/eval_harness.hpp"
#include "rescap/ids.hpp"
#include "rescap/parallel.hpp"
#include "rescap/text_conditioning.hpp"

namespace rescap::cli {

namespace fs = std::filesystem;

namespace {

/// Per-invocation state shared by the subcommand callbacks.
struct Context {
  std::ostream& out;
  std::ostream& err;
  const EnvLookup& env;
  std::optional<std::string> config_file;
  std::vector<std::pair<std::string, CLI::Option*>> setting_options;
  std::map<std::string, std::string> setting_values;

  RunConfig config() const {
    FlagSettings flags;
    for (const auto& [key, opt] : setting_options)
      if (opt->count() > 0) flags[key] = setting_values.at(key);
    std::optional<fs::path> file;
    if (config_file) file = *config_file;
    return resolve_config(file, env, flags);
  }
};

std::string kebab(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

void add_settings(CLI::App* sub, Context& ctx, std::initializer_list<const char*> keys) {
  static const std::map<std::string, std::string> help{
      {"run_id", "Run name under the runs directory"},
      {"seed", "Seed for every random choice"},
      {"runs_dir", "Directory holding run directories"},
      {"run_dir", "Run directory (overrides --runs-dir/--run-id)"},
      {"schedule", "Caption word targets, comma separated"},
      {"degraders", "Degrader ids, comma separated"},
      {"zooms", "Zoom ratios, comma separated"},
      {"backends", "Extra backends as id=endpoint, comma separated"},
      {"backend", "Restoration backend id"},
      {"captioner", "Captioner: 'stub' or an http:// URL"},
      {"variant", "Ablation variant: ours, min_len, max_len, low_rel, harmful_des"},
      {"limit", "Maximum exported pairs"},
      {"target", "Export size target"},
      {"holdout_zoom", "Held-out zoom per degrader as id=zoom"},
      {"realesrgan_fraction", "Share of HQ images given to the realesrgan degrader"},
      {"low_rel_ratio", "Word replacement ratio for low_rel"},
      {"jobs", "Worker threads (0 = logical cores)"},
      {"port", "HTTP port"},
      {"lease_ttl_s", "Task lease lifetime in seconds"}};
  sub->add_option("--config", ctx.config_file, "JSON config file");
  for (const char* key : keys) {
    auto& slot = ctx.setting_values[key];
    auto* opt = sub->add_option("--" + kebab(key), slot, help.at(key));
    ctx.setting_options.emplace_back(key, opt);
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::unique_ptr<CaptionerClient> make_captioner(const RunConfig& cfg,
                                                std::map<std::string, DegradationLevel> levels) {
  if (cfg.captioner == "stub") {
    StubCaptionerConfig sc;
    sc.seed = cfg.seed_or_default();
    return std::make_unique<StubCaptioner>(std::move(levels), sc);
  }
  return std::make_unique<HttpCaptioner>(cfg.captioner);
}

void register_backends(RestorationClient& client, const RunConfig& cfg) {
  for (const auto& [id, endpoint] : cfg.backends) client.register_backend(id, endpoint);
}

std::map<std::string, DegradationLevel> levels_of(const std::vector<PairRecord>& pairs) {
  std::map<std::string, DegradationLevel> levels;
  for (const auto& p : pairs) levels[p.pair_id] = p.meta.degradation_level;
  return levels;
}

void note_seed(const RunConfig& cfg, std::ostream& err) {
  if (!cfg.seed) err << "rescap: no seed given; using 0\n";
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos)
      throw InvalidInputError("'" + item + "' is not an integer");
    out.push_back(v);
  }
  return out;
}

void write_or_print(const std::optional<std::string>& path, const std::string& text, std::ostream& out) {
  if (path) {
    atomic_write_text(*path, text);
  } else {
    out << text;
  }
}

std::string rows_to_jsonl(const std::vector<Json>& rows) {
  std::ostringstream ss;
  write_jsonl(ss, rows);
  return ss.str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  Context ctx{out, err, env, std::nullopt, {}, {}};
  CLI::App app{"Caption-conditioned image restoration toolkit", "rescap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rescap 0.3.0");
  int exit_code = kExitOk;

  // extend-tokens ------------------------------------------------------------
  struct {
    std::string text;
    std::optional<int> k;
    std::optional<int> target_length;
    int dim = 8;
    std::optional<std::string> dump;
  } et;
  auto* extend = app.add_subcommand("extend-tokens", "Repeat the last content block of a 77-token window");
  extend->add_option("--text", et.text, "Caption to encode with the stub encoder")->required();
  auto* et_k = extend->add_option("--k", et.k, "Number of repeated blocks");
  extend->add_option("--target-length", et.target_length, "Desired token length; k is derived")->excludes(et_k);
  extend->add_option("--dim", et.dim, "Stub embedding width")->capture_default_str();
  extend->add_option("--dump", et.dump, "Write the extended embeddings as CSV");
  extend->callback([&] {
    const int k = et.k ? *et.k : et.target_length ? richness_schedule(*et.target_length) : 0;
    const auto seq = encode_stub(et.text, et.dim);
    const auto ext = extend_richness(seq, k);
    out << Json{{"words", count_words(et.text)},
                {"input_length", seq.length()},
                {"input_eos", seq.eos_index},
                {"k", k},
                {"output_length", ext.length()},
                {"output_eos", ext.eos_index}}
               .dump()
        << '\n';
    if (et.dump) {
      std::ostringstream csv;
      csv << std::setprecision(17);
      for (Eigen::Index r = 0; r < ext.embeddings.rows(); ++r) {
        for (Eigen::Index c = 0; c < ext.embeddings.cols(); ++c) csv << (c ? "," : "") << ext.embeddings(r, c);
        csv << '\n';
      }
      atomic_write_text(*et.dump, csv.str());
    }
  });

  // perturb ------------------------------------------------------------------
  struct {
    std::string text;
    double ratio = 0.0;
    std::string fillers = "the,for";
  } pt;
  auto* perturb = app.add_subcommand("perturb", "Swap a share of caption words for filler words");
  perturb->add_option("--text", pt.text, "Caption text")->required();
  perturb->add_option("--ratio", pt.ratio, "Share of words to replace, in [0, 1]")->required();
  perturb->add_option("--fillers", pt.fillers, "Filler words, comma separated")->capture_default_str();
  add_settings(perturb, ctx, {"seed"});
  perturb->callback([&] {
    const auto cfg = ctx.config();
    note_seed(cfg, err);
    std::vector<std::string> fillers;
    std::stringstream ss(pt.fillers);
    for (std::string f; std::getline(ss, f, ',');)
      if (!f.empty()) fillers.push_back(f);
    const auto caption = make_caption(pt.text);
    const auto result = perturb_relevance(caption, pt.ratio, cfg.seed_or_default(), fillers);
    out << Json{{"text", result.text},
                {"word_count", result.word_count},
                {"replaced", replaced_word_count(pt.ratio, caption.word_count)}}
               .dump()
        << '\n';
  });

  // filter-harmful -----------------------------------------------------------
  struct {
    std::optional<std::string> text;
    std::optional<std::string> input;
    std::optional<std::string> lexicon;
    std::string scope = "sentence";
  } fh;
  auto* filter = app.add_subcommand("filter-harmful", "Split captions into content and degradation parts");
  auto* fh_text = filter->add_option("--text", fh.text, "Caption text");
  filter->add_option("--input", fh.input, "JSONL file of {\"text\"} rows")->excludes(fh_text);
  filter->add_option("--lexicon", fh.lexicon, "Phrase file, one phrase per line, # for comments");
  filter->add_option("--scope", fh.scope, "Removal scope: phrase, clause or sentence")->capture_default_str();
  filter->callback([&] {
    HarmfulLexicon lexicon = default_harmful_lexicon();
    if (fh.lexicon) {
      std::vector<std::string> phrases;
      for (auto& line : read_lines(*fh.lexicon))
        if (!line.empty() && line.front() != '#') phrases.push_back(line);
      lexicon = make_lexicon(std::move(phrases), parse_scope(fh.scope));
    } else {
      lexicon.scope = parse_scope(fh.scope);
    }
    std::vector<std::string> texts;
    if (fh.text) texts.push_back(*fh.text);
    if (fh.input)
      for (const auto& row : read_jsonl(fs::path(*fh.input))) texts.push_back(row.at("text").get<std::string>());
    if (texts.empty()) throw InvalidInputError("give --text or --input");
    for (const auto& t : texts) out << Json(filter_harmful(make_caption(t), lexicon)).dump() << '\n';
  });

  // caption ------------------------------------------------------------------
  struct {
    std::string image;
    std::optional<std::string> image_id;
    std::optional<std::string> level;
    std::optional<double> zoom;
    std::optional<int> words;
    std::optional<std::string> prompt_file;
  } cp;
  auto* caption = app.add_subcommand("caption", "Caption one image in <length, description> form");
  caption->add_option("--image", cp.image, "Image file")->required();
  caption->add_option("--image-id", cp.image_id, "Image id (default: file stem)");
  auto* cp_level = caption->add_option("--level", cp.level, "Degradation level for the stub captioner");
  caption->add_option("--zoom", cp.zoom, "Zoom ratio; sets the level")->excludes(cp_level);
  caption->add_option("--words", cp.words, "Word target; uses the generation prompt");
  caption->add_option("--prompt-file", cp.prompt_file, "Prompt template file (XXX = word target)");
  add_settings(caption, ctx, {"seed", "captioner"});
  caption->callback([&] {
    const auto cfg = ctx.config();
    const std::string id = cp.image_id.value_or(fs::path(cp.image).stem().string());
    DegradationLevel level = DegradationLevel::light;
    if (cp.level) level = parse_level(*cp.level);
    if (cp.zoom) level = classify_degradation(*cp.zoom).level;
    auto captioner = make_captioner(cfg, {{id, level}});
    std::string prompt;
    if (cp.prompt_file) {
      prompt = load_prompt_template(*cp.prompt_file);
    } else {
      prompt = std::string(cp.words ? kCaptionGenerationPrompt : kCoTInferencePrompt);
    }
    if (cp.words) prompt = substitute_word_target(prompt, *cp.words);
    out << emit_cot(captioner->caption({id, cp.image}, prompt)) << '\n';
  });

  // offset-eval --------------------------------------------------------------
  struct {
    std::string annotations;
    std::string predictions;
  } oe;
  auto* offset = app.add_subcommand("offset-eval", "Mean offset level of predicted caption lengths");
  offset->add_option("--annotations", oe.annotations, "JSONL {image_id, optimal_length, acceptable_lengths?}")
      ->required();
  offset->add_option("--predictions", oe.predictions, "JSONL {image_id, cot} or {image_id, predicted_length, description}")
      ->required();
  offset->callback([&] {
    std::vector<LengthAnnotation> annotations;
    for (const auto& row : read_jsonl(fs::path(oe.annotations))) annotations.push_back(row.get<LengthAnnotation>());
    std::map<std::string, CoTCaption> predictions;
    for (const auto& row : read_jsonl(fs::path(oe.predictions))) {
      if (!row.contains("image_id")) throw ParseError("predictions", "row lacks 'image_id'");
      predictions[row.at("image_id").get<std::string>()] = row.get<CoTCaption>();
    }
    const double mean = mean_offset(annotations, predictions);
    out << "pairs " << annotations.size() << '\n' << "mean " << mean << '\n';
  });

  // gen-data -----------------------------------------------------------------
  struct {
    std::string hq;
  } gd;
  auto* gen = app.add_subcommand("gen-data", "Degrade HQ images, caption at every length and restore candidates");
  gen->add_option("--hq", gd.hq, "HQ image directory or JSONL manifest")->required();
  add_settings(gen, ctx,
               {"seed", "run_id", "runs_dir", "run_dir", "zooms", "degraders", "schedule", "captioner", "backend",
                "backends", "realesrgan_fraction", "jobs"});
  gen->callback([&] {
    const auto cfg = ctx.config();
    note_seed(cfg, err);
    const RunLayout layout{cfg.resolved_run_dir()};
    std::error_code ec;
    fs::create_directories(layout.root, ec);
    if (ec) throw IoError("cannot create " + layout.root.string() + ": " + ec.message());
    const auto hq = fs::is_directory(gd.hq) ? scan_hq_directory(gd.hq) : load_hq_manifest(gd.hq);

    GenerateOptions go;
    go.seed = cfg.seed_or_default();
    go.jobs = cfg.resolved_jobs();
    go.realesrgan_fraction = cfg.realesrgan_fraction;
    auto pairs = generate_pairs(hq, default_degraders(), cfg.degraders, cfg.zooms, layout, go);
    err << "rescap: " << pairs.size() << " LQ images written\n";

    auto captioner = make_captioner(cfg, levels_of(pairs));
    RestorationClient client(layout.images());
    register_backends(client, cfg);
    parallel_for(pairs.size(), cfg.resolved_jobs(), [&](std::size_t i) {
      auto captioned = generate_caption_candidates(pairs[i], *captioner, cfg.schedule);
      pairs[i] = captioned.candidates.empty()
                     ? captioned
                     : fanout_restorations(captioned, client, cfg.backend, cfg.seed_or_default());
    });

    RunStore store(layout);
    store.save_pairs(pairs);
    atomic_write_text(layout.root / "config.json", to_json_value(cfg).dump(2) + "\n");

    std::size_t candidates = 0;
    std::size_t restorations = 0;
    std::size_t warnings = 0;
    for (const auto& p : pairs) {
      candidates += p.candidates.size();
      for (const auto& c : p.candidates) restorations += c.restoration ? 1 : 0;
      warnings += p.warnings.size();
      for (const auto& w : p.warnings) err << "rescap: warning: " << p.pair_id << ": " << w << '\n';
    }
    out << Json{{"run_dir", layout.root.string()},
                {"pairs", pairs.size()},
                {"candidates", candidates},
                {"restorations", restorations},
                {"warnings", warnings}}
               .dump()
        << '\n';
    if (warnings > 0) exit_code = kExitPartial;
  });

  // restore-batch ------------------------------------------------------------
  struct {
    std::string requests;
    std::optional<std::string> output;
    std::optional<std::string> results;
  } rb;
  auto* restore = app.add_subcommand("restore-batch", "Run restoration requests from a JSONL file");
  restore->add_option("--requests", rb.requests, "JSONL of restoration requests")->required();
  restore->add_option("--output", rb.output, "Directory for restored images (default: <run>/images)");
  restore->add_option("--results", rb.results, "Write result rows here instead of stdout");
  add_settings(restore, ctx, {"run_id", "runs_dir", "run_dir", "backends", "jobs"});
  restore->callback([&] {
    const auto cfg = ctx.config();
    std::vector<RestorationRequest> reqs;
    for (const auto& row : read_jsonl(fs::path(rb.requests))) reqs.push_back(row.get<RestorationRequest>());
    RestorationClient client(rb.output ? fs::path(*rb.output) : RunLayout{cfg.resolved_run_dir()}.images());
    register_backends(client, cfg);
    const auto outcome = client.restore_batch(reqs, cfg.resolved_jobs());
    std::vector<Json> rows;
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      const auto& item = outcome.items[i];
      if (item.ok()) {
        rows.push_back(Json{{"ok", true}, {"result", *item.result}});
      } else {
        rows.push_back(Json{{"ok", false},
                            {"image_id", reqs[i].image_id},
                            {"error_kind", to_string(*item.error_kind)},
                            {"error", item.error}});
      }
    }
    write_or_print(rb.results, rows_to_jsonl(rows), out);
    err << "rescap: " << outcome.ok << " restored, " << outcome.err << " failed\n";
    if (outcome.err > 0) exit_code = kExitPartial;
  });

  // annotate-serve -----------------------------------------------------------
  struct {
    std::string host = "127.0.0.1";
    std::string cors = "*";
  } as;
  auto* serve = app.add_subcommand("annotate-serve", "Serve annotation tasks for a run over HTTP");
  serve->add_option("--host", as.host, "Bind address")->capture_default_str();
  serve->add_option("--cors-origin", as.cors, "Allowed CORS origin")->capture_default_str();
  add_settings(serve, ctx, {"run_id", "runs_dir", "run_dir", "port", "lease_ttl_s"});
  serve->callback([&] {
    const auto cfg = ctx.config();
    ServiceOptions so;
    so.lease_ttl = std::chrono::seconds(cfg.lease_ttl_s);
    AnnotationService service(RunLayout{cfg.resolved_run_dir()}, so);
    AnnotationHttpServer server(service, {as.host, cfg.port, as.cors});
    const int port = server.bind();
    err << "rescap: serving " << cfg.resolved_run_dir().string() << " on http://" << as.host << ":" << port << '\n';
    server.serve();
  });

  // export-train -------------------------------------------------------------
  struct {
    std::optional<std::string> out;
    std::string profile = "full";
  } ex;
  auto* exporter = app.add_subcommand("export-train", "Write annotated pairs as <length, description> training rows");
  exporter->add_option("--out", ex.out, "Output JSONL (default: <run>/export.jsonl)");
  exporter->add_option("--profile", ex.profile, "full, or finetune (limit 200 unless --limit is set)")
      ->check(CLI::IsMember({"full", "finetune"}))
      ->capture_default_str();
  add_settings(exporter, ctx, {"run_id", "runs_dir", "run_dir", "limit", "target", "holdout_zoom"});
  exporter->callback([&] {
    const auto cfg = ctx.config();
    const RunLayout layout{cfg.resolved_run_dir()};
    RunStore store(layout);
    ExportOptions eo;
    eo.target = cfg.target;
    eo.limit = cfg.limit;
    if (ex.profile == "finetune" && !eo.limit) eo.limit = 200;
    eo.holdout_zoom = cfg.holdout_zoom;
    const auto summary = export_training_set(store.pairs(), ex.out ? fs::path(*ex.out) : layout.export_file(), eo);
    out << Json(summary).dump() << '\n';
  });

  // evaluate -----------------------------------------------------------------
  struct {
    std::optional<std::string> manifest;
    std::optional<std::string> results;
    std::optional<std::string> rows;
  } ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score images from a manifest, or run an ablation over a run");
  evaluate->add_option("--manifest", ev.manifest, "JSONL {method, image_id, path, zoom_ratio|bucket, gt_path?}");
  evaluate->add_option("--results", ev.results, "Write result rows here instead of stdout");
  evaluate->add_option("--rows", ev.rows, "Ablation only: write per-pair rows to this JSONL");
  add_settings(evaluate, ctx,
               {"seed", "run_id", "runs_dir", "run_dir", "variant", "schedule", "captioner", "backend", "backends",
                "low_rel_ratio", "jobs"});
  evaluate->callback([&] {
    const auto cfg = ctx.config();
    const auto registry = default_metrics();
    std::vector<ResultRow> results;
    if (ev.manifest) {
      results = score_entries(load_eval_manifest(*ev.manifest), registry, cfg.resolved_jobs());
    } else {
      note_seed(cfg, err);
      const RunLayout layout{cfg.resolved_run_dir()};
      RunStore store(layout);
      const auto pairs = store.pairs();
      const auto variant = parse_variant(cfg.variant);
      auto captioner = make_captioner(cfg, levels_of(pairs));
      RestorationClient client(layout.root / "ablation" / std::string(to_string(variant)));
      register_backends(client, cfg);
      AblationConfig ac;
      ac.schedule = cfg.schedule;
      ac.low_rel_ratio = cfg.low_rel_ratio;
      ac.backend = cfg.backend;
      ac.seed = cfg.seed_or_default();
      ac.jobs = cfg.resolved_jobs();
      const auto rows = run_ablation(variant, pairs, *captioner, client, registry, ac);
      std::vector<Json> json_rows(rows.begin(), rows.end());
      if (ev.rows) atomic_write_jsonl(*ev.rows, json_rows);
      for (const auto& r : rows)
        if (r.error) {
          err << "rescap: " << r.pair_id << ": " << *r.error << '\n';
          exit_code = kExitPartial;
        }
      results = to_result_rows(rows);
    }
    std::vector<Json> json(results.begin(), results.end());
    write_or_print(ev.results, rows_to_jsonl(json), out);
  });

  // report -------------------------------------------------------------------
  struct {
    std::optional<std::string> fixture;
    std::optional<std::string> results;
    std::optional<std::string> baseline;
    std::vector<std::string> metrics;
    std::optional<std::string> out_dir;
  } rp;
  auto* report = app.add_subcommand("report", "Per-bucket means and improvement percentages");
  auto* rp_fixture = report->add_option("--fixture", rp.fixture, "Comparison fixture JSON");
  report->add_option("--results", rp.results, "Results manifest JSONL")->excludes(rp_fixture);
  report->add_option("--baseline", rp.baseline, "Baseline method id (required with --results)");
  report->add_option("--metric", rp.metrics, "Metric as name or name:lower_better|higher_better; repeatable");
  report->add_option("--out-dir", rp.out_dir, "Write report.json and report.txt here");
  report->callback([&] {
    std::vector<MetricReport> reports;
    if (rp.fixture) {
      reports = fixture_reports(load_table_fixture(*rp.fixture));
    } else if (rp.results) {
      if (!rp.baseline) throw InvalidInputError("--baseline is required with --results");
      std::vector<ResultRow> rows;
      for (const auto& row : read_jsonl(fs::path(*rp.results))) rows.push_back(row.get<ResultRow>());
      const auto registry = default_metrics();
      std::vector<MetricColumn> columns;
      auto direction_of = [&](const std::string& name) {
        return registry.contains(name) ? registry.get(name).direction : Direction::higher_better;
      };
      for (const auto& m : rp.metrics) {
        const auto colon = m.find(':');
        if (colon == std::string::npos) {
          columns.push_back({m, direction_of(m)});
        } else {
          columns.push_back({m.substr(0, colon), parse_direction(m.substr(colon + 1))});
        }
      }
      if (columns.empty())
        for (const auto& r : rows)
          if (std::none_of(columns.begin(), columns.end(), [&](const MetricColumn& c) { return c.name == r.metric_name; }))
            columns.push_back({r.metric_name, direction_of(r.metric_name)});
      reports.push_back(build_report(rows, *rp.baseline, columns));
    } else {
      throw InvalidInputError("give --fixture or --results");
    }
    std::string text;
    Json json = Json::array();
    for (const auto& r : reports) {
      if (!text.empty()) text += '\n';
      text += r.to_text();
      json.push_back(r.to_json());
    }
    out << text;
    if (rp.out_dir) {
      atomic_write_text(fs::path(*rp.out_dir) / "report.json", (json.size() == 1 ? json[0] : json).dump(2) + "\n");
      atomic_write_text(fs::path(*rp.out_dir) / "report.txt", text);
    }
  });

  // sweep --------------------------------------------------------------------
  struct {
    std::string image;
    std::string text;
    std::string ks = "0,1,2,3,4,5";
    std::optional<std::string> out;
    std::optional<std::string> output_dir;
  } sw;
  auto* sweep = app.add_subcommand("sweep", "Restore one image at several richness levels and score each");
  sweep->add_option("--image", sw.image, "LQ image file")->required();
  sweep->add_option("--text", sw.text, "Caption text")->required();
  sweep->add_option("--k", sw.ks, "Repeat counts, comma separated")->capture_default_str();
  sweep->add_option("--out", sw.out, "Write sweep.csv here instead of stdout");
  sweep->add_option("--output-dir", sw.output_dir, "Directory for restored images (default: <run>/sweep)");
  add_settings(sweep, ctx, {"seed", "run_id", "runs_dir", "run_dir", "backend", "backends"});
  sweep->callback([&] {
    const auto cfg = ctx.config();
    note_seed(cfg, err);
    const auto ks = parse_int_list(sw.ks);
    RestorationClient client(sw.output_dir ? fs::path(*sw.output_dir) : cfg.resolved_run_dir() / "sweep");
    register_backends(client, cfg);
    const auto registry = default_metrics();
    const auto caption = content_only(filter_harmful(make_caption(sw.text), default_harmful_lexicon()));
    std::error_code ec;
    fs::create_directories(client.output_dir(), ec);
    if (ec) throw IoError("cannot create " + client.output_dir().string() + ": " + ec.message());
    const auto points = richness_sweep(sw.image, caption, ks, client, cfg.backend, cfg.seed_or_default(), registry);
    write_or_print(sw.out, sweep_csv(points, registry.names(MetricKind::no_reference)), out);
    for (const auto& p : points)
      if (p.error) {
        err << "rescap: k=" << p.k << ": " << *p.error << '\n';
        exit_code = kExitPartial;
      }
  });

  std::vector<const char*> argv{"rescap"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (e.get_name() == "RequiredError" && app.get_subcommands().empty()) err << app.help();
    return kExitConfig;
  } catch (const Error& e) {
    err << "rescap: error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const Json::exception& e) {
    err << "rescap: error: parse: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "rescap: error: " << e.what() << '\n';
    return kExitConfig;
  }
  return exit_code;
}

}  // namespace rescap::cli
