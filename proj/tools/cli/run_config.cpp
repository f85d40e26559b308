// SPDX-License-Identifier: Apache-2.0
#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>

#include "rescap/errors.hpp"
#include "rescap/eval_harness.hpp"
#include "rescap/parallel.hpp"

namespace rescap::cli {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = s.find(',', pos);
    out.push_back(trim(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || end != text.data() + text.size())
    throw InvalidInputError("setting '" + std::string(key) + "': '" + std::string(text) + "' is not a number");
  return value;
}

std::vector<std::pair<std::string, std::string>> parse_pairs(std::string_view key, std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto item : split_csv(text)) {
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw InvalidInputError("setting '" + std::string(key) + "': expected name=value, got '" + std::string(item) + "'");
    out.emplace_back(std::string(trim(item.substr(0, eq))), std::string(trim(item.substr(eq + 1))));
  }
  return out;
}

std::string json_to_setting(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string s;
    for (const auto& e : v) {
      if (!s.empty()) s += ',';
      s += json_to_setting(e);
    }
    return s;
  }
  if (v.is_object()) {
    std::string s;
    for (const auto& [k, e] : v.items()) {
      if (!s.empty()) s += ',';
      s += k + "=" + json_to_setting(e);
    }
    return s;
  }
  return v.dump();
}

}  // namespace

int RunConfig::resolved_jobs() const { return jobs > 0 ? jobs : default_jobs(); }

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys{
      "run_id",  "seed",   "runs_dir", "run_dir",      "schedule",            "degraders",     "zooms",
      "backends", "backend", "captioner", "variant",    "limit",               "target",        "holdout_zoom",
      "realesrgan_fraction", "low_rel_ratio", "jobs",  "port",                "lease_ttl_s"};
  return keys;
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view raw) {
  const auto value = trim(raw);
  const std::string v(value);
  if (key == "run_id") {
    if (v.empty() || v.find('/') != std::string::npos) throw InvalidInputError("run_id must be a plain name");
    c.run_id = v;
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "runs_dir") {
    c.runs_dir = v;
  } else if (key == "run_dir") {
    c.run_dir = std::filesystem::path(v);
  } else if (key == "schedule") {
    c.schedule = parse_schedule(value);
  } else if (key == "degraders") {
    c.degraders.clear();
    for (const auto d : split_csv(value)) c.degraders.emplace_back(d);
    if (c.degraders.empty()) throw InvalidInputError("degraders list is empty");
  } else if (key == "zooms") {
    c.zooms.clear();
    for (const auto z : split_csv(value)) {
      const double zoom = parse_number<double>(key, z);
      if (!(zoom > 0)) throw InvalidInputError("zoom ratios must be positive");
      c.zooms.push_back(zoom);
    }
    if (c.zooms.empty()) throw InvalidInputError("zoom list is empty");
  } else if (key == "backends") {
    for (auto& [id, endpoint] : parse_pairs(key, value)) c.backends[id] = endpoint;
  } else if (key == "backend") {
    c.backend = v;
  } else if (key == "captioner") {
    if (v != "stub" && v.rfind("http://", 0) != 0)
      throw InvalidInputError("captioner must be 'stub' or an http:// URL");
    c.captioner = v;
  } else if (key == "variant") {
    parse_variant(value);
    c.variant = v;
  } else if (key == "limit") {
    if (v.empty() || v == "null") {
      c.limit.reset();
    } else {
      c.limit = parse_number<std::size_t>(key, value);
    }
  } else if (key == "target") {
    c.target = parse_number<std::size_t>(key, value);
  } else if (key == "holdout_zoom") {
    for (auto& [id, zoom] : parse_pairs(key, value)) c.holdout_zoom[id] = parse_number<double>(key, zoom);
  } else if (key == "realesrgan_fraction") {
    c.realesrgan_fraction = parse_number<double>(key, value);
    if (c.realesrgan_fraction < 0 || c.realesrgan_fraction > 1)
      throw InvalidInputError("realesrgan_fraction must lie in [0, 1]");
  } else if (key == "low_rel_ratio") {
    c.low_rel_ratio = parse_number<double>(key, value);
    if (c.low_rel_ratio < 0 || c.low_rel_ratio > 1) throw InvalidInputError("low_rel_ratio must lie in [0, 1]");
  } else if (key == "jobs") {
    c.jobs = parse_number<int>(key, value);
    if (c.jobs < 0) throw InvalidInputError("jobs must be >= 0");
  } else if (key == "port") {
    c.port = parse_number<int>(key, value);
    if (c.port < 0 || c.port > 65535) throw InvalidInputError("port out of range");
  } else if (key == "lease_ttl_s") {
    c.lease_ttl_s = parse_number<int>(key, value);
    if (c.lease_ttl_s <= 0) throw InvalidInputError("lease_ttl_s must be positive");
  } else {
    throw InvalidInputError("unknown setting '" + std::string(key) + "'");
  }
}

void apply_json(RunConfig& config, const Json& j) {
  if (!j.is_object()) throw InvalidInputError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (value.is_null()) {
      if (key == "limit") config.limit.reset();
      else if (key == "seed") config.seed.reset();
      else if (key == "run_dir") config.run_dir.reset();
      else if (std::find(setting_keys().begin(), setting_keys().end(), key) == setting_keys().end())
        throw InvalidInputError("unknown setting '" + key + "'");
      continue;
    }
    apply_setting(config, key, json_to_setting(value));
  }
}

RunConfig load_config_file(const std::filesystem::path& path) {
  RunConfig c;
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw InvalidInputError("config " + path.string() + ": " + e.what());
  }
  apply_json(c, j);
  return c;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

void apply_env(RunConfig& config, const EnvLookup& env) {
  for (const auto& key : setting_keys()) {
    std::string name = "RESCAP_";
    for (const char ch : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    if (const auto v = env(name)) apply_setting(config, key, *v);
  }
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                         const FlagSettings& flags) {
  RunConfig c = file ? load_config_file(*file) : RunConfig{};
  if (env) apply_env(c, env);
  for (const auto& [key, value] : flags) apply_setting(c, key, value);
  return c;
}

Json to_json_value(const RunConfig& c) {
  Json backends = Json::object();
  for (const auto& [id, ep] : c.backends) backends[id] = ep;
  Json holdout = Json::object();
  for (const auto& [id, z] : c.holdout_zoom) holdout[id] = z;
  return Json{{"run_id", c.run_id},
              {"seed", c.seed ? Json(*c.seed) : Json(nullptr)},
              {"runs_dir", c.runs_dir.string()},
              {"run_dir", c.run_dir ? Json(c.run_dir->string()) : Json(nullptr)},
              {"schedule", c.schedule.word_targets},
              {"degraders", c.degraders},
              {"zooms", c.zooms},
              {"backends", backends},
              {"backend", c.backend},
              {"captioner", c.captioner},
              {"variant", c.variant},
              {"limit", c.limit ? Json(*c.limit) : Json(nullptr)},
              {"target", c.target},
              {"holdout_zoom", holdout},
              {"realesrgan_fraction", c.realesrgan_fraction},
              {"low_rel_ratio", c.low_rel_ratio},
              {"jobs", c.jobs},
              {"port", c.port},
              {"lease_ttl_s", c.lease_ttl_s}};
}

}  // namespace rescap::cli
