// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rescap/data_pipeline.hpp"
#include "rescap/jsonl.hpp"

namespace rescap::cli {

/// Everything a command may read from configuration. Resolution order,
/// weakest first: defaults, config file, RESCAP_* environment, flags.
struct RunConfig {
  std::string run_id = "default";
  std::optional<std::uint64_t> seed;
  std::filesystem::path runs_dir = "runs";
  std::optional<std::filesystem::path> run_dir;  // overrides runs_dir / run_id
  LengthSchedule schedule;
  std::vector<std::string> degraders{"stub"};
  std::vector<double> zooms{4, 6, 9, 16};
  std::map<std::string, std::string> backends{{"stub", "stub"}};
  std::string backend = "stub";
  std::string captioner = "stub";
  std::string variant = "ours";
  std::optional<std::size_t> limit;
  std::size_t target = 5500;
  std::map<std::string, double> holdout_zoom;
  double realesrgan_fraction = 0.2;
  double low_rel_ratio = 0.5;
  int jobs = 0;  // 0 = logical cores
  int port = 8790;
  int lease_ttl_s = 600;

  std::filesystem::path resolved_run_dir() const { return run_dir ? *run_dir : runs_dir / run_id; }
  std::uint64_t seed_or_default() const { return seed.value_or(0); }
  int resolved_jobs() const;
};

/// Setting keys in config files (snake_case), env vars (RESCAP_ + upper
/// case) and flags (--kebab-case).
const std::vector<std::string>& setting_keys();

/// Parses `value` for `key`. Lists are comma separated; maps are
/// comma separated key=value pairs. Throws InvalidInputError.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Unknown keys are rejected.
void apply_json(RunConfig& config, const Json& j);
RunConfig load_config_file(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;
EnvLookup process_env();
void apply_env(RunConfig& config, const EnvLookup& env);

/// Settings given on the command line, keyed like setting_keys().
using FlagSettings = std::map<std::string, std::string>;

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                         const FlagSettings& flags);

Json to_json_value(const RunConfig& config);

}  // namespace rescap::cli
