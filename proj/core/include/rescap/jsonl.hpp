// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace rescap {

using Json = nlohmann::json;

/// Parses one JSON object per non-blank line. Throws ParseError naming the
/// 1-based line number on malformed input.
std::vector<Json> read_jsonl(std::istream& in);
std::vector<Json> read_jsonl(const std::filesystem::path& path);

void write_jsonl(std::ostream& out, const std::vector<Json>& rows);

/// Hook invoked after the temp file is fully written and before the rename.
/// Tests use it to simulate a crash; production callers leave it empty.
using BeforeRenameHook = std::function<void(const std::filesystem::path& temp_path)>;

/// Write-temp-then-rename. Readers observe either the old or the new file.
void atomic_write_text(const std::filesystem::path& path, const std::string& contents,
                       const BeforeRenameHook& before_rename = {});
void atomic_write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows,
                        const BeforeRenameHook& before_rename = {});

std::string read_text_file(const std::filesystem::path& path);

}  // namespace rescap
