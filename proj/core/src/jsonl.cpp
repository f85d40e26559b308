// SPDX-License-Identifier: Apache-2.0
#include "rescap/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "rescap/errors.hpp"

namespace rescap {

std::vector<Json> read_jsonl(std::istream& in) {
  std::vector<Json> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no),
                       "malformed JSONL at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_jsonl(in);
}

void write_jsonl(std::ostream& out, const std::vector<Json>& rows) {
  for (const auto& row : rows) out << row.dump() << '\n';
}

void atomic_write_text(const std::filesystem::path& path, const std::string& contents,
                       const BeforeRenameHook& before_rename) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  auto temp = path;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + temp.string());
    out << contents;
    out.flush();
    if (!out) throw IoError("short write to " + temp.string());
  }
  if (before_rename) before_rename(temp);
  std::error_code ec;
  std::filesystem::rename(temp, path, ec);
  if (ec) throw IoError("rename " + temp.string() + " -> " + path.string() + ": " + ec.message());
}

void atomic_write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows,
                        const BeforeRenameHook& before_rename) {
  std::ostringstream out;
  write_jsonl(out, rows);
  atomic_write_text(path, out.str(), before_rename);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rescap
