// SPDX-License-Identifier: Apache-2.0
#include "rescap/cot_captioner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>

#include "rescap/errors.hpp"

namespace rescap {

std::string emit_cot(const CoTCaption& c) {
  std::string out;
  out.reserve(c.description.size() + 16);
  out.push_back('<');
  out.append(std::to_string(c.predicted_length));
  out.append(", ");
  for (char ch : c.description) {
    if (ch == '>' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  out.push_back('>');
  return out;
}

CoTCaption parse_cot(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\n' || s.front() == '\r' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\n' || s.back() == '\r' || s.back() == '\t'))
    s.remove_suffix(1);
  if (s.size() < 2 || s.front() != '<')
    throw ParseError("brackets", "CoT caption must start with '<'");

  // The closing bracket is the final character and must not be escaped.
  std::size_t backslashes = 0;
  for (std::size_t i = s.size() - 1; i > 0 && s[i - 1] == '\\'; --i) ++backslashes;
  if (s.back() != '>' || backslashes % 2 == 1)
    throw ParseError("brackets", "CoT caption must end with an unescaped '>'");
  std::string_view body = s.substr(1, s.size() - 2);

  const auto comma = body.find(',');
  if (comma == std::string_view::npos)
    throw ParseError("separator", "CoT caption is missing the ', ' separator");
  const auto digits = body.substr(0, comma);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(),
                                     [](char c) { return c >= '0' && c <= '9'; }))
    throw ParseError("length", "token length '" + std::string(digits) + "' is not an integer");
  int length = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), length);
  if (ec != std::errc{} || ptr != digits.data() + digits.size())
    throw ParseError("length", "token length '" + std::string(digits) + "' is out of range");
  if (length <= 0) throw ParseError("length", "token length must be positive");

  if (comma + 1 >= body.size() || body[comma + 1] != ' ')
    throw ParseError("separator", "expected ', ' after the token length");
  const auto text = body.substr(comma + 2);

  std::string description;
  description.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 1 < text.size() && (text[i + 1] == '>' || text[i + 1] == '\\')) {
      description.push_back(text[++i]);
    } else {
      description.push_back(text[i]);
    }
  }
  if (description.empty()) throw ParseError("description", "description is empty");
  return {length, std::move(description)};
}

double offset_level(int optimal_length, int predicted_length) {
  if (optimal_length <= 0 || predicted_length <= 0)
    throw InvalidInputError("offset_level: lengths must be positive");
  const int gap = std::abs(optimal_length - predicted_length);
  return static_cast<double>(std::max(gap - 15, 0)) / 30.0;
}

double mean_offset(const std::vector<LengthAnnotation>& annotations,
                   const std::map<std::string, CoTCaption>& predictions) {
  if (annotations.empty()) throw InvalidInputError("mean_offset: no annotations");
  std::vector<std::string> missing;
  for (const auto& a : annotations)
    if (!predictions.contains(a.image_id)) missing.push_back(a.image_id);
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    throw MismatchError("mean_offset: no prediction for annotated image(s): " + ids);
  }
  double sum = 0.0;
  for (const auto& a : annotations) {
    const int predicted = predictions.at(a.image_id).predicted_length;
    double best = offset_level(a.optimal_length, predicted);
    for (int alt : a.acceptable_lengths) best = std::min(best, offset_level(alt, predicted));
    sum += best;
  }
  return sum / static_cast<double>(annotations.size());
}

std::string substitute_word_target(std::string_view prompt_template, int words) {
  std::string out(prompt_template);
  const std::string value = std::to_string(words);
  for (auto pos = out.find("XXX"); pos != std::string::npos; pos = out.find("XXX", pos + value.size()))
    out.replace(pos, 3, value);
  return out;
}

std::string load_prompt_template(const std::filesystem::path& path) { return read_text_file(path); }

void to_json(Json& j, const CoTCaption& c) { j = Json{{"cot", emit_cot(c)}}; }

void from_json(const Json& j, CoTCaption& c) {
  if (j.is_string()) {
    c = parse_cot(j.get<std::string>());
  } else if (j.contains("cot")) {
    c = parse_cot(j.at("cot").get<std::string>());
  } else if (j.contains("predicted_length") && j.contains("description")) {
    c.predicted_length = j.at("predicted_length").get<int>();
    c.description = j.at("description").get<std::string>();
  } else {
    throw ParseError("cot", "prediction row needs a 'cot' string");
  }
}

void to_json(Json& j, const LengthAnnotation& a) {
  j = Json{{"image_id", a.image_id}, {"optimal_length", a.optimal_length}};
  if (!a.acceptable_lengths.empty()) j["acceptable_lengths"] = a.acceptable_lengths;
}

void from_json(const Json& j, LengthAnnotation& a) {
  a.image_id = j.at("image_id").get<std::string>();
  a.optimal_length = j.at("optimal_length").get<int>();
  a.acceptable_lengths = j.value("acceptable_lengths", std::vector<int>{});
  if (a.optimal_length <= 0) throw InvalidInputError("optimal_length must be positive for " + a.image_id);
}

}  // namespace rescap
