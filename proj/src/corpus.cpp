#include "moelm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>

#include "moelm/error.hpp"
#include "moelm/vocab.hpp"

namespace moelm {
namespace {

using json = nlohmann::json;

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_digits(std::string_view s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool is_sentence_end(const std::string& t) { return t == "." || t == "?" || t == "!"; }

// Splits a too-long utterance into segments of at most max_len tokens,
// preferring sentence boundaries.
std::vector<std::vector<int>> split_segments(const std::vector<std::string>& tokens,
                                             std::size_t max_len) {
  std::vector<std::vector<int>> sentences;
  std::vector<int> cur;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    cur.push_back(i);
    if (is_sentence_end(tokens[i])) {
      sentences.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) sentences.push_back(std::move(cur));

  std::vector<std::vector<int>> segments;
  std::vector<int> seg;
  for (const auto& s : sentences) {
    if (!seg.empty() && seg.size() + s.size() > max_len) {
      segments.push_back(std::move(seg));
      seg.clear();
    }
    if (s.size() > max_len) {
      // A single over-long sentence is cut at the length limit.
      for (std::size_t off = 0; off < s.size(); off += max_len) {
        std::vector<int> chunk(s.begin() + off, s.begin() + std::min(s.size(), off + max_len));
        if (chunk.size() == max_len || off + max_len < s.size()) {
          segments.push_back(std::move(chunk));
        } else {
          seg = std::move(chunk);
        }
      }
      continue;
    }
    seg.insert(seg.end(), s.begin(), s.end());
  }
  if (!seg.empty()) segments.push_back(std::move(seg));
  return segments;
}

}  // namespace

std::string_view speaker_name(Speaker s) { return s == Speaker::Client ? "client" : "agent"; }

Speaker parse_speaker(std::string_view s) {
  if (s == "client") return Speaker::Client;
  if (s == "agent") return Speaker::Agent;
  throw ParseError("unknown speaker '" + std::string(s) + "'");
}

std::vector<std::string> normalize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto lower = [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); };
  while (i < n) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i;
      while (j < n && is_word_char(text[j])) ++j;
      // Decimal number: digits '.' digits.
      if (is_digits(text.substr(i, j - i)) && j + 1 < n && text[j] == '.' &&
          std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
        ++j;
        while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      }
      std::string tok;
      for (std::size_t k = i; k < j; ++k) tok.push_back(lower(text[k]));
      out.push_back(std::move(tok));
      i = j;
      continue;
    }
    if (c == '\'' && i + 1 < n && std::isalpha(static_cast<unsigned char>(text[i + 1])) &&
        !out.empty()) {
      std::size_t j = i + 1;
      while (j < n && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      std::string tok = "'";
      for (std::size_t k = i + 1; k < j; ++k) tok.push_back(lower(text[k]));
      out.push_back(std::move(tok));
      i = j;
      continue;
    }
    // Multi-byte UTF-8 sequences are kept together as one symbol token.
    std::size_t len = 1;
    const auto uc = static_cast<unsigned char>(c);
    if (uc >= 0xF0) len = 4;
    else if (uc >= 0xE0) len = 3;
    else if (uc >= 0xC0) len = 2;
    out.emplace_back(text.substr(i, std::min(len, n - i)));
    i += len;
  }
  return out;
}

bool is_number_token(std::string_view token) {
  const auto dot = token.find('.');
  if (dot == std::string_view::npos) return is_digits(token);
  return is_digits(token.substr(0, dot)) && is_digits(token.substr(dot + 1));
}

std::vector<DialogueSample> extract_pairs(const Dialogue& dialogue, const PairOptions& options) {
  if (options.max_response_len == 0) throw ConfigError("max_response_len must be positive");
  std::vector<DialogueSample> samples;
  std::vector<std::string> history;
  const auto& turns = dialogue.turns;
  for (std::size_t t = 0; t < turns.size(); ++t) {
    auto tokens = normalize(turns[t].text);
    if (turns[t].speaker == Speaker::Client) {
      history.emplace_back(kClient);
      history.insert(history.end(), tokens.begin(), tokens.end());
      continue;
    }
    const bool more_in_turn = t + 1 < turns.size() && turns[t + 1].speaker == Speaker::Agent;
    const auto segments = split_segments(tokens, options.max_response_len);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      DialogueSample sample;
      sample.context = history;
      sample.context.emplace_back(kEoc);
      for (int idx : segments[s]) {
        sample.response.push_back(tokens[idx]);
        sample.response_source.push_back({static_cast<int>(t), idx});
      }
      const bool last_segment = s + 1 == segments.size();
      if (!last_segment) {
        sample.response.emplace_back(kNewline);
        sample.response_source.push_back({});
      } else if (more_in_turn) {
        sample.response.emplace_back(kPause);
        sample.response_source.push_back({});
      }
      history.emplace_back(kAgent);
      history.insert(history.end(), sample.response.begin(), sample.response.end());
      sample.response.emplace_back(kEor);
      sample.response_source.push_back({});
      samples.push_back(std::move(sample));
    }
  }
  return samples;
}

bool is_device_spec_keyword(std::string_view token) {
  static const std::vector<std::string_view> exact = {
      "cpu", "processor", "ghz", "mhz", "memory", "mb", "mbs", "gb", "gbs", "height",
      "width", "size", "camera", "mp", "hour", "hours", "mah"};
  if (std::find(exact.begin(), exact.end(), token) != exact.end()) return true;
  if (token.starts_with("weigh")) return true;
  // "byte" and "pixel" also match inside compounds (gigabyte, megapixels).
  return token.find("byte") != std::string_view::npos ||
         token.find("pixel") != std::string_view::npos;
}

bool is_device_spec_response(const std::vector<std::string>& response) {
  bool number = false;
  bool keyword = false;
  for (const auto& t : response) {
    number = number || is_number_token(t);
    keyword = keyword || is_device_spec_keyword(t);
  }
  return number && keyword;
}

std::vector<DialogueSample> select_device_spec_pairs(const std::vector<DialogueSample>& samples) {
  std::vector<DialogueSample> out;
  for (const auto& s : samples) {
    if (is_device_spec_response(s.response)) out.push_back(s);
  }
  return out;
}

namespace {

template <class F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void write_lines(const std::filesystem::path& path, const std::vector<json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

}  // namespace

std::vector<Dialogue> read_dialogues(const std::filesystem::path& path) {
  std::vector<Dialogue> out;
  for_each_line(path, [&](const json& j) {
    Dialogue d;
    for (const auto& t : j.at("turns")) {
      d.turns.push_back({parse_speaker(t.at("speaker").get<std::string>()),
                         t.at("text").get<std::string>()});
    }
    if (d.turns.empty()) throw ParseError("dialogue with no turns");
    out.push_back(std::move(d));
  });
  return out;
}

void write_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues) {
  std::vector<json> rows;
  for (const auto& d : dialogues) {
    json turns = json::array();
    for (const auto& t : d.turns) {
      turns.push_back({{"speaker", speaker_name(t.speaker)}, {"text", t.text}});
    }
    rows.push_back({{"turns", turns}});
  }
  write_lines(path, rows);
}

std::vector<DialogueSample> read_pairs(const std::filesystem::path& path) {
  std::vector<DialogueSample> out;
  for_each_line(path, [&](const json& j) {
    DialogueSample s;
    s.context = j.at("context").get<std::vector<std::string>>();
    s.response = j.at("response").get<std::vector<std::string>>();
    s.response_source.assign(s.response.size(), TokenSource{});
    out.push_back(std::move(s));
  });
  return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<DialogueSample>& samples) {
  std::vector<json> rows;
  for (const auto& s : samples) rows.push_back({{"context", s.context}, {"response", s.response}});
  write_lines(path, rows);
}

}  // namespace moelm
