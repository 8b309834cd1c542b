#include "moelm/kb.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "moelm/container.hpp"
#include "moelm/error.hpp"

namespace moelm {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string pair_key(std::string_view d, std::string_view a) {
  std::string k(d);
  k.push_back('\x1f');
  k += a;
  return k;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

template <class Map>
std::optional<std::size_t> find_in(const Map& m, std::string_view key) {
  auto it = m.find(std::string(key));
  if (it == m.end()) return std::nullopt;
  return it->second;
}

}  // namespace

bool is_numeric_value(std::string_view s) {
  if (!s.empty() && (s[0] == '+' || s[0] == '-')) s.remove_prefix(1);
  if (s.empty()) return false;
  bool digits = false;
  bool dot = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      digits = true;
    } else if (s[i] == '.' && !dot && i > 0 && i + 1 < s.size()) {
      dot = true;
    } else {
      return false;
    }
  }
  return digits;
}

std::string normalize_id(std::string_view s) {
  std::string out;
  bool pending_sep = false;
  for (char c : trim(s)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_sep = true;
      continue;
    }
    if (pending_sep && !out.empty()) out.push_back('_');
    pending_sep = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::vector<std::string> id_words(std::string_view id) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : id) {
    if (c == '_') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

KbIndex KbIndex::build(std::vector<Triple> triples) {
  for (auto& t : triples) {
    t.device = normalize_id(t.device);
    t.attribute = normalize_id(t.attribute);
    t.value = trim(t.value);
    if (t.device.empty() || t.attribute.empty()) throw ParseError("triple with empty id");
    if (!is_numeric_value(t.value)) {
      throw ParseError("non-numeric value '" + t.value + "' for (" + t.device + ", " +
                       t.attribute + ")");
    }
  }
  std::sort(triples.begin(), triples.end(), [](const Triple& a, const Triple& b) {
    return std::tie(a.device, a.attribute, a.value) < std::tie(b.device, b.attribute, b.value);
  });
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
  for (std::size_t i = 1; i < triples.size(); ++i) {
    if (triples[i].device == triples[i - 1].device &&
        triples[i].attribute == triples[i - 1].attribute) {
      throw ParseError("conflicting values for (" + triples[i].device + ", " +
                       triples[i].attribute + "): '" + triples[i - 1].value + "' vs '" +
                       triples[i].value + "'");
    }
  }
  if (triples.empty()) throw ParseError("empty KB");

  KbIndex kb;
  std::set<std::string> devices, attributes, values;
  for (const auto& t : triples) {
    devices.insert(t.device);
    attributes.insert(t.attribute);
    values.insert(t.value);
  }
  kb.devices_.assign(devices.begin(), devices.end());
  kb.attributes_.assign(attributes.begin(), attributes.end());
  kb.values_.assign(values.begin(), values.end());
  for (std::size_t i = 0; i < kb.devices_.size(); ++i) kb.device_ix_[kb.devices_[i]] = i;
  for (std::size_t i = 0; i < kb.attributes_.size(); ++i) kb.attribute_ix_[kb.attributes_[i]] = i;
  for (std::size_t i = 0; i < kb.values_.size(); ++i) kb.value_ix_[kb.values_[i]] = i;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto& t = triples[i];
    kb.entries_.push_back({kb.device_ix_[t.device], kb.attribute_ix_[t.attribute],
                           kb.value_ix_[t.value]});
    kb.pair_ix_[pair_key(t.device, t.attribute)] = i;
  }
  kb.triples_ = std::move(triples);
  return kb;
}

std::optional<std::size_t> KbIndex::device_index(std::string_view device) const {
  return find_in(device_ix_, device);
}
std::optional<std::size_t> KbIndex::attribute_index(std::string_view attribute) const {
  return find_in(attribute_ix_, attribute);
}
std::optional<std::size_t> KbIndex::value_index(std::string_view value) const {
  return find_in(value_ix_, value);
}

std::optional<std::string> KbIndex::lookup(std::string_view device,
                                           std::string_view attribute) const {
  auto it = pair_ix_.find(pair_key(device, attribute));
  if (it == pair_ix_.end()) return std::nullopt;
  return triples_[it->second].value;
}

KbIndex parse_kb(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  std::vector<Triple> triples;
  std::map<std::string, std::pair<std::string, std::size_t>> seen;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 3) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    }
    const bool header_candidate = first;
    first = false;
    if (header_candidate && !is_numeric_value(fields[2])) {
      if (normalize_id(fields[0]) == "device" && normalize_id(fields[1]) == "attribute" &&
          normalize_id(fields[2]) == "value") {
        continue;
      }
      throw ParseError(source + ":" + std::to_string(lineno) +
                       ": first line is neither a device,attribute,value header nor a triple");
    }
    Triple t{normalize_id(fields[0]), normalize_id(fields[1]), fields[2]};
    if (!is_numeric_value(t.value)) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": non-numeric value '" +
                       t.value + "'");
    }
    const auto key = pair_key(t.device, t.attribute);
    auto it = seen.find(key);
    if (it != seen.end() && it->second.first != t.value) {
      throw ParseError(source + ": conflicting values for (" + t.device + ", " + t.attribute +
                       ") on lines " + std::to_string(it->second.second) + " ('" +
                       it->second.first + "') and " + std::to_string(lineno) + " ('" + t.value +
                       "')");
    }
    seen.emplace(key, std::make_pair(t.value, lineno));
    triples.push_back(std::move(t));
  }
  if (triples.empty()) throw ParseError(source + ": empty KB");
  return KbIndex::build(std::move(triples));
}

KbIndex load_kb(const std::filesystem::path& path) {
  return parse_kb(read_file(path), path.string());
}

void write_kb(const std::filesystem::path& path, const KbIndex& kb) {
  std::string out = "device,attribute,value\n";
  for (const auto& t : kb.triples()) out += t.device + "," + t.attribute + "," + t.value + "\n";
  write_file(path, out);
}

std::vector<std::string> value_vocab(const KbIndex& kb) { return kb.values(); }

}  // namespace moelm
