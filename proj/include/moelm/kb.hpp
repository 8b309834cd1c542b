#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace moelm {

struct Triple {
  std::string device;
  std::string attribute;
  std::string value;

  friend bool operator==(const Triple&, const Triple&) = default;
};

// Immutable triple store. Devices, attributes and values are each kept in
// lexicographic order so model heads built against the index are stable.
class KbIndex {
 public:
  struct Entry {
    std::size_t device;
    std::size_t attribute;
    std::size_t value;
  };

  KbIndex() = default;
  // Validates and indexes triples. Exact duplicates collapse; conflicting
  // values for the same (device, attribute) throw.
  static KbIndex build(std::vector<Triple> triples);

  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<Entry>& entries() const { return entries_; }
  const std::vector<std::string>& devices() const { return devices_; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  const std::vector<std::string>& values() const { return values_; }

  std::optional<std::size_t> device_index(std::string_view device) const;
  std::optional<std::size_t> attribute_index(std::string_view attribute) const;
  std::optional<std::size_t> value_index(std::string_view value) const;

  std::optional<std::string> lookup(std::string_view device, std::string_view attribute) const;

  bool empty() const { return triples_.empty(); }
  friend bool operator==(const KbIndex& a, const KbIndex& b) { return a.triples_ == b.triples_; }

 private:
  std::vector<Triple> triples_;
  std::vector<Entry> entries_;
  std::vector<std::string> devices_;
  std::vector<std::string> attributes_;
  std::vector<std::string> values_;
  std::unordered_map<std::string, std::size_t> device_ix_;
  std::unordered_map<std::string, std::size_t> attribute_ix_;
  std::unordered_map<std::string, std::size_t> value_ix_;
  std::unordered_map<std::string, std::size_t> pair_ix_;
};

bool is_numeric_value(std::string_view s);
// Lowercases, trims and joins inner whitespace with underscores.
std::string normalize_id(std::string_view s);
// "apple_iphone_4" -> {"apple", "iphone", "4"}
std::vector<std::string> id_words(std::string_view id);

// CSV `device,attribute,value`; an optional header line is recognized when it
// reads exactly device,attribute,value.
KbIndex parse_kb(std::string_view text, const std::string& source = "<kb>");
KbIndex load_kb(const std::filesystem::path& path);
void write_kb(const std::filesystem::path& path, const KbIndex& kb);

// V_qa: sorted distinct values.
std::vector<std::string> value_vocab(const KbIndex& kb);

}  // namespace moelm
