#include "moelm/vocab.hpp"

#include <algorithm>
#include <map>

#include "moelm/error.hpp"

namespace moelm {
namespace {

constexpr std::string_view kReserved[] = {kUnk, kEoc, kEor, kPause, kNewline, kClient, kAgent};

}  // namespace

bool is_reserved_token(std::string_view word) {
  return std::find(std::begin(kReserved), std::end(kReserved), word) != std::end(kReserved);
}

Vocab::Vocab() {
  for (auto w : kReserved) add(std::string(w));
}

void Vocab::add(std::string word) {
  auto [it, inserted] = index_.emplace(word, static_cast<TokenId>(words_.size()));
  if (!inserted) throw Error("duplicate vocabulary entry '" + word + "'");
  words_.push_back(std::move(word));
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& streams, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : streams) {
    for (const auto& w : s) {
      if (!is_reserved_token(w)) ++counts[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, n] : counts) {
    if (n >= min_freq) kept.emplace_back(w, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [w, n] : kept) v.add(w);
  return v;
}

Vocab Vocab::from_words(const std::vector<std::string>& words) {
  if (words.size() < kReservedCount) throw ParseError("vocabulary shorter than reserved prefix");
  for (std::size_t i = 0; i < kReservedCount; ++i) {
    if (words[i] != kReserved[i]) throw ParseError("vocabulary reserved prefix corrupted");
  }
  Vocab v;
  for (std::size_t i = kReservedCount; i < words.size(); ++i) v.add(words[i]);
  return v;
}

std::optional<TokenId> Vocab::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::id(std::string_view word) const { return find(word).value_or(kUnkId); }

const std::string& Vocab::word(TokenId id) const {
  if (id >= words_.size()) throw Error("token id " + std::to_string(id) + " out of range");
  return words_[id];
}

std::vector<TokenId> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(word(i));
  return out;
}

}  // namespace moelm
