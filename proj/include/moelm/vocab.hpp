#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace moelm {

using TokenId = std::uint32_t;

inline constexpr std::string_view kUnk = "<UNK>";
inline constexpr std::string_view kEoc = "<EOC>";
inline constexpr std::string_view kEor = "<EOR>";
inline constexpr std::string_view kPause = "<pause>";
inline constexpr std::string_view kNewline = "<newline>";
inline constexpr std::string_view kClient = "<CLIENT>";
inline constexpr std::string_view kAgent = "<AGENT>";

bool is_reserved_token(std::string_view word);

// Word <-> id table. Ids 0..6 are the reserved tokens in a fixed order;
// lookups of unknown words return <UNK>.
class Vocab {
 public:
  static constexpr TokenId kUnkId = 0;
  static constexpr TokenId kEocId = 1;
  static constexpr TokenId kEorId = 2;
  static constexpr TokenId kPauseId = 3;
  static constexpr TokenId kNewlineId = 4;
  static constexpr TokenId kClientId = 5;
  static constexpr TokenId kAgentId = 6;
  static constexpr std::size_t kReservedCount = 7;

  Vocab();

  // Counts non-reserved words over the streams and keeps those with
  // frequency >= min_freq, ordered by descending count then lexicographically.
  static Vocab build(const std::vector<std::vector<std::string>>& streams, std::size_t min_freq);
  // Rebuilds from a stored word list; the reserved prefix must be intact.
  static Vocab from_words(const std::vector<std::string>& words);

  TokenId id(std::string_view word) const;
  std::optional<TokenId> find(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word).has_value(); }
  const std::string& word(TokenId id) const;

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  void add(std::string word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace moelm
