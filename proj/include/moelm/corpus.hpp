#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace moelm {

enum class Speaker { Client, Agent };

std::string_view speaker_name(Speaker s);
Speaker parse_speaker(std::string_view s);

struct Turn {
  Speaker speaker;
  std::string text;
};

struct Dialogue {
  std::vector<Turn> turns;
};

// Where a response token came from in its dialogue; markers have turn = -1.
struct TokenSource {
  int turn = -1;
  int index = -1;
};

struct DialogueSample {
  std::vector<std::string> context;   // ends with <EOC>
  std::vector<std::string> response;  // ends with <EOR>
  std::vector<TokenSource> response_source;
};

// Lowercases and splits on whitespace; punctuation becomes separate tokens,
// decimal numbers ("8.0") and alphanumeric runs stay whole, and clitics
// ("'s") are split off the preceding word.
std::vector<std::string> normalize(std::string_view text);

bool is_number_token(std::string_view token);

struct PairOptions {
  std::size_t max_response_len = 30;
};

// One sample per agent response segment. Consecutive agent utterances form a
// turn; every utterance but the last in a turn ends with <pause>. Utterances
// longer than max_response_len are split at sentence boundaries, each
// non-final segment ending with <newline>.
std::vector<DialogueSample> extract_pairs(const Dialogue& dialogue, const PairOptions& options = {});

bool is_device_spec_keyword(std::string_view token);
bool is_device_spec_response(const std::vector<std::string>& response);
std::vector<DialogueSample> select_device_spec_pairs(const std::vector<DialogueSample>& samples);

// JSON-lines I/O.
std::vector<Dialogue> read_dialogues(const std::filesystem::path& path);
void write_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues);
std::vector<DialogueSample> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, const std::vector<DialogueSample>& samples);

}  // namespace moelm
