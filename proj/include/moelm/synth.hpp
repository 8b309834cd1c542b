#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "moelm/corpus.hpp"
#include "moelm/kb.hpp"

namespace moelm {

// How the synthetic generator renders one attribute.
struct AttributeSpec {
  std::string id;
  std::string unit;
  std::vector<std::string> choices;  // discrete values; empty means use the grid
  double lo = 0, hi = 0, step = 1;
  int decimals = 0;
};

const std::vector<AttributeSpec>& synth_attribute_catalog();
const AttributeSpec* find_attribute_spec(const std::string& id);

struct SynthKbConfig {
  std::size_t n_devices = 20;
  std::size_t n_attributes = 5;
  std::uint64_t seed = 1;
};

// Devices get a brand, a family word and a model code; family and code are
// unique per device.
KbIndex synth_kb(const SynthKbConfig& config);

// Utterance templates. Placeholders: {device} {attr} {value} {unit} {name}.
struct DialogueTemplates {
  std::vector<std::string> client_greetings;
  std::vector<std::string> agent_greetings;
  std::vector<std::string> agent_names;
  std::vector<std::string> questions;
  std::vector<std::string> followups;
  std::vector<std::string> holds;
  std::vector<std::string> answers;
  std::vector<std::string> client_acks;
  std::vector<std::string> anything_else;
  std::vector<std::string> client_done;
  std::vector<std::string> farewells;
  std::vector<std::string> troubles;
  std::vector<std::string> trouble_fixes;
  double trouble_frac = 0.05;
  double hold_prob = 0.3;
  double device_drop_prob = 0.2;

  static DialogueTemplates defaults();
};

struct ValuePosition {
  int turn = 0;
  int token_index = 0;
  std::string value;
};

struct ManifestEntry {
  std::string dialogue_id;
  std::vector<ValuePosition> value_positions;
};

struct SynthCorpus {
  std::vector<Dialogue> dialogues;
  std::vector<ManifestEntry> manifest;
  std::size_t agent_tokens = 0;
  std::size_t value_tokens = 0;

  double value_token_fraction() const {
    return agent_tokens == 0 ? 0.0 : static_cast<double>(value_tokens) / agent_tokens;
  }
};

// Dialogues mixing small talk with device-spec questions answered from the
// KB. `devices` restricts which devices are discussed (empty = all). Each
// dialogue uses its own seed stream derived from `seed`.
SynthCorpus synth_corpus(const KbIndex& kb, const DialogueTemplates& templates,
                         std::uint64_t seed, std::size_t n_dialogues,
                         const std::vector<std::string>& devices = {},
                         const std::string& id_prefix = "d");

struct CorpusSplitConfig {
  std::size_t n_dialogues = 2000;
  double dev_frac = 0.1;
  double test_frac = 0.1;
  // Devices that never occur in training dialogues (new releases).
  double heldout_device_frac = 0.2;
};

struct CorpusSplits {
  SynthCorpus train;
  SynthCorpus dev;
  SynthCorpus test;
  std::vector<std::string> heldout_devices;
};

CorpusSplits synth_corpus_splits(const KbIndex& kb, const DialogueTemplates& templates,
                                 std::uint64_t seed, const CorpusSplitConfig& config);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& manifest);

}  // namespace moelm
