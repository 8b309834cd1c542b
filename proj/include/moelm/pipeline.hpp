#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moelm/chat_model.hpp"
#include "moelm/config.hpp"
#include "moelm/eval.hpp"
#include "moelm/kb.hpp"
#include "moelm/moe.hpp"
#include "moelm/qa_model.hpp"

namespace moelm {

using Logger = std::function<void(const std::string&)>;

// File layout under the configured data and model directories.
struct Artifacts {
  explicit Artifacts(const RunConfig& cfg);

  std::filesystem::path kb;
  std::filesystem::path paraphrases;
  std::filesystem::path qa_train;
  std::filesystem::path qa_dev;
  std::filesystem::path chat;
  std::filesystem::path qa;
  std::filesystem::path gate;
  std::filesystem::path eval;
  std::filesystem::path records;
  std::filesystem::path data_dir;

  std::filesystem::path dialogues(const std::string& split) const;
  std::filesystem::path manifest(const std::string& split) const;
};

void run_synth(const RunConfig& cfg, const Logger& log = {});
void run_gen_qa(const RunConfig& cfg, const Logger& log = {});
void run_train_chat(const RunConfig& cfg, const Logger& log = {});
void run_train_qa(const RunConfig& cfg, const Logger& log = {});
void run_train_gate(const RunConfig& cfg, const Logger& log = {});
// Writes the full comparison to the eval artifact and returns it.
nlohmann::json run_eval(const RunConfig& cfg, const Logger& log = {}, bool force = false);
// Reports for one filter: {"chat": PplReport, "integrated": PplReport}.
nlohmann::json run_eval_filter(const RunConfig& cfg, PplFilter filter, const Logger& log = {},
                               bool force = false);

// Trained experts, KB and gate ready for decoding.
// Heap-held so the integrated model's references survive moves.
struct ModelBundle {
  std::unique_ptr<KbIndex> kb;
  std::unique_ptr<ChatModel> chat;
  std::unique_ptr<QaModel> qa;
  GateCheckpoint gate;
  std::unique_ptr<IntegratedModel> integrated;
};

// force skips the check that the gate was trained against these experts.
ModelBundle load_models(const RunConfig& cfg, bool force = false);

PairOptions pair_options(const RunConfig& cfg);
std::vector<DialogueSample> load_split_pairs(const RunConfig& cfg, const std::string& split,
                                             bool device_spec_only);
EvalSet load_eval_set(const RunConfig& cfg, const std::string& split, bool device_spec_only);

// records/<stage>.json: config hash, seed and content hashes of the stage's
// inputs and outputs.
void write_record(const RunConfig& cfg, const std::string& stage,
                  const std::vector<std::filesystem::path>& inputs,
                  const std::vector<std::filesystem::path>& outputs);

}  // namespace moelm
