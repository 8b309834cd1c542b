#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "moelm/decoder.hpp"
#include "moelm/moe.hpp"
#include "moelm/qa_datagen.hpp"

namespace moelm {

struct RunConfig {
  std::uint64_t seed = 7;

  struct Paths {
    std::filesystem::path work_dir = "run";
    std::filesystem::path data_dir;   // default work_dir/data
    std::filesystem::path model_dir;  // default $MOELM_MODEL_DIR, else work_dir/models
    std::filesystem::path kb;         // default data_dir/kb.csv
    std::filesystem::path paraphrases;  // default data_dir/paraphrases.csv
  } paths;

  struct Synth {
    std::size_t devices = 20;
    std::size_t attributes = 5;
    std::size_t dialogues = 2000;
    double dev_frac = 0.1;
    double test_frac = 0.1;
    double heldout_device_frac = 0.2;
  } synth;

  struct Chat {
    std::size_t emb_dim = 32;
    std::size_t hidden = 64;
    std::size_t min_freq = 2;
    std::size_t max_response_len = 30;
    std::size_t max_context = 0;  // most recent context tokens kept; 0 keeps all
    double lr = 0.01;
    std::size_t epochs = 6;
    double finetune_lr = 0.001;
    std::size_t finetune_epochs = 2;
    double clip_norm = 5.0;
  } chat;

  struct Qa {
    std::size_t emb_dim = 32;
    std::size_t hidden = 64;
    double lr = 0.01;
    std::size_t epochs = 4;
    std::size_t n_train = 50000;
    std::size_t n_dev = 2000;
    bool renormalize = true;
  } qa;

  GenConfig datagen;

  struct Gate {
    double lr = 0.01;
    std::size_t epochs = 5;
    double lambda = 1e-4;
    double beta = 100.0;
    double b_init = 2.0;
    QaViewPolicy qa_view = QaViewPolicy::LastClientUtterance;
  } gate;

  DecodeConfig decode;

  struct Eval {
    std::string split = "test";
    bool device_spec_only = true;
  } eval;

  // Fills defaulted paths and makes relative ones absolute against base.
  void resolve(const std::filesystem::path& base);
  void validate() const;
  // Canonical key = value dump; parse(to_text()) round-trips.
  std::string to_text() const;
  std::string hash() const;
};

RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
// Parses, resolves paths against the file's directory and validates.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace moelm
