#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "moelm/corpus.hpp"
#include "moelm/kb.hpp"
#include "moelm/qa_model.hpp"
#include "moelm/random.hpp"

namespace moelm {

// attribute id -> alternative phrasings (space separated words).
class ParaphraseDict {
 public:
  ParaphraseDict() = default;
  explicit ParaphraseDict(std::map<std::string, std::vector<std::string>> entries);

  // The handcrafted attribute paraphrase table.
  static ParaphraseDict defaults();
  static ParaphraseDict load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;

  // Keeps only entries whose attribute occurs in kb.
  ParaphraseDict restricted_to(const KbIndex& kb) const;

  const std::vector<std::string>* find(const std::string& attribute) const;
  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

// Every word of a device id, an attribute id or a listed phrasing. Noise
// drawn from these could contradict the question's label.
std::set<std::string> name_words(const KbIndex& kb, const ParaphraseDict& dict);

// The 34 numeric attributes of the device KB (canonical phrasings).
const std::vector<std::string>& default_attribute_list();

struct GenConfig {
  double gamma_k = 2.0;   // shape
  double gamma_n = 1.5;   // scale
  double drop_prob = 0.3;
  double complex_frac = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
};

// Word frequency table used to draw noise words.
class NoiseVocab {
 public:
  NoiseVocab(std::vector<std::string> words, std::vector<double> freqs);
  // Words in `exclude` are left out of the table.
  static NoiseVocab from_dialogues(const std::vector<Dialogue>& dialogues,
                                   const std::set<std::string>& exclude = {});

  const std::string& sample(Rng& rng) const { return words_[sampler_(rng)]; }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<double>& freqs() const { return freqs_; }

 private:
  std::vector<std::string> words_;
  std::vector<double> freqs_;
  DiscreteSampler sampler_;
};

// Drops each word independently with drop_prob, redrawing until at least one
// word survives.
std::vector<std::string> drop_words(const std::vector<std::string>& words, double drop_prob,
                                    Rng& rng);

std::vector<std::string> paraphrase_device(const std::vector<std::string>& name_tokens,
                                           double drop_prob, Rng& rng);
// Uniform choice among the canonical phrasing and the dictionary
// alternatives, followed by word dropping.
std::vector<std::string> paraphrase_attribute(const std::string& attribute,
                                              const ParaphraseDict& dict, double drop_prob,
                                              Rng& rng);

// l = round(Gamma(shape k, scale n)) clamped at 0.
std::size_t sample_noise_length(double k, double n, Rng& rng);
std::vector<std::string> sample_noise(const NoiseVocab& vocab, Rng& rng, double k, double n);

struct SimpleQuestion {
  std::vector<std::string> device_words;
  std::vector<std::string> attribute_words;
  std::vector<std::string> noise_words;
  std::vector<std::string> tokens;  // shuffled union
  std::string device;
  std::string attribute;
};

struct GeneratedQuestion {
  QaExample example;
  bool complex = false;
  std::vector<SimpleQuestion> parts;
};

SimpleQuestion gen_simple_question(const KbIndex& kb, const ParaphraseDict& dict,
                                   const NoiseVocab& noise, const GenConfig& cfg, Rng& rng);
// With probability complex_frac two simple questions are concatenated and the
// label is the second one's (device, attribute).
GeneratedQuestion gen_datapoint(const KbIndex& kb, const ParaphraseDict& dict,
                                const NoiseVocab& noise, const GenConfig& cfg, Rng& rng);

struct QaSplit {
  std::vector<QaExample> train;
  std::vector<QaExample> dev;
  std::size_t train_complex = 0;
};

// Train and dev are drawn from disjoint seed streams of cfg.seed.
QaSplit gen_dataset(const KbIndex& kb, const ParaphraseDict& dict, const NoiseVocab& noise,
                    const GenConfig& cfg, std::size_t n_train, std::size_t n_dev);

}  // namespace moelm
