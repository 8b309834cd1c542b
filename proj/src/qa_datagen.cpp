#include "moelm/qa_datagen.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "moelm/container.hpp"
#include "moelm/error.hpp"
#include "moelm/vocab.hpp"

namespace moelm {
namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

ParaphraseDict::ParaphraseDict(std::map<std::string, std::vector<std::string>> entries)
    : entries_(std::move(entries)) {
  for (const auto& [attr, alts] : entries_) {
    if (alts.empty()) throw ConfigError("paraphrase entry '" + attr + "' has no alternatives");
  }
}

ParaphraseDict ParaphraseDict::defaults() {
  return ParaphraseDict({
      {"battery_capacity", {"battery size"}},
      {"battery_standby_time", {"battery life"}},
      {"battery_talk_time", {"battery life"}},
      {"camera_megapixels", {"megapixel", "mega pixel", "mp", "mega pixels"}},
      {"cpu_maximum_frequency", {"cpu", "processor", "power"}},
      {"internal_ram", {"ram"}},
      {"internal_storage", {"memory"}},
      {"primary_screen_physical_height", {"screen height"}},
      {"primary_screen_physical_width", {"screen width"}},
      {"removable_memory_maximum_size",
       {"external memory", "external storage", "memory card", "sd card"}},
      {"secondary_camera_maximum_resolution", {"front camera resolution"}},
      {"secondary_camera_megapixels",
       {"front megapixel", "front mega pixel", "front mp", "front mega pixels"}},
  });
}

ParaphraseDict ParaphraseDict::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::map<std::string, std::vector<std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected attribute,alternative");
    }
    const std::string attr = normalize_id(line.substr(0, comma));
    auto words = split_words(line.substr(comma + 1));
    if (lineno == 1 && attr == "attribute") continue;
    if (words.empty()) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": empty alternative");
    std::string alt;
    for (const auto& w : words) alt += (alt.empty() ? "" : " ") + w;
    entries[attr].push_back(alt);
  }
  return ParaphraseDict(std::move(entries));
}

void ParaphraseDict::save_csv(const std::filesystem::path& path) const {
  std::string out = "attribute,alternative\n";
  for (const auto& [attr, alts] : entries_) {
    for (const auto& a : alts) out += attr + "," + a + "\n";
  }
  write_file(path, out);
}

ParaphraseDict ParaphraseDict::restricted_to(const KbIndex& kb) const {
  std::map<std::string, std::vector<std::string>> kept;
  for (const auto& [attr, alts] : entries_) {
    if (kb.attribute_index(attr)) kept.emplace(attr, alts);
  }
  return ParaphraseDict(std::move(kept));
}

const std::vector<std::string>* ParaphraseDict::find(const std::string& attribute) const {
  auto it = entries_.find(attribute);
  return it == entries_.end() ? nullptr : &it->second;
}

const std::vector<std::string>& default_attribute_list() {
  static const std::vector<std::string> attrs = {
      "battery capacity", "battery standby time", "battery talk time", "browser screen size",
      "camera digital zoom factor", "camera maximum resolution", "camera megapixels",
      "camera optical zoom factor", "cpu", "cpu maximum frequency", "internal ram",
      "internal storage", "java app usable screen size", "java max memory size",
      "native app usable screen size", "primary screen physical height",
      "primary screen physical width", "primary screen rotate", "primary screen type",
      "removable memory maximum size", "rendering screen size", "screen orientation",
      "screen size", "screen size char", "secondary camera maximum resolution",
      "secondary camera megapixels", "secondary screen physical height",
      "secondary screen physical width", "secondary screen size", "secondary screen size char",
      "secondary screen type", "sync contacts to removable memory",
      "wallpaper external screen usable size", "wallpaper internal screen usable size"};
  return attrs;
}

void GenConfig::validate() const {
  if (!(gamma_k > 0)) throw ConfigError("gamma_k must be > 0");
  if (!(gamma_n > 0)) throw ConfigError("gamma_n must be > 0");
  if (!(drop_prob >= 0 && drop_prob < 1)) throw ConfigError("drop_prob must lie in [0, 1)");
  if (!(complex_frac >= 0 && complex_frac <= 1)) throw ConfigError("complex_frac must lie in [0, 1]");
}

NoiseVocab::NoiseVocab(std::vector<std::string> words, std::vector<double> freqs)
    : words_(std::move(words)), freqs_(std::move(freqs)), sampler_(freqs_) {
  if (words_.size() != freqs_.size()) throw ShapeError("NoiseVocab: words/freqs size mismatch");
}

NoiseVocab NoiseVocab::from_dialogues(const std::vector<Dialogue>& dialogues,
                                      const std::set<std::string>& exclude) {
  std::map<std::string, double> counts;
  for (const auto& d : dialogues) {
    for (const auto& t : d.turns) {
      for (auto& w : normalize(t.text)) {
        if (!is_reserved_token(w) && !exclude.count(w)) counts[w] += 1.0;
      }
    }
  }
  if (counts.empty()) throw Error("noise vocabulary: corpus has no words");
  std::vector<std::string> words;
  std::vector<double> freqs;
  for (auto& [w, c] : counts) {
    words.push_back(w);
    freqs.push_back(c);
  }
  return NoiseVocab(std::move(words), std::move(freqs));
}

std::set<std::string> name_words(const KbIndex& kb, const ParaphraseDict& dict) {
  std::set<std::string> out;
  for (const auto& d : kb.devices()) for (auto& w : id_words(d)) out.insert(w);
  for (const auto& a : kb.attributes()) for (auto& w : id_words(a)) out.insert(w);
  for (const auto& [attr, alts] : dict.entries()) {
    for (auto& w : id_words(attr)) out.insert(w);
    for (const auto& alt : alts) {
      std::istringstream in(alt);
      for (std::string w; in >> w;) out.insert(w);
    }
  }
  return out;
}

std::vector<std::string> drop_words(const std::vector<std::string>& words, double drop_prob,
                                    Rng& rng) {
  if (words.empty()) throw Error("drop_words: nothing to paraphrase");
  if (drop_prob <= 0) return words;
  for (;;) {
    std::vector<std::string> kept;
    for (const auto& w : words) {
      if (!rng.bernoulli(drop_prob)) kept.push_back(w);
    }
    if (!kept.empty()) return kept;
  }
}

std::vector<std::string> paraphrase_device(const std::vector<std::string>& name_tokens,
                                           double drop_prob, Rng& rng) {
  return drop_words(name_tokens, drop_prob, rng);
}

std::vector<std::string> paraphrase_attribute(const std::string& attribute,
                                              const ParaphraseDict& dict, double drop_prob,
                                              Rng& rng) {
  std::vector<std::vector<std::string>> options{id_words(attribute)};
  if (const auto* alts = dict.find(attribute)) {
    for (const auto& a : *alts) options.push_back(split_words(a));
  }
  return drop_words(options[rng.index(options.size())], drop_prob, rng);
}

std::size_t sample_noise_length(double k, double n, Rng& rng) {
  const double l = std::round(rng.gamma(k, n));
  return l <= 0 ? 0 : static_cast<std::size_t>(l);
}

std::vector<std::string> sample_noise(const NoiseVocab& vocab, Rng& rng, double k, double n) {
  const std::size_t l = sample_noise_length(k, n, rng);
  std::vector<std::string> out;
  out.reserve(l);
  for (std::size_t i = 0; i < l; ++i) out.push_back(vocab.sample(rng));
  return out;
}

SimpleQuestion gen_simple_question(const KbIndex& kb, const ParaphraseDict& dict,
                                   const NoiseVocab& noise, const GenConfig& cfg, Rng& rng) {
  const auto& entry = kb.triples()[rng.index(kb.triples().size())];
  SimpleQuestion q;
  q.device = entry.device;
  q.attribute = entry.attribute;
  q.device_words = paraphrase_device(id_words(entry.device), cfg.drop_prob, rng);
  q.attribute_words = paraphrase_attribute(entry.attribute, dict, cfg.drop_prob, rng);
  q.noise_words = sample_noise(noise, rng, cfg.gamma_k, cfg.gamma_n);
  q.tokens = q.device_words;
  q.tokens.insert(q.tokens.end(), q.attribute_words.begin(), q.attribute_words.end());
  q.tokens.insert(q.tokens.end(), q.noise_words.begin(), q.noise_words.end());
  rng.shuffle(q.tokens);
  return q;
}

GeneratedQuestion gen_datapoint(const KbIndex& kb, const ParaphraseDict& dict,
                                const NoiseVocab& noise, const GenConfig& cfg, Rng& rng) {
  if (kb.empty()) throw Error("gen_datapoint: empty KB");
  GeneratedQuestion g;
  g.complex = rng.bernoulli(cfg.complex_frac);
  g.parts.push_back(gen_simple_question(kb, dict, noise, cfg, rng));
  if (g.complex) g.parts.push_back(gen_simple_question(kb, dict, noise, cfg, rng));
  for (const auto& p : g.parts) {
    g.example.question.insert(g.example.question.end(), p.tokens.begin(), p.tokens.end());
  }
  g.example.device = g.parts.back().device;
  g.example.attribute = g.parts.back().attribute;
  return g;
}

QaSplit gen_dataset(const KbIndex& kb, const ParaphraseDict& dict, const NoiseVocab& noise,
                    const GenConfig& cfg, std::size_t n_train, std::size_t n_dev) {
  cfg.validate();
  if (n_train == 0) throw ConfigError("gen_dataset: n must be >= 1");
  QaSplit split;
  Rng train_rng(derive_seed(cfg.seed, 0));
  Rng dev_rng(derive_seed(cfg.seed, 1));
  for (std::size_t i = 0; i < n_train; ++i) {
    auto g = gen_datapoint(kb, dict, noise, cfg, train_rng);
    split.train_complex += g.complex;
    split.train.push_back(std::move(g.example));
  }
  for (std::size_t i = 0; i < n_dev; ++i) {
    split.dev.push_back(gen_datapoint(kb, dict, noise, cfg, dev_rng).example);
  }
  return split;
}

}  // namespace moelm
