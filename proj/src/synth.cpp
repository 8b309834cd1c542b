#include "moelm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "moelm/container.hpp"
#include "moelm/error.hpp"
#include "moelm/qa_datagen.hpp"
#include "moelm/random.hpp"

namespace moelm {
namespace {

std::string format_value(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string draw_value(const AttributeSpec& spec, Rng& rng) {
  if (!spec.choices.empty()) return rng.pick(spec.choices);
  const auto steps = static_cast<std::size_t>(std::llround((spec.hi - spec.lo) / spec.step));
  return format_value(spec.lo + spec.step * static_cast<double>(rng.index(steps + 1)),
                      spec.decimals);
}

void replace_all(std::string& s, const std::string& key, const std::string& value) {
  for (std::size_t pos = 0; (pos = s.find(key, pos)) != std::string::npos; pos += value.size()) {
    s.replace(pos, key.size(), value);
  }
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

std::string phrase(const std::string& id) { return join(id_words(id)); }

// Builds one dialogue turn by turn.
class DialogueWriter {
 public:
  void add(Speaker s, std::string text) {
    auto tokens = normalize(text);
    if (s == Speaker::Agent) agent_tokens += tokens.size();
    dialogue.turns.push_back({s, std::move(text)});
  }

  // Agent utterance with a KB value; records the value's token position.
  void add_answer(std::string tmpl, const std::string& value) {
    const auto at = tmpl.find("{value}");
    if (at == std::string::npos) throw Error("answer template without {value}");
    const std::string prefix = tmpl.substr(0, at);
    const int index = static_cast<int>(normalize(prefix).size());
    replace_all(tmpl, "{value}", value);
    positions.push_back({static_cast<int>(dialogue.turns.size()), index, value});
    add(Speaker::Agent, tmpl);
  }

  Dialogue dialogue;
  std::vector<ValuePosition> positions;
  std::size_t agent_tokens = 0;
};

}  // namespace

const std::vector<AttributeSpec>& synth_attribute_catalog() {
  static const std::vector<AttributeSpec> catalog = {
      {"battery_talk_time", "hours", {}, 5.0, 25.0, 0.1, 1},
      {"camera_megapixels", "mp", {"2.0", "3.2", "5.0", "8.0", "12.0", "13.0", "16.0", "20.7"}},
      {"internal_storage", "gb", {"4", "8", "16", "32", "64", "128"}},
      {"cpu_maximum_frequency", "ghz", {}, 1.0, 2.6, 0.1, 1},
      {"battery_capacity", "mah", {}, 1500, 4000, 10, 0},
      {"internal_ram", "mb", {"512", "768", "1024", "2048", "3072"}},
      {"battery_standby_time", "hours", {}, 150, 600, 5, 0},
      {"screen_size", "inches", {}, 3.5, 6.4, 0.1, 1},
      {"primary_screen_physical_height", "mm", {}, 100.0, 160.0, 0.1, 1},
      {"primary_screen_physical_width", "mm", {}, 50.0, 80.0, 0.1, 1},
      {"secondary_camera_megapixels", "mp", {"0.3", "1.2", "1.3", "2.0", "5.0"}},
      {"removable_memory_maximum_size", "gb", {"16", "32", "64", "128", "256"}},
  };
  return catalog;
}

const AttributeSpec* find_attribute_spec(const std::string& id) {
  for (const auto& s : synth_attribute_catalog()) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

KbIndex synth_kb(const SynthKbConfig& config) {
  static const std::vector<std::string> brands = {
      "apple", "samsung", "htc", "lg", "motorola", "nokia", "sony", "blackberry", "huawei", "zte"};
  static const std::vector<std::string> families = {
      "iphone", "galaxy", "evo", "optimus", "droid", "lumia", "xperia", "bold", "ascend",
      "blade", "photon", "prevail", "desire", "atrix", "razr", "nexus", "curve", "torch",
      "sensation", "thunderbolt", "incredible", "vivid", "rezound", "spectrum", "revolution",
      "epic", "captivate", "infuse", "focus", "aria", "inspire", "flyer", "rhyme", "amaze",
      "venue", "triumph", "nitro", "esteem", "stratosphere", "fascinate"};
  static const std::vector<std::string> codes = {
      "4s", "3g", "s3", "x2", "q", "plus", "mini", "max", "pro", "lte", "note", "hd", "z",
      "v", "m", "4g", "xl", "s2", "ii", "iii", "slide", "touch", "neo", "duo", "prime",
      "ultra", "lite", "go", "one", "star", "x10", "s4", "g2", "e7", "n8", "c3", "k1", "r9",
      "u8", "w7"};
  const auto& catalog = synth_attribute_catalog();
  if (config.n_devices == 0 || config.n_devices > families.size()) {
    throw ConfigError("synth_kb: n_devices must be in [1, " + std::to_string(families.size()) + "]");
  }
  if (config.n_attributes == 0 || config.n_attributes > catalog.size()) {
    throw ConfigError("synth_kb: n_attributes must be in [1, " + std::to_string(catalog.size()) + "]");
  }
  Rng rng(config.seed);
  auto fam = families;
  auto cod = codes;
  rng.shuffle(fam);
  rng.shuffle(cod);
  std::vector<Triple> triples;
  for (std::size_t d = 0; d < config.n_devices; ++d) {
    const std::string device = brands[d % brands.size()] + "_" + fam[d] + "_" + cod[d];
    for (std::size_t a = 0; a < config.n_attributes; ++a) {
      triples.push_back({device, catalog[a].id, draw_value(catalog[a], rng)});
    }
  }
  return KbIndex::build(std::move(triples));
}

DialogueTemplates DialogueTemplates::defaults() {
  DialogueTemplates t;
  t.client_greetings = {"hi", "hello", "hi there", "hello , i have a question", "hey",
                        "good morning"};
  t.agent_greetings = {"hi , how can i help you today ?", "hello , my name is {name} . how can i help ?",
                       "hi , what can i do for you ?",
                       "hello ! how may i help you ?"};
  t.agent_names = {"brandon", "maria", "kevin", "sarah", "james", "linda", "omar", "julie", "tom",
                   "anna", "pedro", "grace"};
  t.questions = {"what is the {attr} of my {device} ?",
                 "how much {attr} does the {device} have ?",
                 "can you tell me the {attr} on the {device} ?",
                 "i would like to know the {attr} for the {device}",
                 "what 's the {attr} on {device}",
                 "{device} {attr} ?",
                 "i was wondering what the {attr} of the {device} is"};
  t.followups = {"what about the {attr} of the {device} ?", "and the {attr} on the {device} ?",
                 "also , what is the {attr} of the {device} ?"};
  t.holds = {"let me check that for you .", "one moment please .",
             "that 's a great question , let me look that up !", "sure , give me a second ."};
  t.answers = {"the {device} has a {attr} of {value} {unit} .",
               "the {attr} of the {device} is {value} {unit} .",
               "{attr} : {value} {unit} max .",
               "it is {value} {unit} .",
               "the {device} comes with {value} {unit} ."};
  t.client_acks = {"ok", "great , thanks", "awesome", "ok thank you", "cool"};
  t.anything_else = {"is there anything else i can help you with ?", "anything else ?"};
  t.client_done = {"no , that 's all", "no thanks", "that 's it , thank you"};
  t.farewells = {"you are welcome !", "thank you for contacting us , bye !",
                 "glad i could help !"};
  t.troubles = {"my phone keeps freezing", "my screen will not turn on",
                "i can not send text messages", "my battery drains really fast",
                "how do i change the ringtone ?"};
  t.trouble_fixes = {
      "i am sorry to hear that . please turn off the device and remove the battery . wait for "
      "ten seconds and insert the battery again . then hold the power key until the screen "
      "lights up . if the problem continues , a master reset may be needed .",
      "no problem . go to settings and select sound . tap on phone ringtone and choose the one "
      "you like . press ok to save the change .",
      "let us try a soft reset first . hold the power key and the volume down key together for "
      "twenty seconds . the phone will restart on its own . please make sure that the software "
      "is up to date after the restart ."};
  return t;
}

SynthCorpus synth_corpus(const KbIndex& kb, const DialogueTemplates& templates,
                         std::uint64_t seed, std::size_t n_dialogues,
                         const std::vector<std::string>& devices, const std::string& id_prefix) {
  if (kb.empty()) throw Error("synth_corpus: empty KB");
  if (n_dialogues == 0) throw ConfigError("synth_corpus: n_dialogues must be >= 1");
  std::vector<std::string> pool = devices.empty() ? kb.devices() : devices;
  for (const auto& d : pool) {
    if (!kb.device_index(d)) throw ConfigError("synth_corpus: unknown device '" + d + "'");
  }
  const auto paraphrases = ParaphraseDict::defaults();

  SynthCorpus corpus;
  for (std::size_t i = 0; i < n_dialogues; ++i) {
    Rng rng(derive_seed(seed, i));
    DialogueWriter w;
    auto fill = [&](std::string s) {
      replace_all(s, "{name}", rng.pick(templates.agent_names));
      return s;
    };
    if (rng.bernoulli(0.8)) w.add(Speaker::Client, rng.pick(templates.client_greetings));
    w.add(Speaker::Agent, fill(rng.pick(templates.agent_greetings)));

    if (rng.bernoulli(templates.trouble_frac)) {
      w.add(Speaker::Client, rng.pick(templates.troubles));
      w.add(Speaker::Agent, rng.pick(templates.trouble_fixes));
    } else {
      const std::size_t n_questions = 1 + rng.index(4);
      std::string device = rng.pick(pool);
      for (std::size_t q = 0; q < n_questions; ++q) {
        if (q > 0 && rng.bernoulli(0.5)) device = rng.pick(pool);
        const auto& attrs = kb.attributes();
        const std::string attr = rng.pick(attrs);
        const auto value = kb.lookup(device, attr);
        if (!value) continue;
        const auto* spec = find_attribute_spec(attr);
        const std::string unit = spec ? spec->unit : "";

        std::string question = q == 0 ? rng.pick(templates.questions) : rng.pick(templates.followups);
        replace_all(question, "{device}",
                    join(paraphrase_device(id_words(device), templates.device_drop_prob, rng)));
        replace_all(question, "{attr}", join(paraphrase_attribute(attr, paraphrases, 0.0, rng)));
        w.add(Speaker::Client, question);

        if (rng.bernoulli(templates.hold_prob)) w.add(Speaker::Agent, rng.pick(templates.holds));
        std::string answer = rng.pick(templates.answers);
        replace_all(answer, "{device}", phrase(device));
        replace_all(answer, "{attr}", phrase(attr));
        replace_all(answer, "{unit}", unit);
        w.add_answer(answer, *value);
        if (q + 1 < n_questions && rng.bernoulli(0.5)) {
          w.add(Speaker::Client, rng.pick(templates.client_acks));
        }
      }
    }
    if (rng.bernoulli(0.4)) {
      w.add(Speaker::Client, rng.pick(templates.client_acks));
      w.add(Speaker::Agent, rng.pick(templates.anything_else));
      w.add(Speaker::Client, rng.pick(templates.client_done));
      w.add(Speaker::Agent, rng.pick(templates.farewells));
    }
    char id[32];
    std::snprintf(id, sizeof(id), "%s%05zu", id_prefix.c_str(), i);
    corpus.manifest.push_back({id, w.positions});
    corpus.agent_tokens += w.agent_tokens;
    corpus.value_tokens += w.positions.size();
    corpus.dialogues.push_back(std::move(w.dialogue));
  }
  return corpus;
}

CorpusSplits synth_corpus_splits(const KbIndex& kb, const DialogueTemplates& templates,
                                 std::uint64_t seed, const CorpusSplitConfig& config) {
  if (!(config.dev_frac >= 0 && config.test_frac >= 0 && config.dev_frac + config.test_frac < 1)) {
    throw ConfigError("corpus split fractions must be non-negative and sum below 1");
  }
  if (!(config.heldout_device_frac >= 0 && config.heldout_device_frac < 1)) {
    throw ConfigError("heldout_device_frac must lie in [0, 1)");
  }
  CorpusSplits out;
  Rng rng(derive_seed(seed, 100));
  auto devices = kb.devices();
  rng.shuffle(devices);
  const auto n_heldout = static_cast<std::size_t>(
      std::llround(config.heldout_device_frac * static_cast<double>(devices.size())));
  out.heldout_devices.assign(devices.begin(), devices.begin() + n_heldout);
  std::sort(out.heldout_devices.begin(), out.heldout_devices.end());
  std::vector<std::string> seen(devices.begin() + n_heldout, devices.end());
  std::sort(seen.begin(), seen.end());

  const auto n = config.n_dialogues;
  const auto n_dev = static_cast<std::size_t>(std::llround(config.dev_frac * n));
  const auto n_test = static_cast<std::size_t>(std::llround(config.test_frac * n));
  const auto n_train = n - n_dev - n_test;
  if (n_train == 0) throw ConfigError("corpus split leaves no training dialogues");
  out.train = synth_corpus(kb, templates, derive_seed(seed, 101), n_train, seen, "train");
  if (n_dev > 0) out.dev = synth_corpus(kb, templates, derive_seed(seed, 102), n_dev, {}, "dev");
  if (n_test > 0) out.test = synth_corpus(kb, templates, derive_seed(seed, 103), n_test, {}, "test");
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.dialogue_id = j.at("dialogue_id").get<std::string>();
      for (const auto& p : j.at("value_positions")) {
        e.value_positions.push_back({p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<std::string>()});
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& manifest) {
  std::string out;
  for (const auto& e : manifest) {
    nlohmann::json pos = nlohmann::json::array();
    for (const auto& p : e.value_positions) pos.push_back({p.turn, p.token_index, p.value});
    out += nlohmann::json{{"dialogue_id", e.dialogue_id}, {"value_positions", pos}}.dump();
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace moelm
