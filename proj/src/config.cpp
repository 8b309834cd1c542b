#include "moelm/config.hpp"

#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "moelm/container.hpp"
#include "moelm/error.hpp"

namespace moelm {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside quotes.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

double to_double(const std::string& v) {
  std::size_t used = 0;
  double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

std::size_t to_size(const std::string& v) {
  if (v.empty() || v[0] == '-') throw std::invalid_argument("expected a non-negative integer");
  std::size_t used = 0;
  auto n = std::stoull(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected an integer");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("expected true or false");
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  if (v.find('"') != std::string::npos) throw std::invalid_argument("unbalanced quotes");
  return v;
}

std::string num(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

#define MOELM_SIZE(member) \
  {[](RunConfig& c, const std::string& v) { c.member = to_size(v); }, \
   [](const RunConfig& c) { return std::to_string(c.member); }}
#define MOELM_DOUBLE(member) \
  {[](RunConfig& c, const std::string& v) { c.member = to_double(v); }, \
   [](const RunConfig& c) { return num(c.member); }}
#define MOELM_BOOL(member) \
  {[](RunConfig& c, const std::string& v) { c.member = to_bool(v); }, \
   [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define MOELM_PATH(member) \
  {[](RunConfig& c, const std::string& v) { c.member = unquote(v); }, \
   [](const RunConfig& c) { return quote(c.member.string()); }}

const std::map<std::string, Field>& schema() {
  static const std::map<std::string, Field> fields = {
      {"seed", {[](RunConfig& c, const std::string& v) { c.seed = to_size(v); },
                [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"paths.work_dir", MOELM_PATH(paths.work_dir)},
      {"paths.data_dir", MOELM_PATH(paths.data_dir)},
      {"paths.model_dir", MOELM_PATH(paths.model_dir)},
      {"paths.kb", MOELM_PATH(paths.kb)},
      {"paths.paraphrases", MOELM_PATH(paths.paraphrases)},
      {"synth.devices", MOELM_SIZE(synth.devices)},
      {"synth.attributes", MOELM_SIZE(synth.attributes)},
      {"synth.dialogues", MOELM_SIZE(synth.dialogues)},
      {"synth.dev_frac", MOELM_DOUBLE(synth.dev_frac)},
      {"synth.test_frac", MOELM_DOUBLE(synth.test_frac)},
      {"synth.heldout_device_frac", MOELM_DOUBLE(synth.heldout_device_frac)},
      {"chat.emb_dim", MOELM_SIZE(chat.emb_dim)},
      {"chat.hidden", MOELM_SIZE(chat.hidden)},
      {"chat.min_freq", MOELM_SIZE(chat.min_freq)},
      {"chat.max_response_len", MOELM_SIZE(chat.max_response_len)},
      {"chat.max_context", MOELM_SIZE(chat.max_context)},
      {"chat.lr", MOELM_DOUBLE(chat.lr)},
      {"chat.epochs", MOELM_SIZE(chat.epochs)},
      {"chat.finetune_lr", MOELM_DOUBLE(chat.finetune_lr)},
      {"chat.finetune_epochs", MOELM_SIZE(chat.finetune_epochs)},
      {"chat.clip_norm", MOELM_DOUBLE(chat.clip_norm)},
      {"qa.emb_dim", MOELM_SIZE(qa.emb_dim)},
      {"qa.hidden", MOELM_SIZE(qa.hidden)},
      {"qa.lr", MOELM_DOUBLE(qa.lr)},
      {"qa.epochs", MOELM_SIZE(qa.epochs)},
      {"qa.n_train", MOELM_SIZE(qa.n_train)},
      {"qa.n_dev", MOELM_SIZE(qa.n_dev)},
      {"qa.renormalize", MOELM_BOOL(qa.renormalize)},
      {"datagen.gamma_k", MOELM_DOUBLE(datagen.gamma_k)},
      {"datagen.gamma_n", MOELM_DOUBLE(datagen.gamma_n)},
      {"datagen.drop_prob", MOELM_DOUBLE(datagen.drop_prob)},
      {"datagen.complex_frac", MOELM_DOUBLE(datagen.complex_frac)},
      {"gate.lr", MOELM_DOUBLE(gate.lr)},
      {"gate.epochs", MOELM_SIZE(gate.epochs)},
      {"gate.lambda", MOELM_DOUBLE(gate.lambda)},
      {"gate.beta", MOELM_DOUBLE(gate.beta)},
      {"gate.b_init", MOELM_DOUBLE(gate.b_init)},
      {"gate.qa_view", {[](RunConfig& c, const std::string& v) { c.gate.qa_view = parse_policy(unquote(v)); },
                        [](const RunConfig& c) { return quote(policy_name(c.gate.qa_view)); }}},
      {"decode.branch_limit", MOELM_SIZE(decode.branch_limit)},
      {"decode.max_len", MOELM_SIZE(decode.max_len)},
      {"decode.max_continuations", MOELM_SIZE(decode.max_continuations)},
      {"decode.max_expansions", MOELM_SIZE(decode.max_expansions)},
      {"decode.exact_mode", MOELM_BOOL(decode.exact_mode)},
      {"eval.split", {[](RunConfig& c, const std::string& v) { c.eval.split = unquote(v); },
                      [](const RunConfig& c) { return quote(c.eval.split); }}},
      {"eval.device_spec_only", MOELM_BOOL(eval.device_spec_only)},
  };
  return fields;
}

#undef MOELM_SIZE
#undef MOELM_DOUBLE
#undef MOELM_BOOL
#undef MOELM_PATH

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  const auto& fields = schema();
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      bool known = false;
      for (const auto& [k, _] : fields) known |= k.rfind(section + ".", 0) == 0;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    auto it = fields.find(full);
    if (it == fields.end()) throw ConfigError(where + "unknown key '" + full + "'");
    if (auto prev = seen.find(full); prev != seen.end()) {
      throw ConfigError(where + "duplicate key '" + full + "' (first set on line " +
                        std::to_string(prev->second) + ")");
    }
    seen[full] = lineno;
    try {
      it->second.set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + full + ": " + e.what());
    } catch (const std::exception& e) {
      throw ConfigError(where + full + ": bad value '" + value + "' (" + e.what() + ")");
    }
  }
  return cfg;
}

void RunConfig::resolve(const std::filesystem::path& base) {
  auto abs = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = (base / p).lexically_normal();
  };
  abs(paths.work_dir);
  if (paths.data_dir.empty()) paths.data_dir = paths.work_dir / "data";
  if (paths.model_dir.empty()) {
    const char* env = std::getenv("MOELM_MODEL_DIR");
    paths.model_dir = env && *env ? std::filesystem::path(env) : paths.work_dir / "models";
  }
  abs(paths.data_dir);
  abs(paths.model_dir);
  if (paths.kb.empty()) paths.kb = paths.data_dir / "kb.csv";
  if (paths.paraphrases.empty()) paths.paraphrases = paths.data_dir / "paraphrases.csv";
  abs(paths.kb);
  abs(paths.paraphrases);
}

void RunConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw ConfigError(std::string(name) + " must be > 0");
  };
  positive(chat.lr, "chat.lr");
  positive(chat.finetune_lr, "chat.finetune_lr");
  positive(qa.lr, "qa.lr");
  positive(gate.lr, "gate.lr");
  if (chat.emb_dim == 0 || chat.hidden == 0) throw ConfigError("chat sizes must be >= 1");
  if (qa.emb_dim == 0 || qa.hidden == 0) throw ConfigError("qa sizes must be >= 1");
  if (chat.min_freq == 0) throw ConfigError("chat.min_freq must be >= 1");
  if (chat.max_response_len == 0) throw ConfigError("chat.max_response_len must be >= 1");
  if (chat.clip_norm < 0) throw ConfigError("chat.clip_norm must be >= 0");
  if (gate.lambda < 0) throw ConfigError("gate.lambda must be >= 0");
  if (!(gate.beta > 0)) throw ConfigError("gate.beta must be > 0");
  if (qa.n_train == 0 || qa.n_dev == 0) throw ConfigError("qa.n_train and qa.n_dev must be >= 1");
  if (synth.dialogues == 0) throw ConfigError("synth.dialogues must be >= 1");
  if (eval.split != "train" && eval.split != "dev" && eval.split != "test") {
    throw ConfigError("eval.split must be train, dev or test");
  }
  datagen.validate();
  decode.validate();
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, field] : schema()) {
    if (key.find('.') == std::string::npos) out += key + " = " + field.get(*this) + "\n";
  }
  std::string section;
  for (const auto& [key, field] : schema()) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) continue;
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += name + " = " + field.get(*this) + "\n";
  }
  return out;
}

std::string RunConfig::hash() const { return sha256_hex(to_text()); }

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  RunConfig cfg = parse_config(text, path.string());
  cfg.resolve(std::filesystem::absolute(path).parent_path());
  cfg.validate();
  return cfg;
}

}  // namespace moelm
