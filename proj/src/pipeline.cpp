#include "moelm/pipeline.hpp"

#include <unordered_set>

#include "moelm/container.hpp"
#include "moelm/error.hpp"
#include "moelm/qa_datagen.hpp"
#include "moelm/random.hpp"
#include "moelm/synth.hpp"

namespace moelm {
namespace fs = std::filesystem;

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

void require_file(const fs::path& p, const char* produced_by) {
  if (!fs::exists(p)) {
    throw ConfigError("missing " + p.string() + " (run " + produced_by + " first)");
  }
}

std::vector<std::vector<std::string>> dialogue_streams(const std::vector<Dialogue>& dialogues) {
  std::vector<std::vector<std::string>> streams;
  for (const auto& d : dialogues) {
    for (const auto& t : d.turns) streams.push_back(normalize(t.text));
  }
  return streams;
}

}  // namespace

Artifacts::Artifacts(const RunConfig& cfg)
    : kb(cfg.paths.kb),
      paraphrases(cfg.paths.paraphrases),
      qa_train(cfg.paths.data_dir / "qa_train.jsonl"),
      qa_dev(cfg.paths.data_dir / "qa_dev.jsonl"),
      chat(cfg.paths.model_dir / "chat.ckpt"),
      qa(cfg.paths.model_dir / "qa.ckpt"),
      gate(cfg.paths.model_dir / "gate.ckpt"),
      eval(cfg.paths.work_dir / "eval.json"),
      records(cfg.paths.work_dir / "records"),
      data_dir(cfg.paths.data_dir) {}

fs::path Artifacts::dialogues(const std::string& split) const {
  return data_dir / (split + ".dialogues.jsonl");
}

fs::path Artifacts::manifest(const std::string& split) const {
  return data_dir / (split + ".manifest.jsonl");
}

void write_record(const RunConfig& cfg, const std::string& stage,
                  const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  nlohmann::json j;
  j["stage"] = stage;
  j["config_sha256"] = cfg.hash();
  j["seed"] = cfg.seed;
  auto hashes = [](const std::vector<fs::path>& files) {
    nlohmann::json h = nlohmann::json::object();
    for (const auto& f : files) h[f.filename().string()] = file_sha256(f);
    return h;
  };
  j["inputs"] = hashes(inputs);
  j["outputs"] = hashes(outputs);
  write_file(Artifacts(cfg).records / (stage + ".json"), j.dump(2) + "\n");
}

PairOptions pair_options(const RunConfig& cfg) {
  PairOptions o;
  o.max_response_len = cfg.chat.max_response_len;
  return o;
}

void run_synth(const RunConfig& cfg, const Logger& log) {
  const Artifacts a(cfg);
  SynthKbConfig kc;
  kc.n_devices = cfg.synth.devices;
  kc.n_attributes = cfg.synth.attributes;
  kc.seed = derive_seed(cfg.seed, 1);
  const KbIndex kb = synth_kb(kc);
  write_kb(a.kb, kb);
  ParaphraseDict::defaults().restricted_to(kb).save_csv(a.paraphrases);

  CorpusSplitConfig sc;
  sc.n_dialogues = cfg.synth.dialogues;
  sc.dev_frac = cfg.synth.dev_frac;
  sc.test_frac = cfg.synth.test_frac;
  sc.heldout_device_frac = cfg.synth.heldout_device_frac;
  const auto splits = synth_corpus_splits(kb, DialogueTemplates::defaults(), derive_seed(cfg.seed, 2), sc);
  std::vector<fs::path> outputs{a.kb, a.paraphrases};
  for (const auto& [name, corpus] : {std::pair<std::string, const SynthCorpus*>{"train", &splits.train},
                                     {"dev", &splits.dev},
                                     {"test", &splits.test}}) {
    write_dialogues(a.dialogues(name), corpus->dialogues);
    write_manifest(a.manifest(name), corpus->manifest);
    outputs.push_back(a.dialogues(name));
    outputs.push_back(a.manifest(name));
    say(log, name + ": " + std::to_string(corpus->dialogues.size()) + " dialogues, value-token fraction " +
                 std::to_string(corpus->value_token_fraction()));
  }
  std::string held;
  for (const auto& d : splits.heldout_devices) held += " " + d;
  say(log, "devices absent from training dialogues:" + held);
  write_record(cfg, "synth-corpus", {}, outputs);
}

void run_gen_qa(const RunConfig& cfg, const Logger& log) {
  const Artifacts a(cfg);
  require_file(a.kb, "synth-corpus");
  require_file(a.dialogues("train"), "synth-corpus");
  const KbIndex kb = load_kb(a.kb);
  const auto dict = fs::exists(a.paraphrases) ? ParaphraseDict::load_csv(a.paraphrases)
                                              : ParaphraseDict::defaults().restricted_to(kb);
  const auto noise = NoiseVocab::from_dialogues(read_dialogues(a.dialogues("train")), name_words(kb, dict));
  GenConfig gc = cfg.datagen;
  gc.seed = derive_seed(cfg.seed, 3);
  const auto split = gen_dataset(kb, dict, noise, gc, cfg.qa.n_train, cfg.qa.n_dev);
  write_qa_dataset(a.qa_train, split.train);
  write_qa_dataset(a.qa_dev, split.dev);
  say(log, "qa data: " + std::to_string(split.train.size()) + " train (" +
               std::to_string(split.train_complex) + " complex), " + std::to_string(split.dev.size()) + " dev");
  std::vector<fs::path> inputs{a.kb, a.dialogues("train")};
  if (fs::exists(a.paraphrases)) inputs.push_back(a.paraphrases);
  write_record(cfg, "gen-qa-data", inputs, {a.qa_train, a.qa_dev});
}

std::vector<DialogueSample> load_split_pairs(const RunConfig& cfg, const std::string& split,
                                             bool device_spec_only) {
  const Artifacts a(cfg);
  require_file(a.dialogues(split), "synth-corpus");
  std::vector<DialogueSample> pairs;
  const auto opts = pair_options(cfg);
  for (const auto& d : read_dialogues(a.dialogues(split))) {
    for (auto& s : extract_pairs(d, opts)) pairs.push_back(std::move(s));
  }
  return device_spec_only ? select_device_spec_pairs(pairs) : pairs;
}

EvalSet load_eval_set(const RunConfig& cfg, const std::string& split, bool device_spec_only) {
  const Artifacts a(cfg);
  require_file(a.dialogues(split), "synth-corpus");
  const auto manifest = fs::exists(a.manifest(split)) ? read_manifest(a.manifest(split))
                                                      : std::vector<ManifestEntry>{};
  return build_eval_set(read_dialogues(a.dialogues(split)), manifest, pair_options(cfg), device_spec_only);
}

void run_train_chat(const RunConfig& cfg, const Logger& log) {
  const Artifacts a(cfg);
  require_file(a.dialogues("train"), "synth-corpus");
  const auto dialogues = read_dialogues(a.dialogues("train"));
  const Vocab vocab = Vocab::build(dialogue_streams(dialogues), cfg.chat.min_freq);
  ChatConfig cc;
  cc.emb_dim = cfg.chat.emb_dim;
  cc.hidden = cfg.chat.hidden;
  cc.max_context = cfg.chat.max_context;
  ChatModel model(vocab, cc, derive_seed(cfg.seed, 4));
  say(log, "chat vocabulary: " + std::to_string(vocab.size()) + " words");

  std::vector<DialogueSample> all;
  const auto opts = pair_options(cfg);
  for (const auto& d : dialogues) {
    for (auto& s : extract_pairs(d, opts)) all.push_back(std::move(s));
  }
  auto spec = select_device_spec_pairs(all);
  say(log, "chat pairs: " + std::to_string(all.size()) + " (" + std::to_string(spec.size()) + " device-spec)");
  std::vector<TrainPhase> schedule;
  schedule.push_back({"all", std::move(all), cfg.chat.lr, cfg.chat.epochs});
  if (cfg.chat.finetune_epochs > 0 && !spec.empty()) {
    schedule.push_back({"device-spec", std::move(spec), cfg.chat.finetune_lr, cfg.chat.finetune_epochs});
  }
  TrainOptions to;
  to.clip_norm = cfg.chat.clip_norm;
  to.seed = derive_seed(cfg.seed, 5);
  to.log = log;
  train_chat(model, schedule, to);
  model.save(a.chat);
  write_record(cfg, "train-chat", {a.dialogues("train")}, {a.chat});
}

void run_train_qa(const RunConfig& cfg, const Logger& log) {
  const Artifacts a(cfg);
  require_file(a.kb, "synth-corpus");
  require_file(a.qa_train, "gen-qa-data");
  const KbIndex kb = load_kb(a.kb);
  const auto train = read_qa_dataset(a.qa_train);
  const auto dev = fs::exists(a.qa_dev) ? read_qa_dataset(a.qa_dev) : std::vector<QaExample>{};
  std::vector<std::vector<std::string>> streams;
  for (const auto& ex : train) streams.push_back(ex.question);
  QaConfig qc;
  qc.emb_dim = cfg.qa.emb_dim;
  qc.hidden = cfg.qa.hidden;
  QaModel model(Vocab::build(streams, 1), kb.devices(), kb.attributes(), qc, derive_seed(cfg.seed, 6));
  train_qa(model, train, dev, cfg.qa.lr, cfg.qa.epochs, derive_seed(cfg.seed, 7), log);
  model.save(a.qa);
  std::vector<fs::path> inputs{a.kb, a.qa_train};
  if (fs::exists(a.qa_dev)) inputs.push_back(a.qa_dev);
  write_record(cfg, "train-qa", inputs, {a.qa});
}

void run_train_gate(const RunConfig& cfg, const Logger& log) {
  const Artifacts a(cfg);
  require_file(a.chat, "train-chat");
  require_file(a.qa, "train-qa");
  require_file(a.kb, "synth-corpus");
  const KbIndex kb = load_kb(a.kb);
  const ChatModel chat = ChatModel::load(a.chat);
  const QaModel qa = QaModel::load(a.qa);
  const auto pairs = load_split_pairs(cfg, "train", true);
  say(log, "gate pairs: " + std::to_string(pairs.size()));
  Gate2 gate = Gate2::init(chat.hidden_size(), cfg.gate.b_init);
  GateTrainOptions go;
  go.lr = cfg.gate.lr;
  go.epochs = cfg.gate.epochs;
  go.lambda = cfg.gate.lambda;
  go.beta = cfg.gate.beta;
  go.seed = derive_seed(cfg.seed, 8);
  go.log = log;
  train_gate(gate, chat, qa, kb, pairs, go, cfg.gate.qa_view, cfg.qa.renormalize);
  save_gate(a.gate, {gate, expert_hash(chat), expert_hash(qa), cfg.gate.qa_view});
  write_record(cfg, "train-gate", {a.chat, a.qa, a.kb, a.dialogues("train")}, {a.gate});
}

ModelBundle load_models(const RunConfig& cfg, bool force) {
  const Artifacts a(cfg);
  require_file(a.kb, "synth-corpus");
  require_file(a.chat, "train-chat");
  require_file(a.qa, "train-qa");
  require_file(a.gate, "train-gate");
  ModelBundle b;
  b.kb = std::make_unique<KbIndex>(load_kb(a.kb));
  b.chat = std::make_unique<ChatModel>(ChatModel::load(a.chat));
  b.qa = std::make_unique<QaModel>(QaModel::load(a.qa));
  b.gate = load_gate(a.gate, expert_hash(*b.chat), expert_hash(*b.qa), force);
  b.integrated = std::make_unique<IntegratedModel>(*b.chat, *b.qa, *b.kb, b.gate.gate, b.gate.policy,
                                                  cfg.qa.renormalize);
  return b;
}

namespace {

std::unordered_set<std::string> value_set(const KbIndex& kb) {
  return {kb.values().begin(), kb.values().end()};
}

}  // namespace

nlohmann::json run_eval(const RunConfig& cfg, const Logger& log, bool force) {
  const Artifacts a(cfg);
  const auto models = load_models(cfg, force);
  const auto set = load_eval_set(cfg, cfg.eval.split, cfg.eval.device_spec_only);
  say(log, "eval pairs: " + std::to_string(set.pairs.size()));
  const ChatScorer chat(*models.chat);
  const IntegratedScorer integrated(*models.integrated);
  const auto cmp = compare_models(chat, integrated, set.pairs, value_set(*models.kb), &set.kb_sourced);
  auto j = cmp.to_json();
  j["split"] = cfg.eval.split;
  j["device_spec_only"] = cfg.eval.device_spec_only;
  j["pairs"] = set.pairs.size();
  write_file(a.eval, j.dump(2) + "\n");
  write_record(cfg, "eval", {a.chat, a.qa, a.gate, a.kb, a.dialogues(cfg.eval.split)}, {a.eval});
  return j;
}

nlohmann::json run_eval_filter(const RunConfig& cfg, PplFilter filter, const Logger& log,
                               bool force) {
  const auto models = load_models(cfg, force);
  const auto set = load_eval_set(cfg, cfg.eval.split, cfg.eval.device_spec_only);
  say(log, "eval pairs: " + std::to_string(set.pairs.size()));
  const auto values = value_set(*models.kb);
  const ChatScorer chat(*models.chat);
  const IntegratedScorer integrated(*models.integrated);
  return {{"chat", perplexity(chat, "chat", set.pairs, filter, values, &set.kb_sourced).to_json()},
          {"integrated",
           perplexity(integrated, "integrated", set.pairs, filter, values, &set.kb_sourced).to_json()}};
}

}  // namespace moelm
