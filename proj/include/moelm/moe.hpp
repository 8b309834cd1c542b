#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "moelm/chat_model.hpp"
#include "moelm/kb.hpp"
#include "moelm/lstm.hpp"
#include "moelm/qa_model.hpp"
#include "moelm/tensor.hpp"
#include "moelm/vocab.hpp"

namespace moelm {

// ---- general K-expert mixture ----

class Expert {
 public:
  virtual ~Expert() = default;
  virtual const std::vector<std::string>& vocabulary() const = 0;
  // Normalized distribution over vocabulary() for the token after `prefix`.
  virtual Vector distribution(const std::vector<std::string>& context,
                              const std::vector<std::string>& prefix) const = 0;
};

// Union of expert vocabularies in order of first appearance.
class UnionVocab {
 public:
  UnionVocab() = default;
  explicit UnionVocab(const std::vector<const std::vector<std::string>*>& vocabularies);
  static UnionVocab of(const std::vector<const Expert*>& experts);

  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  std::size_t experts() const { return local_to_union_.size(); }
  std::optional<std::size_t> find(const std::string& w) const;
  // Union index of expert k's i-th word.
  const std::vector<std::size_t>& mapping(std::size_t k) const { return local_to_union_.at(k); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> local_to_union_;
};

struct MixedDistribution {
  Vector probs;             // over the union vocabulary
  Vector responsibilities;  // p(k | w_1^t), i.e. the weights used
};

// p(w) = sum_k weight_k p_k(w), with p_k(w) = 0 outside V_k.
MixedDistribution mix(std::span<const double> weights, const std::vector<Vector>& expert_dists,
                      const UnionVocab& vocab);

// What the gate needs to learn from one sequence: expert_probs[t][k] is
// p_k(tokens[t] | tokens before t).
struct GateKExample {
  std::vector<std::string> context;
  std::vector<std::string> tokens;
  std::vector<Vector> expert_probs;
};

GateKExample make_gate_k_example(const std::vector<const Expert*>& experts,
                                 std::vector<std::string> context, std::vector<std::string> tokens);

// Softmax gate over K experts driven by its own LSTM. The LSTM reads a start
// symbol and then the history; unknown words share one embedding row.
class GateK {
 public:
  struct Params {
    Matrix embedding;  // (|V| + 2) x emb
    LstmParams lstm;
    Matrix w;  // K x hidden
    Vector b;  // K
    std::vector<TensorView> views();
  };

  GateK(std::vector<std::string> vocabulary, std::size_t k, std::size_t emb_dim,
        std::size_t hidden, std::uint64_t seed);

  std::size_t k() const { return params_.b.size(); }
  std::size_t hidden_size() const { return params_.lstm.hidden_size; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }
  Params zero_grad() const;

  static constexpr std::size_t kStartId = 0;
  static constexpr std::size_t kUnknownId = 1;
  std::size_t token_id(const std::string& w) const;

  // softmax(W h + b) for an explicit hidden vector.
  Vector weights_at(std::span<const double> h) const;
  // Weights after consuming the start symbol and `history`.
  Vector weights(const std::vector<std::string>& history) const;
  // -sum_t log sum_k p(k | tokens before t) expert_probs[t][k].
  double loss(const GateKExample& ex, Params* grad = nullptr) const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
  Params params_;
};

std::vector<double> train_gate_k(GateK& gate, const std::vector<GateKExample>& data, double lr,
                                 std::size_t epochs, std::uint64_t seed);

// ---- chat + QA integration ----

struct Gate2 {
  Vector w;
  double b = 2.0;

  static Gate2 init(std::size_t hidden, double b0 = 2.0) { return {Vector(hidden, 0.0), b0}; }
  double logit(std::span<const double> h) const;
  double alpha(std::span<const double> h) const;
};

// V_c ids first, then the KB values missing from V_c. Ids >= chat_size()
// are the kb-only tokens (V_qa \ V_c).
class IntegratedVocab {
 public:
  IntegratedVocab() = default;
  IntegratedVocab(const Vocab& chat, const std::vector<std::string>& values);

  std::size_t size() const { return words_.size(); }
  std::size_t chat_size() const { return chat_size_; }
  const std::string& word(TokenId id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }
  std::optional<TokenId> find(const std::string& w) const;
  bool kb_only(TokenId id) const { return id >= chat_size_; }
  // Union id of the j-th KB value.
  const std::vector<TokenId>& value_ids() const { return value_ids_; }
  // KB value index of a union id, if the token is a KB value.
  std::optional<std::size_t> value_index(TokenId id) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t chat_size_ = 0;
  std::vector<TokenId> value_ids_;
  std::vector<std::int64_t> union_to_value_;
};

struct Mix2Result {
  double alpha = 0.0;
  Vector probs;  // over IntegratedVocab
};

Mix2Result mix2(std::span<const double> h_c, std::span<const double> p_c,
                std::span<const double> p_qa, const Gate2& gate, const IntegratedVocab& vocab);

enum class QaViewPolicy { LastClientUtterance, FullHistory };

std::string policy_name(QaViewPolicy p);
QaViewPolicy parse_policy(const std::string& name);

// Tokens the QA expert reads: the most recent <CLIENT> segment, or all client
// segments for FullHistory. Empty when the context has no client segment.
std::vector<std::string> qa_context_view(const std::vector<std::string>& context,
                                         QaViewPolicy policy = QaViewPolicy::LastClientUtterance);

// The experts are borrowed and must outlive the model.
class IntegratedModel {
 public:
  struct State {
    ChatDecodeState chat;
    Vector p_c;  // chat distribution for the next token
    Vector h;    // h_t^c behind p_c
    std::shared_ptr<const Vector> p_qa;
  };

  // renormalize_qa = false keeps the raw marginal, whose mass falls short of
  // 1 when some (device, attribute) pairs are missing from the KB.
  IntegratedModel(const ChatModel& chat, const QaModel& qa, const KbIndex& kb, Gate2 gate,
                  QaViewPolicy policy = QaViewPolicy::LastClientUtterance,
                  bool renormalize_qa = true);

  const IntegratedVocab& vocab() const { return vocab_; }
  const ChatModel& chat() const { return *chat_; }
  const QaModel& qa() const { return *qa_; }
  const KbIndex& kb() const { return *kb_; }
  const Gate2& gate() const { return gate_; }
  void set_gate(Gate2 g);
  QaViewPolicy policy() const { return policy_; }
  void set_logger(std::function<void(const std::string&)> log) { log_ = std::move(log); }

  // p_qa over kb.values(); uniform when the view is empty.
  Vector qa_distribution(const std::vector<std::string>& context) const;

  State start(const std::vector<std::string>& context) const;
  // Feeds a union token; kb-only tokens reach the chat decoder as <UNK>.
  State advance(const State& s, TokenId id) const;
  double alpha(const State& s) const { return gate_.alpha(s.h); }
  Vector next_distribution(const State& s) const;

  // Gold-token probabilities under each expert in the union space: p_c is the
  // chat probability of the token (of <UNK> when the token is in neither
  // vocabulary), p_qa its KB value probability (0 if not a value).
  struct GoldProbs {
    double p_c = 0.0;
    double p_qa = 0.0;
  };
  GoldProbs gold_probs(const State& s, const std::string& gold) const;
  TokenId union_id(const std::string& w) const;

  // decoder concept hooks
  const std::string& word(TokenId id) const { return vocab_.word(id); }
  bool kb_only(TokenId id) const { return vocab_.kb_only(id); }
  TokenId eor_id() const { return Vocab::kEorId; }

 private:
  const ChatModel* chat_;
  const QaModel* qa_;
  const KbIndex* kb_;
  Gate2 gate_;
  QaViewPolicy policy_;
  bool renormalize_qa_;
  IntegratedVocab vocab_;
  std::function<void(const std::string&)> log_;
};

// Chat expert alone, in the same decoder-facing shape.
class ChatOnlyModel {
 public:
  struct State {
    ChatDecodeState chat;
    Vector p_c;
  };
  explicit ChatOnlyModel(const ChatModel& chat) : chat_(&chat) {}
  State start(const std::vector<std::string>& context) const;
  State advance(const State& s, TokenId id) const;
  const Vector& next_distribution(const State& s) const { return s.p_c; }
  const std::string& word(TokenId id) const { return chat_->vocab().word(id); }
  bool kb_only(TokenId) const { return false; }
  TokenId eor_id() const { return Vocab::kEorId; }

 private:
  const ChatModel* chat_;
};

// ---- gate training ----

// Per response position of one pair, everything the frozen experts
// contribute to the gate objective.
struct GatePosition {
  Vector h;
  double p_c = 0.0;
  double p_qa = 0.0;
  double beta = 1.0;
};
using GatePairData = std::vector<GatePosition>;

// beta is applied to gold tokens in V_qa \ V_c.
std::vector<GatePairData> precompute_gate_data(const IntegratedModel& model,
                                               const std::vector<DialogueSample>& pairs,
                                               double beta = 100.0);

// J = -sum beta log p + lambda/2 ||(w, b)||^2. grad, when non-empty, gets
// dJ/dw followed by dJ/db.
double gate_objective(const Gate2& gate, const std::vector<GatePairData>& data, double lambda,
                      std::span<double> grad = {});

struct GateTrainOptions {
  double lr = 0.01;
  std::size_t epochs = 5;
  double lambda = 1e-4;
  double beta = 100.0;
  std::uint64_t seed = 1;
  std::function<void(const std::string&)> log;
};

struct GateEpochReport {
  std::size_t epoch = 0;
  double objective = 0.0;
};

// Per-pair SGD on J with the regularizer spread evenly over the pairs.
std::vector<GateEpochReport> train_gate(Gate2& gate, const std::vector<GatePairData>& data,
                                        const GateTrainOptions& options);

// Refuses (ConfigError) unless both experts are marked trained; experts are
// only read.
std::vector<GateEpochReport> train_gate(Gate2& gate, const ChatModel& chat, const QaModel& qa,
                                        const KbIndex& kb, const std::vector<DialogueSample>& pairs,
                                        const GateTrainOptions& options,
                                        QaViewPolicy policy = QaViewPolicy::LastClientUtterance,
                                        bool renormalize_qa = true);

// ---- gate persistence ----

std::string expert_hash(const ChatModel& chat);
std::string expert_hash(const QaModel& qa);

struct GateCheckpoint {
  Gate2 gate;
  std::string chat_hash;
  std::string qa_hash;
  QaViewPolicy policy = QaViewPolicy::LastClientUtterance;
};

void save_gate(const std::filesystem::path& path, const GateCheckpoint& ckpt);
GateCheckpoint load_gate(const std::filesystem::path& path);
// Throws CheckpointError when the recorded expert hashes differ, unless force.
GateCheckpoint load_gate(const std::filesystem::path& path, const std::string& chat_hash,
                         const std::string& qa_hash, bool force);

}  // namespace moelm
