#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "moelm/container.hpp"
#include "moelm/corpus.hpp"
#include "moelm/lstm.hpp"
#include "moelm/vocab.hpp"

namespace moelm {

struct ChatConfig {
  std::size_t emb_dim = 32;
  std::size_t hidden = 64;
  // One embedding table for encoder and decoder inputs.
  bool share_embeddings = true;
  double init_scale = 0.1;
  double forget_bias = 1.0;
  // Only the most recent max_context context tokens reach the encoder; 0
  // keeps the whole context.
  std::size_t max_context = 0;
};

// Decoder state after consuming w_1^t; `lstm.h` is the h_t^c the gate reads.
struct ChatDecodeState {
  LstmState lstm;
  TokenId last = Vocab::kEocId;
};

struct ChatStep {
  Vector dist;    // p_c over V_c
  Vector hidden;  // h_t^c that produced dist
  ChatDecodeState state;
};

struct EncodedPair {
  std::vector<TokenId> context;
  std::vector<TokenId> response;
};

// Encoder LSTM over the dialogue context; its final (h, c) seeds a decoder
// LSTM that generates the response. The first decoder input is <EOC>.
class ChatModel {
 public:
  struct Params {
    Matrix embedding;      // |V_c| x emb
    Matrix dec_embedding;  // empty when embeddings are shared
    LstmParams encoder;
    LstmParams decoder;
    Matrix out_w;  // |V_c| x hidden
    Vector out_b;  // |V_c|

    std::vector<TensorView> views();
  };

  ChatModel(Vocab vocab, ChatConfig config, std::uint64_t seed);

  const Vocab& vocab() const { return vocab_; }
  const ChatConfig& config() const { return config_; }
  std::size_t hidden_size() const { return config_.hidden; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }
  Params zero_grad() const;

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  EncodedPair encode(const DialogueSample& sample) const;
  // Context ids after the max_context cut.
  std::vector<TokenId> encode_context_tokens(const std::vector<std::string>& context) const;

  // Runs the encoder over the context and the first decoder step on <EOC>.
  ChatDecodeState encode_context(const std::vector<std::string>& context) const;
  ChatDecodeState encode_context_ids(const std::vector<TokenId>& context) const;
  Vector distribution(const ChatDecodeState& state) const;
  // Consumes `token`, returning the next-token distribution and hidden state.
  ChatStep step(const ChatDecodeState& state, TokenId token) const;

  // Teacher-forced pass: one ChatStep per response position (dist predicts
  // response[t]).
  std::vector<ChatStep> teacher_force(const EncodedPair& pair) const;

  // Sum of response-token NLL; fills grad (accumulating) when non-null.
  double loss(const EncodedPair& pair, Params* grad = nullptr) const;

  Container to_container() const;
  static ChatModel from_container(const Container& c);
  void save(const std::filesystem::path& path) const { to_container().save(path); }
  static ChatModel load(const std::filesystem::path& path) {
    return from_container(Container::load(path));
  }

 private:
  ChatModel(Vocab vocab, ChatConfig config);
  std::span<const double> input_embedding(TokenId id, bool decoder) const;

  Vocab vocab_;
  ChatConfig config_;
  Params params_;
  bool trained_ = false;
};

struct TrainPhase {
  std::string name;
  std::vector<DialogueSample> samples;
  double lr = 0.01;
  std::size_t epochs = 1;
};

struct TrainOptions {
  double l2 = 0.0;
  double clip_norm = 0.0;  // 0 disables clipping
  std::uint64_t seed = 1;
  std::function<void(const std::string&)> log;
};

struct EpochReport {
  std::string phase;
  std::size_t epoch = 0;
  double mean_nll = 0.0;  // per response token
  std::size_t tokens = 0;
};

// Per-sample SGD with teacher forcing over each phase in order.
std::vector<EpochReport> train_chat(ChatModel& model, const std::vector<TrainPhase>& schedule,
                                    const TrainOptions& options);

// Mean per-token NLL of the model over samples (no update).
EpochReport evaluate_chat_nll(const ChatModel& model, const std::vector<DialogueSample>& samples);

}  // namespace moelm
