#include "moelm/chat_model.hpp"

#include <algorithm>
#include <cmath>

#include "moelm/error.hpp"
#include "moelm/random.hpp"

namespace moelm {

std::vector<TensorView> ChatModel::Params::views() {
  std::vector<TensorView> v{view_of("embedding", embedding)};
  if (dec_embedding.size() > 0) v.push_back(view_of("dec_embedding", dec_embedding));
  for (auto& t : encoder.views("encoder")) v.push_back(t);
  for (auto& t : decoder.views("decoder")) v.push_back(t);
  v.push_back(view_of("out_w", out_w));
  v.push_back(view_of("out_b", out_b));
  return v;
}

ChatModel::ChatModel(Vocab vocab, ChatConfig config)
    : vocab_(std::move(vocab)), config_(config) {
  if (config_.emb_dim == 0 || config_.hidden == 0) throw ConfigError("chat sizes must be positive");
  const std::size_t V = vocab_.size();
  params_.embedding = Matrix(V, config_.emb_dim);
  if (!config_.share_embeddings) params_.dec_embedding = Matrix(V, config_.emb_dim);
  params_.encoder = LstmParams(config_.emb_dim, config_.hidden);
  params_.decoder = LstmParams(config_.emb_dim, config_.hidden);
  params_.out_w = Matrix(V, config_.hidden);
  params_.out_b = Vector(V, 0.0);
}

ChatModel::ChatModel(Vocab vocab, ChatConfig config, std::uint64_t seed)
    : ChatModel(std::move(vocab), config) {
  Rng rng(seed);
  const double s = config_.init_scale;
  for (double& v : params_.embedding.flat()) v = rng.uniform(-s, s);
  for (double& v : params_.dec_embedding.flat()) v = rng.uniform(-s, s);
  params_.encoder.init(rng, s, config_.forget_bias);
  params_.decoder.init(rng, s, config_.forget_bias);
  for (double& v : params_.out_w.flat()) v = rng.uniform(-s, s);
}

ChatModel::Params ChatModel::zero_grad() const {
  Params g;
  g.embedding = Matrix(params_.embedding.rows(), params_.embedding.cols());
  g.dec_embedding = Matrix(params_.dec_embedding.rows(), params_.dec_embedding.cols());
  g.encoder = LstmParams(config_.emb_dim, config_.hidden);
  g.decoder = LstmParams(config_.emb_dim, config_.hidden);
  g.out_w = Matrix(params_.out_w.rows(), params_.out_w.cols());
  g.out_b = Vector(params_.out_b.size(), 0.0);
  return g;
}

std::span<const double> ChatModel::input_embedding(TokenId id, bool decoder) const {
  if (decoder && !config_.share_embeddings) return params_.dec_embedding.row(id);
  return params_.embedding.row(id);
}

std::vector<TokenId> ChatModel::encode_context_tokens(const std::vector<std::string>& context) const {
  const std::size_t n = context.size();
  const std::size_t keep = config_.max_context == 0 ? n : std::min(n, config_.max_context);
  std::vector<TokenId> ids;
  ids.reserve(keep);
  for (std::size_t i = n - keep; i < n; ++i) ids.push_back(vocab_.id(context[i]));
  return ids;
}

EncodedPair ChatModel::encode(const DialogueSample& sample) const {
  return {encode_context_tokens(sample.context), vocab_.encode(sample.response)};
}

ChatDecodeState ChatModel::encode_context(const std::vector<std::string>& context) const {
  return encode_context_ids(encode_context_tokens(context));
}

ChatDecodeState ChatModel::encode_context_ids(const std::vector<TokenId>& context) const {
  LstmState s = LstmState::zeros(config_.hidden);
  for (TokenId id : context) s = lstm_step(params_.encoder, input_embedding(id, false), s);
  ChatDecodeState st;
  st.lstm = lstm_step(params_.decoder, input_embedding(Vocab::kEocId, true), s);
  st.last = Vocab::kEocId;
  return st;
}

Vector ChatModel::distribution(const ChatDecodeState& state) const {
  Vector logits = params_.out_b;
  gemv_acc(params_.out_w, state.lstm.h, logits);
  softmax_inplace(logits);
  return logits;
}

ChatStep ChatModel::step(const ChatDecodeState& state, TokenId token) const {
  ChatStep out;
  out.state.lstm = lstm_step(params_.decoder, input_embedding(token, true), state.lstm);
  out.state.last = token;
  out.hidden = out.state.lstm.h;
  out.dist = distribution(out.state);
  return out;
}

std::vector<ChatStep> ChatModel::teacher_force(const EncodedPair& pair) const {
  std::vector<ChatStep> steps;
  steps.reserve(pair.response.size());
  ChatDecodeState st = encode_context_ids(pair.context);
  for (std::size_t t = 0; t < pair.response.size(); ++t) {
    if (t == 0) {
      steps.push_back({distribution(st), st.lstm.h, st});
    } else {
      steps.push_back(step(steps.back().state, pair.response[t - 1]));
    }
  }
  return steps;
}

double ChatModel::loss(const EncodedPair& pair, Params* grad) const {
  const std::size_t H = config_.hidden;
  const std::size_t V = vocab_.size();
  const std::size_t n = pair.context.size();
  const std::size_t m = pair.response.size();

  std::vector<LstmCache> enc(n);
  LstmState s = LstmState::zeros(H);
  for (std::size_t i = 0; i < n; ++i) {
    s = lstm_step(params_.encoder, input_embedding(pair.context[i], false), s, enc[i]);
  }
  std::vector<LstmCache> dec(m);
  std::vector<Vector> dlogits(m, Vector(V));
  double total = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    const TokenId in = t == 0 ? Vocab::kEocId : pair.response[t - 1];
    s = lstm_step(params_.decoder, input_embedding(in, true), s, dec[t]);
    Vector logits = params_.out_b;
    gemv_acc(params_.out_w, s.h, logits);
    total += softmax_cross_entropy(logits, pair.response[t],
                                   grad ? std::span<double>(dlogits[t]) : std::span<double>());
  }
  if (!grad) return total;

  Vector dh(H), dc(H, 0.0), dh_prev(H), dc_prev(H), dx(config_.emb_dim);
  Vector dh_next(H, 0.0);
  Matrix& dec_emb_grad = config_.share_embeddings ? grad->embedding : grad->dec_embedding;
  for (std::size_t t = m; t-- > 0;) {
    outer_acc(grad->out_w, dlogits[t], dec[t].h);
    axpy(1.0, dlogits[t], grad->out_b);
    dh = dh_next;
    gemv_t_acc(params_.out_w, dlogits[t], dh);
    lstm_backward(params_.decoder, dec[t], dh, dc, grad->decoder, dx, dh_prev, dc_prev);
    const TokenId in = t == 0 ? Vocab::kEocId : pair.response[t - 1];
    axpy(1.0, dx, dec_emb_grad.row(in));
    dh_next = dh_prev;
    dc = dc_prev;
  }
  for (std::size_t i = n; i-- > 0;) {
    lstm_backward(params_.encoder, enc[i], dh_next, dc, grad->encoder, dx, dh_prev, dc_prev);
    axpy(1.0, dx, grad->embedding.row(pair.context[i]));
    dh_next = dh_prev;
    dc = dc_prev;
  }
  return total;
}

Container ChatModel::to_container() const {
  Container c;
  c.meta["kind"] = "chat";
  c.meta["trained"] = trained_ ? "true" : "false";
  c.meta["emb_dim"] = std::to_string(config_.emb_dim);
  c.meta["hidden"] = std::to_string(config_.hidden);
  c.meta["share_embeddings"] = config_.share_embeddings ? "true" : "false";
  c.meta["max_context"] = std::to_string(config_.max_context);
  c.lists["vocab"] = vocab_.words();
  c.put_all(const_cast<ChatModel*>(this)->params_.views());
  return c;
}

ChatModel ChatModel::from_container(const Container& c) {
  if (c.meta_at("kind") != "chat") throw CheckpointError("checkpoint is not a chat model");
  ChatConfig cfg;
  cfg.emb_dim = std::stoul(c.meta_at("emb_dim"));
  cfg.hidden = std::stoul(c.meta_at("hidden"));
  cfg.share_embeddings = c.meta_at("share_embeddings") == "true";
  cfg.max_context = std::stoul(c.meta_at("max_context"));
  ChatModel m(Vocab::from_words(c.list_at("vocab")), cfg);
  c.get_all(m.params_.views());
  m.trained_ = c.meta_at("trained") == "true";
  return m;
}

std::vector<EpochReport> train_chat(ChatModel& model, const std::vector<TrainPhase>& schedule,
                                    const TrainOptions& options) {
  if (schedule.empty()) throw ConfigError("train_chat: empty schedule");
  std::vector<EpochReport> reports;
  Rng rng(options.seed);
  auto params = model.params().views();
  ChatModel::Params grad = model.zero_grad();
  auto grads = grad.views();
  for (const auto& phase : schedule) {
    if (phase.samples.empty()) {
      throw ConfigError("train_chat: phase '" + phase.name + "' has an empty dataset");
    }
    if (!(phase.lr > 0)) throw ConfigError("train_chat: phase '" + phase.name + "' lr must be > 0");
    std::vector<EncodedPair> data;
    data.reserve(phase.samples.size());
    for (const auto& s : phase.samples) data.push_back(model.encode(s));
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (options.log) {
      options.log("phase " + phase.name + ": " + std::to_string(data.size()) + " pairs, lr " +
                  std::to_string(phase.lr) + ", " + std::to_string(phase.epochs) + " epochs");
    }
    for (std::size_t epoch = 1; epoch <= phase.epochs; ++epoch) {
      rng.shuffle(order);
      double nll = 0.0;
      std::size_t tokens = 0;
      for (std::size_t idx : order) {
        zero(grads);
        nll += model.loss(data[idx], &grad);
        tokens += data[idx].response.size();
        if (options.clip_norm > 0) clip_global_norm(grads, options.clip_norm);
        sgd_update(params, grads, phase.lr, options.l2);
      }
      EpochReport r{phase.name, epoch, nll / static_cast<double>(tokens), tokens};
      if (options.log) {
        options.log("  " + phase.name + " epoch " + std::to_string(epoch) + " mean nll " +
                    std::to_string(r.mean_nll) + " ppl " + std::to_string(std::exp(r.mean_nll)));
      }
      reports.push_back(r);
    }
  }
  model.mark_trained();
  return reports;
}

EpochReport evaluate_chat_nll(const ChatModel& model, const std::vector<DialogueSample>& samples) {
  EpochReport r{"eval", 0, 0.0, 0};
  double nll = 0.0;
  for (const auto& s : samples) {
    auto p = model.encode(s);
    nll += model.loss(p);
    r.tokens += p.response.size();
  }
  if (r.tokens > 0) r.mean_nll = nll / static_cast<double>(r.tokens);
  return r;
}

}  // namespace moelm
