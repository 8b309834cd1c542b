#include "moelm/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moelm/container.hpp"
#include "moelm/error.hpp"
#include "moelm/numerics.hpp"
#include "moelm/random.hpp"

namespace moelm {
namespace {

constexpr double kMinProb = 1e-300;

}  // namespace

// ---- UnionVocab / mix ----

UnionVocab::UnionVocab(const std::vector<const std::vector<std::string>*>& vocabularies) {
  for (const auto* v : vocabularies) {
    if (v == nullptr) throw Error("UnionVocab: null vocabulary");
    std::vector<std::size_t> map;
    map.reserve(v->size());
    for (const auto& w : *v) {
      auto [it, inserted] = index_.try_emplace(w, words_.size());
      if (inserted) words_.push_back(w);
      map.push_back(it->second);
    }
    local_to_union_.push_back(std::move(map));
  }
}

UnionVocab UnionVocab::of(const std::vector<const Expert*>& experts) {
  std::vector<const std::vector<std::string>*> vs;
  for (const auto* e : experts) vs.push_back(&e->vocabulary());
  return UnionVocab(vs);
}

std::optional<std::size_t> UnionVocab::find(const std::string& w) const {
  auto it = index_.find(w);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

MixedDistribution mix(std::span<const double> weights, const std::vector<Vector>& expert_dists,
                      const UnionVocab& vocab) {
  if (weights.size() != expert_dists.size() || weights.size() != vocab.experts()) {
    throw ShapeError("mix: " + std::to_string(weights.size()) + " weights, " +
                     std::to_string(expert_dists.size()) + " distributions, " +
                     std::to_string(vocab.experts()) + " vocabularies");
  }
  MixedDistribution out;
  out.probs.assign(vocab.size(), 0.0);
  out.responsibilities.assign(weights.begin(), weights.end());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const auto& map = vocab.mapping(k);
    require_size(expert_dists[k].size(), map.size(), "mix: expert distribution");
    for (std::size_t i = 0; i < map.size(); ++i) out.probs[map[i]] += weights[k] * expert_dists[k][i];
  }
  return out;
}

GateKExample make_gate_k_example(const std::vector<const Expert*>& experts,
                                 std::vector<std::string> context, std::vector<std::string> tokens) {
  GateKExample ex;
  ex.context = std::move(context);
  ex.tokens = std::move(tokens);
  std::vector<std::string> prefix;
  for (const auto& tok : ex.tokens) {
    Vector q(experts.size(), 0.0);
    for (std::size_t k = 0; k < experts.size(); ++k) {
      const auto& vocab = experts[k]->vocabulary();
      auto it = std::find(vocab.begin(), vocab.end(), tok);
      if (it == vocab.end()) continue;
      q[k] = experts[k]->distribution(ex.context, prefix)[it - vocab.begin()];
    }
    ex.expert_probs.push_back(std::move(q));
    prefix.push_back(tok);
  }
  return ex;
}

// ---- GateK ----

std::vector<TensorView> GateK::Params::views() {
  auto v = lstm.views("gate_lstm");
  v.insert(v.begin(), view_of("gate_embedding", embedding));
  v.push_back(view_of("gate_w", w));
  v.push_back(view_of("gate_b", b));
  return v;
}

GateK::GateK(std::vector<std::string> vocabulary, std::size_t k, std::size_t emb_dim,
             std::size_t hidden, std::uint64_t seed) {
  if (k == 0) throw ConfigError("GateK: K must be >= 1");
  if (emb_dim == 0 || hidden == 0) throw ConfigError("GateK: sizes must be >= 1");
  for (auto& w : vocabulary) index_.try_emplace(std::move(w), index_.size() + 2);
  Rng rng(seed);
  params_.embedding = Matrix(index_.size() + 2, emb_dim);
  for (auto& x : params_.embedding.flat()) x = rng.uniform(-0.1, 0.1);
  params_.lstm = LstmParams(emb_dim, hidden);
  params_.lstm.init(rng);
  params_.w = Matrix(k, hidden);
  for (auto& x : params_.w.flat()) x = rng.uniform(-0.1, 0.1);
  params_.b = Vector(k, 0.0);
}

GateK::Params GateK::zero_grad() const {
  Params g;
  g.embedding = Matrix(params_.embedding.rows(), params_.embedding.cols());
  g.lstm = LstmParams(params_.lstm.input_size, params_.lstm.hidden_size);
  g.w = Matrix(params_.w.rows(), params_.w.cols());
  g.b = Vector(params_.b.size(), 0.0);
  return g;
}

std::size_t GateK::token_id(const std::string& w) const {
  auto it = index_.find(w);
  return it == index_.end() ? kUnknownId : it->second;
}

Vector GateK::weights_at(std::span<const double> h) const {
  require_size(h.size(), hidden_size(), "GateK: hidden");
  Vector u = params_.b;
  gemv_acc(params_.w, h, u);
  softmax_inplace(u);
  return u;
}

Vector GateK::weights(const std::vector<std::string>& history) const {
  LstmState s = lstm_step(params_.lstm, params_.embedding.row(kStartId), LstmState::zeros(hidden_size()));
  for (const auto& w : history) s = lstm_step(params_.lstm, params_.embedding.row(token_id(w)), s);
  return weights_at(s.h);
}

double GateK::loss(const GateKExample& ex, Params* grad) const {
  const std::size_t T = ex.tokens.size();
  const std::size_t K = k();
  const std::size_t H = hidden_size();
  if (ex.expert_probs.size() != T) throw ShapeError("GateK::loss: expert_probs/tokens length mismatch");
  std::vector<std::size_t> inputs(T);
  for (std::size_t t = 0; t < T; ++t) inputs[t] = t == 0 ? kStartId : token_id(ex.tokens[t - 1]);

  std::vector<LstmCache> cache(T);
  std::vector<Vector> du(T, Vector(K));
  LstmState s = LstmState::zeros(H);
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    s = lstm_step(params_.lstm, params_.embedding.row(inputs[t]), s, cache[t]);
    const Vector pi = weights_at(s.h);
    const auto& q = ex.expert_probs[t];
    require_size(q.size(), K, "GateK::loss: expert probs");
    double p = 0.0;
    for (std::size_t k = 0; k < K; ++k) p += pi[k] * q[k];
    total -= std::log(std::max(p, kMinProb));
    // d(-log p)/du_k = pi_k - pi_k q_k / p
    for (std::size_t k = 0; k < K; ++k) du[t][k] = pi[k] - (p > 0 ? pi[k] * q[k] / p : 0.0);
  }
  if (!grad) return total;

  Vector dh(H), dc(H, 0.0), dh_prev(H), dc_prev(H), dx(params_.lstm.input_size);
  Vector dh_next(H, 0.0);
  for (std::size_t t = T; t-- > 0;) {
    outer_acc(grad->w, du[t], cache[t].h);
    axpy(1.0, du[t], grad->b);
    dh = dh_next;
    gemv_t_acc(params_.w, du[t], dh);
    lstm_backward(params_.lstm, cache[t], dh, dc, grad->lstm, dx, dh_prev, dc_prev);
    axpy(1.0, dx, grad->embedding.row(inputs[t]));
    dh_next = dh_prev;
    dc = dc_prev;
  }
  return total;
}

std::vector<double> train_gate_k(GateK& gate, const std::vector<GateKExample>& data, double lr,
                                 std::size_t epochs, std::uint64_t seed) {
  if (data.empty()) throw ConfigError("train_gate_k: empty dataset");
  if (!(lr > 0)) throw ConfigError("train_gate_k: lr must be > 0");
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  auto params = gate.params().views();
  auto grad = gate.zero_grad();
  auto grads = grad.views();
  std::vector<double> losses;
  for (std::size_t e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t n = 0;
    for (auto i : order) {
      zero(grads);
      sum += gate.loss(data[i], &grad);
      n += data[i].tokens.size();
      sgd_update(params, grads, lr, 0.0);
    }
    losses.push_back(n ? sum / n : 0.0);
  }
  return losses;
}

// ---- Gate2 / mix2 ----

double Gate2::logit(std::span<const double> h) const {
  require_size(h.size(), w.size(), "Gate2: hidden");
  return dot(w, h) + b;
}

double Gate2::alpha(std::span<const double> h) const { return sigmoid(logit(h)); }

IntegratedVocab::IntegratedVocab(const Vocab& chat, const std::vector<std::string>& values) {
  words_ = chat.words();
  chat_size_ = words_.size();
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<TokenId>(i));
  for (const auto& v : values) {
    auto [it, inserted] = index_.try_emplace(v, static_cast<TokenId>(words_.size()));
    if (inserted) words_.push_back(v);
    value_ids_.push_back(it->second);
  }
  union_to_value_.assign(words_.size(), -1);
  for (std::size_t j = 0; j < value_ids_.size(); ++j) {
    union_to_value_[value_ids_[j]] = static_cast<std::int64_t>(j);
  }
}

std::optional<TokenId> IntegratedVocab::find(const std::string& w) const {
  auto it = index_.find(w);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> IntegratedVocab::value_index(TokenId id) const {
  if (id >= union_to_value_.size() || union_to_value_[id] < 0) return std::nullopt;
  return static_cast<std::size_t>(union_to_value_[id]);
}

Mix2Result mix2(std::span<const double> h_c, std::span<const double> p_c,
                std::span<const double> p_qa, const Gate2& gate, const IntegratedVocab& vocab) {
  require_size(p_c.size(), vocab.chat_size(), "mix2: p_c");
  require_size(p_qa.size(), vocab.value_ids().size(), "mix2: p_qa");
  Mix2Result r;
  r.alpha = gate.alpha(h_c);
  r.probs.assign(vocab.size(), 0.0);
  for (std::size_t i = 0; i < p_c.size(); ++i) r.probs[i] = r.alpha * p_c[i];
  const double beta = 1.0 - r.alpha;
  const auto& ids = vocab.value_ids();
  for (std::size_t j = 0; j < ids.size(); ++j) r.probs[ids[j]] += beta * p_qa[j];
  return r;
}

std::string policy_name(QaViewPolicy p) {
  return p == QaViewPolicy::LastClientUtterance ? "last-client-utterance" : "full-history";
}

QaViewPolicy parse_policy(const std::string& name) {
  if (name == "last-client-utterance") return QaViewPolicy::LastClientUtterance;
  if (name == "full-history") return QaViewPolicy::FullHistory;
  throw ConfigError("unknown qa view policy '" + name +
                    "' (expected last-client-utterance or full-history)");
}

std::vector<std::string> qa_context_view(const std::vector<std::string>& context,
                                         QaViewPolicy policy) {
  std::vector<std::vector<std::string>> segments;
  bool in_client = false;
  for (const auto& tok : context) {
    if (tok == kClient) {
      segments.emplace_back();
      in_client = true;
    } else if (is_reserved_token(tok)) {
      in_client = false;
    } else if (in_client) {
      segments.back().push_back(tok);
    }
  }
  if (segments.empty()) return {};
  if (policy == QaViewPolicy::LastClientUtterance) return segments.back();
  std::vector<std::string> all;
  for (auto& s : segments) all.insert(all.end(), s.begin(), s.end());
  return all;
}

// ---- IntegratedModel ----

IntegratedModel::IntegratedModel(const ChatModel& chat, const QaModel& qa, const KbIndex& kb,
                                 Gate2 gate, QaViewPolicy policy, bool renormalize_qa)
    : chat_(&chat),
      qa_(&qa),
      kb_(&kb),
      policy_(policy),
      renormalize_qa_(renormalize_qa),
      vocab_(chat.vocab(), kb.values()) {
  qa.check_aligned(kb);
  set_gate(std::move(gate));
}

void IntegratedModel::set_gate(Gate2 g) {
  require_size(g.w.size(), chat_->hidden_size(), "IntegratedModel: gate w");
  gate_ = std::move(g);
}

Vector IntegratedModel::qa_distribution(const std::vector<std::string>& context) const {
  const auto view = qa_context_view(context, policy_);
  if (view.empty()) {
    if (log_) log_("qa view empty (no client segment); p_qa falls back to uniform");
    const double n = static_cast<double>(kb_->values().size());
    return Vector(kb_->values().size(), 1.0 / n);
  }
  const auto heads = qa_->encode_question(view);
  return marginalize(heads.p_device, heads.p_attribute, *kb_, renormalize_qa_);
}

IntegratedModel::State IntegratedModel::start(const std::vector<std::string>& context) const {
  State s;
  s.chat = chat_->encode_context(context);
  s.p_c = chat_->distribution(s.chat);
  s.h = s.chat.lstm.h;
  s.p_qa = std::make_shared<const Vector>(qa_distribution(context));
  return s;
}

IntegratedModel::State IntegratedModel::advance(const State& s, TokenId id) const {
  if (id >= vocab_.size()) throw Error("IntegratedModel: token id out of range");
  const TokenId chat_id = vocab_.kb_only(id) ? Vocab::kUnkId : id;
  ChatStep step = chat_->step(s.chat, chat_id);
  return {std::move(step.state), std::move(step.dist), std::move(step.hidden), s.p_qa};
}

Vector IntegratedModel::next_distribution(const State& s) const {
  return mix2(s.h, s.p_c, *s.p_qa, gate_, vocab_).probs;
}

TokenId IntegratedModel::union_id(const std::string& w) const {
  auto id = vocab_.find(w);
  return id ? *id : Vocab::kUnkId;
}

IntegratedModel::GoldProbs IntegratedModel::gold_probs(const State& s, const std::string& gold) const {
  GoldProbs g;
  const auto id = vocab_.find(gold);
  if (!id) {
    g.p_c = s.p_c[Vocab::kUnkId];
    return g;
  }
  if (!vocab_.kb_only(*id)) g.p_c = s.p_c[*id];
  if (auto j = vocab_.value_index(*id)) g.p_qa = (*s.p_qa)[*j];
  return g;
}

ChatOnlyModel::State ChatOnlyModel::start(const std::vector<std::string>& context) const {
  State s;
  s.chat = chat_->encode_context(context);
  s.p_c = chat_->distribution(s.chat);
  return s;
}

ChatOnlyModel::State ChatOnlyModel::advance(const State& s, TokenId id) const {
  ChatStep step = chat_->step(s.chat, id);
  return {std::move(step.state), std::move(step.dist)};
}

// ---- gate training ----

std::vector<GatePairData> precompute_gate_data(const IntegratedModel& model,
                                               const std::vector<DialogueSample>& pairs,
                                               double beta) {
  std::vector<GatePairData> out;
  out.reserve(pairs.size());
  for (const auto& pair : pairs) {
    GatePairData data;
    auto s = model.start(pair.context);
    for (std::size_t t = 0; t < pair.response.size(); ++t) {
      const auto& gold = pair.response[t];
      const auto g = model.gold_probs(s, gold);
      const auto id = model.vocab().find(gold);
      const bool kb_only = id && model.vocab().kb_only(*id);
      data.push_back({s.h, g.p_c, g.p_qa, kb_only ? beta : 1.0});
      if (t + 1 < pair.response.size()) s = model.advance(s, model.union_id(gold));
    }
    out.push_back(std::move(data));
  }
  return out;
}

namespace {

// Adds d(sum -beta log p)/d(w, b) into grad (size |w| + 1) when non-empty.
double pair_loss(const Gate2& gate, const GatePairData& data, std::span<double> grad) {
  double total = 0.0;
  const std::size_t H = gate.w.size();
  for (const auto& pos : data) {
    const double a = gate.alpha(pos.h);
    const double p = a * pos.p_c + (1.0 - a) * pos.p_qa;
    total -= pos.beta * std::log(std::max(p, kMinProb));
    if (grad.empty()) continue;
    const double dz = -pos.beta * a * (1.0 - a) * (pos.p_c - pos.p_qa) / std::max(p, kMinProb);
    axpy(dz, pos.h, grad.first(H));
    grad[H] += dz;
  }
  return total;
}

}  // namespace

double gate_objective(const Gate2& gate, const std::vector<GatePairData>& data, double lambda,
                      std::span<double> grad) {
  const std::size_t H = gate.w.size();
  if (!grad.empty()) {
    require_size(grad.size(), H + 1, "gate_objective: grad");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  double total = 0.0;
  for (const auto& d : data) total += pair_loss(gate, d, grad);
  total += 0.5 * lambda * (squared_norm(gate.w) + gate.b * gate.b);
  if (!grad.empty()) {
    axpy(lambda, gate.w, grad.first(H));
    grad[H] += lambda * gate.b;
  }
  return total;
}

std::vector<GateEpochReport> train_gate(Gate2& gate, const std::vector<GatePairData>& data,
                                        const GateTrainOptions& options) {
  if (data.empty()) throw ConfigError("train_gate: empty dataset");
  if (!(options.lr > 0)) throw ConfigError("train_gate: lr must be > 0");
  if (options.lambda < 0) throw ConfigError("train_gate: lambda must be >= 0");
  const std::size_t H = gate.w.size();
  const double l2 = options.lambda / static_cast<double>(data.size());
  Rng rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Vector theta(H + 1), grad(H + 1);
  std::vector<GateEpochReport> reports;
  for (std::size_t e = 0; e < options.epochs; ++e) {
    rng.shuffle(order);
    for (auto i : order) {
      std::fill(grad.begin(), grad.end(), 0.0);
      pair_loss(gate, data[i], grad);
      std::copy(gate.w.begin(), gate.w.end(), theta.begin());
      theta[H] = gate.b;
      sgd_update(theta, grad, options.lr, l2);
      std::copy(theta.begin(), theta.begin() + H, gate.w.begin());
      gate.b = theta[H];
    }
    GateEpochReport r{e + 1, gate_objective(gate, data, options.lambda)};
    if (options.log) {
      options.log("gate epoch " + std::to_string(r.epoch) + " J=" + std::to_string(r.objective) +
                  " b=" + std::to_string(gate.b));
    }
    reports.push_back(r);
  }
  return reports;
}

std::vector<GateEpochReport> train_gate(Gate2& gate, const ChatModel& chat, const QaModel& qa,
                                        const KbIndex& kb, const std::vector<DialogueSample>& pairs,
                                        const GateTrainOptions& options, QaViewPolicy policy,
                                        bool renormalize_qa) {
  if (!chat.trained() || !qa.trained()) {
    throw ConfigError(std::string("gate training requires trained, frozen experts: ") +
                      (!chat.trained() ? "the chat" : "the qa") +
                      " checkpoint is not marked trained");
  }
  IntegratedModel model(chat, qa, kb, gate, policy, renormalize_qa);
  const auto data = precompute_gate_data(model, pairs, options.beta);
  return train_gate(gate, data, options);
}

// ---- persistence ----

std::string expert_hash(const ChatModel& chat) { return sha256_hex(chat.to_container().to_bytes()); }
std::string expert_hash(const QaModel& qa) { return sha256_hex(qa.to_container().to_bytes()); }

void save_gate(const std::filesystem::path& path, const GateCheckpoint& ckpt) {
  Container c;
  c.meta["kind"] = "gate2";
  c.meta["chat_sha256"] = ckpt.chat_hash;
  c.meta["qa_sha256"] = ckpt.qa_hash;
  c.meta["qa_view"] = policy_name(ckpt.policy);
  Vector w = ckpt.gate.w;
  Vector b{ckpt.gate.b};
  c.put(view_of("w", w));
  c.put(view_of("b", b));
  c.save(path);
}

GateCheckpoint load_gate(const std::filesystem::path& path) {
  const auto c = Container::load(path);
  if (c.meta_at("kind") != "gate2") throw CheckpointError(path.string() + " is not a gate checkpoint");
  GateCheckpoint g;
  g.chat_hash = c.meta_at("chat_sha256");
  g.qa_hash = c.meta_at("qa_sha256");
  g.policy = parse_policy(c.meta_at("qa_view"));
  auto it = c.tensors.find("w");
  if (it == c.tensors.end()) throw CheckpointError(path.string() + ": missing tensor w");
  g.gate.w = it->second.data;
  Vector b(1);
  c.get(view_of("b", b));
  g.gate.b = b[0];
  return g;
}

GateCheckpoint load_gate(const std::filesystem::path& path, const std::string& chat_hash,
                         const std::string& qa_hash, bool force) {
  auto g = load_gate(path);
  if (!force && (g.chat_hash != chat_hash || g.qa_hash != qa_hash)) {
    throw CheckpointError(path.string() +
                          ": gate was trained against different expert checkpoints "
                          "(pass --force to load anyway)");
  }
  return g;
}

}  // namespace moelm
