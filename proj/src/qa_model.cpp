#include "moelm/qa_model.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "moelm/error.hpp"
#include "moelm/random.hpp"

namespace moelm {

std::vector<QaExample> read_qa_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<QaExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("q").get<std::vector<std::string>>(), j.at("d").get<std::string>(),
                     j.at("a").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_qa_dataset(const std::filesystem::path& path, const std::vector<QaExample>& data) {
  std::string out;
  for (const auto& ex : data) {
    out += nlohmann::json{{"q", ex.question}, {"d", ex.device}, {"a", ex.attribute}}.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<TensorView> QaModel::Params::views() {
  std::vector<TensorView> v{view_of("embedding", embedding)};
  for (auto& t : encoder.views("encoder")) v.push_back(t);
  v.push_back(view_of("device_w", device_w));
  v.push_back(view_of("device_b", device_b));
  v.push_back(view_of("attribute_w", attribute_w));
  v.push_back(view_of("attribute_b", attribute_b));
  return v;
}

QaModel::QaModel(Vocab vocab, std::vector<std::string> devices,
                 std::vector<std::string> attributes, QaConfig config)
    : vocab_(std::move(vocab)),
      devices_(std::move(devices)),
      attributes_(std::move(attributes)),
      config_(config) {
  if (devices_.empty() || attributes_.empty()) throw ConfigError("QA heads need labels");
  params_.embedding = Matrix(vocab_.size(), config_.emb_dim);
  params_.encoder = LstmParams(config_.emb_dim, config_.hidden);
  params_.device_w = Matrix(devices_.size(), config_.hidden);
  params_.device_b = Vector(devices_.size(), 0.0);
  params_.attribute_w = Matrix(attributes_.size(), config_.hidden);
  params_.attribute_b = Vector(attributes_.size(), 0.0);
}

QaModel::QaModel(Vocab vocab, std::vector<std::string> devices,
                 std::vector<std::string> attributes, QaConfig config, std::uint64_t seed)
    : QaModel(std::move(vocab), std::move(devices), std::move(attributes), config) {
  Rng rng(seed);
  const double s = config_.init_scale;
  for (double& v : params_.embedding.flat()) v = rng.uniform(-s, s);
  params_.encoder.init(rng, s, config_.forget_bias);
  for (double& v : params_.device_w.flat()) v = rng.uniform(-s, s);
  for (double& v : params_.attribute_w.flat()) v = rng.uniform(-s, s);
}

QaModel::Params QaModel::zero_grad() const {
  Params g;
  g.embedding = Matrix(params_.embedding.rows(), params_.embedding.cols());
  g.encoder = LstmParams(config_.emb_dim, config_.hidden);
  g.device_w = Matrix(params_.device_w.rows(), params_.device_w.cols());
  g.device_b = Vector(params_.device_b.size(), 0.0);
  g.attribute_w = Matrix(params_.attribute_w.rows(), params_.attribute_w.cols());
  g.attribute_b = Vector(params_.attribute_b.size(), 0.0);
  return g;
}

void QaModel::check_aligned(const KbIndex& kb) const {
  if (devices_ != kb.devices() || attributes_ != kb.attributes()) {
    throw CheckpointError("QA model heads (" + std::to_string(devices_.size()) + " devices, " +
                          std::to_string(attributes_.size()) +
                          " attributes) do not match the KB (" +
                          std::to_string(kb.devices().size()) + " devices, " +
                          std::to_string(kb.attributes().size()) + " attributes)");
  }
}

QaModel::Encoded QaModel::encode(const QaExample& ex) const {
  auto d = std::find(devices_.begin(), devices_.end(), ex.device);
  if (d == devices_.end()) throw Error("QA label device '" + ex.device + "' is not in the KB");
  auto a = std::find(attributes_.begin(), attributes_.end(), ex.attribute);
  if (a == attributes_.end()) {
    throw Error("QA label attribute '" + ex.attribute + "' is not in the KB");
  }
  return {vocab_.encode(ex.question), static_cast<std::size_t>(d - devices_.begin()),
          static_cast<std::size_t>(a - attributes_.begin())};
}

HeadDistributions QaModel::encode_question(const std::vector<std::string>& tokens) const {
  return encode_question_ids(vocab_.encode(tokens));
}

HeadDistributions QaModel::encode_question_ids(const std::vector<TokenId>& ids) const {
  if (ids.empty()) throw Error("encode_question: empty question");
  LstmState s = LstmState::zeros(config_.hidden);
  for (TokenId id : ids) s = lstm_step(params_.encoder, params_.embedding.row(id), s);
  HeadDistributions out{params_.device_b, params_.attribute_b};
  gemv_acc(params_.device_w, s.h, out.p_device);
  gemv_acc(params_.attribute_w, s.h, out.p_attribute);
  softmax_inplace(out.p_device);
  softmax_inplace(out.p_attribute);
  return out;
}

double QaModel::loss(const Encoded& ex, Params* grad) const {
  if (ex.question.empty()) throw Error("QA loss: empty question");
  const std::size_t H = config_.hidden;
  std::vector<LstmCache> cache(ex.question.size());
  LstmState s = LstmState::zeros(H);
  for (std::size_t i = 0; i < ex.question.size(); ++i) {
    s = lstm_step(params_.encoder, params_.embedding.row(ex.question[i]), s, cache[i]);
  }
  Vector dl(params_.device_b), al(params_.attribute_b);
  gemv_acc(params_.device_w, s.h, dl);
  gemv_acc(params_.attribute_w, s.h, al);
  Vector gd(dl.size()), ga(al.size());
  const bool want = grad != nullptr;
  double total = softmax_cross_entropy(dl, ex.device, want ? std::span<double>(gd) : std::span<double>());
  total += softmax_cross_entropy(al, ex.attribute, want ? std::span<double>(ga) : std::span<double>());
  if (!want) return total;

  outer_acc(grad->device_w, gd, s.h);
  axpy(1.0, gd, grad->device_b);
  outer_acc(grad->attribute_w, ga, s.h);
  axpy(1.0, ga, grad->attribute_b);
  Vector dh(H, 0.0), dc(H, 0.0), dh_prev(H), dc_prev(H), dx(config_.emb_dim);
  gemv_t_acc(params_.device_w, gd, dh);
  gemv_t_acc(params_.attribute_w, ga, dh);
  for (std::size_t i = ex.question.size(); i-- > 0;) {
    lstm_backward(params_.encoder, cache[i], dh, dc, grad->encoder, dx, dh_prev, dc_prev);
    axpy(1.0, dx, grad->embedding.row(ex.question[i]));
    dh = dh_prev;
    dc = dc_prev;
  }
  return total;
}

Container QaModel::to_container() const {
  Container c;
  c.meta["kind"] = "qa";
  c.meta["trained"] = trained_ ? "true" : "false";
  c.meta["emb_dim"] = std::to_string(config_.emb_dim);
  c.meta["hidden"] = std::to_string(config_.hidden);
  c.lists["vocab"] = vocab_.words();
  c.lists["devices"] = devices_;
  c.lists["attributes"] = attributes_;
  c.put_all(const_cast<QaModel*>(this)->params_.views());
  return c;
}

QaModel QaModel::from_container(const Container& c) {
  if (c.meta_at("kind") != "qa") throw CheckpointError("checkpoint is not a QA model");
  QaConfig cfg;
  cfg.emb_dim = std::stoul(c.meta_at("emb_dim"));
  cfg.hidden = std::stoul(c.meta_at("hidden"));
  QaModel m(Vocab::from_words(c.list_at("vocab")), c.list_at("devices"), c.list_at("attributes"),
            cfg);
  c.get_all(m.params_.views());
  m.trained_ = c.meta_at("trained") == "true";
  return m;
}

Vector marginalize(std::span<const double> p_device, std::span<const double> p_attribute,
                   const KbIndex& kb, bool renormalize) {
  if (p_device.size() != kb.devices().size() || p_attribute.size() != kb.attributes().size()) {
    throw ShapeError("marginalize: head sizes " + std::to_string(p_device.size()) + "/" +
                     std::to_string(p_attribute.size()) + " do not match KB " +
                     std::to_string(kb.devices().size()) + "/" +
                     std::to_string(kb.attributes().size()));
  }
  Vector mass(kb.values().size(), 0.0);
  for (const auto& e : kb.entries()) mass[e.value] += p_device[e.device] * p_attribute[e.attribute];
  if (!renormalize) return mass;
  double total = 0.0;
  for (double m : mass) total += m;
  if (!(total > 0)) throw Error("marginalize: no probability mass on any KB triple");
  for (double& m : mass) m /= total;
  return mass;
}

QaAccuracy qa_accuracy(const QaModel& model, const std::vector<QaExample>& data) {
  QaAccuracy acc;
  if (data.empty()) return acc;
  std::size_t dok = 0, aok = 0;
  for (const auto& ex : data) {
    const auto enc = model.encode(ex);
    const auto h = model.encode_question_ids(enc.question);
    const auto dmax = std::max_element(h.p_device.begin(), h.p_device.end()) - h.p_device.begin();
    const auto amax =
        std::max_element(h.p_attribute.begin(), h.p_attribute.end()) - h.p_attribute.begin();
    dok += static_cast<std::size_t>(dmax) == enc.device;
    aok += static_cast<std::size_t>(amax) == enc.attribute;
  }
  acc.device = static_cast<double>(dok) / static_cast<double>(data.size());
  acc.attribute = static_cast<double>(aok) / static_cast<double>(data.size());
  return acc;
}

std::vector<QaEpochReport> train_qa(QaModel& model, const std::vector<QaExample>& train,
                                    const std::vector<QaExample>& dev, double lr,
                                    std::size_t epochs, std::uint64_t seed,
                                    const std::function<void(const std::string&)>& log) {
  if (train.empty()) throw ConfigError("train_qa: empty training set");
  if (!(lr > 0)) throw ConfigError("train_qa: lr must be > 0");
  std::vector<QaModel::Encoded> data;
  data.reserve(train.size());
  for (const auto& ex : train) data.push_back(model.encode(ex));
  for (const auto& ex : dev) model.encode(ex);  // validates dev labels up front

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  auto params = model.params().views();
  QaModel::Params grad = model.zero_grad();
  auto grads = grad.views();
  std::vector<QaEpochReport> reports;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t idx : order) {
      zero(grads);
      total += model.loss(data[idx], &grad);
      sgd_update(params, grads, lr, 0.0);
    }
    QaEpochReport r;
    r.epoch = epoch;
    r.mean_loss = total / static_cast<double>(data.size());
    const auto acc = qa_accuracy(model, dev.empty() ? train : dev);
    r.device_accuracy = acc.device;
    r.attribute_accuracy = acc.attribute;
    if (log) {
      log("  qa epoch " + std::to_string(epoch) + " loss " + std::to_string(r.mean_loss) +
          " device acc " + std::to_string(r.device_accuracy) + " attribute acc " +
          std::to_string(r.attribute_accuracy));
    }
    reports.push_back(r);
  }
  model.mark_trained();
  return reports;
}

}  // namespace moelm
