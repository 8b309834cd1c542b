#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "moelm/container.hpp"
#include "moelm/kb.hpp"
#include "moelm/lstm.hpp"
#include "moelm/vocab.hpp"

namespace moelm {

struct QaExample {
  std::vector<std::string> question;
  std::string device;
  std::string attribute;
};

std::vector<QaExample> read_qa_dataset(const std::filesystem::path& path);
void write_qa_dataset(const std::filesystem::path& path, const std::vector<QaExample>& data);

struct QaConfig {
  std::size_t emb_dim = 32;
  std::size_t hidden = 64;
  double init_scale = 0.1;
  double forget_bias = 1.0;
};

struct HeadDistributions {
  Vector p_device;
  Vector p_attribute;
};

// LSTM question encoder; the final hidden state feeds a device softmax and an
// attribute softmax. There is no value head: values come from marginalizing
// the two heads against the KB.
class QaModel {
 public:
  struct Params {
    Matrix embedding;
    LstmParams encoder;
    Matrix device_w;
    Vector device_b;
    Matrix attribute_w;
    Vector attribute_b;

    std::vector<TensorView> views();
  };

  struct Encoded {
    std::vector<TokenId> question;
    std::size_t device = 0;
    std::size_t attribute = 0;
  };

  QaModel(Vocab vocab, std::vector<std::string> devices, std::vector<std::string> attributes,
          QaConfig config, std::uint64_t seed);

  const Vocab& vocab() const { return vocab_; }
  const QaConfig& config() const { return config_; }
  const std::vector<std::string>& devices() const { return devices_; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }
  Params zero_grad() const;

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  // Throws unless the heads line up with kb's device and attribute lists.
  void check_aligned(const KbIndex& kb) const;

  // Labels outside the head label sets throw.
  Encoded encode(const QaExample& ex) const;

  HeadDistributions encode_question(const std::vector<std::string>& tokens) const;
  HeadDistributions encode_question_ids(const std::vector<TokenId>& ids) const;

  // NLL(device) + NLL(attribute); accumulates into grad when non-null.
  double loss(const Encoded& ex, Params* grad = nullptr) const;

  Container to_container() const;
  static QaModel from_container(const Container& c);
  void save(const std::filesystem::path& path) const { to_container().save(path); }
  static QaModel load(const std::filesystem::path& path) {
    return from_container(Container::load(path));
  }

 private:
  QaModel(Vocab vocab, std::vector<std::string> devices, std::vector<std::string> attributes,
          QaConfig config);

  Vocab vocab_;
  std::vector<std::string> devices_;
  std::vector<std::string> attributes_;
  QaConfig config_;
  Params params_;
  bool trained_ = false;
};

// p_qa(v) proportional to sum over triples (d, a, v) of p_d(d) p_a(a).
// With renormalize = false the raw (possibly deficient) mass is returned.
Vector marginalize(std::span<const double> p_device, std::span<const double> p_attribute,
                   const KbIndex& kb, bool renormalize = true);

struct QaEpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double device_accuracy = 0.0;
  double attribute_accuracy = 0.0;
};

struct QaAccuracy {
  double device = 0.0;
  double attribute = 0.0;
};

QaAccuracy qa_accuracy(const QaModel& model, const std::vector<QaExample>& data);

std::vector<QaEpochReport> train_qa(QaModel& model, const std::vector<QaExample>& train,
                                    const std::vector<QaExample>& dev, double lr,
                                    std::size_t epochs, std::uint64_t seed,
                                    const std::function<void(const std::string&)>& log = {});

}  // namespace moelm
