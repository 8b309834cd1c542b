#pragma once

#include <cstddef>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "moelm/chat_model.hpp"
#include "moelm/corpus.hpp"
#include "moelm/moe.hpp"
#include "moelm/synth.hpp"

namespace moelm {

enum class PplFilter { All, ValueTokens, ManifestValues };

std::string filter_name(PplFilter f);
// Accepts all, value (or value_tokens) and manifest.
PplFilter parse_filter(const std::string& s);

struct PplReport {
  std::string model;
  PplFilter filter = PplFilter::All;
  std::size_t tokens = 0;
  double nll = 0.0;

  double perplexity() const;
  nlohmann::json to_json() const;
};

// Token-weighted union of two reports over disjoint data.
PplReport combine(const PplReport& a, const PplReport& b);

// Teacher-forced probability of each gold response token.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual std::vector<double> gold_probs(const DialogueSample& pair) const = 0;
};

// Gold tokens outside V_c are scored with the chat model's <UNK> probability.
class ChatScorer : public PairScorer {
 public:
  explicit ChatScorer(const ChatModel& chat) : chat_(&chat) {}
  std::vector<double> gold_probs(const DialogueSample& pair) const override;

 private:
  const ChatModel* chat_;
};

class IntegratedScorer : public PairScorer {
 public:
  explicit IntegratedScorer(const IntegratedModel& model) : model_(&model) {}
  std::vector<double> gold_probs(const DialogueSample& pair) const override;

 private:
  const IntegratedModel* model_;
};

// Pairs plus, per response position, whether the token was sourced from the
// KB according to the generator manifest.
struct EvalSet {
  std::vector<DialogueSample> pairs;
  std::vector<std::vector<bool>> kb_sourced;
};

EvalSet build_eval_set(const std::vector<Dialogue>& dialogues,
                       const std::vector<ManifestEntry>& manifest, const PairOptions& options,
                       bool device_spec_only);

// Response tokens only, markers included. ValueTokens keeps positions whose
// gold token is in `values`; ManifestValues needs kb_sourced masks.
PplReport perplexity(const PairScorer& scorer, const std::string& model_name,
                     const std::vector<DialogueSample>& pairs, PplFilter filter,
                     const std::unordered_set<std::string>& values,
                     const std::vector<std::vector<bool>>* kb_sourced = nullptr);

struct Comparison {
  std::vector<PplReport> chat;        // one per filter
  std::vector<PplReport> integrated;  // same filters, same order

  // (chat - integrated) / chat for the given filter.
  double relative_decrease(PplFilter f) const;
  bool improves_value_tokens() const;
  nlohmann::json to_json() const;
};

Comparison compare_models(const PairScorer& chat, const PairScorer& integrated,
                          const std::vector<DialogueSample>& pairs,
                          const std::unordered_set<std::string>& values,
                          const std::vector<std::vector<bool>>* kb_sourced = nullptr);

struct TraceRow {
  std::string token;
  double alpha = 0.0;
  double p_c = 0.0;
  double p_qa = 0.0;

  double mixed() const { return alpha * p_c + (1.0 - alpha) * p_qa; }
};
using GateTrace = std::vector<TraceRow>;

// Teacher-forced per-token gate trace of `response` after `context`.
GateTrace trace(const IntegratedModel& model, const std::vector<std::string>& context,
                const std::vector<std::string>& response);

nlohmann::json trace_to_json(const GateTrace& t);
GateTrace trace_from_json(const nlohmann::json& j);

}  // namespace moelm
