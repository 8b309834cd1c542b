#include "moelm/eval.hpp"

#include <cmath>
#include <map>
#include <utility>

#include "moelm/error.hpp"

namespace moelm {

std::string filter_name(PplFilter f) {
  switch (f) {
    case PplFilter::All: return "all";
    case PplFilter::ValueTokens: return "value_tokens";
    case PplFilter::ManifestValues: return "manifest_values";
  }
  return "all";
}

PplFilter parse_filter(const std::string& s) {
  if (s == "all") return PplFilter::All;
  if (s == "value" || s == "value_tokens") return PplFilter::ValueTokens;
  if (s == "manifest" || s == "manifest_values") return PplFilter::ManifestValues;
  throw ConfigError("unknown filter '" + s + "' (expected all, value or manifest)");
}

double PplReport::perplexity() const {
  if (tokens == 0) throw Error("perplexity of an empty report");
  return std::exp(nll / static_cast<double>(tokens));
}

nlohmann::json PplReport::to_json() const {
  return {{"model", model}, {"filter", filter_name(filter)}, {"tokens", tokens}, {"nll", nll},
          {"ppl", perplexity()}};
}

PplReport combine(const PplReport& a, const PplReport& b) {
  if (a.filter != b.filter) throw Error("combine: reports use different filters");
  return {a.model, a.filter, a.tokens + b.tokens, a.nll + b.nll};
}

std::vector<double> ChatScorer::gold_probs(const DialogueSample& pair) const {
  const auto enc = chat_->encode(pair);
  const auto steps = chat_->teacher_force(enc);
  std::vector<double> out(enc.response.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = steps[t].dist[enc.response[t]];
  return out;
}

std::vector<double> IntegratedScorer::gold_probs(const DialogueSample& pair) const {
  const auto rows = trace(*model_, pair.context, pair.response);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.mixed());
  return out;
}

EvalSet build_eval_set(const std::vector<Dialogue>& dialogues,
                       const std::vector<ManifestEntry>& manifest, const PairOptions& options,
                       bool device_spec_only) {
  if (!manifest.empty() && manifest.size() != dialogues.size()) {
    throw Error("manifest has " + std::to_string(manifest.size()) + " entries for " +
                std::to_string(dialogues.size()) + " dialogues");
  }
  EvalSet set;
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    std::map<std::pair<int, int>, bool> sourced;
    if (!manifest.empty()) {
      for (const auto& p : manifest[d].value_positions) sourced[{p.turn, p.token_index}] = true;
    }
    for (auto& s : extract_pairs(dialogues[d], options)) {
      if (device_spec_only && !is_device_spec_response(s.response)) continue;
      std::vector<bool> mask(s.response.size(), false);
      for (std::size_t t = 0; t < mask.size(); ++t) {
        const auto& src = s.response_source[t];
        mask[t] = src.turn >= 0 && sourced.count({src.turn, src.index}) > 0;
      }
      set.pairs.push_back(std::move(s));
      set.kb_sourced.push_back(std::move(mask));
    }
  }
  return set;
}

PplReport perplexity(const PairScorer& scorer, const std::string& model_name,
                     const std::vector<DialogueSample>& pairs, PplFilter filter,
                     const std::unordered_set<std::string>& values,
                     const std::vector<std::vector<bool>>* kb_sourced) {
  if (pairs.empty()) throw Error("perplexity: no pairs");
  if (filter == PplFilter::ManifestValues && (kb_sourced == nullptr || kb_sourced->size() != pairs.size())) {
    throw Error("perplexity: manifest filter needs one source mask per pair");
  }
  PplReport r{model_name, filter, 0, 0.0};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    const auto probs = scorer.gold_probs(pair);
    for (std::size_t t = 0; t < probs.size(); ++t) {
      bool keep = true;
      if (filter == PplFilter::ValueTokens) keep = values.count(pair.response[t]) > 0;
      if (filter == PplFilter::ManifestValues) keep = (*kb_sourced)[i].at(t);
      if (!keep) continue;
      r.nll -= std::log(std::max(probs[t], 1e-300));
      ++r.tokens;
    }
  }
  if (r.tokens == 0) throw Error("perplexity: no tokens left after the " + filter_name(filter) + " filter");
  return r;
}

double Comparison::relative_decrease(PplFilter f) const {
  for (std::size_t i = 0; i < chat.size(); ++i) {
    if (chat[i].filter == f) {
      const double c = chat[i].perplexity();
      return (c - integrated[i].perplexity()) / c;
    }
  }
  throw Error("comparison has no " + filter_name(f) + " report");
}

bool Comparison::improves_value_tokens() const {
  return relative_decrease(PplFilter::ValueTokens) > 0;
}

nlohmann::json Comparison::to_json() const {
  nlohmann::json j;
  j["chat"] = nlohmann::json::array();
  j["integrated"] = nlohmann::json::array();
  for (const auto& r : chat) j["chat"].push_back(r.to_json());
  for (const auto& r : integrated) j["integrated"].push_back(r.to_json());
  nlohmann::json rel;
  for (const auto& r : chat) rel[filter_name(r.filter)] = relative_decrease(r.filter);
  j["relative_ppl_decrease"] = rel;
  j["integration_improves_value_tokens"] = improves_value_tokens();
  j["scoring"] = {
      {"scored_positions", "response tokens including <EOR>, <pause> and <newline>"},
      {"chat_oov_gold", "chat model probability of <UNK>"},
      {"value_tokens", "gold token is a KB value"},
      {"manifest_values", "token was filled from the KB by the corpus generator"}};
  // Published full-scale numbers; not reproducible on synthetic data.
  j["reference"] = {{"all_tokens", {{"chat", 14.7}, {"integrated", 15.4}}},
                    {"value_tokens", {{"chat", 75.8}, {"integrated", 46.8}}},
                    {"reproducible", false}};
  return j;
}

Comparison compare_models(const PairScorer& chat, const PairScorer& integrated,
                          const std::vector<DialogueSample>& pairs,
                          const std::unordered_set<std::string>& values,
                          const std::vector<std::vector<bool>>* kb_sourced) {
  std::vector<PplFilter> filters{PplFilter::All, PplFilter::ValueTokens};
  if (kb_sourced != nullptr) filters.push_back(PplFilter::ManifestValues);
  Comparison c;
  for (auto f : filters) {
    c.chat.push_back(perplexity(chat, "chat", pairs, f, values, kb_sourced));
    c.integrated.push_back(perplexity(integrated, "integrated", pairs, f, values, kb_sourced));
  }
  return c;
}

GateTrace trace(const IntegratedModel& model, const std::vector<std::string>& context,
                const std::vector<std::string>& response) {
  GateTrace rows;
  rows.reserve(response.size());
  auto s = model.start(context);
  for (std::size_t t = 0; t < response.size(); ++t) {
    const auto g = model.gold_probs(s, response[t]);
    rows.push_back({response[t], model.alpha(s), g.p_c, g.p_qa});
    if (t + 1 < response.size()) s = model.advance(s, model.union_id(response[t]));
  }
  return rows;
}

nlohmann::json trace_to_json(const GateTrace& t) {
  auto j = nlohmann::json::array();
  for (const auto& r : t) {
    j.push_back({{"token", r.token}, {"alpha", r.alpha}, {"p_c", r.p_c}, {"p_qa", r.p_qa}});
  }
  return j;
}

GateTrace trace_from_json(const nlohmann::json& j) {
  GateTrace t;
  for (const auto& r : j) {
    t.push_back({r.at("token").get<std::string>(), r.at("alpha").get<double>(),
                 r.at("p_c").get<double>(), r.at("p_qa").get<double>()});
  }
  return t;
}

}  // namespace moelm
