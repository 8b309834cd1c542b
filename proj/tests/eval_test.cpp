#include <cmath>

#include <gtest/gtest.h>

#include "moelm/error.hpp"
#include "moelm/eval.hpp"
#include "test_util.hpp"

namespace moelm {
namespace {

using Words = std::vector<std::string>;

// Hands out fixed per-token probabilities regardless of the pair content.
class FixedScorer : public PairScorer {
 public:
  explicit FixedScorer(std::function<double(const std::string&, std::size_t)> f) : f_(std::move(f)) {}
  std::vector<double> gold_probs(const DialogueSample& pair) const override {
    std::vector<double> out;
    for (std::size_t t = 0; t < pair.response.size(); ++t) out.push_back(f_(pair.response[t], t));
    return out;
  }

 private:
  std::function<double(const std::string&, std::size_t)> f_;
};

DialogueSample pair(Words response) {
  DialogueSample s;
  s.context = {"<CLIENT>", "battery", "?", "<EOC>"};
  s.response = std::move(response);
  return s;
}

const std::vector<DialogueSample> kPairs{pair({"it", "is", "7.5", "hours", "<EOR>"}),
                                         pair({"12.0", "<EOR>"}),
                                         pair({"ok", "<pause>", "<EOR>"})};

TEST(Perplexity, UniformOverFourIsFour) {
  const FixedScorer s([](const std::string&, std::size_t) { return 0.25; });
  EXPECT_DOUBLE_EQ(perplexity(s, "u", kPairs, PplFilter::All, {}).perplexity(), 4.0);
}

TEST(Perplexity, CertainModelIsOne) {
  const FixedScorer s([](const std::string&, std::size_t) { return 1.0; });
  const auto r = perplexity(s, "one", kPairs, PplFilter::All, {});
  EXPECT_EQ(r.perplexity(), 1.0);
  EXPECT_EQ(r.tokens, 10u);
}

TEST(Perplexity, HandComputedThreeTokens) {
  const Vector probs{0.5, 0.25, 0.125};
  const FixedScorer s([&](const std::string&, std::size_t t) { return probs[t]; });
  const auto r = perplexity(s, "h", {pair({"a", "b", "<EOR>"})}, PplFilter::All, {});
  EXPECT_NEAR(r.perplexity(), 4.0, 1e-12);
  EXPECT_NEAR(r.nll, 6 * std::log(2.0), 1e-12);
}

TEST(Perplexity, ValueFilterKeepsOnlyValuePositions) {
  const FixedScorer s([](const std::string& w, std::size_t) { return w == "7.5" ? 0.5 : w == "12.0" ? 0.125 : 0.9; });
  const auto all = perplexity(s, "m", kPairs, PplFilter::All, {"7.5", "12.0"});
  const auto v = perplexity(s, "m", kPairs, PplFilter::ValueTokens, {"7.5", "12.0"});
  EXPECT_EQ(v.tokens, 2u);
  EXPECT_LE(v.tokens, all.tokens);
  EXPECT_NEAR(v.perplexity(), 4.0, 1e-12);
  EXPECT_GE(v.perplexity(), 1.0);
  EXPECT_THROW(perplexity(s, "m", kPairs, PplFilter::ValueTokens, {"99"}), Error);
  EXPECT_THROW(perplexity(s, "m", {}, PplFilter::All, {}), Error);
}

TEST(Perplexity, ManifestFilterUsesTheMask) {
  const FixedScorer s([](const std::string&, std::size_t t) { return t == 0 ? 0.5 : 0.1; });
  const std::vector<std::vector<bool>> mask{{false, false, true, false, false}, {true, false}, {false, false, false}};
  const auto r = perplexity(s, "m", kPairs, PplFilter::ManifestValues, {}, &mask);
  EXPECT_EQ(r.tokens, 2u);
  EXPECT_NEAR(r.nll, -std::log(0.1) - std::log(0.5), 1e-12);
  EXPECT_THROW(perplexity(s, "m", kPairs, PplFilter::ManifestValues, {}), Error);
}

TEST(Perplexity, OrderInvariantAndSplitCombine) {
  Rng rng(3);
  std::vector<DialogueSample> data;
  for (int i = 0; i < 40; ++i) {
    Words r;
    for (std::size_t t = 0, n = 1 + rng.index(6); t < n; ++t) r.push_back("w" + std::to_string(rng.index(9)));
    r.push_back("<EOR>");
    data.push_back(pair(r));
  }
  const FixedScorer s([](const std::string& w, std::size_t t) { return 1.0 / (2.0 + static_cast<double>(w.size() + t)); });
  const auto whole = perplexity(s, "m", data, PplFilter::All, {});
  auto shuffled = data;
  rng.shuffle(shuffled);
  EXPECT_NEAR(perplexity(s, "m", shuffled, PplFilter::All, {}).perplexity(), whole.perplexity(), 1e-12);

  const std::vector<DialogueSample> a(data.begin(), data.begin() + 13), b(data.begin() + 13, data.end());
  const auto c = combine(perplexity(s, "m", a, PplFilter::All, {}), perplexity(s, "m", b, PplFilter::All, {}));
  EXPECT_EQ(c.tokens, whole.tokens);
  EXPECT_NEAR(c.perplexity(), whole.perplexity(), 1e-12);
}

TEST(Comparison, RelativeDecreaseArithmetic) {
  Comparison c;
  c.chat = {{"chat", PplFilter::All, 10, 10 * std::log(14.7)}, {"chat", PplFilter::ValueTokens, 4, 4 * std::log(75.8)}};
  c.integrated = {{"integrated", PplFilter::All, 10, 10 * std::log(15.4)},
                  {"integrated", PplFilter::ValueTokens, 4, 4 * std::log(46.8)}};
  EXPECT_NEAR(c.relative_decrease(PplFilter::ValueTokens), 0.383, 5e-4);
  EXPECT_NEAR(c.relative_decrease(PplFilter::ValueTokens), (75.8 - 46.8) / 75.8, 1e-12);
  EXPECT_LT(c.relative_decrease(PplFilter::All), 0.0);
  EXPECT_TRUE(c.improves_value_tokens());
  const auto j = c.to_json();
  EXPECT_TRUE(j.contains("relative_ppl_decrease"));
}

TEST(Comparison, IdenticalModelsChangeNothing) {
  const FixedScorer s([](const std::string& w, std::size_t) { return w == "7.5" ? 0.1 : 0.4; });
  const auto c = compare_models(s, s, kPairs, {"7.5", "12.0"});
  EXPECT_EQ(c.relative_decrease(PplFilter::All), 0.0);
  EXPECT_EQ(c.relative_decrease(PplFilter::ValueTokens), 0.0);
  EXPECT_FALSE(c.improves_value_tokens());
  ASSERT_EQ(c.chat.size(), c.integrated.size());
  EXPECT_THROW(c.relative_decrease(PplFilter::ManifestValues), Error);
}

TEST(PplReport, JsonShape) {
  const PplReport r{"chat", PplFilter::ValueTokens, 2, 2 * std::log(3.0)};
  const auto j = r.to_json();
  EXPECT_EQ(j.at("model"), "chat");
  EXPECT_EQ(j.at("filter"), "value_tokens");
  EXPECT_EQ(j.at("tokens"), 2);
  EXPECT_NEAR(j.at("ppl").get<double>(), 3.0, 1e-12);
  EXPECT_EQ(parse_filter("value"), PplFilter::ValueTokens);
  EXPECT_EQ(parse_filter("manifest"), PplFilter::ManifestValues);
  EXPECT_THROW(parse_filter("bleu"), Error);
}

// ---- scorers over tiny experts ----

struct Models {
  KbIndex kb = testing::tiny_kb();
  ChatModel chat = testing::tiny_chat();
  QaModel qa = testing::tiny_qa(kb);
  IntegratedModel integrated{chat, qa, kb, Gate2{Vector(5, 0.2), 0.3}};
};

TEST(Scorers, ChatScoresOovAsUnk) {
  Models m;
  const auto p = pair({"battery", "12.0", "<EOR>"});
  const auto probs = ChatScorer(m.chat).gold_probs(p);
  auto st = m.chat.encode_context(p.context);
  auto dist = m.chat.distribution(st);
  EXPECT_EQ(probs[0], dist[m.chat.vocab().id("battery")]);
  st = m.chat.step(st, m.chat.vocab().id("battery")).state;
  dist = m.chat.distribution(st);
  EXPECT_EQ(probs[1], dist[Vocab::kUnkId]);
}

TEST(Scorers, IntegratedScoreEqualsTraceMixture) {
  Models m;
  const auto p = pair({"the", "battery", "is", "12.0", "hours", "zebra", "7.5", "<EOR>"});
  const auto probs = IntegratedScorer(m.integrated).gold_probs(p);
  const auto t = trace(m.integrated, p.context, p.response);
  ASSERT_EQ(t.size(), probs.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(probs[i], t[i].mixed(), 1e-12) << i;
    EXPECT_GE(t[i].alpha, 0.0);
    EXPECT_LE(t[i].alpha, 1.0);
    EXPECT_GE(t[i].p_c, 0.0);
    EXPECT_LE(t[i].p_qa, 1.0);
    EXPECT_EQ(t[i].token, p.response[i]);
  }
  // kb-only value: no chat mass. Non-KB token: no QA mass.
  EXPECT_EQ(t[3].p_c, 0.0);
  EXPECT_GT(t[3].p_qa, 0.0);
  EXPECT_EQ(t[5].p_qa, 0.0);
  EXPECT_EQ(t[1].p_qa, 0.0);
  // Consistency with the full next-token distribution where the token is known.
  auto s = m.integrated.start(p.context);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto d = m.integrated.next_distribution(s);
    EXPECT_NEAR(d[m.integrated.union_id(p.response[i])], probs[i], 1e-12);
    s = m.integrated.advance(s, m.integrated.union_id(p.response[i]));
  }
}

TEST(Trace, ValueMissingFromKbHasZeroQaProbability) {
  Models m;
  const auto t = trace(m.integrated, {"<CLIENT>", "phone", "x", "?", "<EOC>"}, {"9.2", "hours", "<EOR>"});
  EXPECT_EQ(t[0].p_qa, 0.0);
  EXPECT_GT(t[0].p_c, 0.0);  // the chat model's <UNK> probability
}

TEST(Trace, JsonRoundTripsAStoredRowExactly) {
  const GateTrace t{{"220", 0.51, 0.03, 0.42}, {"hours", 0.97, 0.9, 0.0}};
  const auto j = trace_to_json(t);
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j[0].at("token"), "220");
  EXPECT_EQ(j[0].at("alpha").get<double>(), 0.51);
  EXPECT_EQ(j[0].at("p_c").get<double>(), 0.03);
  EXPECT_EQ(j[0].at("p_qa").get<double>(), 0.42);
  const auto back = trace_from_json(nlohmann::json::parse(j.dump()));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].alpha, 0.51);
  EXPECT_EQ(back[0].p_c, 0.03);
  EXPECT_EQ(back[0].p_qa, 0.42);
  EXPECT_NEAR(back[0].mixed(), 0.2211, 1e-15);
}

TEST(EvalSet, ManifestMaskMarksValueTokens) {
  const auto kb = KbIndex::build({{"phone_x", "battery_talk_time", "7.5"}});
  const auto corpus = synth_corpus(kb, DialogueTemplates::defaults(), 1, 5);
  const auto set = build_eval_set(corpus.dialogues, corpus.manifest, {}, false);
  ASSERT_EQ(set.pairs.size(), set.kb_sourced.size());
  std::size_t marked = 0;
  for (std::size_t i = 0; i < set.pairs.size(); ++i) {
    ASSERT_EQ(set.kb_sourced[i].size(), set.pairs[i].response.size());
    for (std::size_t t = 0; t < set.kb_sourced[i].size(); ++t) {
      if (set.kb_sourced[i][t]) {
        EXPECT_EQ(set.pairs[i].response[t], "7.5");
        ++marked;
      }
    }
  }
  EXPECT_EQ(marked, corpus.value_tokens);
  const auto spec = build_eval_set(corpus.dialogues, corpus.manifest, {}, true);
  EXPECT_LE(spec.pairs.size(), set.pairs.size());
  for (const auto& p : spec.pairs) EXPECT_TRUE(is_device_spec_response(p.response));
}

}  // namespace
}  // namespace moelm
