#include <algorithm>
#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "moelm/error.hpp"
#include "moelm/moe.hpp"
#include "moelm/numerics.hpp"
#include "test_util.hpp"

namespace moelm {
namespace {

using Words = std::vector<std::string>;

// Bigram toy expert: the next-token distribution depends on the previous
// token only (the last context token when the prefix is empty).
class BigramExpert : public Expert {
 public:
  BigramExpert(Words vocab, std::uint64_t seed, double peak = 0.0) : vocab_(std::move(vocab)) {
    Rng rng(seed);
    for (const auto& from : vocab_) {
      Vector d = testing::random_dist(rng, vocab_.size());
      if (peak > 0) {
        // Mostly deterministic successor.
        const std::size_t j = rng.index(vocab_.size());
        for (auto& x : d) x *= 1 - peak;
        d[j] += peak;
      }
      table_[from] = d;
    }
    uniform_ = Vector(vocab_.size(), 1.0 / vocab_.size());
  }
  const Words& vocabulary() const override { return vocab_; }
  Vector distribution(const Words& context, const Words& prefix) const override {
    const std::string& prev = !prefix.empty() ? prefix.back() : context.empty() ? "" : context.back();
    const auto it = table_.find(prev);
    return it == table_.end() ? uniform_ : it->second;
  }
  // Greedy-ish sample path used to make training data that favors this expert.
  Words sample(Rng& rng, const std::string& start, std::size_t n) const {
    Words out;
    std::string prev = start;
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = distribution({prev}, {});
      const DiscreteSampler s(d);
      prev = vocab_[s(rng)];
      out.push_back(prev);
    }
    return out;
  }

 private:
  Words vocab_;
  std::map<std::string, Vector> table_;
  Vector uniform_;
};

// ---- mix ----

TEST(Mix, SingleExpertIsIdentity) {
  BigramExpert e({"a", "b", "c"}, 1);
  const auto u = UnionVocab::of({&e});
  const auto d = e.distribution({"a"}, {});
  const auto m = mix(Vector{1.0}, {d}, u);
  EXPECT_EQ(m.probs, d);
}

TEST(Mix, IdenticalExpertsAreAFixedPoint) {
  BigramExpert e({"a", "b", "c"}, 2);
  const auto u = UnionVocab::of({&e, &e});
  const auto d = e.distribution({"b"}, {});
  const auto m = mix(Vector{0.3, 0.7}, {d, d}, u);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(m.probs[i], d[i], 1e-15);
}

TEST(Mix, DisjointVocabularies) {
  const Words v1{"a"}, v2{"b"};
  const UnionVocab u({&v1, &v2});
  const auto m = mix(Vector{0.7, 0.3}, {Vector{1.0}, Vector{1.0}}, u);
  EXPECT_DOUBLE_EQ(m.probs[*u.find("a")], 0.7);
  EXPECT_DOUBLE_EQ(m.probs[*u.find("b")], 0.3);
  EXPECT_EQ(m.responsibilities, (Vector{0.7, 0.3}));
  EXPECT_THROW(mix(Vector{1.0}, {Vector{1.0}, Vector{1.0}}, u), ShapeError);
}

TEST(Mix, OverlappingVocabulariesShareMass) {
  const Words v1{"a", "b"}, v2{"b", "c"};
  const UnionVocab u({&v1, &v2});
  ASSERT_EQ(u.words(), (Words{"a", "b", "c"}));
  EXPECT_EQ(u.mapping(1), (std::vector<std::size_t>{1, 2}));
  const auto m = mix(Vector{0.4, 0.6}, {Vector{0.5, 0.5}, Vector{0.25, 0.75}}, u);
  EXPECT_NEAR(m.probs[0], 0.2, 1e-15);
  EXPECT_NEAR(m.probs[1], 0.4 * 0.5 + 0.6 * 0.25, 1e-15);
  EXPECT_NEAR(m.probs[2], 0.45, 1e-15);
}

TEST(Mix, RandomCasesNormalizedLinearAndOrderInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t K = 1 + rng.index(4);
    std::vector<Words> vocabs(K);
    for (auto& v : vocabs) {
      const std::size_t n = 1 + rng.index(5);
      for (std::size_t i = 0; i < n; ++i) v.push_back("w" + std::to_string(rng.index(8)));
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    std::vector<const Words*> ptrs;
    for (auto& v : vocabs) ptrs.push_back(&v);
    const UnionVocab u(ptrs);
    std::vector<Vector> dists;
    for (auto& v : vocabs) dists.push_back(testing::random_dist(rng, v.size()));
    const Vector w = testing::random_dist(rng, K);
    const auto m = mix(w, dists, u);
    EXPECT_NEAR(testing::sum(m.probs), 1.0, 1e-9);
    for (double p : m.probs) EXPECT_GE(p, 0.0);

    // Reversed expert order with reversed weights gives the same word probabilities.
    std::vector<const Words*> rptrs(ptrs.rbegin(), ptrs.rend());
    const UnionVocab ru(rptrs);
    const std::vector<Vector> rdists(dists.rbegin(), dists.rend());
    const Vector rw(w.rbegin(), w.rend());
    const auto rm = mix(rw, rdists, ru);
    for (std::size_t i = 0; i < u.size(); ++i) {
      EXPECT_NEAR(m.probs[i], rm.probs[*ru.find(u.words()[i])], 1e-12);
    }

    // Linearity in expert 0's distribution.
    const Vector alt = testing::random_dist(rng, vocabs[0].size());
    Vector blend(alt.size());
    for (std::size_t i = 0; i < alt.size(); ++i) blend[i] = 0.25 * dists[0][i] + 0.75 * alt[i];
    auto d1 = dists, d2 = dists, d3 = dists;
    d2[0] = alt;
    d3[0] = blend;
    const auto m1 = mix(w, d1, u), m2 = mix(w, d2, u), m3 = mix(w, d3, u);
    for (std::size_t i = 0; i < u.size(); ++i) {
      EXPECT_NEAR(m3.probs[i], 0.25 * m1.probs[i] + 0.75 * m2.probs[i], 1e-12);
    }
  }
}

// ---- GateK ----

TEST(GateK, SingleExpertAlwaysOne) {
  GateK g({"a", "b"}, 1, 3, 4, 1);
  EXPECT_EQ(g.weights({"a", "b", "zzz"}), (Vector{1.0}));
}

TEST(GateK, ZeroProjectionIsUniform) {
  GateK g({"a", "b"}, 3, 3, 4, 2);
  g.params().w.fill(0);
  std::fill(g.params().b.begin(), g.params().b.end(), 0.0);
  for (double p : g.weights({"a"})) EXPECT_NEAR(p, 1.0 / 3, 1e-15);
}

TEST(GateK, TwoExpertSoftmaxIsSigmoidOfLogitDifference) {
  GateK g({"a", "b"}, 2, 3, 4, 3);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    Vector h(4);
    for (auto& x : h) x = rng.uniform(-2, 2);
    const auto& W = g.params().w;
    double u1 = g.params().b[0], u2 = g.params().b[1];
    for (std::size_t j = 0; j < 4; ++j) {
      u1 += W(0, j) * h[j];
      u2 += W(1, j) * h[j];
    }
    const auto p = g.weights_at(h);
    EXPECT_NEAR(p[0], sigmoid(u1 - u2), 1e-14);
    EXPECT_NEAR(p[1], 1 - sigmoid(u1 - u2), 1e-14);
  }
}

TEST(GateK, LossMatchesEquationAndGradientChecks) {
  BigramExpert e1({"a", "b", "c"}, 5), e2({"b", "c", "d"}, 6);
  const auto ex = make_gate_k_example({&e1, &e2}, {"a"}, {"b", "c", "d", "b"});
  ASSERT_EQ(ex.expert_probs.size(), 4u);
  // "d" is outside e1's vocabulary.
  EXPECT_EQ(ex.expert_probs[2][0], 0.0);

  GateK g({"a", "b", "c", "d"}, 2, 3, 4, 7);
  for (auto& x : g.params().w.flat()) x *= 5;  // keep gradients away from FD noise
  double want = 0;
  Words history;
  for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
    const auto p = g.weights(history);
    want -= std::log(p[0] * ex.expert_probs[t][0] + p[1] * ex.expert_probs[t][1]);
    history.push_back(ex.tokens[t]);
  }
  EXPECT_NEAR(g.loss(ex), want, 1e-12);

  auto grad = g.zero_grad();
  g.loss(ex, &grad);
  const auto res = grad_check([&] { return g.loss(ex); }, grad_slots(g.params().views(), grad.views()), 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_slot << "/" << res.worst_index;
}

TEST(GateK, LearnsToPreferTheExpertThatGeneratedTheData) {
  const Words vocab{"a", "b", "c", "d"};
  BigramExpert good(vocab, 8, 0.9), bad(vocab, 9, 0.9);
  Rng rng(10);
  std::vector<GateKExample> data;
  for (int i = 0; i < 40; ++i) {
    const std::string start = vocab[rng.index(4)];
    data.push_back(make_gate_k_example({&good, &bad}, {start}, good.sample(rng, start, 6)));
  }
  GateK g(vocab, 2, 4, 6, 11);
  const auto before = g.weights({"a"})[0];
  const auto losses = train_gate_k(g, data, 0.05, 30, 12);
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_GT(g.weights({"a"})[0], before);
  EXPECT_GT(g.weights({"a", "b"})[0], 0.8);
}

// ---- Gate2 / mix2 ----

IntegratedVocab vocab_220() {
  return IntegratedVocab(testing::small_vocab({"standby", ":", "220", "hours", "max", "."}),
                         {"150", "220"});
}

TEST(Mix2, WorkedExampleArithmetic) {
  const auto iv = vocab_220();
  const Vector h{0.1, -0.2};
  Gate2 gate{{0.0, 0.0}, std::log(0.51 / 0.49)};
  Vector p_c(iv.chat_size(), 0.0);
  const TokenId id220 = *iv.find("220");
  p_c[id220] = 0.03;
  p_c[*iv.find("hours")] = 0.97;
  const Vector p_qa{0.58, 0.42};
  const auto r = mix2(h, p_c, p_qa, gate, iv);
  EXPECT_NEAR(r.alpha, 0.51, 1e-12);
  EXPECT_NEAR(r.probs[id220], 0.2211, 1e-12);
  // "150" is kb-only and gets only the QA share.
  EXPECT_NEAR(r.probs[*iv.find("150")], 0.49 * 0.58, 1e-12);
  EXPECT_NEAR(testing::sum(r.probs), 1.0, 1e-12);
}

TEST(Mix2, SaturationAndEqualBlend) {
  const auto iv = vocab_220();
  Rng rng(13);
  const Vector h{0.3, 0.4};
  const Vector p_c = testing::random_dist(rng, iv.chat_size());
  const Vector p_qa = testing::random_dist(rng, 2);
  const auto hi = mix2(h, p_c, p_qa, Gate2{{0, 0}, 50.0}, iv);
  for (std::size_t i = 0; i < iv.chat_size(); ++i) EXPECT_NEAR(hi.probs[i], p_c[i], 1e-12);
  const auto half = mix2(h, p_c, p_qa, Gate2{{0, 0}, 0.0}, iv);
  EXPECT_EQ(half.alpha, 0.5);
  EXPECT_NEAR(half.probs[*iv.find("220")], 0.5 * p_c[*iv.find("220")] + 0.5 * p_qa[1], 1e-15);
  EXPECT_THROW(mix2(Vector{1.0}, p_c, p_qa, Gate2{{0, 0}, 0.0}, iv), ShapeError);
}

TEST(Mix2, KbOnlyMassIsExactlyTheQaShare) {
  Rng rng(14);
  const Vocab chat = testing::small_vocab({"a", "b", "c"});
  const IntegratedVocab iv(chat, {"1", "2", "3"});
  ASSERT_EQ(iv.size(), iv.chat_size() + 3);
  for (int trial = 0; trial < 200; ++trial) {
    Gate2 g = Gate2::init(3, rng.uniform(-3, 3));
    for (auto& x : g.w) x = rng.uniform(-1, 1);
    const Vector h{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto p_c = testing::random_dist(rng, iv.chat_size());
    const auto p_qa = testing::random_dist(rng, 3);
    const auto r = mix2(h, p_c, p_qa, g, iv);
    double kb_mass = 0;
    for (TokenId id = static_cast<TokenId>(iv.chat_size()); id < iv.size(); ++id) kb_mass += r.probs[id];
    EXPECT_DOUBLE_EQ(kb_mass, (1 - r.alpha) * testing::sum(p_qa));
    EXPECT_NEAR(testing::sum(r.probs), 1.0, 1e-9);
  }
}

TEST(Gate2, AlphaMonotoneInBias) {
  Rng rng(15);
  Gate2 g = Gate2::init(4);
  for (auto& x : g.w) x = rng.uniform(-1, 1);
  const Vector h{0.5, -0.1, 0.2, 0.9};
  double prev = -1;
  for (double b = -10; b <= 10; b += 0.5) {
    g.b = b;
    EXPECT_GE(g.alpha(h), prev);
    prev = g.alpha(h);
  }
  EXPECT_NEAR(Gate2::init(4).alpha(h), sigmoid(2.0), 1e-15);
}

// ---- context view ----

TEST(QaView, LastClientSegment) {
  const Words ctx{"<CLIENT>", "a", "b", "<AGENT>", "c", "<CLIENT>", "d", "e", "<EOC>"};
  EXPECT_EQ(qa_context_view(ctx), (Words{"d", "e"}));
  EXPECT_EQ(qa_context_view(ctx, QaViewPolicy::FullHistory), (Words{"a", "b", "d", "e"}));
  EXPECT_EQ(qa_context_view({"<CLIENT>", "x", "y", "<EOC>"}), (Words{"x", "y"}));
  EXPECT_TRUE(qa_context_view({"<AGENT>", "hi", "<EOC>"}).empty());
}

TEST(QaView, FollowUpAboutAnotherDeviceSeesOnlyTheNewQuestion) {
  const Words ctx{"<CLIENT>", "battery", "of", "phone", "x", "?", "<AGENT>", "7.5",
                  "hours", "<CLIENT>", "and", "phone", "y", "camera", "?", "<EOC>"};
  const auto v = qa_context_view(ctx);
  EXPECT_EQ(v, (Words{"and", "phone", "y", "camera", "?"}));
  EXPECT_EQ(std::count(v.begin(), v.end(), "x"), 0);
}

TEST(QaView, PolicyNames) {
  EXPECT_EQ(parse_policy("last-client-utterance"), QaViewPolicy::LastClientUtterance);
  EXPECT_EQ(parse_policy(policy_name(QaViewPolicy::FullHistory)), QaViewPolicy::FullHistory);
  EXPECT_THROW(parse_policy("latest"), ConfigError);
}

// ---- integrated model over tiny experts ----

struct Fixture {
  KbIndex kb = testing::tiny_kb();
  ChatModel chat = testing::tiny_chat();
  QaModel qa = testing::tiny_qa(kb);
  Fixture() {
    chat.mark_trained();
    qa.mark_trained();
  }
};

const Words kCtx{"<CLIENT>", "phone", "x", "battery", "?", "<EOC>"};

DialogueSample value_pair(const std::string& value) {
  DialogueSample s;
  s.context = kCtx;
  s.response = {"the", "battery", "is", value, "hours", "<EOR>"};
  return s;
}

TEST(Integrated, VocabularyLayout) {
  Fixture f;
  IntegratedModel m(f.chat, f.qa, f.kb, Gate2::init(5));
  const auto& iv = m.vocab();
  EXPECT_EQ(iv.chat_size(), f.chat.vocab().size());
  // "7.5" is in both vocabularies; the other three values are kb-only.
  EXPECT_EQ(iv.size(), iv.chat_size() + 3);
  EXPECT_FALSE(iv.kb_only(*iv.find("7.5")));
  EXPECT_TRUE(iv.kb_only(*iv.find("12.0")));
  ASSERT_TRUE(iv.value_index(*iv.find("7.5")).has_value());
  EXPECT_EQ(f.kb.values()[*iv.value_index(*iv.find("7.5"))], "7.5");
  EXPECT_FALSE(iv.value_index(*iv.find("battery")).has_value());
}

TEST(Integrated, NextDistributionIsTheMixture) {
  Fixture f;
  IntegratedModel m(f.chat, f.qa, f.kb, Gate2{Vector(5, 0.3), -0.4});
  auto s = m.start(kCtx);
  for (const auto& w : value_pair("12.0").response) {
    const auto d = m.next_distribution(s);
    EXPECT_NEAR(testing::sum(d), 1.0, 1e-9);
    const auto want = mix2(s.h, s.p_c, *s.p_qa, m.gate(), m.vocab());
    EXPECT_EQ(d, want.probs);
    s = m.advance(s, m.union_id(w));
  }
}

TEST(Integrated, KbOnlyTokenReachesChatAsUnk) {
  Fixture f;
  IntegratedModel m(f.chat, f.qa, f.kb, Gate2::init(5));
  const auto s = m.start(kCtx);
  const auto a = m.advance(s, m.union_id("12.0"));
  const auto b = f.chat.step(s.chat, Vocab::kUnkId);
  EXPECT_EQ(a.p_c, b.dist);
  EXPECT_EQ(a.h, b.hidden);
  // QA distribution depends on the context only.
  EXPECT_EQ(*a.p_qa, *s.p_qa);
}

TEST(Integrated, GoldProbsInUnionSpace) {
  Fixture f;
  IntegratedModel m(f.chat, f.qa, f.kb, Gate2::init(5));
  const auto s = m.start(kCtx);
  const auto kbonly = m.gold_probs(s, "12.0");
  EXPECT_EQ(kbonly.p_c, 0.0);
  EXPECT_GT(kbonly.p_qa, 0.0);
  const auto both = m.gold_probs(s, "7.5");
  EXPECT_EQ(both.p_c, s.p_c[f.chat.vocab().id("7.5")]);
  EXPECT_EQ(both.p_qa, (*s.p_qa)[*f.kb.value_index("7.5")]);
  // A token outside both vocabularies (not a KB value) gets no QA mass.
  const auto neither = m.gold_probs(s, "99.9");
  EXPECT_EQ(neither.p_qa, 0.0);
  EXPECT_EQ(neither.p_c, s.p_c[Vocab::kUnkId]);
}

TEST(Integrated, EmptyViewFallsBackToUniformAndLogs) {
  Fixture f;
  IntegratedModel m(f.chat, f.qa, f.kb, Gate2::init(5));
  std::vector<std::string> logs;
  m.set_logger([&](const std::string& s) { logs.push_back(s); });
  const auto p = m.qa_distribution({"<AGENT>", "hello", "<EOC>"});
  for (double x : p) EXPECT_DOUBLE_EQ(x, 0.25);
  EXPECT_EQ(logs.size(), 1u);
}

TEST(Integrated, RawMarginalOptionKeepsDeficientMass) {
  Fixture f;
  const auto holey = KbIndex::build({{"phone_x", "battery_talk_time", "7.5"},
                                     {"phone_y", "camera_megapixels", "13.0"}});
  const QaModel qa = testing::tiny_qa(holey);
  IntegratedModel raw(f.chat, qa, holey, Gate2::init(5), QaViewPolicy::LastClientUtterance, false);
  IntegratedModel norm(f.chat, qa, holey, Gate2::init(5));
  EXPECT_LT(testing::sum(raw.qa_distribution(kCtx)), 1.0 - 1e-6);
  EXPECT_NEAR(testing::sum(norm.qa_distribution(kCtx)), 1.0, 1e-12);
}

// ---- gate objective ----

std::vector<GatePairData> random_gate_data(Rng& rng, std::size_t H) {
  std::vector<GatePairData> data(3);
  for (auto& pair : data) {
    for (int t = 0; t < 4; ++t) {
      GatePosition p;
      p.h.resize(H);
      for (auto& x : p.h) x = rng.uniform(-1, 1);
      p.p_c = rng.uniform(0.01, 0.9);
      p.p_qa = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.01, 0.9);
      p.beta = rng.uniform() < 0.3 ? 100.0 : 1.0;
      pair.push_back(p);
    }
  }
  return data;
}

double brute_objective(const Gate2& g, const std::vector<GatePairData>& data, double lambda) {
  double j = 0;
  for (const auto& pair : data) {
    for (const auto& p : pair) {
      const double a = g.alpha(p.h);
      j -= p.beta * std::log(a * p.p_c + (1 - a) * p.p_qa);
    }
  }
  double sq = g.b * g.b;
  for (double x : g.w) sq += x * x;
  return j + 0.5 * lambda * sq;
}

TEST(GateObjective, MatchesDefinitionAndFiniteDifferences) {
  Rng rng(16);
  const std::size_t H = 6;
  const auto data = random_gate_data(rng, H);
  Gate2 g = Gate2::init(H, 0.7);
  for (auto& x : g.w) x = rng.uniform(-0.5, 0.5);
  const double lambda = 0.01;
  EXPECT_NEAR(gate_objective(g, data, lambda), brute_objective(g, data, lambda), 1e-10);

  std::vector<double> theta(g.w.begin(), g.w.end());
  theta.push_back(g.b);
  const double err = grad_check(
      [&](std::span<const double> th, std::span<double> grad) {
        Gate2 gg{Vector(th.begin(), th.end() - 1), th.back()};
        return gate_objective(gg, data, lambda, grad);
      },
      theta, 1e-5);
  EXPECT_LT(err, 1e-4);
}

TEST(GateObjective, BetaScalesTheValueTokenTerm) {
  const Vector h{0.2, -0.3};
  const Gate2 g{{0.4, 0.1}, 0.5};
  const GatePosition ordinary{h, 0.2, 0.3, 1.0};
  GatePosition value = ordinary;
  value.beta = 100.0;
  const double one = gate_objective(g, {{ordinary}}, 0.0);
  const double hundred = gate_objective(g, {{value}}, 0.0);
  EXPECT_NEAR(hundred, 100.0 * one, 1e-12);
  EXPECT_NEAR(gate_objective(g, {{ordinary, value}}, 0.0), 101.0 * one, 1e-12);
}

TEST(GateData, BetaOnlyOnKbOnlyGoldTokens) {
  Fixture f;
  IntegratedModel m(f.chat, f.qa, f.kb, Gate2::init(5));
  const auto data = precompute_gate_data(m, {value_pair("12.0"), value_pair("7.5")}, 100.0);
  ASSERT_EQ(data.size(), 2u);
  ASSERT_EQ(data[0].size(), 6u);
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_EQ(data[0][t].beta, t == 3 ? 100.0 : 1.0) << t;
    // "7.5" is also in V_c, so it is not up-weighted.
    EXPECT_EQ(data[1][t].beta, 1.0);
  }
  EXPECT_EQ(data[0][3].p_c, 0.0);
  EXPECT_GT(data[0][3].p_qa, 0.0);
  EXPECT_GT(data[1][3].p_c, 0.0);
}

TEST(TrainGate, ExpertsStayFrozenAndObjectiveDrops) {
  Fixture f;
  const auto chat_before = f.chat.to_container().to_bytes();
  const auto qa_before = f.qa.to_container().to_bytes();
  IntegratedModel probe(f.chat, f.qa, f.kb, Gate2::init(5));
  const auto s0 = probe.start(kCtx);

  std::vector<DialogueSample> pairs;
  for (const auto& v : {"12.0", "8.0", "13.0", "7.5"}) pairs.push_back(value_pair(v));
  Gate2 gate = Gate2::init(5);
  GateTrainOptions opt;
  opt.epochs = 20;
  const auto reports = train_gate(gate, f.chat, f.qa, f.kb, pairs, opt);
  ASSERT_EQ(reports.size(), 20u);
  EXPECT_LT(reports.back().objective, reports.front().objective);
  EXPECT_NE(gate.b, 2.0);

  EXPECT_EQ(f.chat.to_container().to_bytes(), chat_before);
  EXPECT_EQ(f.qa.to_container().to_bytes(), qa_before);
  IntegratedModel after(f.chat, f.qa, f.kb, gate);
  const auto s1 = after.start(kCtx);
  EXPECT_EQ(s1.p_c, s0.p_c);
  EXPECT_EQ(*s1.p_qa, *s0.p_qa);
}

TEST(TrainGate, RefusesUntrainedExperts) {
  KbIndex kb = testing::tiny_kb();
  ChatModel chat = testing::tiny_chat();
  QaModel qa = testing::tiny_qa(kb);
  qa.mark_trained();
  Gate2 g = Gate2::init(5);
  try {
    train_gate(g, chat, qa, kb, {value_pair("12.0")}, {});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("trained, frozen experts"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("chat"), std::string::npos);
  }
}

TEST(GateCheckpoint, RoundTripAndHashGuard) {
  Fixture f;
  testing::TempDir dir;
  GateCheckpoint ck{Gate2{{0.1, 0.2, 0.3, 0.4, 0.5}, -1.25}, expert_hash(f.chat), expert_hash(f.qa),
                    QaViewPolicy::FullHistory};
  save_gate(dir / "gate.ckpt", ck);
  const auto back = load_gate(dir / "gate.ckpt", ck.chat_hash, ck.qa_hash, false);
  EXPECT_EQ(back.gate.w, ck.gate.w);
  EXPECT_EQ(back.gate.b, ck.gate.b);
  EXPECT_EQ(back.policy, QaViewPolicy::FullHistory);

  ChatModel other = testing::tiny_chat(99);
  const auto other_hash = expert_hash(other);
  EXPECT_NE(other_hash, ck.chat_hash);
  try {
    load_gate(dir / "gate.ckpt", other_hash, ck.qa_hash, false);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("--force"), std::string::npos);
  }
  EXPECT_NO_THROW(load_gate(dir / "gate.ckpt", other_hash, ck.qa_hash, true));
  EXPECT_EQ(expert_hash(f.chat), ck.chat_hash);
}

}  // namespace
}  // namespace moelm
