#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "moelm/corpus.hpp"
#include "moelm/error.hpp"
#include "moelm/synth.hpp"
#include "test_util.hpp"

namespace moelm {
namespace {

// Checks every manifest position against the normalized dialogue text, and
// recounts agent/value tokens independently.
void check_manifest(const SynthCorpus& c, const KbIndex& kb) {
  ASSERT_EQ(c.manifest.size(), c.dialogues.size());
  std::set<std::string> values(kb.values().begin(), kb.values().end());
  std::size_t agent = 0, marked = 0;
  for (std::size_t i = 0; i < c.dialogues.size(); ++i) {
    const auto& d = c.dialogues[i];
    for (const auto& t : d.turns) {
      if (t.speaker == Speaker::Agent) agent += normalize(t.text).size();
    }
    for (const auto& vp : c.manifest[i].value_positions) {
      ASSERT_LT(vp.turn, static_cast<int>(d.turns.size()));
      const auto& turn = d.turns[vp.turn];
      EXPECT_EQ(turn.speaker, Speaker::Agent);
      const auto toks = normalize(turn.text);
      ASSERT_LT(vp.token_index, static_cast<int>(toks.size()));
      EXPECT_EQ(toks[vp.token_index], vp.value);
      EXPECT_TRUE(values.count(vp.value)) << vp.value;
      ++marked;
    }
  }
  EXPECT_EQ(agent, c.agent_tokens);
  EXPECT_EQ(marked, c.value_tokens);
}

TEST(SynthKb, ShapeAndDeterminism) {
  const auto kb = synth_kb({20, 5, 1});
  EXPECT_EQ(kb.devices().size(), 20u);
  EXPECT_EQ(kb.attributes().size(), 5u);
  EXPECT_EQ(kb.triples().size(), 100u);
  EXPECT_EQ(synth_kb({20, 5, 1}), kb);
  EXPECT_NE(synth_kb({20, 5, 2}), kb);
  for (const auto& t : kb.triples()) {
    EXPECT_TRUE(is_numeric_value(t.value));
    ASSERT_NE(find_attribute_spec(t.attribute), nullptr);
  }
  EXPECT_THROW(synth_kb({0, 5, 1}), ConfigError);
  EXPECT_THROW(synth_kb({5, 100, 1}), ConfigError);
}

TEST(SynthCorpus, SingleTripleKbAnswersWithTheValue) {
  const auto kb = KbIndex::build({{"phone_x", "battery_talk_time", "7.5"}});
  const auto c = synth_corpus(kb, DialogueTemplates::defaults(), 1, 1);
  ASSERT_EQ(c.dialogues.size(), 1u);
  ASSERT_FALSE(c.manifest[0].value_positions.empty());
  for (const auto& vp : c.manifest[0].value_positions) EXPECT_EQ(vp.value, "7.5");
  bool agent_says_it = false;
  for (const auto& t : c.dialogues[0].turns) {
    if (t.speaker != Speaker::Agent) continue;
    const auto toks = normalize(t.text);
    agent_says_it |= std::find(toks.begin(), toks.end(), "7.5") != toks.end();
  }
  EXPECT_TRUE(agent_says_it);
  check_manifest(c, kb);
}

TEST(SynthCorpus, SameSeedSameOutput) {
  const auto kb = synth_kb({20, 5, 1});
  const auto a = synth_corpus(kb, DialogueTemplates::defaults(), 5, 30);
  const auto b = synth_corpus(kb, DialogueTemplates::defaults(), 5, 30);
  ASSERT_EQ(a.dialogues.size(), b.dialogues.size());
  for (std::size_t i = 0; i < a.dialogues.size(); ++i) {
    ASSERT_EQ(a.dialogues[i].turns.size(), b.dialogues[i].turns.size());
    for (std::size_t j = 0; j < a.dialogues[i].turns.size(); ++j) {
      EXPECT_EQ(a.dialogues[i].turns[j].text, b.dialogues[i].turns[j].text);
    }
  }
  const auto c = synth_corpus(kb, DialogueTemplates::defaults(), 6, 30);
  EXPECT_NE(c.dialogues[0].turns[0].text + c.dialogues[1].turns[0].text,
            a.dialogues[0].turns[0].text + a.dialogues[1].turns[0].text);
}

TEST(SynthCorpus, ValueFractionInTargetRange) {
  const auto kb = synth_kb({20, 5, 1});
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto c = synth_corpus(kb, DialogueTemplates::defaults(), seed, 100);
    EXPECT_GE(c.value_token_fraction(), 0.05) << seed;
    EXPECT_LE(c.value_token_fraction(), 0.10) << seed;
    check_manifest(c, kb);
  }
}

TEST(SynthCorpus, DialoguesAreWellFormedAndYieldPairs) {
  const auto kb = synth_kb({20, 5, 1});
  const auto c = synth_corpus(kb, DialogueTemplates::defaults(), 9, 50);
  std::size_t device_spec = 0;
  for (const auto& d : c.dialogues) {
    ASSERT_FALSE(d.turns.empty());
    const auto clients = std::count_if(d.turns.begin(), d.turns.end(),
                                       [](const Turn& t) { return t.speaker == Speaker::Client; });
    EXPECT_GT(clients, 0);
    EXPECT_LT(clients, static_cast<long>(d.turns.size()));
    const auto pairs = extract_pairs(d);
    EXPECT_FALSE(pairs.empty());
    device_spec += select_device_spec_pairs(pairs).size();
  }
  EXPECT_GT(device_spec, 0u);
}

TEST(SynthCorpus, RestrictedDevicesAndErrors) {
  const auto kb = synth_kb({6, 3, 1});
  const std::string only = kb.devices()[2];
  const auto c = synth_corpus(kb, DialogueTemplates::defaults(), 3, 20, {only});
  std::set<std::string> values;
  for (const auto& a : kb.attributes()) values.insert(*kb.lookup(only, a));
  for (const auto& m : c.manifest) {
    for (const auto& vp : m.value_positions) EXPECT_TRUE(values.count(vp.value));
  }
  EXPECT_THROW(synth_corpus(KbIndex{}, DialogueTemplates::defaults(), 1, 1), Error);
  EXPECT_THROW(synth_corpus(kb, DialogueTemplates::defaults(), 1, 0), ConfigError);
}

TEST(SynthSplits, HeldOutDevicesNeverReachTraining) {
  const auto kb = synth_kb({20, 5, 1});
  CorpusSplitConfig cfg;
  cfg.n_dialogues = 300;
  const auto s = synth_corpus_splits(kb, DialogueTemplates::defaults(), 4, cfg);
  EXPECT_EQ(s.heldout_devices.size(), 4u);
  EXPECT_EQ(s.train.dialogues.size() + s.dev.dialogues.size() + s.test.dialogues.size(), 300u);
  EXPECT_EQ(s.test.dialogues.size(), 30u);
  std::set<std::string> words;
  for (const auto& d : s.train.dialogues) {
    for (const auto& t : d.turns) {
      for (const auto& w : normalize(t.text)) words.insert(w);
    }
  }
  // Family words are unique per device, so a held-out family never appears in train.
  for (const auto& dev : s.heldout_devices) {
    EXPECT_FALSE(words.count(id_words(dev)[1])) << dev;
  }
  std::set<std::string> ids;
  for (const auto* part : {&s.train, &s.dev, &s.test}) {
    for (const auto& m : part->manifest) EXPECT_TRUE(ids.insert(m.dialogue_id).second) << m.dialogue_id;
  }
}

TEST(Manifest, JsonLinesRoundTrip) {
  testing::TempDir dir;
  const std::vector<ManifestEntry> m{{"d0", {{1, 4, "7.5"}, {3, 0, "12"}}}, {"d1", {}}};
  write_manifest(dir / "m.jsonl", m);
  const auto back = read_manifest(dir / "m.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].dialogue_id, "d0");
  ASSERT_EQ(back[0].value_positions.size(), 2u);
  EXPECT_EQ(back[0].value_positions[1].value, "12");
  EXPECT_EQ(back[0].value_positions[0].token_index, 4);
  EXPECT_TRUE(back[1].value_positions.empty());
}

}  // namespace
}  // namespace moelm
