#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "moelm/config.hpp"
#include "moelm/error.hpp"
#include "test_util.hpp"

namespace moelm {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "run.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, DefaultsCarryTheTrainingSchedule) {
  const RunConfig c;
  EXPECT_EQ(c.chat.lr, 0.01);
  EXPECT_EQ(c.chat.finetune_lr, 0.001);
  EXPECT_EQ(c.qa.lr, 0.01);
  EXPECT_EQ(c.gate.lr, 0.01);
  EXPECT_EQ(c.gate.beta, 100.0);
  EXPECT_EQ(c.chat.min_freq, 2u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesSectionsCommentsAndQuotes) {
  const auto c = parse_config(R"(seed = 11   # top level
[paths]
work_dir = "runs/a b"
[chat]
hidden = 128
lr = 0.02
[gate]
qa_view = "full-history"
[decode]
exact_mode = true
[qa]
renormalize = false
)");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.paths.work_dir, "runs/a b");
  EXPECT_EQ(c.chat.hidden, 128u);
  EXPECT_EQ(c.chat.lr, 0.02);
  EXPECT_EQ(c.gate.qa_view, QaViewPolicy::FullHistory);
  EXPECT_TRUE(c.decode.exact_mode);
  EXPECT_FALSE(c.qa.renormalize);
  EXPECT_EQ(c.chat.emb_dim, 32u);
}

TEST(Config, RejectsUnknownAndDuplicateKeysWithLocation) {
  EXPECT_NE(error_of("[chat]\nhiden = 3\n").find("run.ini:2: unknown key 'chat.hiden'"), std::string::npos);
  EXPECT_NE(error_of("[optimizer]\n").find("run.ini:1: unknown section"), std::string::npos);
  const auto dup = error_of("[chat]\nlr = 0.1\n\nlr = 0.2\n");
  EXPECT_NE(dup.find("run.ini:4: duplicate key 'chat.lr'"), std::string::npos) << dup;
  EXPECT_NE(dup.find("line 2"), std::string::npos);
  EXPECT_NE(error_of("[chat]\nhidden = lots\n").find("run.ini:2"), std::string::npos);
  EXPECT_NE(error_of("[chat]\nhidden = -3\n"), "");
  EXPECT_NE(error_of("[chat]\njust words\n"), "");
  EXPECT_NE(error_of("[decode]\nexact_mode = yes\n"), "");
  EXPECT_NE(error_of("[gate]\nqa_view = \"nearest\"\n"), "");
  EXPECT_NE(error_of("[chat\n"), "");
}

TEST(Config, ValidationRejectsNonPositiveLearningRates) {
  for (const char* text : {"[chat]\nlr = 0\n", "[chat]\nfinetune_lr = -0.001\n", "[qa]\nlr = 0\n",
                           "[gate]\nlr = -1\n", "[datagen]\ndrop_prob = 1\n", "[decode]\nbranch_limit = 0\n",
                           "[eval]\nsplit = \"holdout\"\n"}) {
    EXPECT_THROW(parse_config(text).validate(), ConfigError) << text;
  }
}

TEST(Config, TextRoundTripAndHash) {
  RunConfig c;
  c.seed = 99;
  c.chat.lr = 0.1 + 0.2;  // not exactly representable in short decimal form
  c.gate.qa_view = QaViewPolicy::FullHistory;
  c.paths.work_dir = "/tmp/x";
  const auto text = c.to_text();
  const auto back = parse_config(text);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_EQ(back.chat.lr, c.chat.lr);
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(c.hash().size(), 64u);
  RunConfig d = c;
  d.decode.branch_limit = 9;
  EXPECT_NE(d.hash(), c.hash());
  EXPECT_EQ(text.rfind("seed = 99", 0), 0u);
}

TEST(Config, ResolvesPathsAgainstTheConfigFile) {
  testing::TempDir dir;
  std::ofstream(dir / "desk.ini") << "[paths]\nwork_dir = \"out\"\nkb = \"/abs/kb.csv\"\n";
  ::unsetenv("MOELM_MODEL_DIR");
  const auto c = load_config(dir / "desk.ini");
  EXPECT_EQ(c.paths.work_dir, dir.path() / "out");
  EXPECT_EQ(c.paths.data_dir, dir.path() / "out" / "data");
  EXPECT_EQ(c.paths.model_dir, dir.path() / "out" / "models");
  EXPECT_EQ(c.paths.kb, "/abs/kb.csv");
  EXPECT_EQ(c.paths.paraphrases, dir.path() / "out" / "data" / "paraphrases.csv");

  ::setenv("MOELM_MODEL_DIR", "/models/here", 1);
  EXPECT_EQ(load_config(dir / "desk.ini").paths.model_dir, "/models/here");
  ::unsetenv("MOELM_MODEL_DIR");

  EXPECT_THROW(load_config(dir / "missing.ini"), ConfigError);
}

TEST(RunConfig, ShippedDeskConfigMatchesDefaults) {
  auto desk = load_config(std::filesystem::path(MOELM_SOURCE_DIR) / "configs" / "desk.ini");
  EXPECT_EQ(desk.paths.work_dir, std::filesystem::path(MOELM_SOURCE_DIR) / "run" / "desk");
  RunConfig defaults;
  desk.paths = defaults.paths;
  EXPECT_EQ(desk.to_text(), defaults.to_text());
}

}  // namespace
}  // namespace moelm
