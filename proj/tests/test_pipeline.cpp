#include <gtest/gtest.h>

#include <cstdlib>

#include "test_util.hpp"

using namespace bienc;
using testutil::TempDir;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(BIENC_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::map<std::string, std::string> read_kv(const std::string& path) {
  std::map<std::string, std::string> kv;
  detail::for_each_line(path, [&](const std::string& line, std::size_t) {
    const auto f = detail::split_tabs(line);
    if (f.size() == 2) kv[f[0]] = f[1];
  });
  return kv;
}

std::vector<std::vector<std::string>> candidate_ids(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : read_candidates(path)) {
    out.emplace_back();
    for (const auto& c : r.candidates) out.back().push_back(c.entity_id);
  }
  return out;
}

/// Shared toy world: 70 entities so K=64 fits, trained for one epoch.
class ToyPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    const auto& d = *dir_;
    ASSERT_EQ(cli("make-toy --out " + d / "corpus" + " --entities 70 --num-mentions 24 --seed 3"), 0);
    ASSERT_EQ(cli("train-bpe --corpus " + d / "corpus" + " --out " + d / "vocab" + " --vocab-size 400"), 0);
    ASSERT_EQ(cli("train --corpus " + d / "corpus" + " --vocab " + d / "vocab" + " --out " + d / "model" +
                  " --dim 16 --layers 1 --heads 2 --ff-dim 32 --max-len 24 --epochs 1 --lr 1e-3"),
              0);
    ASSERT_EQ(cli("embed --corpus " + d / "corpus" + " --vocab " + d / "vocab" + " --model " + d / "model" +
                  " --out " + d / "index" + " --split train"),
              0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string retrieve_args(std::size_t K, const std::string& out) {
    const auto& d = *dir_;
    return "retrieve --corpus " + d / "corpus" + " --vocab " + d / "vocab" + " --model " + d / "model" +
           " --index " + d / "index" + " --mentions train --k " + std::to_string(K) + " --out " + out;
  }
  static TempDir* dir_;
};

TempDir* ToyPipeline::dir_ = nullptr;

}  // namespace

TEST(Settings, FileParsingAndOverrides) {
  TempDir dir;
  testutil::write_file(dir / "run.cfg", "# comment\nbatch-size = 16\nlr=1e-3  # inline\n\npooling = avg\n");
  auto s = Settings::from_file(dir / "run.cfg");
  EXPECT_EQ(s.get_size("batch_size", 0), 16u);
  EXPECT_EQ(s.get_double("lr", 0), 1e-3);
  s.merge(Settings{{"pooling", "cls"}});
  EXPECT_EQ(s.get("pooling", ""), "cls");
  EXPECT_EQ(s.get_list("missing", "a,b,,c"), (std::vector<std::string>{"a", "b", "c"}));
  const Settings flags{{"x", "on"}, {"y", "maybe"}, {"n", "-3"}};
  EXPECT_TRUE(flags.get_bool("x", false));
  EXPECT_THROW(flags.get_bool("y", false), std::invalid_argument);
  EXPECT_THROW(flags.get_size("n", 0), std::invalid_argument);
  EXPECT_THROW(Settings{}.require("corpus"), std::invalid_argument);
  testutil::write_file(dir / "bad.cfg", "novalue\n");
  EXPECT_THROW(Settings::from_file(dir / "bad.cfg"), ParseError);
}

TEST(Settings, ModelAndTrainDefaults) {
  const Settings s{{"pooling", "conc_special"}, {"dim", "16"}, {"heads", "4"}, {"max_len", "20"}};
  const auto mc = model_config_from(s, 300);
  EXPECT_EQ(mc.pooling, PoolingKind::ConcSpecial);
  EXPECT_EQ(mc.encoder.dim, 16u);
  EXPECT_EQ(mc.templates.max_len, 20u);
  EXPECT_EQ(mc.encoder.vocab_size, 300u);
  const auto tc = train_config_from(Settings{});
  EXPECT_EQ(tc.batch_size, 8u);
  EXPECT_EQ(tc.epochs, 30u);
}

TEST(DefaultGrid, KeepsOnlyReachableK) {
  EXPECT_EQ(default_grid_within(100), (std::vector<std::size_t>{1, 10, 25, 50, 64}));
  EXPECT_EQ(default_grid_within(30), (std::vector<std::size_t>{1, 10, 25, 30}));
  EXPECT_EQ(default_grid_within(10), (std::vector<std::size_t>{1, 10}));
}

TEST(Cli, EvalOnPlantedCandidatesMatchesCounting) {
  TempDir dir;
  ASSERT_EQ(cli("make-toy --out " + dir / "corpus" + " --entities 12 --num-mentions 40"), 0);
  const auto corpus = load_corpus(dir / "corpus");
  const auto& mentions = corpus.mentions("train");
  const auto& entities = corpus.world("toy").entities;
  Rng rng(9);
  std::vector<RetrievalResult> planted;
  std::vector<std::size_t> ranks;
  for (const auto& m : mentions) {
    RetrievalResult r;
    r.mention_id = m.mention_id;
    std::vector<std::string> others;
    for (const auto& e : entities)
      if (e.entity_id != m.gold_entity_id) others.push_back(e.entity_id);
    const auto rank = rng.below(13);  // 0 = gold left out of the list
    for (std::size_t k = 1, o = 0; k <= 10; ++k)
      r.candidates.push_back({k == rank ? m.gold_entity_id : others[o++], -static_cast<double>(k)});
    planted.push_back(r);
    ranks.push_back(rank);
  }
  testutil::write_file(dir / "cands.jsonl", candidates_jsonl(planted, mentions));
  ASSERT_EQ(cli("eval --corpus " + dir / "corpus" + " --candidates " + dir / "cands.jsonl" + " --mentions train" +
                " --k-list 1,5,10 --out " + dir / "eval"),
            0);
  const auto kv = read_kv(dir / "eval/report.kv");
  for (std::size_t K : {1, 5, 10}) {
    std::size_t hits = 0;
    for (auto r : ranks) hits += r >= 1 && r <= K;
    const double expected = static_cast<double>(hits) / static_cast<double>(ranks.size());
    EXPECT_EQ(std::stod(kv.at("micro@" + std::to_string(K))), expected) << K;
    EXPECT_EQ(std::stod(kv.at("world.toy@" + std::to_string(K))), expected) << K;
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "eval/manifest.txt"));
  EXPECT_NE(cli("eval --corpus " + dir / "corpus" + " --candidates " + dir / "cands.jsonl" +
                " --mentions train --k-list 11 --out " + dir / "eval2"),
            0);
}

TEST_F(ToyPipeline, SmallerKIsPrefixOfLarger) {
  const auto& d = *dir_;
  ASSERT_EQ(cli(retrieve_args(64, d / "c64.jsonl")), 0);
  ASSERT_EQ(cli(retrieve_args(50, d / "c50.jsonl")), 0);
  const auto big = candidate_ids(d / "c64.jsonl"), small = candidate_ids(d / "c50.jsonl");
  ASSERT_EQ(big.size(), 24u);
  ASSERT_EQ(small.size(), 24u);
  for (std::size_t i = 0; i < big.size(); ++i) {
    ASSERT_EQ(big[i].size(), 64u);
    ASSERT_EQ(small[i].size(), 50u);
    EXPECT_TRUE(std::equal(small[i].begin(), small[i].end(), big[i].begin()));
  }
  EXPECT_NE(testutil::read_file(d / "c64.jsonl.manifest").find("resolved\tpooling\tcls"), std::string::npos);
}

TEST_F(ToyPipeline, EvalUsesDefaultGridAndWritesOutputs) {
  const auto& d = *dir_;
  ASSERT_EQ(cli(retrieve_args(64, d / "full.jsonl")), 0);
  ASSERT_EQ(cli("eval --corpus " + d / "corpus" + " --candidates " + d / "full.jsonl" + " --mentions train --out " +
                d / "eval"),
            0);
  const auto curve = testutil::read_file(d / "eval/curve.tsv");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 5);
  EXPECT_NE(curve.find("\n64\t"), std::string::npos);
  const auto kv = read_kv(d / "eval/report.kv");
  EXPECT_EQ(kv.at("metric"), "dot");
  EXPECT_EQ(kv.at("pooling"), "cls");
  EXPECT_EQ(kv.at("mentions"), "24");
  const auto manifest = testutil::read_file(d / "model/manifest.txt");
  EXPECT_EQ(manifest.rfind("command\ttrain", 0), 0u);
  EXPECT_NE(manifest.find("input\tcorpus/"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(d / "model/train_log.tsv"));
}

TEST_F(ToyPipeline, ExperimentGridHasOneRowPerCell) {
  const auto& d = *dir_;
  ASSERT_EQ(cli("experiment --corpus " + d / "corpus" + " --vocab " + d / "vocab" + " --out " + d / "exp" +
                " --poolings cls,avg --metrics dot,euclidean --dim 8 --layers 1 --heads 2 --ff-dim 16 --max-len 16"
                " --epochs 1 --k-list 1,5"),
            0);
  const auto tsv = testutil::read_file(d / "exp/comparison.tsv");
  EXPECT_EQ(tsv.rfind("pooling\tentity_types\tmetric\tacc@1\tacc@5\n", 0), 0u);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 5);
  EXPECT_TRUE(std::filesystem::exists(d / "exp/comparison.txt"));
  EXPECT_TRUE(std::filesystem::exists(d / "exp/manifest.txt"));
}

TEST(Cli, MissingInputsFail) {
  TempDir dir;
  EXPECT_NE(cli("stats --corpus " + dir / "nothing"), 0);
  EXPECT_NE(cli("train --corpus " + dir / "nothing" + " --vocab " + dir / "v" + " --out " + dir / "m"), 0);
  EXPECT_NE(cli("eval --corpus " + dir / "nothing"), 0);
  EXPECT_NE(cli("no-such-command"), 0);
}
