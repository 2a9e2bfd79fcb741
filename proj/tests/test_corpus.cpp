#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace bienc;
using testutil::TempDir;
using testutil::write_file;

namespace {

std::string entity_line(const std::string& id, const std::string& title, const std::string& text) {
  return R"({"document_id":")" + id + R"(","title":")" + title + R"(","text":")" + text + "\"}\n";
}

std::string mention_line(const std::string& id, const std::string& ctx, int start, int end, const std::string& gold,
                         const std::string& world) {
  return R"({"mention_id":")" + id + R"(","context_document_id":")" + ctx + R"(","start_index":)" +
         std::to_string(start) + R"(,"end_index":)" + std::to_string(end) + R"(,"label_document_id":")" + gold +
         R"(","corpus":")" + world + "\"}\n";
}

/// Two worlds: "alpha" (train) and "beta" (test).
void write_small_corpus(const TempDir& dir) {
  write_file(dir / "documents/alpha.json", entity_line("a1", "Red Fox", "the red fox runs far") +
                                               entity_line("a2", "Blue Owl", "blue owl sees Red Fox at night") +
                                               entity_line("a3", "Green Frog", "green frog"));
  write_file(dir / "documents/beta.json",
             entity_line("b1", "Iron Gate", "an iron gate") + entity_line("b2", "Stone Wall", "Iron Gate in wall"));
  write_file(dir / "mentions/train.json", mention_line("m1", "a2", 3, 4, "a1", "alpha"));
  write_file(dir / "mentions/test.json", mention_line("m2", "b2", 0, 1, "b1", "beta"));
  write_file(dir / "splits.tsv", "alpha\ttrain\nbeta\ttest\n");
}

}  // namespace

TEST(LoadEntities, EmptyFileGivesNoRecords) {
  TempDir dir;
  write_file(dir / "e.json", "");
  EXPECT_TRUE(load_entities(dir / "e.json", "w").empty());
}

TEST(LoadEntities, SingleRecordDefaultsToUnknownType) {
  TempDir dir;
  write_file(dir / "e.json", entity_line("e1", "A", "B"));
  const auto es = load_entities(dir / "e.json", "w");
  ASSERT_EQ(es.size(), 1u);
  EXPECT_EQ(es[0], (EntityRecord{"e1", "A", "B", "w", "<unk>"}));
}

TEST(LoadEntities, MalformedLineReportsLineNumber) {
  TempDir dir;
  write_file(dir / "e.json", entity_line("e1", "A", "B") + "{not json\n");
  try {
    load_entities(dir / "e.json", "w");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadEntities, MissingKeyIsParseError) {
  TempDir dir;
  write_file(dir / "e.json", R"({"document_id":"e1","title":"A"})"
                             "\n");
  EXPECT_THROW(load_entities(dir / "e.json", "w"), ParseError);
}

TEST(LoadEntities, DuplicateIdAndEmptyTitleRejected) {
  TempDir dir;
  write_file(dir / "dup.json", entity_line("e1", "A", "x") + entity_line("e1", "B", "y"));
  EXPECT_THROW(load_entities(dir / "dup.json", "w"), ValidationError);
  write_file(dir / "empty.json", entity_line("e1", "", "x"));
  EXPECT_THROW(load_entities(dir / "empty.json", "w"), ValidationError);
}

TEST(LoadMentions, StartAfterEndRejected) {
  TempDir dir;
  write_file(dir / "m.json", mention_line("m1", "a", 4, 2, "b", "w"));
  EXPECT_THROW(load_mentions(dir / "m.json"), ValidationError);
}

TEST(LoadMentions, StringOffsetsAccepted) {
  TempDir dir;
  write_file(dir / "m.json", R"({"mention_id":"m","context_document_id":"c","start_index":"2","end_index":"3",)"
                             R"("label_document_id":"g","corpus":"w"})"
                             "\n");
  const auto ms = load_mentions(dir / "m.json");
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].start_index, 2u);
  EXPECT_EQ(ms[0].end_index, 3u);
}

TEST(RoundTrip, WrittenRecordsReloadIdentically) {
  TempDir dir;
  std::vector<EntityRecord> es = {{"e1", "Title One", "text with \"quotes\" and \\ slash", "w", "PERSON"},
                                  {"e2", "Ünïcode", "δ ε ζ", "w", "<unk>"}};
  std::vector<MentionRecord> ms = {{"m1", "e1", 0, 1, "e2", "w", "ORG"}, {"m2", "e2", 2, 2, "e1", "w", "<unk>"}};
  write_entities(dir / "e.json", es);
  write_mentions(dir / "m.json", ms);
  EXPECT_EQ(load_entities(dir / "e.json", "w"), es);
  EXPECT_EQ(load_mentions(dir / "m.json"), ms);
}

TEST(TypeAnnotations, SingleLineAndEmptyFile) {
  TempDir dir;
  write_file(dir / "t.tsv", "m1\tPERSON\n");
  const auto t = load_entity_type_annotations(dir / "t.tsv");
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.at("m1"), "PERSON");
  write_file(dir / "empty.tsv", "");
  EXPECT_TRUE(load_entity_type_annotations(dir / "empty.tsv").empty());
}

TEST(TypeAnnotations, UnknownLabelAndBadShapeRejected) {
  TempDir dir;
  write_file(dir / "bad.tsv", "m1\tWIZARD\n");
  EXPECT_THROW(load_entity_type_annotations(dir / "bad.tsv"), ValidationError);
  write_file(dir / "shape.tsv", "m1 PERSON\n");
  EXPECT_THROW(load_entity_type_annotations(dir / "shape.tsv"), ParseError);
  write_file(dir / "unk.tsv", "m1\t<unk>\n");
  EXPECT_EQ(load_entity_type_annotations(dir / "unk.tsv").at("m1"), "<unk>");
}

TEST(TypeLabels, EighteenLabelsPlusUnknown) {
  TypeLabelSet labels;
  EXPECT_EQ(labels.labels().size(), 19u);
  EXPECT_EQ(labels.labels().back(), "<unk>");
  EXPECT_TRUE(labels.contains("WORK_OF_ART"));
}

TEST(Corpus, LoadsWorldsSplitsAndMentions) {
  TempDir dir;
  write_small_corpus(dir);
  const auto c = load_corpus(dir.str());
  EXPECT_EQ(c.worlds().size(), 2u);
  EXPECT_EQ(c.world("alpha").split, Split::Train);
  EXPECT_EQ(c.world("beta").split, Split::Test);
  ASSERT_EQ(c.mentions("train").size(), 1u);
  const auto& m = c.mentions("train")[0];
  const auto words = c.context_words(m);
  EXPECT_EQ(words[m.start_index], "Red");
  EXPECT_EQ(words[m.end_index], "Fox");
}

TEST(Corpus, SpanOutOfBoundsRejected) {
  TempDir dir;
  write_small_corpus(dir);
  write_file(dir / "mentions/train.json", mention_line("m1", "a3", 1, 2, "a1", "alpha"));
  EXPECT_THROW(load_corpus(dir.str()), ValidationError);
}

TEST(Corpus, UnresolvableGoldRejected) {
  TempDir dir;
  write_small_corpus(dir);
  write_file(dir / "mentions/train.json", mention_line("m1", "a2", 0, 0, "zz", "alpha"));
  EXPECT_THROW(load_corpus(dir.str()), ValidationError);
}

TEST(Corpus, TrainMentionInTestWorldRejected) {
  TempDir dir;
  write_small_corpus(dir);
  write_file(dir / "mentions/train.json", mention_line("m1", "b2", 0, 1, "b1", "beta"));
  EXPECT_THROW(load_corpus(dir.str()), ValidationError);
}

TEST(Corpus, MissingDocumentsDirectoryIsError) {
  TempDir dir;
  EXPECT_THROW(load_corpus(dir.str()), Error);
}

TEST(Corpus, ZeshelSplitTableIsDisjoint) {
  std::map<Split, std::set<std::string>> by_split;
  for (const auto& [world, split] : zeshel_world_splits()) by_split[split].insert(world);
  EXPECT_EQ(by_split[Split::Train].size(), 8u);
  EXPECT_EQ(by_split[Split::Val].size(), 4u);
  EXPECT_EQ(by_split[Split::Test].size(), 4u);
  EXPECT_TRUE(by_split[Split::Test].count("star_trek"));
  EXPECT_EQ(split_of_mention_set("heldout_train_seen"), Split::Train);
}

TEST(Stats, CountsAndCoverage) {
  Corpus c;
  c.add_world("w", Split::Train, {{"e1", "A", "x", "w"}, {"e2", "B", "y", "w"}, {"e3", "C", "z", "w"}});
  auto stats = corpus_stats(c);
  ASSERT_NE(stats.find("w"), nullptr);
  EXPECT_EQ(stats.find("w")->entities, 3u);
  EXPECT_EQ(stats.entity_type_coverage, 0.0);

  c.add_mentions("train", {{"m1", "e1", 0, 0, "e2", "w"}, {"m2", "e2", 0, 0, "e3", "w"}});
  c.apply_type_annotations({{"e1", "PERSON"}, {"m1", "ORG"}});
  stats = corpus_stats(c);
  EXPECT_DOUBLE_EQ(stats.entity_type_coverage, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(stats.mention_type_coverage, 0.5);
}

TEST(Stats, MostlyUnknownMentionTypesAccepted) {
  const auto sc = make_synthetic_corpus({});
  Corpus c = sc.corpus;
  c.apply_type_annotations(sc.type_annotations);
  const auto stats = corpus_stats(c);
  EXPECT_EQ(stats.mentions, 50u);
  EXPECT_GT(stats.mention_type_coverage, 0.2);
  EXPECT_LT(stats.mention_type_coverage, 0.6);
  EXPECT_DOUBLE_EQ(stats.entity_type_coverage, 1.0);
}

TEST(Synthetic, SpansPointAtGoldTitles) {
  const auto sc = make_synthetic_corpus({});
  ASSERT_EQ(sc.entities.size(), 20u);
  ASSERT_EQ(sc.mentions.size(), 50u);
  const auto& world = sc.corpus.world("toy");
  for (const auto& m : sc.mentions) {
    EXPECT_NE(m.context_document_id, m.gold_entity_id);
    const auto words = sc.corpus.context_words(m);
    EXPECT_EQ(words[m.start_index], world.find(m.gold_entity_id)->title);
  }
}

TEST(Synthetic, WriteThenLoadMatches) {
  TempDir dir;
  const auto sc = make_synthetic_corpus({});
  write_synthetic_corpus(dir.str(), sc);
  const auto c = load_corpus(dir.str());
  EXPECT_EQ(c.world("toy").entities, sc.entities);
  EXPECT_EQ(c.mentions("train"), sc.mentions);
  EXPECT_EQ(load_entity_type_annotations(dir / "types.tsv"), sc.type_annotations);
}
