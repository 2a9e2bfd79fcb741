#ifndef BIENC_SYNTHETIC_HPP
#define BIENC_SYNTHETIC_HPP

// Seeded toy world in Zeshel layout, used for sanity experiments and demos.
//
// Every entity owns a handful of invented words. Its document starts with its
// own words and then carries "passages" that mention other entities: filler
// words, then the other entity's title (the mention span) flanked by some of
// that entity's words. Mentions point at those passages, so the gold entity is
// recoverable from the surface and its immediate context.

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "bienc/corpus.hpp"

namespace bienc {

struct SyntheticSpec {
  std::size_t entities = 20;
  std::size_t mentions = 50;
  std::size_t words_per_entity = 6;
  std::size_t own_words_in_description = 24;
  /// Gold-entity words placed on each side of a mention.
  std::size_t context_words = 3;
  /// Common words padding each passage, keeping neighbouring passages out of a mention's window.
  std::size_t filler_words = 10;
  std::uint64_t seed = 7;
  std::string world = "toy";
  /// Share of mentions whose type annotation is left as <unk>.
  double unknown_mention_type_rate = 0.6;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::map<std::string, std::string> type_annotations;
  std::vector<EntityRecord> entities;
  std::vector<MentionRecord> mentions;
};

namespace detail {

inline std::string pseudo_word(Rng& rng, std::set<std::string>& used) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  for (;;) {
    std::string w;
    const auto syllables = 2 + rng.below(2);
    for (std::uint64_t s = 0; s < syllables; ++s) {
      w += consonants[rng.below(consonants.size())];
      w += vowels[rng.below(vowels.size())];
    }
    if (used.insert(w).second) return w;
  }
}

}  // namespace detail

inline SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.entities < 2 || spec.words_per_entity < 2) throw std::invalid_argument("synthetic corpus too small");
  Rng rng(spec.seed);
  std::set<std::string> used;
  static const std::vector<std::string> fillers = {"the", "of", "and", "in", "a", "with", "from", "near"};
  for (const auto& f : fillers) used.insert(f);
  static const std::vector<std::string> types = {"PERSON", "ORG", "GPE", "LOC", "PRODUCT", "EVENT"};

  std::vector<std::vector<std::string>> vocab(spec.entities);
  for (auto& v : vocab)
    for (std::size_t k = 0; k < spec.words_per_entity; ++k) v.push_back(detail::pseudo_word(rng, used));

  // Mentions are spread round-robin over gold entities and hosted by another entity's document.
  struct Passage {
    std::size_t gold;
    std::size_t host;
  };
  std::vector<Passage> passages;
  for (std::size_t m = 0; m < spec.mentions; ++m) {
    const std::size_t gold = m % spec.entities;
    const std::size_t host = (gold + 1 + rng.below(spec.entities - 1)) % spec.entities;
    passages.push_back({gold, host});
  }

  SyntheticCorpus out;
  std::vector<std::vector<std::string>> doc_words(spec.entities);
  std::vector<MentionRecord> mentions;
  for (std::size_t e = 0; e < spec.entities; ++e) {
    auto& words = doc_words[e];
    for (std::size_t k = 0; k < spec.own_words_in_description; ++k)
      words.push_back(vocab[e][1 + k % (spec.words_per_entity - 1)]);
  }
  for (std::size_t m = 0; m < passages.size(); ++m) {
    const auto [gold, host] = passages[m];
    auto& words = doc_words[host];
    for (std::size_t k = 0; k < spec.filler_words; ++k) words.push_back(fillers[rng.below(fillers.size())]);
    for (std::size_t k = 0; k < spec.context_words; ++k)
      words.push_back(vocab[gold][1 + rng.below(spec.words_per_entity - 1)]);
    MentionRecord rec;
    rec.mention_id = "m" + std::to_string(m);
    rec.context_document_id = "e" + std::to_string(host);
    rec.start_index = rec.end_index = words.size();
    rec.gold_entity_id = "e" + std::to_string(gold);
    rec.world = spec.world;
    words.push_back(vocab[gold][0]);
    for (std::size_t k = 0; k < spec.context_words; ++k)
      words.push_back(vocab[gold][1 + rng.below(spec.words_per_entity - 1)]);
    for (std::size_t k = 0; k < spec.filler_words; ++k) words.push_back(fillers[rng.below(fillers.size())]);
    mentions.push_back(std::move(rec));
  }

  std::vector<EntityRecord> entities;
  for (std::size_t e = 0; e < spec.entities; ++e) {
    EntityRecord r;
    r.entity_id = "e" + std::to_string(e);
    r.title = vocab[e][0];
    std::string text;
    for (const auto& w : doc_words[e]) {
      if (!text.empty()) text += ' ';
      text += w;
    }
    r.description = std::move(text);
    r.world = spec.world;
    entities.push_back(std::move(r));
    out.type_annotations[entities.back().entity_id] = types[e % types.size()];
  }
  for (const auto& m : mentions) {
    if (rng.uniform() >= spec.unknown_mention_type_rate) {
      const auto gold = std::stoul(m.gold_entity_id.substr(1));
      out.type_annotations[m.mention_id] = types[gold % types.size()];
    }
  }

  out.entities = entities;
  out.mentions = mentions;
  out.corpus.add_world(spec.world, Split::Train, entities);
  out.corpus.add_mentions("train", mentions);
  return out;
}

/// Writes documents/, mentions/train.json, splits.tsv and types.tsv under `dir`.
inline void write_synthetic_corpus(const std::string& dir, const SyntheticCorpus& sc) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "documents");
  fs::create_directories(fs::path(dir) / "mentions");
  const auto& world = sc.entities.front().world;
  write_entities((fs::path(dir) / "documents" / (world + ".json")).string(), sc.entities);
  write_mentions((fs::path(dir) / "mentions" / "train.json").string(), sc.mentions);
  std::ofstream splits(fs::path(dir) / "splits.tsv");
  splits << world << "\ttrain\n";
  std::ofstream types(fs::path(dir) / "types.tsv");
  for (const auto& [id, t] : sc.type_annotations) types << id << '\t' << t << '\n';
  if (!splits || !types) throw Error("cannot write synthetic corpus to " + dir);
}

}  // namespace bienc

#endif  // BIENC_SYNTHETIC_HPP
