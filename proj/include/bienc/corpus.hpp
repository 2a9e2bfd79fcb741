#ifndef BIENC_CORPUS_HPP
#define BIENC_CORPUS_HPP

// Zeshel-format corpus ingestion: entity dictionaries, labeled mentions,
// sidecar entity-type annotations, and per-world statistics.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "bienc/common.hpp"

namespace bienc {

inline constexpr std::string_view kUnknownType = "<unk>";

/// The 18 OntoNotes labels produced by the spaCy English NER models.
inline const std::vector<std::string>& default_type_labels() {
  static const std::vector<std::string> labels = {
      "PERSON", "NORP",     "FAC",  "ORG",  "GPE",     "LOC",   "PRODUCT",  "EVENT",   "WORK_OF_ART",
      "LAW",    "LANGUAGE", "DATE", "TIME", "PERCENT", "MONEY", "QUANTITY", "ORDINAL", "CARDINAL"};
  return labels;
}

/// Configured entity-type vocabulary; `<unk>` is always a member.
class TypeLabelSet {
 public:
  TypeLabelSet() : TypeLabelSet(default_type_labels()) {}
  explicit TypeLabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    for (const auto& l : labels_) {
      if (l.empty() || l == kUnknownType) throw std::invalid_argument("invalid entity type label '" + l + "'");
    }
    labels_.emplace_back(kUnknownType);
    std::set<std::string> seen(labels_.begin(), labels_.end());
    if (seen.size() != labels_.size()) throw std::invalid_argument("duplicate entity type label");
  }

  /// Labels in configured order, `<unk>` last.
  const std::vector<std::string>& labels() const { return labels_; }
  bool contains(std::string_view label) const {
    return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
  }

 private:
  std::vector<std::string> labels_;
};

struct EntityRecord {
  std::string entity_id;
  std::string title;
  std::string description;
  std::string world;
  std::string entity_type{kUnknownType};

  bool operator==(const EntityRecord&) const = default;
};

struct MentionRecord {
  std::string mention_id;
  std::string context_document_id;
  std::size_t start_index = 0;  // inclusive word offset
  std::size_t end_index = 0;    // inclusive word offset
  std::string gold_entity_id;
  std::string world;
  std::string entity_type{kUnknownType};

  bool operator==(const MentionRecord&) const = default;
};

enum class Split { Train, Val, Test, Unassigned };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  if (s == "unassigned") return Split::Unassigned;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

/// World-to-split assignment of the public Zeshel release.
inline const std::map<std::string, Split>& zeshel_world_splits() {
  static const std::map<std::string, Split> table = {
      {"american_football", Split::Train}, {"doctor_who", Split::Train},
      {"fallout", Split::Train},           {"final_fantasy", Split::Train},
      {"military", Split::Train},          {"pro_wrestling", Split::Train},
      {"starwars", Split::Train},          {"world_of_warcraft", Split::Train},
      {"coronation_street", Split::Val},   {"muppets", Split::Val},
      {"ice_hockey", Split::Val},          {"elder_scrolls", Split::Val},
      {"forgotten_realms", Split::Test},   {"lego", Split::Test},
      {"star_trek", Split::Test},          {"yugioh", Split::Test},
  };
  return table;
}

/// Split that a mention file name implies for the worlds it references.
inline Split split_of_mention_set(std::string_view set_name) {
  if (set_name == "train" || set_name.starts_with("heldout_train")) return Split::Train;
  if (set_name == "val") return Split::Val;
  if (set_name == "test") return Split::Test;
  return Split::Unassigned;
}

namespace detail {

template <typename F>
void for_each_line(const std::string& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    f(line, lineno);
  }
}

inline bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

inline std::string json_string(const nlohmann::json& obj, const char* key, const std::string& path, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path, line, std::string("missing key '") + key + "'");
  if (!it->is_string()) throw ParseError(path, line, std::string("key '") + key + "' is not a string");
  return it->get<std::string>();
}

inline std::size_t json_index(const nlohmann::json& obj, const char* key, const std::string& path, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path, line, std::string("missing key '") + key + "'");
  if (it->is_number_integer() && it->get<long long>() >= 0) return it->get<std::size_t>();
  if (it->is_string()) {
    const auto s = it->get<std::string>();
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
      return std::stoull(s);
  }
  throw ParseError(path, line, std::string("key '") + key + "' is not a non-negative integer");
}

}  // namespace detail

/// Reads one Zeshel documents file (`document_id`, `title`, `text` per line).
inline std::vector<EntityRecord> load_entities(const std::string& path, const std::string& world) {
  if (world.empty()) throw ValidationError("world label must be non-empty");
  std::vector<EntityRecord> out;
  std::unordered_map<std::string, std::size_t> seen;
  detail::for_each_line(path, [&](const std::string& line, std::size_t lineno) {
    if (detail::blank(line)) return;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path, lineno, e.what());
    }
    if (!obj.is_object()) throw ParseError(path, lineno, "expected an object");
    EntityRecord r;
    r.entity_id = detail::json_string(obj, "document_id", path, lineno);
    r.title = detail::json_string(obj, "title", path, lineno);
    r.description = detail::json_string(obj, "text", path, lineno);
    r.world = world;
    if (auto it = obj.find("entity_type"); it != obj.end() && it->is_string()) r.entity_type = it->get<std::string>();
    if (r.title.empty()) throw ValidationError(path + ":" + std::to_string(lineno) + ": empty title for " + r.entity_id);
    if (!seen.emplace(r.entity_id, lineno).second)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": duplicate entity_id '" + r.entity_id + "'");
    out.push_back(std::move(r));
  });
  return out;
}

/// Reads a Zeshel mention file. Span ordering is checked here; bounds and
/// gold resolution need the dictionaries and are checked by Corpus::add_mentions.
inline std::vector<MentionRecord> load_mentions(const std::string& path) {
  std::vector<MentionRecord> out;
  detail::for_each_line(path, [&](const std::string& line, std::size_t lineno) {
    if (detail::blank(line)) return;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path, lineno, e.what());
    }
    if (!obj.is_object()) throw ParseError(path, lineno, "expected an object");
    MentionRecord m;
    m.mention_id = detail::json_string(obj, "mention_id", path, lineno);
    m.context_document_id = detail::json_string(obj, "context_document_id", path, lineno);
    m.start_index = detail::json_index(obj, "start_index", path, lineno);
    m.end_index = detail::json_index(obj, "end_index", path, lineno);
    m.gold_entity_id = detail::json_string(obj, "label_document_id", path, lineno);
    m.world = detail::json_string(obj, "corpus", path, lineno);
    if (auto it = obj.find("entity_type"); it != obj.end() && it->is_string()) m.entity_type = it->get<std::string>();
    if (m.start_index > m.end_index)
      throw ValidationError("mention " + m.mention_id + ": start_index " + std::to_string(m.start_index) +
                            " > end_index " + std::to_string(m.end_index));
    out.push_back(std::move(m));
  });
  return out;
}

inline void write_entities(const std::string& path, const std::vector<EntityRecord>& entities) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& e : entities) {
    nlohmann::ordered_json obj;
    obj["document_id"] = e.entity_id;
    obj["title"] = e.title;
    obj["text"] = e.description;
    if (e.entity_type != kUnknownType) obj["entity_type"] = e.entity_type;
    out << obj.dump() << '\n';
  }
}

inline void write_mentions(const std::string& path, const std::vector<MentionRecord>& mentions) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& m : mentions) {
    nlohmann::ordered_json obj;
    obj["mention_id"] = m.mention_id;
    obj["context_document_id"] = m.context_document_id;
    obj["start_index"] = m.start_index;
    obj["end_index"] = m.end_index;
    obj["label_document_id"] = m.gold_entity_id;
    obj["corpus"] = m.world;
    if (m.entity_type != kUnknownType) obj["entity_type"] = m.entity_type;
    out << obj.dump() << '\n';
  }
}

/// `id<TAB>type` per line. Ids absent from the result are `<unk>` downstream.
inline std::map<std::string, std::string> load_entity_type_annotations(const std::string& path,
                                                                       const TypeLabelSet& labels = {}) {
  std::map<std::string, std::string> out;
  detail::for_each_line(path, [&](const std::string& line, std::size_t lineno) {
    if (detail::blank(line)) return;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw ParseError(path, lineno, "expected 'id<TAB>type'");
    std::string id = line.substr(0, tab);
    std::string type = line.substr(tab + 1);
    if (id.empty()) throw ParseError(path, lineno, "empty id");
    if (!labels.contains(type))
      throw ValidationError(path + ":" + std::to_string(lineno) + ": unknown entity type '" + type + "'");
    out[std::move(id)] = std::move(type);
  });
  return out;
}

struct World {
  std::string name;
  Split split = Split::Unassigned;
  std::vector<EntityRecord> entities;
  std::unordered_map<std::string, std::size_t> index;

  const EntityRecord* find(const std::string& id) const {
    auto it = index.find(id);
    return it == index.end() ? nullptr : &entities[it->second];
  }
};

/// Worlds with their dictionaries plus named mention sets. Context documents
/// are the world's own documents, as in Zeshel.
class Corpus {
 public:
  World& add_world(const std::string& name, Split split, std::vector<EntityRecord> entities) {
    if (name.empty()) throw ValidationError("world label must be non-empty");
    if (worlds_.count(name)) throw ValidationError("world '" + name + "' added twice");
    World w;
    w.name = name;
    w.split = split;
    w.entities = std::move(entities);
    for (std::size_t i = 0; i < w.entities.size(); ++i) {
      auto& e = w.entities[i];
      if (e.world.empty()) e.world = name;
      if (e.world != name) throw ValidationError("entity " + e.entity_id + " belongs to world " + e.world);
      if (e.title.empty()) throw ValidationError("entity " + e.entity_id + " has an empty title");
      if (!w.index.emplace(e.entity_id, i).second)
        throw ValidationError("duplicate entity_id '" + e.entity_id + "' in world " + name);
    }
    return worlds_.emplace(name, std::move(w)).first->second;
  }

  /// Validates and stores a mention set (e.g. "train", "test", "heldout_train_seen").
  /// A set named after a split may only reference worlds of that split, which
  /// keeps train/val/test world sets pairwise disjoint.
  void add_mentions(const std::string& set_name, std::vector<MentionRecord> mentions) {
    const Split expected = split_of_mention_set(set_name);
    for (const auto& m : mentions) {
      validate_mention(m);
      const Split actual = world(m.world).split;
      if (expected != Split::Unassigned && actual != Split::Unassigned && actual != expected)
        throw ValidationError("mention " + m.mention_id + " in set '" + set_name + "' references " +
                              std::string(to_string(actual)) + " world '" + m.world + "'");
    }
    auto& dst = mention_sets_[set_name];
    dst.insert(dst.end(), std::make_move_iterator(mentions.begin()), std::make_move_iterator(mentions.end()));
  }

  void validate_mention(const MentionRecord& m) const {
    const World* w = find_world(m.world);
    if (!w) throw ValidationError("mention " + m.mention_id + ": unknown world '" + m.world + "'");
    const EntityRecord* ctx = w->find(m.context_document_id);
    if (!ctx) throw ValidationError("mention " + m.mention_id + ": unresolvable context document '" +
                                    m.context_document_id + "'");
    if (!w->find(m.gold_entity_id))
      throw ValidationError("mention " + m.mention_id + ": unresolvable gold entity '" + m.gold_entity_id + "'");
    const auto words = detail::split_whitespace(ctx->description);
    if (m.start_index > m.end_index || m.end_index >= words.size())
      throw ValidationError("mention " + m.mention_id + ": span " + std::to_string(m.start_index) + ".." +
                            std::to_string(m.end_index) + " out of bounds for document of " +
                            std::to_string(words.size()) + " words");
  }

  /// Words of the context document, whitespace-split.
  std::vector<std::string_view> context_words(const MentionRecord& m) const {
    return detail::split_whitespace(world(m.world).find(m.context_document_id)->description);
  }

  const World& world(const std::string& name) const {
    const World* w = find_world(name);
    if (!w) throw ValidationError("unknown world '" + name + "'");
    return *w;
  }
  const World* find_world(const std::string& name) const {
    auto it = worlds_.find(name);
    return it == worlds_.end() ? nullptr : &it->second;
  }
  const std::map<std::string, World>& worlds() const { return worlds_; }

  const std::vector<MentionRecord>& mentions(const std::string& set_name) const {
    auto it = mention_sets_.find(set_name);
    if (it == mention_sets_.end()) throw ValidationError("no mention set '" + set_name + "'");
    return it->second;
  }
  bool has_mentions(const std::string& set_name) const { return mention_sets_.count(set_name) > 0; }
  const std::map<std::string, std::vector<MentionRecord>>& mention_sets() const { return mention_sets_; }

  /// Overwrites entity_type on entities and mentions whose id is annotated;
  /// everything else becomes `<unk>`.
  void apply_type_annotations(const std::map<std::string, std::string>& types) {
    auto lookup = [&](const std::string& id) {
      auto it = types.find(id);
      return it == types.end() ? std::string(kUnknownType) : it->second;
    };
    for (auto& [_, w] : worlds_)
      for (auto& e : w.entities) e.entity_type = lookup(e.entity_id);
    for (auto& [_, set] : mention_sets_)
      for (auto& m : set) m.entity_type = lookup(m.mention_id);
    annotated_ = !types.empty();
  }
  bool annotated() const { return annotated_; }

  std::vector<std::string> worlds_in(Split split) const {
    std::vector<std::string> out;
    for (const auto& [name, w] : worlds_)
      if (w.split == split) out.push_back(name);
    return out;
  }

 private:
  std::map<std::string, World> worlds_;
  std::map<std::string, std::vector<MentionRecord>> mention_sets_;
  bool annotated_ = false;
};

/// Loads a Zeshel-layout directory: `documents/<world>.json`,
/// `mentions/<set>.json`, and optionally `splits.tsv` (`world<TAB>split`)
/// overriding the built-in Zeshel assignment.
inline Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::is_directory(root / "documents")) throw Error("no documents/ directory under " + dir);

  std::map<std::string, Split> splits = zeshel_world_splits();
  if (fs::exists(root / "splits.tsv")) {
    detail::for_each_line((root / "splits.tsv").string(), [&](const std::string& line, std::size_t lineno) {
      if (detail::blank(line)) return;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError((root / "splits.tsv").string(), lineno, "expected 'world<TAB>split'");
      try {
        splits[line.substr(0, tab)] = parse_split(line.substr(tab + 1));
      } catch (const std::invalid_argument& e) {
        throw ParseError((root / "splits.tsv").string(), lineno, e.what());
      }
    });
  }

  std::map<std::string, std::vector<MentionRecord>> sets;
  if (fs::is_directory(root / "mentions")) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / "mentions"))
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) sets[f.stem().string()] = load_mentions(f.string());
  }
  // Worlds absent from the table take their split from the mention files that reference them.
  for (const auto& [set_name, ms] : sets) {
    const Split s = split_of_mention_set(set_name);
    if (s == Split::Unassigned) continue;
    for (const auto& m : ms) splits.emplace(m.world, s);
  }

  std::vector<fs::path> docs;
  for (const auto& entry : fs::directory_iterator(root / "documents"))
    if (entry.path().extension() == ".json") docs.push_back(entry.path());
  std::sort(docs.begin(), docs.end());

  Corpus corpus;
  for (const auto& d : docs) {
    const auto world = d.stem().string();
    auto it = splits.find(world);
    corpus.add_world(world, it == splits.end() ? Split::Unassigned : it->second, load_entities(d.string(), world));
  }
  for (auto& [set_name, ms] : sets) corpus.add_mentions(set_name, std::move(ms));
  return corpus;
}

struct WorldStats {
  std::string world;
  Split split = Split::Unassigned;
  std::size_t entities = 0;
  std::size_t mentions = 0;
  double entity_type_coverage = 0.0;   // fraction of entities with a type other than <unk>
  double mention_type_coverage = 0.0;  // same for mentions
};

struct CorpusStats {
  std::vector<WorldStats> worlds;
  std::size_t entities = 0;
  std::size_t mentions = 0;
  double entity_type_coverage = 0.0;
  double mention_type_coverage = 0.0;

  const WorldStats* find(const std::string& world) const {
    for (const auto& w : worlds)
      if (w.world == world) return &w;
    return nullptr;
  }

  std::string to_table() const {
    std::ostringstream os;
    os << "world\tsplit\tentities\tmentions\tentity_type_coverage\tmention_type_coverage\n";
    for (const auto& w : worlds)
      os << w.world << '\t' << to_string(w.split) << '\t' << w.entities << '\t' << w.mentions << '\t'
         << w.entity_type_coverage << '\t' << w.mention_type_coverage << '\n';
    os << "total\t-\t" << entities << '\t' << mentions << '\t' << entity_type_coverage << '\t'
       << mention_type_coverage << '\n';
    return os.str();
  }
};

inline CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  std::map<std::string, std::pair<std::size_t, std::size_t>> mention_counts;  // world -> (total, typed)
  for (const auto& [_, set] : corpus.mention_sets())
    for (const auto& m : set) {
      auto& c = mention_counts[m.world];
      ++c.first;
      if (m.entity_type != kUnknownType) ++c.second;
    }
  std::size_t typed_entities = 0, typed_mentions = 0;
  for (const auto& [name, w] : corpus.worlds()) {
    WorldStats ws;
    ws.world = name;
    ws.split = w.split;
    ws.entities = w.entities.size();
    const auto typed = static_cast<std::size_t>(std::count_if(
        w.entities.begin(), w.entities.end(), [](const EntityRecord& e) { return e.entity_type != kUnknownType; }));
    ws.entity_type_coverage = ws.entities ? static_cast<double>(typed) / static_cast<double>(ws.entities) : 0.0;
    const auto mc = mention_counts[name];
    ws.mentions = mc.first;
    ws.mention_type_coverage = mc.first ? static_cast<double>(mc.second) / static_cast<double>(mc.first) : 0.0;
    stats.entities += ws.entities;
    stats.mentions += ws.mentions;
    typed_entities += typed;
    typed_mentions += mc.second;
    stats.worlds.push_back(ws);
  }
  stats.entity_type_coverage =
      stats.entities ? static_cast<double>(typed_entities) / static_cast<double>(stats.entities) : 0.0;
  stats.mention_type_coverage =
      stats.mentions ? static_cast<double>(typed_mentions) / static_cast<double>(stats.mentions) : 0.0;
  return stats;
}

}  // namespace bienc

#endif  // BIENC_CORPUS_HPP
