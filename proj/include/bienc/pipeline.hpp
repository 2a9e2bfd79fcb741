#ifndef BIENC_PIPELINE_HPP
#define BIENC_PIPELINE_HPP

// File-to-file pipeline stages behind the `bienc` command line. Each stage
// reads the artifacts of earlier stages from disk and writes its own, plus a
// manifest.txt recording configuration and input digests.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bienc/bpe.hpp"
#include "bienc/corpus.hpp"
#include "bienc/evaluation.hpp"
#include "bienc/model.hpp"
#include "bienc/retrieval.hpp"
#include "bienc/synthetic.hpp"
#include "bienc/trainer.hpp"

namespace bienc {

/// Flat key/value configuration. Files hold `key = value` lines (`#` starts a
/// comment); command-line flags are merged on top and win.
class Settings {
 public:
  Settings() = default;
  Settings(std::initializer_list<std::pair<const std::string, std::string>> init) : values_(init) {}

  static Settings from_file(const std::string& path) {
    Settings s;
    detail::for_each_line(path, [&](const std::string& raw, std::size_t lineno) {
      std::string line = raw.substr(0, raw.find('#'));
      if (detail::blank(line)) return;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(path, lineno, "expected 'key = value'");
      auto trim = [](std::string v) {
        const auto b = v.find_first_not_of(" \t");
        const auto e = v.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
      };
      auto key = trim(line.substr(0, eq));
      std::replace(key.begin(), key.end(), '-', '_');
      s.values_[key] = trim(line.substr(eq + 1));
    });
    return s;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void merge(const Settings& overrides) {
    for (const auto& [k, v] : overrides.values_) values_[k] = v;
  }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty())
      throw std::invalid_argument("missing required setting --" + dashed(key));
    return it->second;
  }
  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const auto v = values_.at(key);
    if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); }))
      throw std::invalid_argument("--" + dashed(key) + " expects a non-negative integer, got '" + v + "'");
    return std::stoull(v);
  }
  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    try {
      std::size_t used = 0;
      const double d = std::stod(values_.at(key), &used);
      if (used != values_.at(key).size()) throw std::invalid_argument("");
      return d;
    } catch (const std::exception&) {
      throw std::invalid_argument("--" + dashed(key) + " expects a number, got '" + values_.at(key) + "'");
    }
  }
  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto v = values_.at(key);
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw std::invalid_argument("--" + dashed(key) + " expects on/off, got '" + v + "'");
  }
  std::vector<std::string> get_list(const std::string& key, const std::string& fallback) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key, fallback));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(item);
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  static std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }

 private:
  std::map<std::string, std::string> values_;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Digest lines for every regular file under `root` (or `root` itself), keyed
/// by path relative to `root` so that relocated inputs digest identically.
inline void digest_inputs(std::ostream& os, const std::string& role, const std::string& root) {
  namespace fs = std::filesystem;
  if (root.empty() || !fs::exists(root)) return;
  std::vector<fs::path> files;
  if (fs::is_directory(root)) {
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file() && e.path().filename() != "manifest.txt") files.push_back(e.path());
  } else {
    files.emplace_back(root);
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto rel = fs::is_directory(root) ? fs::relative(f, root).generic_string() : f.filename().string();
    os << "input\t" << role << '/' << rel << '\t' << hex64(file_digest(f.string())) << '\n';
  }
}

inline std::vector<std::size_t> parse_sizes(const std::vector<std::string>& items, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& s : items) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
      throw std::invalid_argument(what + " expects integers, got '" + s + "'");
    out.push_back(std::stoull(s));
  }
  return out;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

}  // namespace detail

/// Records command, configuration and input digests next to a stage's outputs.
inline void write_manifest(const std::string& path, const std::string& command, const Settings& settings,
                           const std::vector<std::pair<std::string, std::string>>& inputs) {
  std::ostringstream os;
  os << "command\t" << command << '\n';
  for (const auto& [k, v] : settings.values()) os << "config\t" << k << '\t' << v << '\n';
  os << "seed\t" << settings.get("seed", "1") << '\n';
  for (const auto& [role, p] : inputs) detail::digest_inputs(os, role, p);
  detail::write_text(path, os.str());
}

inline std::string vocab_file(const std::string& dir) { return dir + "/vocab.txt"; }
inline std::string merges_file(const std::string& dir) { return dir + "/merges.txt"; }

inline Vocabulary load_vocabulary(const std::string& dir) { return Vocabulary::load(vocab_file(dir), merges_file(dir)); }

/// Loads the corpus and applies `entity_types` unless it is empty or "off".
inline Corpus load_corpus_with_types(const Settings& s) {
  Corpus corpus = load_corpus(s.require("corpus"));
  const auto types = s.get("entity_types", "off");
  if (!types.empty() && types != "off") corpus.apply_type_annotations(load_entity_type_annotations(types));
  return corpus;
}

inline bool entity_types_enabled(const Settings& s) {
  const auto t = s.get("entity_types", "off");
  return !t.empty() && t != "off";
}

inline ModelConfig model_config_from(const Settings& s, std::size_t vocab_size) {
  ModelConfig mc;
  mc.encoder.dim = s.get_size("dim", 64);
  mc.encoder.layers = s.get_size("layers", 2);
  mc.encoder.heads = s.get_size("heads", 2);
  mc.encoder.ff_dim = s.get_size("ff_dim", 256);
  mc.encoder.max_len = s.get_size("max_len", 32);
  mc.encoder.dropout = s.get_double("dropout", 0.0);
  mc.encoder.seed = s.get_size("seed", 1);
  mc.encoder.vocab_size = vocab_size;
  mc.templates.max_len = mc.encoder.max_len;
  mc.templates.use_entity_type = entity_types_enabled(s);
  mc.templates.repeat_mention_surface = s.get_bool("repeat_mention_surface", true);
  mc.pooling = parse_pooling(s.get("pooling", "cls"));
  mc.pooling_options.divide_by_max_len = s.get_bool("divide_by_max_len", false);
  mc.pooling_options.specials_over_all_rows = s.get_bool("specials_over_all_rows", false);
  mc.share_weights = s.get_bool("share_weights", false);
  mc.validate();
  return mc;
}

/// Optimizer defaults are the desk-scale recipe; the full-scale values are
/// batch 8, 5 epochs, lr 3e-5.
inline TrainConfig train_config_from(const Settings& s) {
  TrainConfig tc;
  tc.batch_size = s.get_size("batch_size", 8);
  tc.epochs = s.get_size("epochs", 30);
  tc.learning_rate = s.get_double("lr", 3e-4);
  tc.weight_decay = s.get_double("weight_decay", 0.01);
  tc.beta1 = s.get_double("beta1", 0.9);
  tc.beta2 = s.get_double("beta2", 0.999);
  tc.epsilon = s.get_double("adam_eps", 1e-8);
  tc.seed = s.get_size("seed", 1);
  tc.freeze_entity_encoder = s.get_bool("freeze_entity_encoder", false);
  tc.validate();
  return tc;
}

/// Embeds the mentions and ranks each against its own world's index.
inline std::vector<RetrievalResult> retrieve_mentions(const Corpus& corpus, const std::vector<MentionRecord>& mentions,
                                                      const BiEncoder& model, const Vocabulary& vocab,
                                                      const std::map<std::string, EmbeddingIndex>& indexes,
                                                      std::size_t K, Metric metric, std::size_t threads = 1) {
  for (const auto& m : mentions) {
    auto it = indexes.find(m.world);
    if (it == indexes.end()) throw ValidationError("no index for world '" + m.world + "'");
    if (K > it->second.size())
      throw std::invalid_argument("K=" + std::to_string(K) + " exceeds the " + std::to_string(it->second.size()) +
                                  " entities of world '" + m.world + "'");
  }
  std::vector<RetrievalResult> out(mentions.size());
  detail::parallel_for(mentions.size(), threads, [&](std::size_t i) {
    const auto& m = mentions[i];
    const auto seq = build_mention_sequence(m, corpus.context_words(m), vocab, model.config.templates);
    out[i] = top_k(indexes.at(m.world), model.embed(seq), K, metric, m.mention_id);
  });
  return out;
}

inline std::map<std::string, EmbeddingIndex> build_world_indexes(const Corpus& corpus,
                                                                 const std::vector<MentionRecord>& mentions,
                                                                 const BiEncoder& model, const Vocabulary& vocab,
                                                                 std::size_t threads = 1) {
  std::map<std::string, EmbeddingIndex> out;
  for (const auto& m : mentions)
    if (!out.count(m.world)) out[m.world] = build_index(corpus.world(m.world).entities, model, vocab, m.world, threads);
  return out;
}

/// The standard K grid cut at `limit`, closed with `limit` itself when it falls inside the grid.
inline std::vector<std::size_t> default_grid_within(std::size_t limit) {
  std::vector<std::size_t> ks;
  for (auto k : default_k_grid())
    if (k <= limit) ks.push_back(k);
  if (limit > 0 && limit < default_k_grid().back() && (ks.empty() || ks.back() != limit)) ks.push_back(limit);
  return ks;
}

inline std::size_t smallest_world(const Corpus& corpus, const std::vector<MentionRecord>& mentions) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& m : mentions) n = std::min(n, corpus.world(m.world).entities.size());
  return n;
}

// ---------------------------------------------------------------- stages

inline void run_train_bpe(const Settings& s) {
  const auto corpus = load_corpus(s.require("corpus"));
  const auto out = s.require("out");
  std::vector<std::string> texts;
  for (const auto& [_, w] : corpus.worlds())
    for (const auto& e : w.entities) {
      texts.push_back(e.title);
      texts.push_back(e.description);
    }
  const auto vocab = train_bpe(texts, s.get_size("vocab_size", 8000));
  std::filesystem::create_directories(out);
  vocab.save(vocab_file(out), merges_file(out));
  write_manifest(out + "/manifest.txt", "train-bpe", s, {{"corpus", s.require("corpus")}});
}

inline TrainResult run_train(const Settings& s, std::ostream* log = nullptr) {
  const auto corpus = load_corpus_with_types(s);
  const auto vocab = load_vocabulary(s.require("vocab"));
  const auto out = s.require("out");
  const auto mc = model_config_from(s, vocab.size());
  const auto tc = train_config_from(s);
  const auto pairs = build_training_pairs(corpus, s.get("split", "train"), vocab, mc.templates);

  std::ostringstream tsv;
  auto result = train(
      BiEncoder::init(mc), pairs, tc,
      [&](const EpochLog& e) {
        tsv << e.epoch << '\t' << EvalReport::exact(e.mean_loss) << '\t' << EvalReport::exact(e.lr) << '\n';
        if (log) *log << "epoch " << e.epoch << "\tloss " << e.mean_loss << "\tlr " << e.lr << '\n';
      },
      [&](const std::string&) {});
  if (log && result.label_collisions > 0)
    *log << "warning: " << result.label_collisions
         << " batches held the same gold entity twice; the in-batch loss treats the copies as negatives\n";
  result.model.save(out);
  detail::write_text(out + "/train_log.tsv", tsv.str());
  write_manifest(out + "/manifest.txt", "train", s,
                 {{"corpus", s.require("corpus")}, {"vocab", s.require("vocab")}, {"entity_types", s.get("entity_types", "")}});
  return result;
}

/// Worlds to embed: `--world`, else the worlds of `--split` (train/val/test),
/// else every world referenced by mention set `--mentions`.
inline std::vector<std::string> worlds_to_embed(const Corpus& corpus, const Settings& s) {
  if (s.has("world")) return {s.get("world", "")};
  if (s.has("split")) {
    auto worlds = corpus.worlds_in(parse_split(s.get("split", "")));
    if (worlds.empty()) throw std::invalid_argument("no worlds in split " + s.get("split", ""));
    return worlds;
  }
  std::set<std::string> ws;
  for (const auto& m : corpus.mentions(s.get("mentions", "test"))) ws.insert(m.world);
  return {ws.begin(), ws.end()};
}

inline void run_embed(const Settings& s) {
  const auto corpus = load_corpus_with_types(s);
  const auto vocab = load_vocabulary(s.require("vocab"));
  const auto model = BiEncoder::load(s.require("model"));
  const auto out = s.require("out");
  const auto threads = s.get_size("threads", 1);
  for (const auto& w : worlds_to_embed(corpus, s)) {
    auto idx = build_index(corpus.world(w).entities, model, vocab, w, threads);
    idx.metric = parse_metric(s.get("metric", "dot"));
    idx.save(out + "/" + w);
  }
  write_manifest(out + "/manifest.txt", "embed", s,
                 {{"corpus", s.require("corpus")},
                  {"vocab", s.require("vocab")},
                  {"model", s.require("model")},
                  {"entity_types", s.get("entity_types", "")}});
}

inline std::string candidates_jsonl(const std::vector<RetrievalResult>& results,
                                    const std::vector<MentionRecord>& mentions) {
  std::ostringstream os;
  for (std::size_t i = 0; i < results.size(); ++i) {
    nlohmann::ordered_json obj;
    obj["mention_id"] = results[i].mention_id;
    obj["world"] = mentions[i].world;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : results[i].candidates) arr.push_back({{"entity_id", c.entity_id}, {"score", c.score}});
    obj["candidates"] = std::move(arr);
    os << obj.dump() << '\n';
  }
  return os.str();
}

inline std::vector<RetrievalResult> read_candidates(const std::string& path) {
  std::vector<RetrievalResult> out;
  detail::for_each_line(path, [&](const std::string& line, std::size_t lineno) {
    if (detail::blank(line)) return;
    try {
      const auto obj = nlohmann::json::parse(line);
      RetrievalResult r;
      r.mention_id = obj.at("mention_id").get<std::string>();
      for (const auto& c : obj.at("candidates"))
        r.candidates.push_back({c.at("entity_id").get<std::string>(), c.at("score").get<double>()});
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, lineno, e.what());
    }
  });
  return out;
}

inline void run_retrieve(const Settings& s) {
  const auto corpus = load_corpus_with_types(s);
  const auto vocab = load_vocabulary(s.require("vocab"));
  const auto model = BiEncoder::load(s.require("model"));
  const auto index_dir = s.require("index");
  const auto out = s.require("out");
  const auto& mentions = corpus.mentions(s.get("mentions", "test"));
  std::map<std::string, EmbeddingIndex> indexes;
  for (const auto& m : mentions)
    if (!indexes.count(m.world)) {
      if (!std::filesystem::exists(index_dir + "/" + m.world + "/ids.txt"))
        throw Error("no index for world '" + m.world + "' under " + index_dir);
      indexes[m.world] = EmbeddingIndex::load(index_dir + "/" + m.world);
    }
  const auto results = retrieve_mentions(corpus, mentions, model, vocab, indexes, s.get_size("k", 64),
                                         parse_metric(s.get("metric", "dot")), s.get_size("threads", 1));
  const auto parent = std::filesystem::path(out).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  detail::write_text(out, candidates_jsonl(results, mentions));
  const auto manifest = out + ".manifest";
  write_manifest(manifest, "retrieve", s,
                 {{"corpus", s.require("corpus")},
                  {"vocab", s.require("vocab")},
                  {"model", s.require("model")},
                  {"index", index_dir},
                  {"entity_types", s.get("entity_types", "")}});
  std::ofstream(manifest, std::ios::app) << "resolved\tmetric\t" << s.get("metric", "dot") << "\nresolved\tpooling\t"
                                          << to_string(model.config.pooling) << "\nresolved\tentity_types\t"
                                          << (model.config.templates.use_entity_type ? "on" : "off") << '\n';
}

inline EvalReport run_eval(const Settings& s) {
  const auto corpus = load_corpus(s.require("corpus"));
  const auto results = read_candidates(s.require("candidates"));
  const auto out = s.require("out");
  std::size_t available = std::numeric_limits<std::size_t>::max();
  for (const auto& r : results) available = std::min(available, r.candidates.size());
  std::vector<std::size_t> ks;
  if (s.has("k_list")) {
    ks = detail::parse_sizes(s.get_list("k_list", ""), "--k-list");
    for (auto k : ks)
      if (k > available)
        throw std::invalid_argument("K=" + std::to_string(k) + " exceeds the " + std::to_string(available) +
                                    " retrieved candidates");
  } else {
    ks = default_grid_within(available);
  }
  // Labels default to what `retrieve` recorded next to the candidates.
  std::map<std::string, std::string> recorded;
  const auto cand_manifest = s.require("candidates") + ".manifest";
  if (std::filesystem::exists(cand_manifest))
    detail::for_each_line(cand_manifest, [&](const std::string& line, std::size_t) {
      const auto f = detail::split_tabs(line);
      if (f.size() == 3 && f[0] == "resolved") recorded[f[1]] = f[2];
    });
  EvalConfig cfg;
  cfg.ks = ks;
  cfg.metric = s.get("metric", recorded.count("metric") ? recorded["metric"] : "dot");
  cfg.pooling = s.get("pooling", recorded.count("pooling") ? recorded["pooling"] : "cls");
  cfg.use_entity_type = s.has("entity_types") ? entity_types_enabled(s) : recorded["entity_types"] == "on";
  const auto report = build_report(results, corpus.mentions(s.get("mentions", "test")), cfg);
  std::filesystem::create_directories(out);
  detail::write_text(out + "/report.txt", report.to_table());
  detail::write_text(out + "/report.kv", report.to_kv());
  detail::write_text(out + "/curve.tsv", report.curve_tsv());
  write_manifest(out + "/manifest.txt", "eval", s,
                 {{"corpus", s.require("corpus")}, {"candidates", s.require("candidates")}});
  return report;
}

struct ExperimentRow {
  PoolingKind pooling = PoolingKind::Cls;
  bool entity_types = false;
  Metric metric = Metric::Dot;
  std::map<std::size_t, double> accuracy;  // micro, per K
};

struct ExperimentConfig {
  std::vector<PoolingKind> poolings{std::begin(kAllPoolingKinds), std::end(kAllPoolingKinds)};
  std::vector<Metric> metrics{Metric::Euclidean, Metric::Cosine, Metric::Dot};
  std::vector<bool> entity_types{false, true};
  std::vector<std::size_t> ks{1, 5, 10, 20};
  std::string train_set = "train";
  std::string eval_set = "train";
  std::size_t threads = 1;
};

/// Trains one bi-encoder per (pooling, entity types) cell and scores every
/// metric against it; training always uses the dot-product loss.
inline std::vector<ExperimentRow> run_experiment_grid(const Corpus& corpus, const Vocabulary& vocab,
                                                      const ModelConfig& base, const TrainConfig& tc,
                                                      const ExperimentConfig& ec,
                                                      const std::function<void(const std::string&)>& progress = {}) {
  std::vector<ExperimentRow> rows;
  const auto& eval_mentions = corpus.mentions(ec.eval_set);
  const std::size_t K = *std::max_element(ec.ks.begin(), ec.ks.end());
  for (auto pooling : ec.poolings)
    for (bool types : ec.entity_types) {
      ModelConfig mc = base;
      mc.pooling = pooling;
      mc.templates.use_entity_type = types;
      const auto pairs = build_training_pairs(corpus, ec.train_set, vocab, mc.templates);
      const auto trained = train(BiEncoder::init(mc), pairs, tc);
      const auto indexes = build_world_indexes(corpus, eval_mentions, trained.model, vocab, ec.threads);
      for (auto metric : ec.metrics) {
        const auto results = retrieve_mentions(corpus, eval_mentions, trained.model, vocab, indexes, K, metric, ec.threads);
        EvalConfig cfg;
        cfg.ks = ec.ks;
        const auto rep = build_report(results, eval_mentions, cfg);
        rows.push_back({pooling, types, metric, rep.micro});
      }
      if (progress)
        progress(std::string(to_string(pooling)) + (types ? " +types" : " -types") + ": final loss " +
                 std::to_string(trained.log.back().mean_loss));
    }
  return rows;
}

inline std::string comparison_tsv(const std::vector<ExperimentRow>& rows, const std::vector<std::size_t>& ks) {
  std::ostringstream os;
  os << "pooling\tentity_types\tmetric";
  for (auto k : ks) os << "\tacc@" << k;
  os << '\n';
  for (const auto& r : rows) {
    os << to_string(r.pooling) << '\t' << (r.entity_types ? "on" : "off") << '\t' << to_string(r.metric);
    for (auto k : ks) os << '\t' << EvalReport::exact(r.accuracy.at(k));
    os << '\n';
  }
  return os.str();
}

/// Pivot views: pooling x entity types under dot, and pooling x metric without types.
inline std::string comparison_tables(const std::vector<ExperimentRow>& rows, std::size_t K) {
  auto find = [&](PoolingKind p, bool t, Metric m) -> const ExperimentRow* {
    for (const auto& r : rows)
      if (r.pooling == p && r.entity_types == t && r.metric == m) return &r;
    return nullptr;
  };
  std::vector<PoolingKind> poolings;
  for (const auto& r : rows)
    if (std::find(poolings.begin(), poolings.end(), r.pooling) == poolings.end()) poolings.push_back(r.pooling);
  auto cell = [&](const ExperimentRow* r) { return r ? EvalReport::fmt(r->accuracy.at(K)) : std::string("-"); };

  std::ostringstream os;
  os << "accuracy@" << K << ", dot product\npooling\tw/o types\ttypes\n";
  for (auto p : poolings)
    os << to_string(p) << '\t' << cell(find(p, false, Metric::Dot)) << '\t' << cell(find(p, true, Metric::Dot)) << '\n';
  os << "\naccuracy@" << K << ", without entity types\npooling\teuclidean\tcosine\tdot\n";
  for (auto p : poolings)
    os << to_string(p) << '\t' << cell(find(p, false, Metric::Euclidean)) << '\t'
       << cell(find(p, false, Metric::Cosine)) << '\t' << cell(find(p, false, Metric::Dot)) << '\n';
  return os.str();
}

inline std::vector<ExperimentRow> run_experiment(const Settings& s, std::ostream* log = nullptr) {
  const auto corpus = load_corpus_with_types(s);
  const auto vocab = load_vocabulary(s.require("vocab"));
  const auto out = s.require("out");
  ExperimentConfig ec;
  ec.poolings.clear();
  for (const auto& p : s.get_list("poolings", "cls,avg,sum,avg_special,sum_special,conc_special"))
    ec.poolings.push_back(parse_pooling(p));
  ec.metrics.clear();
  for (const auto& m : s.get_list("metrics", "euclidean,cosine,dot")) ec.metrics.push_back(parse_metric(m));
  ec.entity_types.clear();
  for (const auto& t : s.get_list("types", entity_types_enabled(s) ? "off,on" : "off")) {
    if (t == "on" && !entity_types_enabled(s))
      throw std::invalid_argument("--types on requires an --entity-types annotation file");
    if (t != "on" && t != "off") throw std::invalid_argument("--types expects a list of on/off");
    ec.entity_types.push_back(t == "on");
  }
  ec.train_set = s.get("split", "train");
  ec.eval_set = s.get("mentions", ec.train_set);
  ec.threads = s.get_size("threads", 1);
  const std::size_t world_size = smallest_world(corpus, corpus.mentions(ec.eval_set));
  if (s.has("k_list")) {
    ec.ks = detail::parse_sizes(s.get_list("k_list", ""), "--k-list");
    for (auto k : ec.ks)
      if (k == 0 || k > world_size)
        throw std::invalid_argument("K=" + std::to_string(k) + " must lie in 1.." + std::to_string(world_size));
  } else {
    ec.ks = default_grid_within(world_size);
  }
  std::sort(ec.ks.begin(), ec.ks.end());
  ec.ks.erase(std::unique(ec.ks.begin(), ec.ks.end()), ec.ks.end());

  Settings base_settings = s;
  base_settings.set("entity_types", entity_types_enabled(s) ? s.get("entity_types", "") : "off");
  const auto base = model_config_from(base_settings, vocab.size());
  const auto tc = train_config_from(s);
  const auto rows = run_experiment_grid(corpus, vocab, base, tc, ec, [&](const std::string& msg) {
    if (log) *log << msg << '\n';
  });

  std::filesystem::create_directories(out);
  detail::write_text(out + "/comparison.tsv", comparison_tsv(rows, ec.ks));
  detail::write_text(out + "/comparison.txt", comparison_tables(rows, ec.ks.back()));
  write_manifest(out + "/manifest.txt", "experiment", s,
                 {{"corpus", s.require("corpus")}, {"vocab", s.require("vocab")}, {"entity_types", s.get("entity_types", "")}});
  return rows;
}

inline void run_make_toy(const Settings& s) {
  SyntheticSpec spec;
  spec.entities = s.get_size("entities", spec.entities);
  spec.mentions = s.get_size("num_mentions", spec.mentions);
  spec.seed = s.get_size("seed", spec.seed);
  const auto out = s.require("out");
  write_synthetic_corpus(out, make_synthetic_corpus(spec));
}

inline CorpusStats run_stats(const Settings& s, std::ostream& os) {
  const auto stats = corpus_stats(load_corpus_with_types(s));
  os << stats.to_table();
  return stats;
}

}  // namespace bienc

#endif  // BIENC_PIPELINE_HPP
