#ifndef BIENC_EVALUATION_HPP
#define BIENC_EVALUATION_HPP

// Top-K accuracy: the fraction of mentions whose gold entity is among the
// first K retrieved candidates.

#include <cstdio>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bienc/corpus.hpp"
#include "bienc/retrieval.hpp"

namespace bienc {

inline double accuracy_at_k(std::span<const RetrievalResult> results, const std::map<std::string, std::string>& gold,
                            std::size_t K) {
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : results) {
    auto it = gold.find(r.mention_id);
    if (it == gold.end()) throw ValidationError("no gold entity for mention " + r.mention_id);
    if (r.candidates.size() < K)
      throw std::invalid_argument("mention " + r.mention_id + " has " + std::to_string(r.candidates.size()) +
                                  " candidates, fewer than K=" + std::to_string(K));
    for (std::size_t k = 0; k < K; ++k)
      if (r.candidates[k].entity_id == it->second) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

inline const std::vector<std::size_t>& default_k_grid() {
  static const std::vector<std::size_t> grid = {1, 10, 25, 50, 64};
  return grid;
}

struct EvalConfig {
  std::vector<std::size_t> ks = default_k_grid();
  std::string metric = "dot";
  std::string pooling = "cls";
  bool use_entity_type = false;
};

struct EvalReport {
  std::vector<std::size_t> ks;  // ascending, unique
  std::map<std::size_t, double> micro;
  std::map<std::size_t, double> macro;
  std::map<std::string, std::map<std::size_t, double>> per_world;
  std::map<std::string, std::size_t> world_mentions;
  std::string metric;
  std::string pooling;
  bool use_entity_type = false;
  std::size_t mention_count = 0;

  /// Human-readable table.
  std::string to_table() const {
    std::ostringstream os;
    os << "metric=" << metric << " pooling=" << pooling << " entity_types=" << (use_entity_type ? "on" : "off")
       << " mentions=" << mention_count << '\n';
    os << "world";
    for (auto k : ks) os << "\t@" << k;
    os << '\n';
    for (const auto& [w, acc] : per_world) {
      os << w;
      for (auto k : ks) os << '\t' << fmt(acc.at(k));
      os << '\n';
    }
    os << "macro";
    for (auto k : ks) os << '\t' << fmt(macro.at(k));
    os << "\nmicro";
    for (auto k : ks) os << '\t' << fmt(micro.at(k));
    os << '\n';
    return os.str();
  }

  /// One `key<TAB>value` per line.
  std::string to_kv() const {
    std::ostringstream os;
    os << "metric\t" << metric << "\npooling\t" << pooling << "\nentity_types\t" << (use_entity_type ? 1 : 0)
       << "\nmentions\t" << mention_count << '\n';
    for (auto k : ks) os << "micro@" << k << '\t' << exact(micro.at(k)) << '\n';
    for (auto k : ks) os << "macro@" << k << '\t' << exact(macro.at(k)) << '\n';
    for (const auto& [w, acc] : per_world) {
      os << "world." << w << ".mentions\t" << world_mentions.at(w) << '\n';
      for (auto k : ks) os << "world." << w << '@' << k << '\t' << exact(acc.at(k)) << '\n';
    }
    return os.str();
  }

  /// `K<TAB>accuracy` rows (micro), sorted by K.
  std::string curve_tsv() const {
    std::ostringstream os;
    for (auto k : ks) os << k << '\t' << exact(micro.at(k)) << '\n';
    return os.str();
  }

  static std::string exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
  }
};

/// Micro accuracy over all mentions plus per-world and macro (mean of worlds)
/// breakdowns. `mentions` supplies gold ids and worlds.
inline EvalReport build_report(std::span<const RetrievalResult> results, std::span<const MentionRecord> mentions,
                               const EvalConfig& cfg) {
  std::map<std::string, const MentionRecord*> by_id;
  for (const auto& m : mentions) by_id[m.mention_id] = &m;
  std::map<std::string, std::string> gold;
  std::map<std::string, std::vector<RetrievalResult>> by_world;
  for (const auto& r : results) {
    auto it = by_id.find(r.mention_id);
    if (it == by_id.end()) throw ValidationError("no gold entity for mention " + r.mention_id);
    gold[r.mention_id] = it->second->gold_entity_id;
    by_world[it->second->world].push_back(r);
  }

  EvalReport rep;
  rep.ks = cfg.ks;
  std::sort(rep.ks.begin(), rep.ks.end());
  rep.ks.erase(std::unique(rep.ks.begin(), rep.ks.end()), rep.ks.end());
  rep.metric = cfg.metric;
  rep.pooling = cfg.pooling;
  rep.use_entity_type = cfg.use_entity_type;
  rep.mention_count = results.size();
  for (const auto& [w, rs] : by_world) rep.world_mentions[w] = rs.size();
  for (auto k : rep.ks) {
    rep.micro[k] = accuracy_at_k(results, gold, k);
    double sum = 0.0;
    for (const auto& [w, rs] : by_world) {
      const double a = accuracy_at_k(rs, gold, k);
      rep.per_world[w][k] = a;
      sum += a;
    }
    rep.macro[k] = by_world.empty() ? 0.0 : sum / static_cast<double>(by_world.size());
  }
  return rep;
}

}  // namespace bienc

#endif  // BIENC_EVALUATION_HPP
