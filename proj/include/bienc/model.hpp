#ifndef BIENC_MODEL_HPP
#define BIENC_MODEL_HPP

// The bi-encoder: a mention encoder and an entity encoder, plus the template and
// pooling settings that turn records into vectors.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "bienc/encoder.hpp"
#include "bienc/pooling.hpp"
#include "bienc/templates.hpp"

namespace bienc {

struct ModelConfig {
  EncoderConfig encoder;
  TemplateConfig templates;
  PoolingKind pooling = PoolingKind::Cls;
  PoolingOptions pooling_options;
  /// Mention and entity sides use one parameter set.
  bool share_weights = false;

  /// Shared CONC_SPECIAL slot count: the larger of the two templates' special counts.
  std::size_t slot_count() const {
    return std::max(mention_special_count(templates), entity_special_count(templates));
  }
  std::size_t embedding_dim() const { return pooled_dim(pooling, encoder.dim, slot_count()); }

  void validate() const {
    encoder.validate();
    if (encoder.max_len != templates.max_len)
      throw std::invalid_argument("encoder max_len and template max_len differ");
  }
};

struct BiEncoder {
  ModelConfig config;
  EncoderParams mention;
  EncoderParams entity;  // unused when config.share_weights

  /// Both encoders start from the same seeded initialization, as two copies of
  /// one starting checkpoint would.
  static BiEncoder init(const ModelConfig& cfg) {
    cfg.validate();
    BiEncoder m;
    m.config = cfg;
    m.mention = init_params(cfg.encoder);
    if (!cfg.share_weights) m.entity = m.mention;
    return m;
  }

  const EncoderParams& mention_encoder() const { return mention; }
  const EncoderParams& entity_encoder() const { return config.share_weights ? mention : entity; }

  PooledVector pool(const HiddenStates& h, const TokenSequence& seq) const {
    return reduce(h, seq.special_indices(), config.pooling, config.slot_count(), config.pooling_options);
  }

  PooledVector embed(const TokenSequence& seq) const {
    const auto& enc = seq.side == Side::Mention ? mention_encoder() : entity_encoder();
    return pool(encode_forward(enc, seq), seq);
  }

  /// Writes `mention.bin`, `entity.bin` (each with a manifest) and `model.cfg`.
  void save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    save_checkpoint(mention, dir + "/mention.bin");
    save_checkpoint(entity_encoder(), dir + "/entity.bin");
    std::ofstream cfg(dir + "/model.cfg");
    if (!cfg) throw Error("cannot write " + dir + "/model.cfg");
    cfg << "max_len=" << config.templates.max_len << '\n'
        << "use_entity_type=" << config.templates.use_entity_type << '\n'
        << "repeat_mention_surface=" << config.templates.repeat_mention_surface << '\n'
        << "pooling=" << to_string(config.pooling) << '\n'
        << "divide_by_max_len=" << config.pooling_options.divide_by_max_len << '\n'
        << "specials_over_all_rows=" << config.pooling_options.specials_over_all_rows << '\n'
        << "share_weights=" << config.share_weights << '\n';
  }

  static BiEncoder load(const std::string& dir) {
    std::map<std::string, std::string> kv;
    detail::for_each_line(dir + "/model.cfg", [&](const std::string& line, std::size_t lineno) {
      if (line.empty()) return;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(dir + "/model.cfg", lineno, "expected key=value");
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    });
    auto get = [&](const std::string& k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw Error(dir + "/model.cfg lacks '" + k + "'");
      return it->second;
    };
    BiEncoder m;
    m.mention = load_checkpoint(dir + "/mention.bin");
    m.config.encoder = m.mention.config;
    m.config.templates.max_len = std::stoull(get("max_len"));
    m.config.templates.use_entity_type = get("use_entity_type") == "1";
    m.config.templates.repeat_mention_surface = get("repeat_mention_surface") == "1";
    m.config.pooling = parse_pooling(get("pooling"));
    m.config.pooling_options.divide_by_max_len = get("divide_by_max_len") == "1";
    m.config.pooling_options.specials_over_all_rows = get("specials_over_all_rows") == "1";
    m.config.share_weights = get("share_weights") == "1";
    if (!m.config.share_weights) {
      m.entity = load_checkpoint(dir + "/entity.bin");
      if (!(m.entity.config == m.mention.config)) throw Error(dir + ": mention and entity encoder configs differ");
    }
    m.config.validate();
    return m;
  }
};

}  // namespace bienc

#endif  // BIENC_MODEL_HPP
