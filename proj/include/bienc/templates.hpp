#ifndef BIENC_TEMPLATES_HPP
#define BIENC_TEMPLATES_HPP

// Structured input sequences for the two encoders.
//
//   mention:          [CLS] ctxtl [Ms] mention [Me] ctxtr [SEP]
//   mention, typed:   [CLS] [type] mention [H_SEP] ctxtl [Ms] mention [Me] ctxtr [SEP]
//   entity:           [CLS] title [ENT] description [SEP]
//   entity, typed:    [CLS] [type] title [ENT] description [SEP]
//
// Every sequence is padded with [PAD] to exactly max_len ids.

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bienc/bpe.hpp"
#include "bienc/corpus.hpp"

namespace bienc {

enum class Role { Cls, Sep, MentionStart, MentionEnd, Ent, HeadSep, EntityType };
enum class Side { Mention, Entity };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::Cls: return "CLS";
    case Role::Sep: return "SEP";
    case Role::MentionStart: return "Ms";
    case Role::MentionEnd: return "Me";
    case Role::Ent: return "ENT";
    case Role::HeadSep: return "H_SEP";
    case Role::EntityType: return "TYPE";
  }
  return "?";
}

struct SpecialPosition {
  Role role;
  std::size_t index;
  bool operator==(const SpecialPosition&) const = default;
};

struct TokenSequence {
  std::vector<TokenId> ids;  // exactly max_len entries
  std::size_t attention_length = 0;
  std::vector<SpecialPosition> special_positions;  // in sequence order
  Side side = Side::Mention;

  std::size_t max_len() const { return ids.size(); }

  std::vector<std::size_t> special_indices() const {
    std::vector<std::size_t> out;
    out.reserve(special_positions.size());
    for (const auto& s : special_positions) out.push_back(s.index);
    return out;
  }
};

struct TemplateConfig {
  std::size_t max_len = 32;
  bool use_entity_type = false;
  /// Typed mention template repeats the mention surface before [H_SEP].
  bool repeat_mention_surface = true;
};

/// Number of special tokens each template places (the CONC_SPECIAL slot counts).
inline std::size_t mention_special_count(const TemplateConfig& cfg) { return cfg.use_entity_type ? 6 : 4; }
inline std::size_t entity_special_count(const TemplateConfig& cfg) { return cfg.use_entity_type ? 4 : 3; }

namespace detail {

class SequenceWriter {
 public:
  SequenceWriter(const Vocabulary& vocab, Side side) : vocab_(vocab) { seq_.side = side; }

  void special(Role role, std::string_view token) {
    seq_.special_positions.push_back({role, seq_.ids.size()});
    seq_.ids.push_back(vocab_.id(token));
  }
  void append(std::span<const TokenId> ids) { seq_.ids.insert(seq_.ids.end(), ids.begin(), ids.end()); }

  TokenSequence finish(std::size_t max_len) {
    seq_.attention_length = seq_.ids.size();
    seq_.ids.resize(max_len, vocab_.pad_id());
    return std::move(seq_);
  }

 private:
  const Vocabulary& vocab_;
  TokenSequence seq_;
};

/// Content subwords; special-token text inside content becomes [UNK] so the
/// template owns every special position.
inline std::vector<TokenId> encode_words(const Vocabulary& vocab, std::span<const std::string_view> words) {
  std::vector<TokenId> out;
  for (auto w : words)
    for (TokenId id : vocab.encode(w)) out.push_back(vocab.is_special(id) ? vocab.unk_id() : id);
  return out;
}

inline std::string type_token_for(const Vocabulary& vocab, const std::string& type) {
  auto tok = tokens::type_token(type.empty() ? kUnknownType : std::string_view(type));
  if (!vocab.find(tok)) throw ValidationError("no special token for entity type '" + type + "'");
  return tok;
}

}  // namespace detail

/// `context` holds the whitespace-split words of the mention's context document.
/// Context left of and right of the mention shares the budget left after the
/// specials and mention subwords, odd token to the left; a side that runs out
/// hands its remainder to the other.
inline TokenSequence build_mention_sequence(const MentionRecord& mention, std::span<const std::string_view> context,
                                            const Vocabulary& vocab, const TemplateConfig& cfg) {
  if (mention.start_index > mention.end_index || mention.end_index >= context.size())
    throw ValidationError("mention " + mention.mention_id + ": span out of bounds");
  const bool typed = cfg.use_entity_type;
  const std::size_t copies = (typed && cfg.repeat_mention_surface) ? 2 : 1;
  const std::size_t specials = mention_special_count(cfg);
  if (cfg.max_len < specials + copies)
    throw std::invalid_argument("max_len " + std::to_string(cfg.max_len) + " too small for the mention template");
  const std::size_t budget = cfg.max_len - specials;

  auto surface = detail::encode_words(vocab, context.subspan(mention.start_index,
                                                             mention.end_index - mention.start_index + 1));
  if (surface.empty()) throw ValidationError("mention " + mention.mention_id + ": empty after tokenization");
  surface.resize(std::min(surface.size(), budget / copies));
  const std::size_t remaining = budget - copies * surface.size();

  // Each word yields at least one subword, so `remaining` words per side suffice.
  const std::size_t left_from = mention.start_index > remaining ? mention.start_index - remaining : 0;
  const auto left = detail::encode_words(vocab, context.subspan(left_from, mention.start_index - left_from));
  const std::size_t right_count = std::min(context.size() - mention.end_index - 1, remaining);
  const auto right = detail::encode_words(vocab, context.subspan(mention.end_index + 1, right_count));

  std::size_t left_take = std::min(left.size(), (remaining + 1) / 2);
  const std::size_t right_take = std::min(right.size(), remaining - left_take);
  left_take = std::min(left.size(), remaining - right_take);

  detail::SequenceWriter w(vocab, Side::Mention);
  w.special(Role::Cls, tokens::kCls);
  if (typed) {
    w.special(Role::EntityType, detail::type_token_for(vocab, mention.entity_type));
    if (cfg.repeat_mention_surface) w.append(surface);
    w.special(Role::HeadSep, tokens::kHeadSep);
  }
  w.append(std::span(left).last(left_take));
  w.special(Role::MentionStart, tokens::kMentionStart);
  w.append(surface);
  w.special(Role::MentionEnd, tokens::kMentionEnd);
  w.append(std::span(right).first(right_take));
  w.special(Role::Sep, tokens::kSep);
  return w.finish(cfg.max_len);
}

/// Title first, description tail-truncated to what is left.
inline TokenSequence build_entity_sequence(const EntityRecord& entity, const Vocabulary& vocab,
                                           const TemplateConfig& cfg) {
  if (entity.title.empty()) throw ValidationError("entity " + entity.entity_id + " has an empty title");
  const std::size_t specials = entity_special_count(cfg);
  if (cfg.max_len < specials + 1)
    throw std::invalid_argument("max_len " + std::to_string(cfg.max_len) + " too small for the entity template");
  const std::size_t budget = cfg.max_len - specials;

  auto title = detail::encode_words(vocab, detail::split_whitespace(entity.title));
  title.resize(std::min(title.size(), budget));
  const auto desc_words = detail::split_whitespace(entity.description);
  const std::size_t room = budget - title.size();
  auto desc = detail::encode_words(vocab, std::span(desc_words).first(std::min(desc_words.size(), room)));
  desc.resize(std::min(desc.size(), room));

  detail::SequenceWriter w(vocab, Side::Entity);
  w.special(Role::Cls, tokens::kCls);
  if (cfg.use_entity_type) w.special(Role::EntityType, detail::type_token_for(vocab, entity.entity_type));
  w.append(title);
  w.special(Role::Ent, tokens::kEnt);
  w.append(desc);
  w.special(Role::Sep, tokens::kSep);
  return w.finish(cfg.max_len);
}

/// One line of space-separated token strings, padding included.
inline std::string render(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : seq.ids) {
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

}  // namespace bienc

#endif  // BIENC_TEMPLATES_HPP
