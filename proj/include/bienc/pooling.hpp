#ifndef BIENC_POOLING_HPP
#define BIENC_POOLING_HPP

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bienc/encoder.hpp"

namespace bienc {

enum class PoolingKind { Cls, Avg, Sum, AvgSpecial, SumSpecial, ConcSpecial };

inline constexpr PoolingKind kAllPoolingKinds[] = {PoolingKind::Cls,        PoolingKind::Avg,
                                                   PoolingKind::Sum,        PoolingKind::AvgSpecial,
                                                   PoolingKind::SumSpecial, PoolingKind::ConcSpecial};

inline std::string_view to_string(PoolingKind k) {
  switch (k) {
    case PoolingKind::Cls: return "cls";
    case PoolingKind::Avg: return "avg";
    case PoolingKind::Sum: return "sum";
    case PoolingKind::AvgSpecial: return "avg_special";
    case PoolingKind::SumSpecial: return "sum_special";
    case PoolingKind::ConcSpecial: return "conc_special";
  }
  return "cls";
}

inline PoolingKind parse_pooling(std::string_view s) {
  for (auto k : kAllPoolingKinds)
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown pooling kind '" + std::string(s) + "'");
}

inline bool uses_specials(PoolingKind k) {
  return k == PoolingKind::AvgSpecial || k == PoolingKind::SumSpecial || k == PoolingKind::ConcSpecial;
}

/// Compatibility switches reproducing the literal max-length formulas.
struct PoolingOptions {
  /// AVG (and AVG_SPECIAL with specials_over_all_rows) divide by max_len instead of the attention length.
  bool divide_by_max_len = false;
  /// AVG_SPECIAL / SUM_SPECIAL reduce over every real row rather than the special rows only.
  bool specials_over_all_rows = false;
};

struct PooledVector {
  Vector values;
  PoolingKind kind = PoolingKind::Cls;
};

inline std::size_t pooled_dim(PoolingKind kind, std::size_t dim, std::size_t slot_count) {
  return kind == PoolingKind::ConcSpecial ? slot_count * dim : dim;
}

namespace detail {

inline void check_specials(PoolingKind kind, std::span<const std::size_t> specials, std::size_t attention_length,
                           std::size_t slot_count) {
  if (!uses_specials(kind)) return;
  if (specials.empty())
    throw std::invalid_argument(std::string(to_string(kind)) + " pooling needs at least one special position");
  for (std::size_t i = 0; i < specials.size(); ++i) {
    if (specials[i] >= attention_length) throw std::invalid_argument("special position beyond attention length");
    if (i > 0 && specials[i] <= specials[i - 1]) throw std::invalid_argument("special positions must be increasing");
  }
  if (kind == PoolingKind::ConcSpecial && specials.size() > slot_count)
    throw std::invalid_argument("conc_special slot count " + std::to_string(slot_count) + " < " +
                                std::to_string(specials.size()) + " special tokens");
}

/// Rows reduced by the AVG/SUM families and the divisor AVG uses.
struct Reduction {
  std::vector<std::size_t> rows;
  double divisor = 1.0;
};

inline Reduction reduction_rows(PoolingKind kind, std::span<const std::size_t> specials, std::size_t attention_length,
                                std::size_t max_len, const PoolingOptions& opt) {
  Reduction r;
  const bool all_rows = kind == PoolingKind::Avg || kind == PoolingKind::Sum || opt.specials_over_all_rows;
  if (all_rows) {
    for (std::size_t i = 0; i < attention_length; ++i) r.rows.push_back(i);
    r.divisor = static_cast<double>(opt.divide_by_max_len ? max_len : attention_length);
  } else {
    r.rows.assign(specials.begin(), specials.end());
    r.divisor = static_cast<double>(specials.size());
  }
  if (kind == PoolingKind::Sum || kind == PoolingKind::SumSpecial) r.divisor = 1.0;
  return r;
}

}  // namespace detail

/// Collapses last-layer states to one vector.
///
///   cls           row 0
///   avg / sum     mean / sum of the attention-length prefix
///   avg_special   mean of the rows at special positions
///   sum_special   sum of the rows at special positions
///   conc_special  special rows concatenated in order, zero-padded to slot_count * D
inline PooledVector reduce(const HiddenStates& h, std::span<const std::size_t> specials, PoolingKind kind,
                           std::size_t slot_count = 0, const PoolingOptions& opt = {}) {
  const auto D = h.values.cols();
  const std::size_t len = h.attention_length;
  if (len == 0 || len > static_cast<std::size_t>(h.values.rows()))
    throw std::invalid_argument("invalid attention length for pooling");
  detail::check_specials(kind, specials, len, slot_count);

  PooledVector out;
  out.kind = kind;
  switch (kind) {
    case PoolingKind::Cls:
      out.values = h.values.row(0).transpose();
      break;
    case PoolingKind::ConcSpecial:
      out.values = Vector::Zero(static_cast<Eigen::Index>(slot_count) * D);
      for (std::size_t s = 0; s < specials.size(); ++s)
        out.values.segment(static_cast<Eigen::Index>(s) * D, D) =
            h.values.row(static_cast<Eigen::Index>(specials[s])).transpose();
      break;
    default: {
      const auto r = detail::reduction_rows(kind, specials, len, static_cast<std::size_t>(h.values.rows()), opt);
      out.values = Vector::Zero(D);
      for (std::size_t i : r.rows) out.values += h.values.row(static_cast<Eigen::Index>(i)).transpose();
      out.values /= r.divisor;
    }
  }
  return out;
}

/// Adjoint of reduce(): scatters a gradient on the pooled vector back onto
/// the max_len x dim hidden-state matrix.
inline Matrix backward_reduce(PoolingKind kind, std::span<const std::size_t> specials, std::size_t attention_length,
                              std::size_t max_len, std::size_t dim, const Vector& upstream, std::size_t slot_count = 0,
                              const PoolingOptions& opt = {}) {
  const auto D = static_cast<Eigen::Index>(dim);
  if (attention_length == 0 || attention_length > max_len) throw std::invalid_argument("invalid attention length");
  detail::check_specials(kind, specials, attention_length, slot_count);
  if (static_cast<std::size_t>(upstream.size()) != pooled_dim(kind, dim, slot_count))
    throw std::invalid_argument("pooled gradient has dimension " + std::to_string(upstream.size()) + ", expected " +
                                std::to_string(pooled_dim(kind, dim, slot_count)));

  Matrix g = Matrix::Zero(static_cast<Eigen::Index>(max_len), D);
  switch (kind) {
    case PoolingKind::Cls:
      g.row(0) = upstream.transpose();
      break;
    case PoolingKind::ConcSpecial:
      for (std::size_t s = 0; s < specials.size(); ++s)
        g.row(static_cast<Eigen::Index>(specials[s])) = upstream.segment(static_cast<Eigen::Index>(s) * D, D).transpose();
      break;
    default: {
      const auto r = detail::reduction_rows(kind, specials, attention_length, max_len, opt);
      const RowVector share = upstream.transpose() / r.divisor;
      for (std::size_t i : r.rows) g.row(static_cast<Eigen::Index>(i)) += share;
    }
  }
  return g;
}

}  // namespace bienc

#endif  // BIENC_POOLING_HPP
