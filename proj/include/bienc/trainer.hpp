#ifndef BIENC_TRAINER_HPP
#define BIENC_TRAINER_HPP

// In-batch-negative training of the bi-encoder.
//
// For a batch of B gold pairs (m_i, e_i) the score matrix is
// S[i][j] = y_m_i . y_e_j and the loss of row i is
//   L_i = -S[i][i] + log sum_j exp(S[i][j]),
// averaged over the batch. Parameters are updated with Adam and decoupled
// weight decay under a learning rate that decays linearly to zero.

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "bienc/corpus.hpp"
#include "bienc/model.hpp"

namespace bienc {

inline double pair_score(const PooledVector& mention, const PooledVector& entity) {
  if (mention.values.size() != entity.values.size())
    throw std::invalid_argument("score between vectors of dimension " + std::to_string(mention.values.size()) +
                                " and " + std::to_string(entity.values.size()));
  return mention.values.dot(entity.values);
}

struct LossResult {
  double loss = 0.0;      // mean over rows
  Vector row_losses;      // per mention
  Matrix grad;            // d loss / d scores
};

/// Softmax cross-entropy over each row with the diagonal as target.
inline LossResult inbatch_loss(const Matrix& scores) {
  if (scores.rows() != scores.cols() || scores.rows() == 0) throw std::invalid_argument("score matrix must be square");
  if (!scores.allFinite()) throw NumericError("non-finite entry in score matrix");
  const auto B = scores.rows();
  LossResult r;
  r.row_losses.resize(B);
  r.grad.resize(B, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const double mx = scores.row(i).maxCoeff();
    const RowVector e = (scores.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    r.row_losses(i) = -scores(i, i) + mx + std::log(z);
    r.grad.row(i) = e / z;
    r.grad(i, i) -= 1.0;
  }
  r.loss = r.row_losses.mean();
  r.grad /= static_cast<double>(B);
  return r;
}

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t epochs = 5;
  double learning_rate = 3e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  bool freeze_entity_encoder = false;

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
      throw std::invalid_argument("Adam betas must lie in (0, 1)");
    if (!(epsilon > 0.0) || weight_decay < 0.0) throw std::invalid_argument("invalid Adam epsilon / weight decay");
  }
};

/// Linear decay: base * (1 - step / total) for step = 0 .. total-1.
inline double linear_decay_lr(double base, std::size_t step, std::size_t total) {
  if (total == 0) return base;
  return base * (1.0 - static_cast<double>(step) / static_cast<double>(total));
}

/// Adam with weight decay applied to the weights directly, not through the gradient.
class AdamW {
 public:
  AdamW(const EncoderParams& shape, const TrainConfig& cfg)
      : m_(shape.zeros_like()), v_(shape.zeros_like()), cfg_(cfg) {}

  void step(EncoderParams& params, const EncoderParams& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::vector<Matrix*> p, m, v;
    std::vector<const Matrix*> g;
    params.for_each([&](const std::string&, Matrix& x) { p.push_back(&x); });
    grads.for_each([&](const std::string&, const Matrix& x) { g.push_back(&x); });
    m_.for_each([&](const std::string&, Matrix& x) { m.push_back(&x); });
    v_.for_each([&](const std::string&, Matrix& x) { v.push_back(&x); });
    if (p.size() != g.size() || p.size() != m.size()) throw std::invalid_argument("optimizer state shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto P = p[i]->array();
      auto G = g[i]->array();
      auto M = m[i]->array();
      auto V = v[i]->array();
      M = cfg_.beta1 * M + (1.0 - cfg_.beta1) * G;
      V = cfg_.beta2 * V + (1.0 - cfg_.beta2) * G.square();
      if (cfg_.weight_decay != 0.0) P *= (1.0 - lr * cfg_.weight_decay);
      P -= lr * (M / c1) / ((V / c2).sqrt() + cfg_.epsilon);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  EncoderParams m_, v_;
  TrainConfig cfg_;
  std::size_t t_ = 0;
};

struct TrainingPair {
  TokenSequence mention;
  TokenSequence entity;
  std::string gold_entity_id;
};

/// Templates every mention of `set_name` together with its gold entity.
inline std::vector<TrainingPair> build_training_pairs(const Corpus& corpus, const std::string& set_name,
                                                      const Vocabulary& vocab, const TemplateConfig& cfg) {
  std::vector<TrainingPair> out;
  for (const auto& m : corpus.mentions(set_name)) {
    const auto& world = corpus.world(m.world);
    const auto words = corpus.context_words(m);
    out.push_back({build_mention_sequence(m, words, vocab, cfg),
                   build_entity_sequence(*world.find(m.gold_entity_id), vocab, cfg), m.gold_entity_id});
  }
  return out;
}

struct BatchGradients {
  double loss = 0.0;
  EncoderParams mention;
  EncoderParams entity;  // zero when frozen or shared
};

/// Mean in-batch loss times `loss_scale`; fills `grads` with its gradients when given.
inline double batch_loss(const BiEncoder& model, std::span<const TrainingPair* const> batch, BatchGradients* grads,
                         double loss_scale = 1.0, bool freeze_entity = false, Rng* dropout_rng = nullptr) {
  const auto B = static_cast<Eigen::Index>(batch.size());
  if (B == 0) throw std::invalid_argument("empty batch");
  const auto& cfg = model.config;
  const auto P = static_cast<Eigen::Index>(cfg.embedding_dim());
  const std::size_t S = cfg.slot_count();

  std::vector<ForwardCache> mcache(batch.size()), ecache(batch.size());
  Matrix ym(B, P), ye(B, P);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& pair = *batch[static_cast<std::size_t>(i)];
    const auto hm = encode_forward(model.mention_encoder(), pair.mention, grads ? &mcache[i] : nullptr, dropout_rng);
    ym.row(i) = model.pool(hm, pair.mention).values.transpose();
    const auto he = encode_forward(model.entity_encoder(), pair.entity, grads ? &ecache[i] : nullptr, dropout_rng);
    ye.row(i) = model.pool(he, pair.entity).values.transpose();
  }
  const Matrix scores = ym * ye.transpose();
  const auto loss = inbatch_loss(scores);
  if (!grads) return loss_scale * loss.loss;

  grads->loss = loss_scale * loss.loss;
  grads->mention = model.mention.zeros_like();
  grads->entity = model.mention.zeros_like();
  const Matrix dscores = loss_scale * loss.grad;
  const Matrix dym = dscores * ye;
  const Matrix dye = dscores.transpose() * ym;
  const auto D = cfg.encoder.dim;
  const auto n = cfg.encoder.max_len;
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& pair = *batch[static_cast<std::size_t>(i)];
    const auto ms = pair.mention.special_indices();
    encode_backward(model.mention_encoder(), mcache[i],
                    backward_reduce(cfg.pooling, ms, pair.mention.attention_length, n, D, dym.row(i).transpose(), S,
                                    cfg.pooling_options),
                    grads->mention);
    if (freeze_entity) continue;
    const auto es = pair.entity.special_indices();
    const Matrix dh = backward_reduce(cfg.pooling, es, pair.entity.attention_length, n, D, dye.row(i).transpose(), S,
                                      cfg.pooling_options);
    encode_backward(model.entity_encoder(), ecache[i], dh, cfg.share_weights ? grads->mention : grads->entity);
  }
  return grads->loss;
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;  // rate used by the epoch's last step
};

struct TrainResult {
  BiEncoder model;
  std::vector<EpochLog> log;
  std::size_t steps = 0;
  std::size_t label_collisions = 0;  // batches in which a gold entity occurs twice
};

inline TrainResult train(BiEncoder model, const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {},
                         const std::function<void(const std::string&)>& on_warning = {}) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("no training pairs");
  const ScopedFlushSubnormals ftz;
  const std::size_t per_epoch = (pairs.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = per_epoch * cfg.epochs;

  AdamW mention_opt(model.mention, cfg);
  AdamW entity_opt(model.config.share_weights ? model.mention : model.entity, cfg);
  Rng order_rng(cfg.seed);
  Rng dropout_rng(cfg.seed ^ 0x5bd1e995ull);
  Rng* drop = model.config.encoder.dropout > 0.0 ? &dropout_rng : nullptr;

  TrainResult result;
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    double lr = cfg.learning_rate;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const TrainingPair*> batch;
      std::unordered_set<std::string> golds;
      bool collision = false;
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(&pairs[order[k]]);
        collision |= !golds.insert(pairs[order[k]].gold_entity_id).second;
      }
      if (collision) {
        ++result.label_collisions;
        if (on_warning)
          on_warning("epoch " + std::to_string(epoch + 1) + " step " + std::to_string(step) +
                     ": gold entity repeated within batch");
      }
      BatchGradients g;
      batch_loss(model, batch, &g, 1.0, cfg.freeze_entity_encoder, drop);
      loss_sum += g.loss * static_cast<double>(batch.size());
      lr = linear_decay_lr(cfg.learning_rate, step, total);
      mention_opt.step(model.mention, g.mention, lr);
      if (!model.config.share_weights && !cfg.freeze_entity_encoder) entity_opt.step(model.entity, g.entity, lr);
      ++step;
    }
    EpochLog entry{epoch + 1, loss_sum / static_cast<double>(pairs.size()), lr};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  result.steps = step;
  result.model = std::move(model);
  return result;
}

struct GradientCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::string worst_parameter;  // "<encoder>/<tensor>[<flat index>]"
  std::size_t checked = 0;
  bool passed(double threshold) const { return max_relative_error < threshold; }
};

namespace detail {
inline constexpr double kGradCheckFloor = 1e-6;
}

/// Compares every analytic gradient entry of the batch loss with a
/// fourth-order central difference (O(h^4) truncation). Relative error is
/// |a - n| / max(|a|, |n|, 1e-6).
inline GradientCheckReport gradient_check(const BiEncoder& model, std::span<const TrainingPair* const> batch,
                                          double step = 1e-3, bool freeze_entity = false) {
  if (model.config.encoder.dropout != 0.0) throw std::invalid_argument("gradient check requires dropout 0");
  BatchGradients g;
  batch_loss(model, batch, &g, 1.0, freeze_entity);

  GradientCheckReport report;
  BiEncoder probe = model;
  auto check = [&](const char* which, EncoderParams& params, const EncoderParams& analytic) {
    std::vector<Matrix*> p;
    std::vector<const Matrix*> a;
    std::vector<std::string> names;
    params.for_each([&](const std::string& name, Matrix& m) {
      p.push_back(&m);
      names.push_back(name);
    });
    analytic.for_each([&](const std::string&, const Matrix& m) { a.push_back(&m); });
    for (std::size_t t = 0; t < p.size(); ++t) {
      for (Eigen::Index k = 0; k < p[t]->size(); ++k) {
        double& w = p[t]->data()[k];
        const double saved = w;
        auto at = [&](double offset) {
          w = saved + offset;
          return batch_loss(probe, batch, nullptr);
        };
        const double near = at(step) - at(-step), far = at(2.0 * step) - at(-2.0 * step);
        w = saved;
        const double numeric = (8.0 * near - far) / (12.0 * step);
        const double exact = a[t]->data()[k];
        const double abs_err = std::abs(numeric - exact);
        const double rel = abs_err / std::max({std::abs(numeric), std::abs(exact), detail::kGradCheckFloor});
        ++report.checked;
        report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
        if (rel > report.max_relative_error || report.worst_parameter.empty()) {
          report.max_relative_error = rel;
          report.worst_parameter = std::string(which) + "/" + names[t] + "[" + std::to_string(k) + "]";
        }
      }
    }
  };
  check("mention", probe.mention, g.mention);
  if (!model.config.share_weights && !freeze_entity) check("entity", probe.entity, g.entity);
  return report;
}

}  // namespace bienc

#endif  // BIENC_TRAINER_HPP
