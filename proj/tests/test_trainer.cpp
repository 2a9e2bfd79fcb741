#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace bienc;

namespace {

ModelConfig small_config(PoolingKind pooling, bool typed = false) {
  ModelConfig mc;
  mc.encoder.dim = 8;
  mc.encoder.layers = 1;
  mc.encoder.heads = 2;
  mc.encoder.ff_dim = 16;
  mc.encoder.max_len = 12;
  mc.encoder.vocab_size = testutil::toy_vocab().size();
  mc.encoder.seed = 5;
  mc.templates.max_len = 12;
  mc.templates.use_entity_type = typed;
  mc.pooling = pooling;
  return mc;
}

std::vector<TrainingPair> toy_pairs(const ModelConfig& mc) {
  const auto sc = make_synthetic_corpus({});
  Corpus c = sc.corpus;
  c.apply_type_annotations(sc.type_annotations);
  return build_training_pairs(c, "train", testutil::toy_vocab(), mc.templates);
}

/// Plain-sum reference: -s_ii + log sum_j exp s_ij, averaged over rows.
double reference_loss(const Matrix& s) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double z = 0.0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) z += std::exp(s(i, j));
    total += -s(i, i) + std::log(z);
  }
  return total / static_cast<double>(s.rows());
}

std::vector<const TrainingPair*> pointers(const std::vector<TrainingPair>& pairs, std::size_t n) {
  std::vector<const TrainingPair*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&pairs[i]);
  return out;
}

}  // namespace

TEST(PairScore, DotProduct) {
  PooledVector a{Vector::Zero(3)}, b{Vector::Zero(3)};
  EXPECT_EQ(pair_score(a, b), 0.0);
  a.values << 1, 2, 0;
  b.values << 3, 4, 9;
  EXPECT_EQ(pair_score(a, b), 11.0);
  EXPECT_EQ(pair_score(b, a), 11.0);
  EXPECT_THROW(pair_score(a, PooledVector{Vector::Zero(2)}), std::invalid_argument);
}

TEST(InbatchLoss, SingleExampleIsZero) {
  EXPECT_EQ(inbatch_loss(Matrix::Constant(1, 1, 3.7)).loss, 0.0);
}

TEST(InbatchLoss, UniformScoresGiveLogB) {
  EXPECT_NEAR(inbatch_loss(Matrix::Zero(2, 2)).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(inbatch_loss(Matrix::Constant(5, 5, -2.0)).loss, std::log(5.0), 1e-14);
}

TEST(InbatchLoss, MatchesReferenceAndFiniteDifferences) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s = testutil::random_matrix(rng, 4, 4);
    const auto r = inbatch_loss(s);
    EXPECT_NEAR(r.loss, reference_loss(s), 1e-10);
    for (Eigen::Index i = 0; i < 4; ++i)
      for (Eigen::Index j = 0; j < 4; ++j) {
        Matrix up = s, down = s;
        up(i, j) += 1e-5;
        down(i, j) -= 1e-5;
        const double numeric = (reference_loss(up) - reference_loss(down)) / 2e-5;
        EXPECT_NEAR(r.grad(i, j), numeric, 1e-6);
      }
    EXPECT_LE(r.grad.rowwise().sum().cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(InbatchLoss, RowShiftInvariantAndStableForLargeScores) {
  Rng rng(14);
  const Matrix s = testutil::random_matrix(rng, 3, 3);
  Matrix shifted = s;
  shifted.row(1).array() += 1000.0;
  EXPECT_NEAR(inbatch_loss(s).loss, inbatch_loss(shifted).loss, 1e-12);
  EXPECT_TRUE(std::isfinite(inbatch_loss(s * 1e4).loss));
}

TEST(InbatchLoss, RejectsBadInput) {
  EXPECT_THROW(inbatch_loss(Matrix::Zero(2, 3)), std::invalid_argument);
  Matrix s = Matrix::Zero(2, 2);
  s(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(inbatch_loss(s), NumericError);
}

TEST(Schedule, LinearDecay) {
  EXPECT_EQ(linear_decay_lr(1e-3, 0, 10), 1e-3);
  EXPECT_NEAR(linear_decay_lr(1e-3, 5, 10), 5e-4, 1e-18);
  EXPECT_NEAR(linear_decay_lr(1e-3, 9, 10), 1e-4, 1e-18);
}

TEST(AdamWStep, MatchesHandComputedUpdate) {
  EncoderConfig ec;
  ec.dim = 2;
  ec.layers = 0;
  ec.heads = 1;
  ec.ff_dim = 2;
  ec.max_len = 4;
  ec.vocab_size = 2;
  auto p = init_params(ec);
  auto g = p.zeros_like();
  g.token_embedding.setConstant(0.5);
  TrainConfig tc;
  tc.weight_decay = 0.1;
  AdamW opt(p, tc);
  const Matrix before = p.token_embedding;
  opt.step(p, g, 0.01);
  // First step: m_hat = g, v_hat = g^2, so the Adam move is lr * g / (|g| + eps).
  const Matrix expected = (before * (1.0 - 0.01 * 0.1)).array() - 0.01 * 0.5 / (0.5 + 1e-8);
  EXPECT_LE((p.token_embedding - expected).cwiseAbs().maxCoeff(), 1e-15);

  tc.weight_decay = 0.0;
  auto q = init_params(ec);
  AdamW plain(q, tc);
  const Matrix q0 = q.position_embedding;
  plain.step(q, g, 0.01);
  EXPECT_TRUE(q.position_embedding == q0);  // zero gradient, no decay
}

TEST(BatchLoss, GradientCheckAllPoolings) {
  for (auto kind : kAllPoolingKinds) {
    const auto mc = small_config(kind, kind == PoolingKind::ConcSpecial);
    auto model = BiEncoder::init(mc);
    Rng rng(2);
    // Move away from the near-symmetric initialization so gradients are not tiny.
    model.mention.for_each([&](const std::string&, Matrix& m) { m.array() += 0.2 * testutil::random_matrix(rng, m.rows(), m.cols()).array(); });
    model.entity.for_each([&](const std::string&, Matrix& m) { m.array() += 0.2 * testutil::random_matrix(rng, m.rows(), m.cols()).array(); });
    const auto pairs = toy_pairs(mc);
    const auto batch = pointers(pairs, 2);
    const auto report = gradient_check(model, batch);
    EXPECT_LT(report.max_relative_error, 1e-4) << to_string(kind) << " worst " << report.worst_parameter;
    EXPECT_GT(report.checked, 0u);
  }
}

TEST(BatchLoss, FrozenEntityEncoderHasNoGradient) {
  const auto mc = small_config(PoolingKind::Cls);
  const auto model = BiEncoder::init(mc);
  const auto pairs = toy_pairs(mc);
  const auto batch = pointers(pairs, 4);
  BatchGradients g;
  batch_loss(model, batch, &g, 1.0, true);
  g.entity.for_each([](const std::string& n, const Matrix& m) { EXPECT_TRUE(m.isZero(0.0)) << n; });
  bool any = false;
  g.mention.for_each([&](const std::string&, const Matrix& m) { any |= !m.isZero(0.0); });
  EXPECT_TRUE(any);
}

TEST(BatchLoss, LossScaleScalesGradients) {
  const auto mc = small_config(PoolingKind::Avg);
  const auto model = BiEncoder::init(mc);
  const auto pairs = toy_pairs(mc);
  const auto batch = pointers(pairs, 3);
  BatchGradients g1, g2;
  const double l1 = batch_loss(model, batch, &g1, 1.0);
  const double l2 = batch_loss(model, batch, &g2, 2.0);
  EXPECT_DOUBLE_EQ(l2, 2.0 * l1);
  EXPECT_TRUE(g2.mention.token_embedding == 2.0 * g1.mention.token_embedding);
}

TEST(Train, DeterministicAndDecreasesLoss) {
  const auto mc = small_config(PoolingKind::Cls);
  const auto pairs = toy_pairs(mc);
  TrainConfig tc;
  tc.epochs = 4;
  tc.learning_rate = 1e-2;
  tc.batch_size = 8;
  std::size_t warnings = 0;
  const auto a = train(BiEncoder::init(mc), pairs, tc, {}, [&](const std::string&) { ++warnings; });
  const auto b = train(BiEncoder::init(mc), pairs, tc);
  EXPECT_TRUE(a.model.mention == b.model.mention);
  EXPECT_TRUE(a.model.entity == b.model.entity);
  ASSERT_EQ(a.log.size(), 4u);
  EXPECT_EQ(a.steps, 4u * 7u);
  EXPECT_LT(a.log.back().mean_loss, a.log.front().mean_loss);
  EXPECT_EQ(warnings, a.label_collisions);
}

TEST(Train, FrozenEntityEncoderUnchanged) {
  const auto mc = small_config(PoolingKind::Cls);
  const auto pairs = toy_pairs(mc);
  TrainConfig tc;
  tc.epochs = 1;
  tc.learning_rate = 1e-2;
  tc.freeze_entity_encoder = true;
  const auto init = BiEncoder::init(mc);
  const auto r = train(init, pairs, tc);
  EXPECT_TRUE(r.model.entity == init.entity);
  EXPECT_FALSE(r.model.mention == init.mention);
}

TEST(Train, InvalidConfigRejected) {
  const auto mc = small_config(PoolingKind::Cls);
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(train(BiEncoder::init(mc), toy_pairs(mc), tc), std::invalid_argument);
  EXPECT_THROW(train(BiEncoder::init(mc), {}, TrainConfig{}), std::invalid_argument);
}
