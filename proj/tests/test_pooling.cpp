#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace bienc;

namespace {

HiddenStates states(const Matrix& real, std::size_t max_len) {
  HiddenStates h;
  h.values = Matrix::Zero(static_cast<Eigen::Index>(max_len), real.cols());
  h.values.topRows(real.rows()) = real;
  h.attention_length = static_cast<std::size_t>(real.rows());
  return h;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(Reduce, AvgOfIdenticalRows) {
  Matrix real(3, 2);
  real << 1.5, -2, 1.5, -2, 1.5, -2;
  EXPECT_TRUE(reduce(states(real, 5), {}, PoolingKind::Avg).values == vec({1.5, -2}));
}

TEST(Reduce, SumOfTwoRows) {
  Matrix real(2, 2);
  real << 1, 2, 3, 4;
  EXPECT_TRUE(reduce(states(real, 4), {}, PoolingKind::Sum).values == vec({4, 6}));
}

TEST(Reduce, ConcSpecialZeroPadsSlots) {
  Matrix real(4, 2);
  real << 1, 2, 3, 4, 5, 6, 7, 8;
  const std::vector<std::size_t> sp = {0, 3};
  EXPECT_TRUE(reduce(states(real, 6), sp, PoolingKind::ConcSpecial, 3).values == vec({1, 2, 7, 8, 0, 0}));
}

TEST(Reduce, ClsAndSpecials) {
  Matrix real(4, 2);
  real << 1, 2, 3, 4, 5, 6, 7, 8;
  const std::vector<std::size_t> sp = {1, 3};
  const auto h = states(real, 6);
  EXPECT_TRUE(reduce(h, sp, PoolingKind::Cls).values == vec({1, 2}));
  EXPECT_TRUE(reduce(h, sp, PoolingKind::SumSpecial).values == vec({10, 12}));
  EXPECT_TRUE(reduce(h, sp, PoolingKind::AvgSpecial).values == vec({5, 6}));
}

TEST(Reduce, RandomIdentities) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const auto len = 2 + rng.below(10);
    const auto h = states(testutil::random_matrix(rng, static_cast<Eigen::Index>(len), 5), 16);
    std::vector<std::size_t> sp;
    for (std::size_t i = 0; i < len; ++i)
      if (i == 0 || rng.below(3) == 0) sp.push_back(i);
    const auto avg = reduce(h, sp, PoolingKind::Avg).values;
    const auto sum = reduce(h, sp, PoolingKind::Sum).values;
    EXPECT_LE((avg - sum / static_cast<double>(len)).cwiseAbs().maxCoeff(), 1e-12);
    const auto avg_s = reduce(h, sp, PoolingKind::AvgSpecial).values;
    const auto sum_s = reduce(h, sp, PoolingKind::SumSpecial).values;
    EXPECT_LE((sum_s - avg_s * static_cast<double>(sp.size())).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Reduce, AllSpecialSequenceCollapsesFamilies) {
  Rng rng(5);
  const auto h = states(testutil::random_matrix(rng, 4, 3), 8);
  const std::vector<std::size_t> sp = {0, 1, 2, 3};
  EXPECT_TRUE(reduce(h, sp, PoolingKind::Avg).values == reduce(h, sp, PoolingKind::AvgSpecial).values);
  EXPECT_TRUE(reduce(h, sp, PoolingKind::Sum).values == reduce(h, sp, PoolingKind::SumSpecial).values);
}

TEST(Reduce, SingleSlotConcEqualsCls) {
  Rng rng(6);
  const auto h = states(testutil::random_matrix(rng, 5, 3), 8);
  const std::vector<std::size_t> sp = {0};
  EXPECT_TRUE(reduce(h, sp, PoolingKind::ConcSpecial, 1).values == reduce(h, sp, PoolingKind::Cls).values);
}

TEST(Reduce, IgnoresRowsBeyondAttentionLength) {
  Rng rng(7);
  auto h = states(testutil::random_matrix(rng, 4, 3), 8);
  const std::vector<std::size_t> sp = {0, 2, 3};
  std::vector<Vector> before;
  for (auto k : kAllPoolingKinds) before.push_back(reduce(h, sp, k, 4).values);
  h.values.bottomRows(4).setConstant(1e6);
  std::size_t i = 0;
  for (auto k : kAllPoolingKinds) EXPECT_TRUE(reduce(h, sp, k, 4).values == before[i++]) << to_string(k);
}

TEST(Reduce, CompatibilityOptionsUseMaxLen) {
  Matrix real(2, 2);
  real << 1, 2, 3, 4;
  const auto h = states(real, 8);
  const std::vector<std::size_t> sp = {0};
  EXPECT_TRUE(reduce(h, sp, PoolingKind::Avg, 0, {.divide_by_max_len = true}).values == vec({0.5, 0.75}));
  EXPECT_TRUE(reduce(h, sp, PoolingKind::AvgSpecial, 0, {.divide_by_max_len = true, .specials_over_all_rows = true})
                  .values == vec({0.5, 0.75}));
  EXPECT_TRUE(reduce(h, sp, PoolingKind::SumSpecial, 0, {.specials_over_all_rows = true}).values == vec({4, 6}));
}

TEST(Reduce, InvalidSpecialsRejected) {
  Rng rng(8);
  const auto h = states(testutil::random_matrix(rng, 3, 2), 6);
  const std::vector<std::size_t> none, beyond = {0, 4}, unsorted = {2, 1}, many = {0, 1, 2};
  EXPECT_THROW(reduce(h, none, PoolingKind::AvgSpecial), std::invalid_argument);
  EXPECT_THROW(reduce(h, beyond, PoolingKind::SumSpecial), std::invalid_argument);
  EXPECT_THROW(reduce(h, unsorted, PoolingKind::AvgSpecial), std::invalid_argument);
  EXPECT_THROW(reduce(h, many, PoolingKind::ConcSpecial, 2), std::invalid_argument);
}

TEST(Names, RoundTrip) {
  for (auto k : kAllPoolingKinds) EXPECT_EQ(parse_pooling(to_string(k)), k);
  EXPECT_THROW(parse_pooling("max"), std::invalid_argument);
}

TEST(BackwardReduce, ClsAndSumAdjoints) {
  const Vector g = vec({0.5, -1});
  const std::vector<std::size_t> sp = {0, 2};
  const Matrix cls = backward_reduce(PoolingKind::Cls, sp, 3, 5, 2, g);
  EXPECT_TRUE(cls.row(0) == g.transpose());
  EXPECT_TRUE(cls.bottomRows(4).isZero(0.0));
  const Matrix sum = backward_reduce(PoolingKind::Sum, sp, 3, 5, 2, g);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_TRUE(sum.row(i) == g.transpose());
  EXPECT_TRUE(sum.bottomRows(2).isZero(0.0));
}

TEST(BackwardReduce, MatchesFiniteDifferencesForAllKinds) {
  Rng rng(31);
  const std::size_t len = 5, n = 7, D = 3, S = 4;
  const std::vector<std::size_t> sp = {0, 1, 3, 4};
  for (auto kind : kAllPoolingKinds) {
    for (PoolingOptions opt : {PoolingOptions{}, PoolingOptions{true, true}}) {
      auto h = states(testutil::random_matrix(rng, len, D), n);
      const Vector u = testutil::random_matrix(rng, static_cast<Eigen::Index>(pooled_dim(kind, D, S)), 1);
      const Matrix g = backward_reduce(kind, sp, len, n, D, u, S, opt);
      double worst = 0.0;
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(len); ++i)
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(D); ++j) {
          const double saved = h.values(i, j);
          h.values(i, j) = saved + 1e-4;
          const double up = u.dot(reduce(h, sp, kind, S, opt).values);
          h.values(i, j) = saved - 1e-4;
          const double down = u.dot(reduce(h, sp, kind, S, opt).values);
          h.values(i, j) = saved;
          const double numeric = (up - down) / 2e-4;
          worst = std::max(worst, std::abs(numeric - g(i, j)) / std::max({std::abs(numeric), std::abs(g(i, j)), 1e-6}));
        }
      EXPECT_LT(worst, 1e-6) << to_string(kind);
      EXPECT_TRUE(g.bottomRows(static_cast<Eigen::Index>(n - len)).isZero(0.0));
    }
  }
}

TEST(SlotCount, SharedAcrossTemplates) {
  ModelConfig mc;
  mc.pooling = PoolingKind::ConcSpecial;
  EXPECT_EQ(mc.slot_count(), 4u);
  EXPECT_EQ(mc.embedding_dim(), 4u * 64u);
  mc.templates.use_entity_type = true;
  EXPECT_EQ(mc.slot_count(), 6u);
}
