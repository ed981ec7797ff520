#include "phasekit/transformer.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace phasekit;
using testutil::max_abs_diff;
using testutil::random_matrix;

namespace {

HeadParams random_head(int d_k, int d_model, Rng& rng) {
  HeadParams h;
  h.w_q = random_matrix(d_k, d_model, rng);
  h.w_k = random_matrix(d_k, d_model, rng);
  h.w_v = random_matrix(d_k, d_model, rng);
  return h;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(perm[r], c);
  return out;
}

}  // namespace

TEST(AttendHead, SingleKeyReturnsMappedValueExactly) {
  Rng rng(101);
  const HeadParams head = random_head(3, 5, rng);
  const Matrix q = random_matrix(2, 5, rng);
  const Matrix s = random_matrix(1, 5, rng);
  const Matrix out = attend_head(q, s, head);
  const Matrix mapped = matmul(s, transpose(head.w_v));
  ASSERT_EQ(out.rows(), 2u);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) EXPECT_EQ(out(r, c), mapped(0, c));
}

TEST(AttendHead, ZeroQueryProjectionGivesUniformAttention) {
  Rng rng(103);
  HeadParams head = random_head(3, 4, rng);
  head.w_q = Matrix(3, 4, 0.0);
  const Matrix q = random_matrix(1, 4, rng);
  const Matrix s = random_matrix(5, 4, rng);
  const Matrix out = attend_head(q, s, head);
  const Matrix mapped = matmul(s, transpose(head.w_v));
  for (std::size_t c = 0; c < out.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < mapped.rows(); ++r) mean += mapped(r, c);
    mean /= static_cast<double>(mapped.rows());
    EXPECT_NEAR(out(0, c), mean, 1e-12);
  }
}

TEST(AttendHead, MatchesScalarLoopOracle) {
  Rng rng(107);
  const HeadParams head = random_head(2, 4, rng);
  const Matrix q = random_matrix(2, 4, rng);
  const Matrix s = random_matrix(3, 4, rng);
  const Matrix expected = oracle::to_matrix(oracle::attend_head(
      oracle::to_grid(q), oracle::to_grid(s), oracle::to_grid(head.w_q),
      oracle::to_grid(head.w_k), oracle::to_grid(head.w_v)));
  EXPECT_LT(max_abs_diff(attend_head(q, s, head), expected), 1e-10);
}

TEST(AttendHead, WeightsRowsSumToOne) {
  Rng rng(109);
  const HeadParams head = random_head(4, 6, rng);
  const Matrix q = random_matrix(3, 6, rng, -2.0, 2.0);
  const Matrix s = random_matrix(7, 6, rng, -2.0, 2.0);
  Matrix weights;
  attend_head(q, s, head, &weights);
  ASSERT_EQ(weights.rows(), 3u);
  ASSERT_EQ(weights.cols(), 7u);
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < weights.cols(); ++c) {
      EXPECT_GE(weights(r, c), 0.0);
      EXPECT_LE(weights(r, c), 1.0);
      sum += weights(r, c);
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(AttendHead, ShapeMismatchThrows) {
  Rng rng(111);
  const HeadParams head = random_head(2, 4, rng);
  EXPECT_THROW(attend_head(Matrix(1, 3), Matrix(2, 4), head), ShapeError);
  EXPECT_THROW(attend_head(Matrix(1, 4), Matrix(2, 5), head), ShapeError);
}

TEST(TransformerLayer, KeyPermutationInvariance) {
  Rng rng(113);
  const TransformerLayerParams p = make_transformer_params(5, 3, 2, 8, rng);
  const Matrix q = random_matrix(2, 5, rng);
  const Matrix s = random_matrix(6, 5, rng);
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0u);
  std::swap(perm[0], perm[4]);
  std::swap(perm[2], perm[5]);
  const Matrix base = transformer_layer(q, s, p).output;
  const Matrix permuted = transformer_layer(q, permute_rows(s, perm), p).output;
  EXPECT_LT(max_abs_diff(base, permuted), 1e-12);
}

TEST(TransformerLayer, PaperShapeSingleQueryThirtyKeys) {
  Rng rng(127);
  const TransformerLayerParams p = make_transformer_params(7, 8, 8, 32, rng);
  const Matrix q = random_matrix(1, 7, rng);
  const Matrix s = random_matrix(30, 7, rng);
  const AttentionTrace trace = transformer_layer(q, s, p);
  EXPECT_EQ(trace.output.rows(), 1u);
  EXPECT_EQ(trace.output.cols(), 7u);
  ASSERT_EQ(trace.head_weights.size(), 8u);
  for (const Matrix& w : trace.head_weights) {
    EXPECT_EQ(w.rows(), 1u);
    EXPECT_EQ(w.cols(), 30u);
  }
}

TEST(TransformerLayer, MatchesStraightLineOracle) {
  Rng rng(131);
  const TransformerLayerParams p = make_transformer_params(3, 2, 2, 5, rng);
  const Matrix q = random_matrix(2, 3, rng);
  const Matrix s = random_matrix(4, 3, rng);
  const Matrix expected =
      oracle::to_matrix(oracle::transformer_layer(oracle::to_grid(q), oracle::to_grid(s), p));
  EXPECT_LT(max_abs_diff(transformer_layer(q, s, p).output, expected), 1e-10);
}

TEST(TransformerLayer, AttentionRowsAreDistributions) {
  Rng rng(137);
  const TransformerLayerParams p = make_transformer_params(4, 3, 3, 6, rng);
  const Matrix q = random_matrix(3, 4, rng, -3.0, 3.0);
  const Matrix s = random_matrix(5, 4, rng, -3.0, 3.0);
  const AttentionTrace trace = transformer_layer(q, s, p);
  for (const Matrix& head : trace.head_weights)
    for (std::size_t r = 0; r < head.rows(); ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < head.cols(); ++c) {
        EXPECT_GE(head(r, c), 0.0);
        EXPECT_LE(head(r, c), 1.0);
        sum += head(r, c);
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(TransformerLayer, EmptySequenceSkipsAttention) {
  Rng rng(139);
  const TransformerLayerParams p = make_transformer_params(4, 2, 2, 6, rng);
  const Matrix q = random_matrix(1, 4, rng);
  const AttentionTrace trace = transformer_layer(q, Matrix(0, 4), p);
  EXPECT_TRUE(trace.head_weights.empty());
  // Reference: norm + feed-forward applied to the query alone.
  const Matrix out1 = layer_norm(q, p.ln1_gain, p.ln1_bias, p.ln_eps);
  const Matrix hidden = relu(add_rowvec(matmul(out1, transpose(p.ff_w1)), p.ff_b1));
  const Matrix ff = add_rowvec(matmul(hidden, transpose(p.ff_w2)), p.ff_b2);
  const Matrix expected = layer_norm(add(out1, ff), p.ln2_gain, p.ln2_bias, p.ln_eps);
  EXPECT_EQ(max_abs_diff(trace.output, expected), 0.0);
}

TEST(TransformerLayer, QueryShapeMismatchThrows) {
  Rng rng(149);
  const TransformerLayerParams p = make_transformer_params(4, 2, 2, 6, rng);
  EXPECT_THROW(transformer_layer(Matrix(1, 5), Matrix(3, 4), p), ShapeError);
  EXPECT_THROW(transformer_layer(Matrix(1, 4), Matrix(3, 5), p), ShapeError);
}
