#include "phasekit/training.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "test_util.hpp"

using namespace phasekit;
using testutil::max_abs_diff;
using testutil::random_matrix;

namespace {

VideoData random_video(int frames, int spatial_dim, int n_phases, Rng& rng) {
  VideoData v;
  v.id = "toy";
  v.spatial = random_matrix(frames, spatial_dim, rng);
  v.temporal = random_matrix(frames, n_phases, rng);
  for (int t = 0; t < frames; ++t)
    v.labels.push_back(static_cast<int>(rng.uniform_int(0, n_phases - 1)));
  return v;
}

AggregationParams small_params(Rng& rng, int n_phases = 3, int window = 3,
                               int spatial_dim = 24) {
  return make_aggregation_params(n_phases, window, 2, 3, 4, spatial_dim, rng);
}

GradcheckConfig fast_gradcheck_config() {
  GradcheckConfig cfg;
  cfg.spatial_dim = 48;  // keep the unit test quick; the CLI uses the full width
  return cfg;
}

}  // namespace

TEST(CrossEntropy, PerfectOneHotIsNearZero) {
  Matrix probs(4, 3);
  const std::vector<int> labels = {0, 2, 1, 1};
  for (std::size_t t = 0; t < 4; ++t) probs(t, static_cast<std::size_t>(labels[t])) = 1.0;
  EXPECT_NEAR(cross_entropy(probs, labels), 0.0, 1e-12);
}

TEST(CrossEntropy, UniformPredictionsClosedForm) {
  const int frames = 7, classes = 5;
  Matrix probs(frames, classes, 1.0 / classes);
  std::vector<int> labels(frames, 2);
  EXPECT_NEAR(cross_entropy(probs, labels), frames * std::log(static_cast<double>(classes)),
              1e-12);
}

TEST(CrossEntropy, MatchesDirectSummation) {
  Rng rng(401);
  Matrix probs = random_matrix(5, 4, rng, 0.05, 1.0);
  for (std::size_t t = 0; t < probs.rows(); ++t) {
    double sum = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) sum += probs(t, j);
    for (std::size_t j = 0; j < probs.cols(); ++j) probs(t, j) /= sum;
  }
  std::vector<int> labels;
  for (int t = 0; t < 5; ++t) labels.push_back(static_cast<int>(rng.uniform_int(0, 3)));
  double expected = 0.0;
  for (std::size_t t = 0; t < 5; ++t)
    expected -= std::log(probs(t, static_cast<std::size_t>(labels[t])));
  EXPECT_NEAR(cross_entropy(probs, labels), expected, 1e-12);
}

TEST(CrossEntropy, LabelOutOfRangeRejected) {
  Matrix probs(2, 3, 1.0 / 3.0);
  EXPECT_THROW(cross_entropy(probs, {0, 3}), DataError);
  EXPECT_THROW(cross_entropy(probs, {-1, 0}), DataError);
  EXPECT_THROW(cross_entropy(probs, {0}), DataError);
}

TEST(Tape, ForwardMatchesValuePathBitExactly) {
  Rng rng(403);
  const AggregationParams p = small_params(rng);
  const VideoData video = random_video(6, 24, 3, rng);
  for (EmbeddingSource q : {EmbeddingSource::spatial, EmbeddingSource::temporal})
    for (EmbeddingSource k : {EmbeddingSource::spatial, EmbeddingSource::temporal}) {
      const QueryKeyMode mode{q, k};
      EXPECT_EQ(aggregation_backward(video, p, mode).loss, aggregation_loss(video, p, mode));
    }
}

TEST(Tape, TcnForwardMatchesValuePathBitExactly) {
  Rng rng(407);
  TcnConfig c;
  c.stages = 2;
  c.layers_per_stage = 2;
  c.kernel_size = 2;
  c.hidden_channels = 3;
  c.reduced_dim = 3;
  c.out_dim = 3;
  c.spatial_dim = 16;
  const TcnParams p = make_tcn_params(c, rng);
  const VideoData video = random_video(7, 16, 3, rng);
  EXPECT_EQ(tcn_backward(video, p, c).loss, tcn_loss(video, p, c));
  EXPECT_EQ(tcn_backward(video, p, c, false).loss, tcn_loss(video, p, c, false));
}

TEST(Tape, GradientNamesMatchCanonicalEnumeration) {
  Rng rng(409);
  AggregationParams p = small_params(rng);
  const VideoData video = random_video(4, 24, 3, rng);
  const GradMap grads = aggregation_backward(video, p).grads;
  std::set<std::string> expected;
  for_each_aggregation_param(p, [&](const std::string& name, Matrix&) {
    expected.insert(name);
  });
  std::set<std::string> got;
  for (const auto& [name, g] : grads) got.insert(name);
  EXPECT_EQ(got, expected);
}

TEST(Tape, StationaryPointHasZeroGradient) {
  Tape t;
  const Var theta = t.leaf(Matrix(1, 1, 0.0));
  const Var activated = t.tanh_op(theta);
  const Var loss = t.sum_all(t.hadamard(activated, activated));
  t.backward(loss);
  EXPECT_EQ(t.grad(theta)(0, 0), 0.0);
}

TEST(Gradients, SpatialReductionEntriesMatchCentralDifferences) {
  Rng rng(411);
  AggregationParams p = small_params(rng);
  const VideoData video = random_video(4, 24, 3, rng);
  const GradMap grads = aggregation_backward(video, p).grads;
  const Matrix& analytic = grads.at("agg.w_l");
  const double step = 1e-5;
  for (const auto [r, c] : {std::pair<int, int>{0, 0}, {1, 5}, {2, 23}}) {
    const double original = p.w_l(r, c);
    p.w_l(r, c) = original + step;
    const double plus = aggregation_loss(video, p);
    p.w_l(r, c) = original - step;
    const double minus = aggregation_loss(video, p);
    p.w_l(r, c) = original;
    const double numeric = (plus - minus) / (2.0 * step);
    const double rel = std::abs(analytic(r, c) - numeric) /
                       std::max({std::abs(analytic(r, c)), std::abs(numeric), 1e-8});
    EXPECT_LE(rel, 1e-4);
  }
}

TEST(Gradients, LossDecreasesAlongNegativeGradient) {
  Rng rng(413);
  AggregationParams p = small_params(rng);
  const VideoData video = random_video(5, 24, 3, rng);
  const double before = aggregation_loss(video, p);
  const BackwardResult back = aggregation_backward(video, p);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.learning_rate = 1e-4;
  OptimizerState state;
  apply_gradients(list_aggregation_params(p), back.grads, state, cfg);
  EXPECT_LT(aggregation_loss(video, p), before);
}

TEST(VerifyGradients, ToyConfigPasses) {
  const GradientReport report = verify_gradients(fast_gradcheck_config());
  EXPECT_TRUE(report.pass) << "worst block " << report.worst_block << " rel err "
                           << report.max_rel_err;
  EXPECT_LE(report.max_rel_err, 1e-4);
  EXPECT_FALSE(report.blocks.empty());
}

TEST(VerifyGradients, CorruptedGradientFailsAndNamesBlock) {
  Rng rng(417);
  AggregationParams p = small_params(rng);
  const VideoData video = random_video(4, 24, 3, rng);
  GradMap grads = aggregation_backward(video, p).grads;
  Matrix& target = grads.at("agg.layer1.h0.w_q");
  for (std::size_t k = 0; k < target.size(); ++k) target.data()[k] += 0.5;
  const GradientReport report = compare_gradients_fd(
      [&] { return aggregation_loss(video, p); }, list_aggregation_params(p), grads);
  EXPECT_FALSE(report.pass);
  EXPECT_EQ(report.worst_block, "agg.layer1.h0.w_q");
}

TEST(VerifyGradients, DeterministicPerSeed) {
  GradcheckConfig cfg = fast_gradcheck_config();
  cfg.include_tcn = false;
  const GradientReport a = verify_gradients(cfg);
  const GradientReport b = verify_gradients(cfg);
  ASSERT_EQ(a.blocks.size(), b.blocks.size());
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    EXPECT_EQ(a.blocks[i].name, b.blocks[i].name);
    EXPECT_EQ(a.blocks[i].max_rel_err, b.blocks[i].max_rel_err);
  }
}

TEST(Optimizer, AdamZeroGradientLeavesParamsUnchanged) {
  Rng rng(419);
  AggregationParams p = small_params(rng);
  AggregationParams before = p;
  GradMap zero_grads;
  for_each_aggregation_param(p, [&](const std::string& name, Matrix& m) {
    zero_grads.emplace(name, Matrix(m.rows(), m.cols()));
  });
  TrainConfig cfg;
  OptimizerState state;
  apply_gradients(list_aggregation_params(p), zero_grads, state, cfg);
  ParamList before_list = list_aggregation_params(before);
  ParamList after_list = list_aggregation_params(p);
  for (std::size_t i = 0; i < before_list.size(); ++i)
    EXPECT_TRUE(*before_list[i].second == *after_list[i].second)
        << before_list[i].first;
}

TEST(Train, ZeroLearningRateFreezesParameters) {
  Rng rng(421);
  AggregationParams p = small_params(rng);
  const AggregationParams before = p;
  std::vector<VideoData> dataset = {random_video(6, 24, 3, rng)};
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  const TrainResult result = train_aggregation(dataset, p, {}, cfg);
  EXPECT_EQ(result.loss_curve.size(), 3u);
  EXPECT_EQ(result.loss_curve[0], result.loss_curve[1]);
  EXPECT_EQ(result.loss_curve[1], result.loss_curve[2]);
  ParamList before_list = list_aggregation_params(const_cast<AggregationParams&>(before));
  ParamList after_list = list_aggregation_params(p);
  for (std::size_t i = 0; i < before_list.size(); ++i)
    EXPECT_TRUE(*before_list[i].second == *after_list[i].second);
}

TEST(Train, SameSeedSameLossCurve) {
  Rng rng(423);
  const AggregationParams initial = small_params(rng);
  std::vector<VideoData> dataset = {random_video(6, 24, 3, rng), random_video(5, 24, 3, rng)};
  TrainConfig cfg;
  cfg.epochs = 4;
  AggregationParams a = initial;
  AggregationParams b = initial;
  const TrainResult ra = train_aggregation(dataset, a, {}, cfg);
  const TrainResult rb = train_aggregation(dataset, b, {}, cfg);
  ASSERT_EQ(ra.loss_curve.size(), rb.loss_curve.size());
  for (std::size_t i = 0; i < ra.loss_curve.size(); ++i)
    EXPECT_EQ(ra.loss_curve[i], rb.loss_curve[i]);
}

TEST(Train, EmptyDatasetRejected) {
  Rng rng(427);
  AggregationParams p = small_params(rng);
  std::vector<VideoData> empty;
  EXPECT_THROW(train_aggregation(empty, p, {}, TrainConfig{}), DataError);
}

TEST(Train, LossDecreasesOnToyDataset) {
  Rng rng(429);
  AggregationParams p = small_params(rng);
  std::vector<VideoData> dataset = {random_video(10, 24, 3, rng)};
  TrainConfig cfg;
  cfg.epochs = 15;
  const TrainResult result = train_aggregation(dataset, p, {}, cfg);
  EXPECT_LT(result.loss_curve.back(), result.loss_curve.front());
}

TEST(Train, RelabelingPermutationKeepsTcnLossTrajectory) {
  Rng rng(431);
  TcnConfig c;
  c.stages = 2;
  c.layers_per_stage = 2;
  c.kernel_size = 2;
  c.hidden_channels = 3;
  c.reduced_dim = 3;
  c.out_dim = 3;
  c.spatial_dim = 16;
  const TcnParams base = make_tcn_params(c, rng);

  std::vector<VideoData> dataset = {random_video(8, 16, 3, rng), random_video(7, 16, 3, rng)};

  // Permutation pi of class indices: logits coordinate j moves to pi[j].
  const std::size_t pi[3] = {1, 2, 0};
  TcnParams permuted = base;
  for (std::size_t s = 0; s < permuted.stages.size(); ++s) {
    TcnStageParams& sp = permuted.stages[s];
    const TcnStageParams& orig = base.stages[s];
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < sp.out_w.cols(); ++k) sp.out_w(pi[j], k) = orig.out_w(j, k);
      sp.out_b(0, pi[j]) = orig.out_b(0, j);
    }
    if (s > 0)
      for (std::size_t h = 0; h < sp.in_w.rows(); ++h)
        for (std::size_t j = 0; j < 3; ++j) sp.in_w(h, pi[j]) = orig.in_w(h, j);
  }
  std::vector<VideoData> relabeled = dataset;
  for (VideoData& v : relabeled)
    for (int& y : v.labels) y = static_cast<int>(pi[static_cast<std::size_t>(y)]);

  TrainConfig cfg;
  cfg.epochs = 3;
  TcnParams a = base;
  TcnParams b = permuted;
  const TrainResult ra = train_tcn(dataset, a, c, cfg);
  const TrainResult rb = train_tcn(relabeled, b, c, cfg);
  ASSERT_EQ(ra.loss_curve.size(), rb.loss_curve.size());
  for (std::size_t i = 0; i < ra.loss_curve.size(); ++i)
    EXPECT_NEAR(ra.loss_curve[i], rb.loss_curve[i],
                1e-7 * std::max(1.0, std::abs(ra.loss_curve[i])));
}

TEST(Train, TcnLearnsSeparableToyLabels) {
  Rng rng(433);
  TcnConfig c;
  c.stages = 2;
  c.layers_per_stage = 3;
  c.kernel_size = 2;
  c.hidden_channels = 4;
  c.reduced_dim = 4;
  c.out_dim = 2;
  c.spatial_dim = 12;
  TcnParams p = make_tcn_params(c, rng);

  // Two spatially distinct halves of each video.
  std::vector<VideoData> dataset;
  for (int v = 0; v < 2; ++v) {
    VideoData video;
    video.id = "sep" + std::to_string(v);
    video.spatial = Matrix(20, 12);
    for (int t = 0; t < 20; ++t) {
      const int phase = t < 10 ? 0 : 1;
      video.labels.push_back(phase);
      for (int k = 0; k < 12; ++k)
        video.spatial(t, k) = (phase == 0 ? 1.0 : -1.0) + 0.1 * rng.normal();
    }
    dataset.push_back(std::move(video));
  }

  TrainConfig cfg;
  cfg.epochs = 40;
  train_tcn(dataset, p, c, cfg);

  int correct = 0, total = 0;
  for (const VideoData& video : dataset) {
    const Matrix g = extract_temporal(video.spatial, p, c);
    for (std::size_t t = 0; t < g.rows(); ++t) {
      correct += static_cast<int>(argmax_row(g, t)) == video.labels[t] ? 1 : 0;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(correct) / total, 0.9);
}
