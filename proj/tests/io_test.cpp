#include "phasekit/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "phasekit/synthetic.hpp"
#include "test_util.hpp"

using namespace phasekit;
using testutil::random_matrix;

namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("phasekit_io_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_F(IoTest, EmbeddingRoundTripIsBitIdentical) {
  Rng rng(601);
  Matrix m = random_matrix(7, 5, rng);
  // Snap to f32 grid so the write is lossless.
  for (std::size_t i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  write_embeddings(path("a.emb"), m);
  const Matrix back = read_embeddings(path("a.emb"));
  EXPECT_TRUE(back == m);
  write_embeddings(path("b.emb"), back);
  EXPECT_EQ(slurp(path("a.emb")), slurp(path("b.emb")));
  const EmbeddingHeader h = read_embedding_header(path("a.emb"));
  EXPECT_EQ(h.dim, 5u);
  EXPECT_EQ(h.frame_count, 7u);
}

TEST_F(IoTest, EmbeddingParserRejectsCorruption) {
  Rng rng(603);
  write_embeddings(path("ok.emb"), random_matrix(3, 4, rng));
  std::string data = slurp(path("ok.emb"));

  std::string bad_magic = data;
  bad_magic[0] = 'X';
  detail::write_file(path("bad_magic.emb"), bad_magic);
  EXPECT_THROW(read_embeddings(path("bad_magic.emb")), IoError);

  detail::write_file(path("truncated.emb"), data.substr(0, data.size() - 5));
  EXPECT_THROW(read_embeddings(path("truncated.emb")), IoError);

  detail::write_file(path("trailing.emb"), data + "zz");
  EXPECT_THROW(read_embeddings(path("trailing.emb")), IoError);
  EXPECT_THROW(read_embeddings(path("missing.emb")), IoError);
}

TEST_F(IoTest, LabelsRoundTripAndValidation) {
  const std::vector<int> labels = {0, 1, 2, 2, 6};
  write_labels(path("y.txt"), labels);
  EXPECT_EQ(read_labels(path("y.txt")), labels);

  std::ofstream bad(path("bad.txt"));
  bad << "1\ntwo\n";
  bad.close();
  EXPECT_THROW(read_labels(path("bad.txt")), DataError);
}

TEST_F(IoTest, ManifestRoundTripAndValidation) {
  Rng rng(607);
  write_embeddings(path("v0.emb"), random_matrix(6, 8, rng));
  write_labels(path("v0.txt"), {0, 1, 1, 2, 2, 2});
  write_manifest(path("manifest.txt"), {{"v0", "v0.emb", "", "v0.txt", 3}});

  const Manifest m = read_manifest(path("manifest.txt"));
  ASSERT_EQ(m.entries.size(), 1u);
  EXPECT_EQ(m.entries[0].id, "v0");
  EXPECT_TRUE(m.entries[0].temporal_path.empty());
  validate_manifest(m);

  const std::vector<VideoData> data = load_dataset(m);
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data[0].frames(), 6u);
  EXPECT_EQ(data[0].labels.size(), 6u);
}

TEST_F(IoTest, ManifestValidationNamesOffendingVideo) {
  Rng rng(609);
  write_embeddings(path("v1.emb"), random_matrix(6, 8, rng));
  write_labels(path("v1.txt"), {0, 1, 1});  // wrong length
  write_manifest(path("manifest.txt"), {{"v1", "v1.emb", "", "v1.txt", 3}});
  try {
    validate_manifest(read_manifest(path("manifest.txt")));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("v1"), std::string::npos) << e.what();
  }

  write_manifest(path("manifest2.txt"), {{"v2", "gone.emb", "", "v1.txt", 3}});
  EXPECT_THROW(validate_manifest(read_manifest(path("manifest2.txt"))), DataError);

  write_manifest(path("manifest3.txt"), {{"v3", "v1.emb", "", "v1.txt", 3}});
  EXPECT_THROW(validate_manifest(read_manifest(path("manifest3.txt")), /*need_temporal=*/false),
               DataError);  // label length still wrong
}

TEST_F(IoTest, CheckpointRoundTripIsBitExact) {
  Rng rng(611);
  RunConfig cfg;
  cfg.n_phases = 3;
  cfg.window = 2;
  cfg.heads = 2;
  cfg.d_k = 2;
  cfg.d_ff = 4;
  cfg.spatial_dim = 16;
  cfg.tcn_layers = 2;
  cfg.tcn_hidden = 3;
  cfg.tcn_kernel = 2;

  Rng init(RngSeed{cfg.seed});
  const AggregationParams agg = cfg.init_aggregation(init);
  const TcnParams tcn = cfg.init_tcn(init);

  Checkpoint ckpt;
  ckpt.config_text = cfg.to_text();
  append_tcn_blocks(ckpt, tcn);
  append_aggregation_blocks(ckpt, agg);
  save_checkpoint(path("model.ckpt"), ckpt);

  const LoadedModel model = load_model(path("model.ckpt"));
  ASSERT_TRUE(model.has_tcn);
  ASSERT_TRUE(model.has_agg);
  EXPECT_EQ(model.config.n_phases, 3);

  // Every block identical to the saved values, bit for bit.
  std::map<std::string, const Matrix*> saved;
  for (const auto& [name, m] : ckpt.blocks) saved[name] = &m;
  for_each_aggregation_param(model.agg, [&](const std::string& name, const Matrix& m) {
    ASSERT_TRUE(saved.count(name)) << name;
    EXPECT_TRUE(m == *saved[name]) << name;
  });
  for_each_tcn_param(model.tcn, [&](const std::string& name, const Matrix& m) {
    ASSERT_TRUE(saved.count(name)) << name;
    EXPECT_TRUE(m == *saved[name]) << name;
  });

  // Re-saving the loaded model reproduces the file bytes.
  Checkpoint again;
  again.config_text = model.config.to_text();
  append_tcn_blocks(again, model.tcn);
  append_aggregation_blocks(again, model.agg);
  save_checkpoint(path("model2.ckpt"), again);
  EXPECT_EQ(slurp(path("model.ckpt")), slurp(path("model2.ckpt")));
}

TEST_F(IoTest, CheckpointRejectsMissingOrMisshapenBlocks) {
  RunConfig cfg;
  cfg.n_phases = 3;
  cfg.window = 2;
  cfg.heads = 2;
  cfg.d_k = 2;
  cfg.d_ff = 4;
  cfg.spatial_dim = 16;
  Rng init(RngSeed{1});
  const AggregationParams agg = cfg.init_aggregation(init);

  Checkpoint ckpt;
  ckpt.config_text = cfg.to_text();
  append_aggregation_blocks(ckpt, agg);
  ckpt.blocks.erase(ckpt.blocks.begin() + 3);
  save_checkpoint(path("missing.ckpt"), ckpt);
  EXPECT_THROW(load_model(path("missing.ckpt")), DataError);

  Checkpoint misshapen;
  misshapen.config_text = cfg.to_text();
  append_aggregation_blocks(misshapen, agg);
  misshapen.blocks[0].second = Matrix(2, 2);
  save_checkpoint(path("misshapen.ckpt"), misshapen);
  EXPECT_THROW(load_model(path("misshapen.ckpt")), DataError);
}

TEST_F(IoTest, TraceRoundTrip) {
  PredictionTrace trace;
  trace.probs = Matrix::from_rows({{0.25, 0.5, 0.25}, {0.125, 0.75, 0.125}});
  trace.labels = {1, 1};
  trace.latency_ns = {1234.0, 2345.0};
  write_trace(path("t.trace"), trace);
  const PredictionTrace back = read_trace(path("t.trace"));
  EXPECT_TRUE(back.probs == trace.probs);
  EXPECT_EQ(back.labels, trace.labels);
  EXPECT_EQ(back.latency_ns, trace.latency_ns);
}

TEST_F(IoTest, RunConfigRoundTripAndErrors) {
  RunConfig cfg;
  cfg.n_phases = 8;
  cfg.window = 12;
  cfg.learning_rate = 5e-4;
  cfg.optimizer = "sgd";
  cfg.tcn_softmax_between_stages = true;
  const RunConfig back = RunConfig::from_text(cfg.to_text());
  EXPECT_EQ(back.to_text(), cfg.to_text());

  EXPECT_THROW(RunConfig::from_text("nonsense_key=3\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_text("epochs=three\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_text("garbage line\n"), ConfigError);
  const RunConfig commented = RunConfig::from_text("# comment\n\nwindow=4 # inline\n");
  EXPECT_EQ(commented.window, 4);
}

TEST_F(IoTest, SyntheticZeroNoiseIsSeparable) {
  SynthSpec spec;
  spec.n_phases = 3;
  spec.videos = 1;
  spec.frames = 24;
  spec.sigma = 0.0;
  spec.spatial_dim = 10;
  spec.train_videos = 1;
  generate_synthetic(spec, (dir_ / "synth0").string());
  const Manifest m = read_manifest((dir_ / "synth0" / "manifest_all.txt").string());
  validate_manifest(m);
  const VideoData video = load_video(m, m.entries[0]);
  // Same phase => identical embedding; different phase => different embedding.
  for (std::size_t t = 1; t < video.frames(); ++t) {
    bool identical = true;
    for (std::size_t k = 0; k < video.spatial.cols(); ++k)
      identical &= video.spatial(t, k) == video.spatial(t - 1, k);
    EXPECT_EQ(identical, video.labels[t] == video.labels[t - 1]);
  }
}

TEST_F(IoTest, SyntheticSameSeedByteIdentical) {
  SynthSpec spec;
  spec.n_phases = 4;
  spec.videos = 2;
  spec.frames = 30;
  spec.spatial_dim = 12;
  spec.seed = 99;
  generate_synthetic(spec, (dir_ / "s1").string());
  generate_synthetic(spec, (dir_ / "s2").string());
  for (const std::string name : {"vid000.spatial.emb", "vid001.spatial.emb",
                                 "vid000.labels.txt", "manifest_all.txt"})
    EXPECT_EQ(slurp((dir_ / "s1" / name).string()), slurp((dir_ / "s2" / name).string()));
}

TEST_F(IoTest, SyntheticPhaseSequencesAreMonotone) {
  SynthSpec spec;
  spec.n_phases = 5;
  spec.videos = 3;
  spec.frames = 60;
  spec.spatial_dim = 8;
  spec.seed = 7;
  generate_synthetic(spec, (dir_ / "mono").string());
  const Manifest m = read_manifest((dir_ / "mono" / "manifest_all.txt").string());
  for (const ManifestEntry& e : m.entries) {
    const std::vector<int> labels = read_labels(resolve_path(m, e.labels_path));
    EXPECT_EQ(static_cast<int>(labels.size()), spec.frames);
    EXPECT_EQ(labels.front(), 0);
    EXPECT_EQ(labels.back(), spec.n_phases - 1);
    for (std::size_t t = 1; t < labels.size(); ++t) {
      EXPECT_GE(labels[t], labels[t - 1]);
      EXPECT_LE(labels[t] - labels[t - 1], 1);
    }
  }
}

TEST_F(IoTest, SyntheticAliasedPhasesShareClusters) {
  SynthSpec spec;
  spec.n_phases = 4;
  spec.videos = 1;
  spec.frames = 32;
  spec.sigma = 0.0;
  spec.spatial_dim = 6;
  spec.alias_a = 1;
  spec.alias_b = 3;
  generate_synthetic(spec, (dir_ / "alias").string());
  const Manifest m = read_manifest((dir_ / "alias" / "manifest_all.txt").string());
  const VideoData video = load_video(m, m.entries[0]);
  Matrix phase1_row, phase3_row;
  for (std::size_t t = 0; t < video.frames(); ++t) {
    if (video.labels[t] == 1) phase1_row = row(video.spatial, t);
    if (video.labels[t] == 3) phase3_row = row(video.spatial, t);
  }
  ASSERT_GT(phase1_row.size(), 0u);
  ASSERT_GT(phase3_row.size(), 0u);
  EXPECT_TRUE(phase1_row == phase3_row);
}

TEST_F(IoTest, SyntheticSpecValidation) {
  SynthSpec bad;
  bad.n_phases = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = SynthSpec{};
  bad.frames = 5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = SynthSpec{};
  bad.alias_a = 2;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = SynthSpec{};
  bad.alias_a = 2;
  bad.alias_b = 2;
  EXPECT_THROW(bad.validate(), ConfigError);
}
