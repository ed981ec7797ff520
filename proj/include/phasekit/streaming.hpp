#pragma once

#include <algorithm>
#include <chrono>
#include <utility>
#include <vector>

#include "phasekit/aggregation.hpp"
#include "phasekit/matrix.hpp"
#include "phasekit/tcn.hpp"

namespace phasekit {

/// Online per-frame inference. Ingests spatial embeddings one frame at a
/// time, keeps per-layer TCN activation history bounded by each layer's
/// dilated kernel span, maintains the n-length window ring, and emits p_t.
/// Outputs are bit-identical to the batch path over the same prefix: both
/// evaluate the same kernels with the same summation orders.
class StreamSession {
 public:
  StreamSession(TcnParams tcn, TcnConfig config, AggregationParams agg,
                QueryKeyMode mode = {})
      : tcn_(std::move(tcn)),
        config_(std::move(config)),
        agg_(std::move(agg)),
        mode_(mode) {
    config_.validate();
    agg_.validate();
    reduce_w_t_ = transpose(tcn_.reduce_w);
    w_l_t_ = transpose(agg_.w_l);
    for (int s = 0; s < config_.stages; ++s) {
      const TcnStageParams& sp = tcn_.stages[static_cast<std::size_t>(s)];
      StageState state;
      state.in_w_t = transpose(sp.in_w);
      state.out_w_t = transpose(sp.out_w);
      int dilation = 1;
      for (const TcnLayerParams& lp : sp.layers) {
        LayerState layer;
        layer.mix_w_t = transpose(lp.mix_w);
        layer.dilation = dilation;
        layer.span = (config_.kernel_size - 1) * dilation + 1;
        layer.history.assign(static_cast<std::size_t>(layer.span) *
                                 static_cast<std::size_t>(config_.hidden_channels),
                             0.0);
        dilation *= 2;
        state.layers.push_back(std::move(layer));
      }
      stages_.push_back(std::move(state));
    }
    if (agg_.window_length > 0)
      window_ring_.assign(static_cast<std::size_t>(agg_.window_length) *
                              static_cast<std::size_t>(agg_.n_phases()),
                          0.0);
  }

  /// Processes one spatial embedding row; returns (1 x N probabilities,
  /// wall-clock latency in nanoseconds).
  std::pair<Matrix, double> push_frame(const Matrix& l_row) {
    if (closed_) throw SessionError("push_frame after close");
    if (l_row.rows() != 1 || l_row.cols() != tcn_.reduce_w.cols())
      throw ShapeError("push_frame: input " + l_row.shape_str() + " vs expected 1x" +
                       std::to_string(tcn_.reduce_w.cols()));
    const auto started = std::chrono::steady_clock::now();

    Matrix stage_input = add_rowvec(matmul(l_row, reduce_w_t_), tcn_.reduce_b);
    Matrix g_row;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      StageState& state = stages_[s];
      const TcnStageParams& sp = tcn_.stages[s];
      Matrix x = add_rowvec(matmul(stage_input, state.in_w_t), sp.in_b);
      for (std::size_t l = 0; l < state.layers.size(); ++l) {
        LayerState& layer = state.layers[l];
        const TcnLayerParams& lp = sp.layers[l];
        layer.store(frame_, x);
        Matrix conv(1, x.cols());
        causal_conv_row(lp.conv_w, lp.conv_b, config_.kernel_size, layer.dilation, frame_,
                        [&layer](long tt, std::size_t ci) { return layer.at(tt, ci); },
                        conv.row_ptr(0));
        const Matrix activated = relu(conv);
        const Matrix mixed = add_rowvec(matmul(activated, layer.mix_w_t), lp.mix_b);
        x = add(x, mixed);
      }
      Matrix logits = add_rowvec(matmul(x, state.out_w_t), sp.out_b);
      g_row = logits;
      stage_input = config_.softmax_between_stages ? softmax_rows(logits) : std::move(logits);
    }

    const Matrix query = mode_.query == EmbeddingSource::spatial
                             ? tanh_map(matmul(l_row, w_l_t_))
                             : g_row;
    if (agg_.window_length > 0) {
      const Matrix key_row = mode_.key == EmbeddingSource::temporal
                                 ? g_row
                                 : tanh_map(matmul(l_row, w_l_t_));
      const std::size_t n = static_cast<std::size_t>(agg_.window_length);
      const std::size_t cols = static_cast<std::size_t>(agg_.n_phases());
      const std::size_t slot = static_cast<std::size_t>(frame_) % n;
      for (std::size_t j = 0; j < cols; ++j) window_ring_[slot * cols + j] = key_row(0, j);
    }
    const Matrix window = assemble_window();
    const Matrix probs = predict_from_query(query, window, agg_);

    ++frame_;
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const double ns = static_cast<double>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed).count());
    return {probs, ns};
  }

  void close() { closed_ = true; }
  bool closed() const { return closed_; }
  long frames_seen() const { return frame_; }

  /// Bytes held in per-layer activation history and the window ring; fixed at
  /// construction, independent of stream length.
  std::size_t state_bytes() const {
    std::size_t doubles = window_ring_.size();
    for (const StageState& s : stages_)
      for (const LayerState& l : s.layers) doubles += l.history.size();
    return doubles * sizeof(double);
  }

 private:
  struct LayerState {
    Matrix mix_w_t;
    int dilation = 1;
    int span = 1;
    std::vector<double> history;  // span x hidden ring of layer inputs

    void store(long frame, const Matrix& x_row) {
      const std::size_t cols = x_row.cols();
      const std::size_t slot = static_cast<std::size_t>(frame % span);
      for (std::size_t j = 0; j < cols; ++j) history[slot * cols + j] = x_row(0, j);
    }

    double at(long frame, std::size_t ci) const {
      const std::size_t cols = history.size() / static_cast<std::size_t>(span);
      const std::size_t slot = static_cast<std::size_t>(frame % span);
      return history[slot * cols + ci];
    }
  };

  struct StageState {
    Matrix in_w_t, out_w_t;
    std::vector<LayerState> layers;
  };

  Matrix assemble_window() const {
    const int n = agg_.window_length;
    const std::size_t cols = static_cast<std::size_t>(agg_.n_phases());
    Matrix window(static_cast<std::size_t>(n), cols);
    for (int i = 0; i < n; ++i) {
      const long src = frame_ - (n - 1 - i);
      if (src < 0) continue;  // zero padding at the front
      const std::size_t slot = static_cast<std::size_t>(src) % static_cast<std::size_t>(n);
      for (std::size_t j = 0; j < cols; ++j)
        window(static_cast<std::size_t>(i), j) = window_ring_[slot * cols + j];
    }
    return window;
  }

  TcnParams tcn_;
  TcnConfig config_;
  AggregationParams agg_;
  QueryKeyMode mode_;
  Matrix reduce_w_t_;
  Matrix w_l_t_;
  std::vector<StageState> stages_;
  std::vector<double> window_ring_;
  long frame_ = 0;
  bool closed_ = false;
};

// ---------------------------------------------------------------------------
// Throughput benchmark
// ---------------------------------------------------------------------------

struct LatencyStats {
  std::size_t frames = 0;
  std::size_t warmup = 0;
  double fps = 0.0;      // measured frames / wall-clock seconds of the loop
  double p50_ns = 0.0;
  double p95_ns = 0.0;
  double p99_ns = 0.0;
  double max_ns = 0.0;
  std::vector<double> per_frame_ns;
};

inline double percentile_nearest_rank(std::vector<double> sorted_values, double q) {
  if (sorted_values.empty()) return 0.0;
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(q / 100.0 * static_cast<double>(sorted_values.size())));
  return sorted_values[std::min(sorted_values.size() - 1, std::max<std::size_t>(rank, 1) - 1)];
}

/// Streams pre-generated synthetic frames through one session and reports
/// sustained fps plus latency percentiles for the temporal + aggregation
/// per-frame path (spatial feature extraction is out of the measured path by
/// construction: inputs are already embeddings).
inline LatencyStats benchmark_stream(const TcnParams& tcn, const TcnConfig& config,
                                     const AggregationParams& agg, std::size_t frames,
                                     std::size_t warmup = 100, RngSeed seed = RngSeed{1},
                                     QueryKeyMode mode = {}) {
  if (frames == 0) throw ConfigError("benchmark: frames must be >= 1");
  Rng rng(seed);
  const std::size_t total = frames + warmup;
  Matrix inputs(total, static_cast<std::size_t>(config.spatial_dim));
  for (std::size_t i = 0; i < inputs.size(); ++i) inputs.data()[i] = rng.uniform(-1.0, 1.0);

  StreamSession session(tcn, config, agg, mode);
  LatencyStats stats;
  stats.frames = frames;
  stats.warmup = warmup;
  stats.per_frame_ns.reserve(frames);

  for (std::size_t t = 0; t < warmup; ++t) session.push_frame(row(inputs, t));

  const auto loop_start = std::chrono::steady_clock::now();
  for (std::size_t t = warmup; t < total; ++t)
    stats.per_frame_ns.push_back(session.push_frame(row(inputs, t)).second);
  const auto loop_elapsed = std::chrono::steady_clock::now() - loop_start;

  const double seconds =
      std::chrono::duration_cast<std::chrono::duration<double>>(loop_elapsed).count();
  stats.fps = static_cast<double>(frames) / seconds;
  std::vector<double> sorted = stats.per_frame_ns;
  std::sort(sorted.begin(), sorted.end());
  stats.p50_ns = percentile_nearest_rank(sorted, 50.0);
  stats.p95_ns = percentile_nearest_rank(sorted, 95.0);
  stats.p99_ns = percentile_nearest_rank(sorted, 99.0);
  stats.max_ns = sorted.back();
  return stats;
}

}  // namespace phasekit
