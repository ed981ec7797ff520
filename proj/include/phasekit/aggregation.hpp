#pragma once

#include <chrono>
#include <cstddef>
#include <string>
#include <vector>

#include "phasekit/matrix.hpp"
#include "phasekit/transformer.hpp"

namespace phasekit {

/// Which embedding feeds the cross layer's query and key/value window.
/// The model proper is (spatial query, temporal key); the other combinations
/// exist for ablation runs.
enum class EmbeddingSource { spatial, temporal };

inline EmbeddingSource source_from_string(const std::string& s) {
  if (s == "spatial") return EmbeddingSource::spatial;
  if (s == "temporal") return EmbeddingSource::temporal;
  throw ConfigError("unknown embedding source: " + s);
}

inline const char* to_string(EmbeddingSource s) {
  return s == EmbeddingSource::spatial ? "spatial" : "temporal";
}

struct QueryKeyMode {
  EmbeddingSource query = EmbeddingSource::spatial;
  EmbeddingSource key = EmbeddingSource::temporal;
};

/// All learnable tensors of the aggregation head: the spatial reduction W_l
/// (N x spatial_dim), the temporal self-aggregation layer, the cross layer
/// (both at d_model = N), and the window length n. n = 0 means no temporal
/// window: the cross layer sees an empty key set and degenerates to
/// norm + feed-forward over the query alone.
struct AggregationParams {
  Matrix w_l;
  TransformerLayerParams layer1;
  TransformerLayerParams layer2;
  int window_length = 30;

  int n_phases() const { return static_cast<int>(w_l.rows()); }

  void validate() const {
    if (window_length < 0) throw ConfigError("aggregation: window_length must be >= 0");
    layer1.validate();
    layer2.validate();
    if (layer1.d_model != n_phases() || layer2.d_model != n_phases())
      throw ShapeError("aggregation: layer d_model must equal phase count " +
                       std::to_string(n_phases()));
  }
};

inline AggregationParams make_aggregation_params(int n_phases, int window_length,
                                                 int head_count, int d_k, int d_ff,
                                                 int spatial_dim, Rng& rng,
                                                 double ln_eps = 1e-5) {
  AggregationParams p;
  p.w_l = init_params(n_phases, spatial_dim, InitScheme::uniform_scaled, rng);
  p.layer1 = make_transformer_params(n_phases, head_count, d_k, d_ff, rng, ln_eps);
  p.layer2 = make_transformer_params(n_phases, head_count, d_k, d_ff, rng, ln_eps);
  p.window_length = window_length;
  p.validate();
  return p;
}

/// tanh(W_l l_t): reduces one spatial embedding row (1 x spatial_dim) to a
/// 1 x N query with entries in (-1, 1).
inline Matrix reduce_query(const Matrix& l_row, const Matrix& w_l) {
  if (l_row.rows() != 1 || l_row.cols() != w_l.cols())
    throw ShapeError("reduce_query: input " + l_row.shape_str() + " vs W_l " +
                     w_l.shape_str());
  return tanh_map(matmul(l_row, transpose(w_l)));
}

/// Reduces every row of a T x spatial_dim sequence at once.
inline Matrix reduce_query_all(const Matrix& l, const Matrix& w_l) {
  if (l.cols() != w_l.cols())
    throw ShapeError("reduce_query_all: input " + l.shape_str() + " vs W_l " +
                     w_l.shape_str());
  return tanh_map(matmul(l, transpose(w_l)));
}

/// The n most recent rows g_{t-n+1..t} of a T x N sequence, in order, for a
/// zero-based frame index t. Positions before the first frame are zero rows
/// at the front of the window; no future index ever appears.
inline Matrix build_window(const Matrix& g, std::size_t t, int n) {
  if (t >= g.rows())
    throw IndexError("build_window: frame " + std::to_string(t) + " outside sequence of " +
                     std::to_string(g.rows()) + " frames");
  Matrix window(static_cast<std::size_t>(n), g.cols());
  for (int i = 0; i < n; ++i) {
    const long src = static_cast<long>(t) - (n - 1 - i);
    if (src < 0) continue;  // zero padding at the front
    const double* in = g.row_ptr(static_cast<std::size_t>(src));
    double* out = window.row_ptr(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < g.cols(); ++j) out[j] = in[j];
  }
  return window;
}

/// Self-aggregation of the temporal window: every row attends the whole
/// window through the first Transformer layer (batched as an n-query call).
inline Matrix self_aggregate(const Matrix& window, const TransformerLayerParams& layer1) {
  if (window.rows() == 0)
    throw ShapeError("self_aggregate: empty window (the n = 0 path skips this call)");
  return transformer_layer(window, window, layer1).output;
}

/// Cross layer + softmax for an already-reduced query row.
inline Matrix predict_from_query(const Matrix& q_row, const Matrix& window,
                                 const AggregationParams& p) {
  if (static_cast<int>(window.rows()) != p.window_length)
    throw ShapeError("predict: window " + window.shape_str() + " vs window_length " +
                     std::to_string(p.window_length));
  Matrix aggregated;  // 0 x N when the window is empty
  if (window.rows() > 0) {
    aggregated = self_aggregate(window, p.layer1);
  } else {
    aggregated = Matrix(0, q_row.cols());
  }
  const Matrix out = transformer_layer(q_row, aggregated, p.layer2).output;
  return softmax_rows(out);
}

/// Per-frame phase probability from one raw spatial embedding and the frame's
/// temporal window: reduce, self-aggregate, cross-query, softmax. Returns a
/// 1 x N vector that is nonnegative and sums to 1.
inline Matrix predict_frame(const Matrix& l_row, const Matrix& window,
                            const AggregationParams& p) {
  return predict_from_query(reduce_query(l_row, p.w_l), window, p);
}

/// Per-video predictions: probability rows, argmax labels, and per-frame
/// wall-clock latency of the aggregation computation.
struct PredictionTrace {
  Matrix probs;                     // T x N
  std::vector<int> labels;          // T entries
  std::vector<double> latency_ns;   // T entries
};

/// Batch inference over a whole video. Query rows and key windows are drawn
/// per mode; spatial keys are tanh-reduced first so d_model stays N. Strictly
/// causal: p_t depends only on frames 1..t.
inline PredictionTrace predict_video(const Matrix& l, const Matrix& g,
                                     const AggregationParams& p,
                                     QueryKeyMode mode = {}) {
  const bool needs_temporal =
      mode.query == EmbeddingSource::temporal ||
      (mode.key == EmbeddingSource::temporal && p.window_length > 0);
  if (needs_temporal && l.rows() != g.rows())
    throw ShapeError("predict_video: spatial " + l.shape_str() + " vs temporal " +
                     g.shape_str());

  const std::size_t frames = l.rows();
  const Matrix reduced = reduce_query_all(l, p.w_l);
  const Matrix& query_src = mode.query == EmbeddingSource::spatial ? reduced : g;
  const Matrix& key_src = mode.key == EmbeddingSource::temporal ? g : reduced;

  PredictionTrace trace;
  trace.probs = Matrix(frames, p.w_l.rows());
  trace.labels.resize(frames);
  trace.latency_ns.resize(frames);
  const Matrix empty_window(0, p.w_l.rows());
  for (std::size_t t = 0; t < frames; ++t) {
    const auto started = std::chrono::steady_clock::now();
    const Matrix window = p.window_length > 0 ? build_window(key_src, t, p.window_length)
                                              : empty_window;
    const Matrix probs = predict_from_query(row(query_src, t), window, p);
    const auto elapsed = std::chrono::steady_clock::now() - started;
    for (std::size_t j = 0; j < probs.cols(); ++j) trace.probs(t, j) = probs(0, j);
    trace.labels[t] = static_cast<int>(argmax_row(probs, 0));
    trace.latency_ns[t] = static_cast<double>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed).count());
  }
  return trace;
}

/// Exact learnable-scalar count of the aggregation head.
inline long long report_param_count(const AggregationParams& p) {
  return static_cast<long long>(p.w_l.size()) + transformer_param_count(p.layer1) +
         transformer_param_count(p.layer2);
}

template <typename Params, typename Fn>
void for_each_aggregation_param(Params& p, Fn&& fn) {
  fn("agg.w_l", p.w_l);
  for_each_transformer_param(p.layer1, "agg.layer1", fn);
  for_each_transformer_param(p.layer2, "agg.layer2", fn);
}

}  // namespace phasekit
