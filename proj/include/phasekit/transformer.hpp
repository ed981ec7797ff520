#pragma once

#include <cmath>
#include <vector>

#include "phasekit/matrix.hpp"

namespace phasekit {

/// One attention head: query/key/value projections, each d_k x d_model.
struct HeadParams {
  Matrix w_q;
  Matrix w_k;
  Matrix w_v;
};

/// Parameters of one Transformer layer: multi-head attention with output
/// projection, residual + layer norm, then a two-layer feed-forward block with
/// its own residual + layer norm (post-norm placement).
struct TransformerLayerParams {
  std::vector<HeadParams> heads;  // h entries
  Matrix w_o;                     // d_model x (h * d_k)
  Matrix ff_w1;                   // d_ff x d_model
  Matrix ff_b1;                   // 1 x d_ff
  Matrix ff_w2;                   // d_model x d_ff
  Matrix ff_b2;                   // 1 x d_model
  Matrix ln1_gain, ln1_bias;      // 1 x d_model
  Matrix ln2_gain, ln2_bias;      // 1 x d_model
  int head_count = 0;
  int d_model = 0;
  int d_k = 0;
  int d_ff = 0;
  double ln_eps = 1e-5;

  void validate() const {
    if (head_count < 1 || d_k < 1 || d_model < 1 || d_ff < 1)
      throw ConfigError("transformer layer: head_count, d_k, d_model, d_ff must be >= 1");
    if (static_cast<int>(heads.size()) != head_count)
      throw ShapeError("transformer layer: expected " + std::to_string(head_count) +
                       " heads, have " + std::to_string(heads.size()));
    for (const auto& h : heads) {
      if (h.w_q.rows() != static_cast<std::size_t>(d_k) ||
          h.w_q.cols() != static_cast<std::size_t>(d_model) ||
          !h.w_q.same_shape(h.w_k) || !h.w_q.same_shape(h.w_v))
        throw ShapeError("transformer layer: head projection shapes inconsistent (" +
                         h.w_q.shape_str() + ")");
    }
    if (w_o.rows() != static_cast<std::size_t>(d_model) ||
        w_o.cols() != static_cast<std::size_t>(head_count * d_k))
      throw ShapeError("transformer layer: w_o is " + w_o.shape_str() + ", expected " +
                       std::to_string(d_model) + "x" + std::to_string(head_count * d_k));
  }
};

inline TransformerLayerParams make_transformer_params(int d_model, int head_count,
                                                      int d_k, int d_ff, Rng& rng,
                                                      double ln_eps = 1e-5) {
  TransformerLayerParams p;
  p.head_count = head_count;
  p.d_model = d_model;
  p.d_k = d_k;
  p.d_ff = d_ff;
  p.ln_eps = ln_eps;
  for (int h = 0; h < head_count; ++h) {
    HeadParams hp;
    hp.w_q = init_params(d_k, d_model, InitScheme::uniform_scaled, rng);
    hp.w_k = init_params(d_k, d_model, InitScheme::uniform_scaled, rng);
    hp.w_v = init_params(d_k, d_model, InitScheme::uniform_scaled, rng);
    p.heads.push_back(std::move(hp));
  }
  p.w_o = init_params(d_model, head_count * d_k, InitScheme::uniform_scaled, rng);
  p.ff_w1 = init_params(d_ff, d_model, InitScheme::uniform_scaled, rng);
  p.ff_b1 = init_params(1, d_ff, InitScheme::zeros, rng);
  p.ff_w2 = init_params(d_model, d_ff, InitScheme::uniform_scaled, rng);
  p.ff_b2 = init_params(1, d_model, InitScheme::zeros, rng);
  p.ln1_gain = init_params(1, d_model, InitScheme::ones, rng);
  p.ln1_bias = init_params(1, d_model, InitScheme::zeros, rng);
  p.ln2_gain = init_params(1, d_model, InitScheme::ones, rng);
  p.ln2_bias = init_params(1, d_model, InitScheme::zeros, rng);
  p.validate();
  return p;
}

/// Scaled dot-product attention of one head. q is m x d_model (m query
/// vectors), s is n x d_model (key/value sequence). Queries and keys are
/// mapped to d_k dimensions, scores form an m x n matrix, softmax runs over
/// keys, and the result is m x d_k. Optionally exposes the attention weights.
inline Matrix attend_head(const Matrix& q, const Matrix& s, const HeadParams& head,
                          Matrix* weights_out = nullptr) {
  if (q.cols() != head.w_q.cols())
    throw ShapeError("attend_head: query " + q.shape_str() + " vs projection " +
                     head.w_q.shape_str());
  if (s.cols() != head.w_k.cols())
    throw ShapeError("attend_head: sequence " + s.shape_str() + " vs projection " +
                     head.w_k.shape_str());
  const Matrix qm = matmul(q, transpose(head.w_q));  // m x d_k
  const Matrix km = matmul(s, transpose(head.w_k));  // n x d_k
  const Matrix vm = matmul(s, transpose(head.w_v));  // n x d_k
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(head.w_q.rows()));
  const Matrix scores = scale(matmul(qm, transpose(km)), inv_sqrt_dk);  // m x n
  const Matrix weights = softmax_rows(scores);
  if (weights_out) *weights_out = weights;
  return matmul(weights, vm);  // m x d_k
}

/// Per-head attention weights captured during a forward pass, plus the layer
/// output. Every attention row sums to 1.
struct AttentionTrace {
  std::vector<Matrix> head_weights;  // h matrices, each m x n
  Matrix output;                     // m x d_model
};

/// Full Transformer layer: multi-head attention against the key/value
/// sequence s, concat + output projection, residual + layer norm, then the
/// feed-forward block with residual + layer norm. With an empty sequence
/// (n = 0) the attention sub-block is skipped and the query passes through
/// residual + norm and feed-forward alone.
inline AttentionTrace transformer_layer(const Matrix& q, const Matrix& s,
                                        const TransformerLayerParams& p) {
  if (q.cols() != static_cast<std::size_t>(p.d_model))
    throw ShapeError("transformer_layer: query " + q.shape_str() + " vs d_model " +
                     std::to_string(p.d_model));
  if (s.rows() > 0 && s.cols() != static_cast<std::size_t>(p.d_model))
    throw ShapeError("transformer_layer: sequence " + s.shape_str() + " vs d_model " +
                     std::to_string(p.d_model));

  AttentionTrace trace;
  Matrix out1;
  if (s.rows() == 0) {
    out1 = layer_norm(q, p.ln1_gain, p.ln1_bias, p.ln_eps);
  } else {
    std::vector<Matrix> head_outputs;
    head_outputs.reserve(p.heads.size());
    for (const auto& head : p.heads) {
      Matrix weights;
      head_outputs.push_back(attend_head(q, s, head, &weights));
      trace.head_weights.push_back(std::move(weights));
    }
    const Matrix projected = matmul(concat_cols(head_outputs), transpose(p.w_o));
    out1 = layer_norm(add(q, projected), p.ln1_gain, p.ln1_bias, p.ln_eps);
  }

  const Matrix hidden = relu(add_rowvec(matmul(out1, transpose(p.ff_w1)), p.ff_b1));
  const Matrix ff = add_rowvec(matmul(hidden, transpose(p.ff_w2)), p.ff_b2);
  trace.output = layer_norm(add(out1, ff), p.ln2_gain, p.ln2_bias, p.ln_eps);
  return trace;
}

/// Learnable scalar count of one layer.
inline long long transformer_param_count(const TransformerLayerParams& p) {
  long long n = 0;
  for (const auto& h : p.heads)
    n += static_cast<long long>(h.w_q.size() + h.w_k.size() + h.w_v.size());
  n += static_cast<long long>(p.w_o.size());
  n += static_cast<long long>(p.ff_w1.size() + p.ff_b1.size() + p.ff_w2.size() +
                              p.ff_b2.size());
  n += static_cast<long long>(p.ln1_gain.size() + p.ln1_bias.size() +
                              p.ln2_gain.size() + p.ln2_bias.size());
  return n;
}

/// Enumerates every learnable block of a layer as (name, matrix). The naming
/// is the canonical checkpoint key space.
template <typename Params, typename Fn>
void for_each_transformer_param(Params& p, const std::string& prefix, Fn&& fn) {
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    fn(hp + ".w_q", p.heads[h].w_q);
    fn(hp + ".w_k", p.heads[h].w_k);
    fn(hp + ".w_v", p.heads[h].w_v);
  }
  fn(prefix + ".w_o", p.w_o);
  fn(prefix + ".ff.w1", p.ff_w1);
  fn(prefix + ".ff.b1", p.ff_b1);
  fn(prefix + ".ff.w2", p.ff_w2);
  fn(prefix + ".ff.b2", p.ff_b2);
  fn(prefix + ".ln1.gain", p.ln1_gain);
  fn(prefix + ".ln1.bias", p.ln1_bias);
  fn(prefix + ".ln2.gain", p.ln2_gain);
  fn(prefix + ".ln2.bias", p.ln2_bias);
}

}  // namespace phasekit
