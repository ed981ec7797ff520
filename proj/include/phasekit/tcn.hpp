#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "phasekit/matrix.hpp"

namespace phasekit {

/// Two-stage causal dilated TCN configuration. Stage s consists of a 1x1
/// input projection to hidden_channels, layers_per_stage dilated residual
/// blocks (dilation of layer i is 2^i), and a 1x1 output projection to
/// out_dim. Stage 0 consumes the reduced spatial sequence; later stages
/// consume the previous stage's out_dim logits (refinement).
struct TcnConfig {
  int stages = 2;
  int layers_per_stage = 9;
  int kernel_size = 3;
  int hidden_channels = 32;
  int reduced_dim = 32;
  int out_dim = 7;  // N phases
  int spatial_dim = 2048;
  bool softmax_between_stages = false;

  void validate() const {
    if (stages < 1) throw ConfigError("tcn: stages must be >= 1");
    if (layers_per_stage < 1) throw ConfigError("tcn: layers_per_stage must be >= 1");
    if (kernel_size < 2) throw ConfigError("tcn: kernel_size must be >= 2");
    if (hidden_channels < 1 || reduced_dim < 1 || out_dim < 1 || spatial_dim < 1)
      throw ConfigError("tcn: channel widths must be >= 1");
  }

  /// Frames that can influence one stage's output at a fixed frame:
  /// (kernel_size - 1) * (2^layers_per_stage - 1) + 1.
  long long receptive_field_per_stage() const {
    return static_cast<long long>(kernel_size - 1) *
               ((1LL << layers_per_stage) - 1) + 1;
  }

  /// Past frames that can influence the last stage's output at a fixed frame.
  long long total_receptive_field() const {
    // Stages chain: each adds (RF - 1) frames of history.
    return stages * (receptive_field_per_stage() - 1) + 1;
  }
};

/// One dilated residual block: causal dilated conv (weights conv_w laid out
/// C_out x (C_in * kernel), column index ci * kernel + j), ReLU, 1x1 channel
/// mix, residual add.
struct TcnLayerParams {
  Matrix conv_w;
  Matrix conv_b;  // 1 x C_out
  Matrix mix_w;   // C x C
  Matrix mix_b;   // 1 x C
};

struct TcnStageParams {
  Matrix in_w, in_b;    // hidden x input_dim, 1 x hidden
  std::vector<TcnLayerParams> layers;
  Matrix out_w, out_b;  // out_dim x hidden, 1 x out_dim
};

struct TcnParams {
  Matrix reduce_w;  // reduced_dim x spatial_dim
  Matrix reduce_b;  // 1 x reduced_dim
  std::vector<TcnStageParams> stages;
};

inline TcnParams make_tcn_params(const TcnConfig& c, Rng& rng) {
  c.validate();
  TcnParams p;
  p.reduce_w = init_params(c.reduced_dim, c.spatial_dim, InitScheme::uniform_scaled, rng);
  p.reduce_b = init_params(1, c.reduced_dim, InitScheme::zeros, rng);
  int input_dim = c.reduced_dim;
  for (int s = 0; s < c.stages; ++s) {
    TcnStageParams sp;
    sp.in_w = init_params(c.hidden_channels, input_dim, InitScheme::uniform_scaled, rng);
    sp.in_b = init_params(1, c.hidden_channels, InitScheme::zeros, rng);
    for (int l = 0; l < c.layers_per_stage; ++l) {
      TcnLayerParams lp;
      lp.conv_w = init_params(c.hidden_channels, c.hidden_channels * c.kernel_size,
                              InitScheme::uniform_scaled, rng);
      lp.conv_b = init_params(1, c.hidden_channels, InitScheme::zeros, rng);
      lp.mix_w = init_params(c.hidden_channels, c.hidden_channels,
                             InitScheme::uniform_scaled, rng);
      lp.mix_b = init_params(1, c.hidden_channels, InitScheme::zeros, rng);
      sp.layers.push_back(std::move(lp));
    }
    sp.out_w = init_params(c.out_dim, c.hidden_channels, InitScheme::uniform_scaled, rng);
    sp.out_b = init_params(1, c.out_dim, InitScheme::zeros, rng);
    p.stages.push_back(std::move(sp));
    input_dim = c.out_dim;
  }
  return p;
}

/// Per-frame affine reduction of spatial embeddings (1x1 convolution):
/// frame t's output depends only on frame t.
inline Matrix reduce_spatial(const Matrix& spatial, const TcnParams& p) {
  if (spatial.cols() != p.reduce_w.cols())
    throw ShapeError("reduce_spatial: input " + spatial.shape_str() +
                     " vs weights " + p.reduce_w.shape_str());
  return add_rowvec(matmul(spatial, transpose(p.reduce_w)), p.reduce_b);
}

/// Shared accumulation kernel for the causal dilated convolution. The batch
/// and streaming paths both route through this, with matching j-then-ci
/// summation order, so their outputs are bit-identical.
template <typename LookupFn>
inline void causal_conv_row(const Matrix& w, const Matrix& b, int kernel, int dilation,
                            long frame, LookupFn&& x_at, double* out_row) {
  const std::size_t c_out = w.rows();
  const std::size_t c_in = w.cols() / static_cast<std::size_t>(kernel);
  for (std::size_t co = 0; co < c_out; ++co) {
    double acc = b(0, co);
    const double* wrow = w.row_ptr(co);
    for (int j = 0; j < kernel; ++j) {
      const long src = frame - static_cast<long>(j) * dilation;
      if (src < 0) continue;  // left zero padding
      for (std::size_t ci = 0; ci < c_in; ++ci)
        acc += wrow[ci * static_cast<std::size_t>(kernel) + static_cast<std::size_t>(j)] *
               x_at(src, ci);
    }
    out_row[co] = acc;
  }
}

/// Causal dilated convolution over a whole sequence: output at frame t reads
/// inputs only at { t - dilation*j : j = 0..kernel-1 }, left-padded with zeros.
inline Matrix causal_dilated_conv(const Matrix& x, const Matrix& w, const Matrix& b,
                                  int kernel, int dilation) {
  const std::size_t c_in = x.cols();
  if (w.cols() != c_in * static_cast<std::size_t>(kernel))
    throw ShapeError("causal_dilated_conv: weights " + w.shape_str() +
                     " vs input " + x.shape_str() + " with kernel " +
                     std::to_string(kernel));
  Matrix y(x.rows(), w.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    causal_conv_row(w, b, kernel, dilation, static_cast<long>(t),
                    [&x](long tt, std::size_t ci) { return x(static_cast<std::size_t>(tt), ci); },
                    y.row_ptr(t));
  }
  return y;
}

/// One dilated residual block: x + mix(relu(conv(x))).
inline Matrix dilated_causal_block(const Matrix& x, const TcnLayerParams& lp,
                                   int kernel, int dilation) {
  const Matrix activated = relu(causal_dilated_conv(x, lp.conv_w, lp.conv_b, kernel, dilation));
  const Matrix mixed = add_rowvec(matmul(activated, transpose(lp.mix_w)), lp.mix_b);
  return add(x, mixed);
}

/// All per-stage logit sequences (each T x out_dim); the last one is the
/// temporal embedding sequence. Intermediate stage outputs are retained for
/// stage-wise supervision.
struct TcnForward {
  std::vector<Matrix> stage_logits;
};

inline TcnForward tcn_forward(const Matrix& spatial, const TcnParams& p,
                              const TcnConfig& c) {
  if (spatial.rows() == 0) throw DataError("tcn_forward: empty frame sequence");
  c.validate();
  TcnForward fwd;
  Matrix stage_input = reduce_spatial(spatial, p);
  for (int s = 0; s < c.stages; ++s) {
    const TcnStageParams& sp = p.stages[s];
    Matrix x = add_rowvec(matmul(stage_input, transpose(sp.in_w)), sp.in_b);
    int dilation = 1;
    for (const TcnLayerParams& lp : sp.layers) {
      x = dilated_causal_block(x, lp, c.kernel_size, dilation);
      dilation *= 2;
    }
    Matrix logits = add_rowvec(matmul(x, transpose(sp.out_w)), sp.out_b);
    fwd.stage_logits.push_back(logits);
    stage_input = c.softmax_between_stages ? softmax_rows(logits) : std::move(logits);
  }
  return fwd;
}

/// Temporal embedding per frame: the last stage's logits. Strictly causal;
/// g_t depends only on frames 1..t.
inline Matrix extract_temporal(const Matrix& spatial, const TcnParams& p,
                               const TcnConfig& c) {
  return tcn_forward(spatial, p, c).stage_logits.back();
}

inline long long tcn_param_count(const TcnParams& p) {
  long long n = static_cast<long long>(p.reduce_w.size() + p.reduce_b.size());
  for (const auto& s : p.stages) {
    n += static_cast<long long>(s.in_w.size() + s.in_b.size());
    for (const auto& l : s.layers)
      n += static_cast<long long>(l.conv_w.size() + l.conv_b.size() + l.mix_w.size() +
                                  l.mix_b.size());
    n += static_cast<long long>(s.out_w.size() + s.out_b.size());
  }
  return n;
}

template <typename Params, typename Fn>
void for_each_tcn_param(Params& p, Fn&& fn) {
  fn("tcn.reduce.w", p.reduce_w);
  fn("tcn.reduce.b", p.reduce_b);
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    const std::string sp = "tcn.s" + std::to_string(s);
    fn(sp + ".in.w", p.stages[s].in_w);
    fn(sp + ".in.b", p.stages[s].in_b);
    for (std::size_t l = 0; l < p.stages[s].layers.size(); ++l) {
      const std::string lp = sp + ".l" + std::to_string(l);
      fn(lp + ".conv.w", p.stages[s].layers[l].conv_w);
      fn(lp + ".conv.b", p.stages[s].layers[l].conv_b);
      fn(lp + ".mix.w", p.stages[s].layers[l].mix_w);
      fn(lp + ".mix.b", p.stages[s].layers[l].mix_b);
    }
    fn(sp + ".out.w", p.stages[s].out_w);
    fn(sp + ".out.b", p.stages[s].out_b);
  }
}

}  // namespace phasekit
