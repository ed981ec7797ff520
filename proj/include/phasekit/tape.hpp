#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "phasekit/matrix.hpp"
#include "phasekit/tcn.hpp"

namespace phasekit {

/// Minimal reverse-mode autodiff over Matrix-valued nodes. Forward values are
/// computed with the same linalg kernels the inference path uses, so a tape
/// forward pass is bit-identical to the equivalent value-path computation;
/// each op records a hand-derived adjoint. Tapes are built per batch and
/// discarded; they are not thread-safe.
class Tape {
 public:
  struct Var {
    std::size_t index = static_cast<std::size_t>(-1);
    bool valid() const { return index != static_cast<std::size_t>(-1); }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  /// Learnable leaf; participates in backward().
  Var leaf(Matrix value) { return push(std::move(value), true, nullptr); }

  const Matrix& value(Var v) const { return nodes_[v.index].value; }
  const Matrix& grad(Var v) const { return nodes_[v.index].grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b) {
    Matrix out = phasekit::matmul(value(a), value(b));
    return binary(std::move(out), a, b, [](Tape& t, std::size_t i, std::size_t ia, std::size_t ib) {
      const Matrix& g = t.nodes_[i].grad;
      if (t.nodes_[ia].requires_grad)
        t.accumulate(ia, phasekit::matmul(g, phasekit::transpose(t.nodes_[ib].value)));
      if (t.nodes_[ib].requires_grad)
        t.accumulate(ib, phasekit::matmul(phasekit::transpose(t.nodes_[ia].value), g));
    });
  }

  Var transpose(Var a) {
    return unary(phasekit::transpose(value(a)), a, [](Tape& t, std::size_t i, std::size_t ia) {
      t.accumulate(ia, phasekit::transpose(t.nodes_[i].grad));
    });
  }

  Var add(Var a, Var b) {
    return binary(phasekit::add(value(a), value(b)), a, b,
                  [](Tape& t, std::size_t i, std::size_t ia, std::size_t ib) {
                    const Matrix& g = t.nodes_[i].grad;
                    if (t.nodes_[ia].requires_grad) t.accumulate(ia, g);
                    if (t.nodes_[ib].requires_grad) t.accumulate(ib, g);
                  });
  }

  Var sub(Var a, Var b) {
    return binary(phasekit::sub(value(a), value(b)), a, b,
                  [](Tape& t, std::size_t i, std::size_t ia, std::size_t ib) {
                    const Matrix& g = t.nodes_[i].grad;
                    if (t.nodes_[ia].requires_grad) t.accumulate(ia, g);
                    if (t.nodes_[ib].requires_grad) t.accumulate(ib, phasekit::scale(g, -1.0));
                  });
  }

  Var hadamard(Var a, Var b) {
    return binary(phasekit::hadamard(value(a), value(b)), a, b,
                  [](Tape& t, std::size_t i, std::size_t ia, std::size_t ib) {
                    const Matrix& g = t.nodes_[i].grad;
                    if (t.nodes_[ia].requires_grad)
                      t.accumulate(ia, phasekit::hadamard(g, t.nodes_[ib].value));
                    if (t.nodes_[ib].requires_grad)
                      t.accumulate(ib, phasekit::hadamard(g, t.nodes_[ia].value));
                  });
  }

  Var scale(Var a, double s) {
    return unary(phasekit::scale(value(a), s), a, [s](Tape& t, std::size_t i, std::size_t ia) {
      t.accumulate(ia, phasekit::scale(t.nodes_[i].grad, s));
    });
  }

  Var add_rowvec(Var a, Var rowvec) {
    return binary(phasekit::add_rowvec(value(a), value(rowvec)), a, rowvec,
                  [](Tape& t, std::size_t i, std::size_t ia, std::size_t ib) {
                    const Matrix& g = t.nodes_[i].grad;
                    if (t.nodes_[ia].requires_grad) t.accumulate(ia, g);
                    if (t.nodes_[ib].requires_grad) {
                      Matrix col_sums(1, g.cols());
                      for (std::size_t r = 0; r < g.rows(); ++r)
                        for (std::size_t j = 0; j < g.cols(); ++j) col_sums(0, j) += g(r, j);
                      t.accumulate(ib, col_sums);
                    }
                  });
  }

  Var relu(Var a) {
    return unary(phasekit::relu(value(a)), a, [](Tape& t, std::size_t i, std::size_t ia) {
      const Matrix& g = t.nodes_[i].grad;
      const Matrix& x = t.nodes_[ia].value;
      Matrix dx = g;
      for (std::size_t k = 0; k < dx.size(); ++k)
        if (x.data()[k] <= 0.0) dx.data()[k] = 0.0;
      t.accumulate(ia, dx);
    });
  }

  Var tanh_op(Var a) {
    return unary(phasekit::tanh_map(value(a)), a, [](Tape& t, std::size_t i, std::size_t ia) {
      const Matrix& g = t.nodes_[i].grad;
      const Matrix& y = t.nodes_[i].value;
      Matrix dx = g;
      for (std::size_t k = 0; k < dx.size(); ++k)
        dx.data()[k] *= 1.0 - y.data()[k] * y.data()[k];
      t.accumulate(ia, dx);
    });
  }

  Var softmax_rows(Var a) {
    return unary(phasekit::softmax_rows(value(a)), a, [](Tape& t, std::size_t i, std::size_t ia) {
      const Matrix& g = t.nodes_[i].grad;
      const Matrix& y = t.nodes_[i].value;
      Matrix dx(y.rows(), y.cols());
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += g(r, j) * y(r, j);
        for (std::size_t j = 0; j < y.cols(); ++j)
          dx(r, j) = y(r, j) * (g(r, j) - dot);
      }
      t.accumulate(ia, dx);
    });
  }

  Var layer_norm(Var x, Var gain, Var bias, double eps) {
    Matrix out = phasekit::layer_norm(value(x), value(gain), value(bias), eps);
    const std::size_t ix = x.index, ig = gain.index, ib = bias.index;
    const bool needs_grad = nodes_[ix].requires_grad || nodes_[ig].requires_grad ||
                          nodes_[ib].requires_grad;
    if (!needs_grad) return push(std::move(out), false, nullptr);
    return push(std::move(out), true, [ix, ig, ib, eps](Tape& t, std::size_t i) {
      const Matrix& g = t.nodes_[i].grad;
      const Matrix& xin = t.nodes_[ix].value;
      const Matrix& gn = t.nodes_[ig].value;
      const std::size_t cols = xin.cols();
      Matrix dx(xin.rows(), cols);
      Matrix dgain(1, cols);
      Matrix dbias(1, cols);
      for (std::size_t r = 0; r < xin.rows(); ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mean += xin(r, j);
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          const double d = xin(r, j) - mean;
          var += d * d;
        }
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + eps);
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          const double xhat = (xin(r, j) - mean) * inv;
          const double dxhat = g(r, j) * gn(0, j);
          dgain(0, j) += g(r, j) * xhat;
          dbias(0, j) += g(r, j);
          m1 += dxhat;
          m2 += dxhat * xhat;
        }
        m1 /= static_cast<double>(cols);
        m2 /= static_cast<double>(cols);
        for (std::size_t j = 0; j < cols; ++j) {
          const double xhat = (xin(r, j) - mean) * inv;
          const double dxhat = g(r, j) * gn(0, j);
          dx(r, j) = (dxhat - m1 - xhat * m2) * inv;
        }
      }
      if (t.nodes_[ix].requires_grad) t.accumulate(ix, dx);
      if (t.nodes_[ig].requires_grad) t.accumulate(ig, dgain);
      if (t.nodes_[ib].requires_grad) t.accumulate(ib, dbias);
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    std::vector<Matrix> values;
    values.reserve(parts.size());
    bool needs_grad = false;
    std::vector<std::size_t> indices;
    for (Var p : parts) {
      values.push_back(value(p));
      needs_grad |= nodes_[p.index].requires_grad;
      indices.push_back(p.index);
    }
    Matrix out = phasekit::concat_cols(values);
    if (!needs_grad) return push(std::move(out), false, nullptr);
    return push(std::move(out), true, [indices](Tape& t, std::size_t i) {
      const Matrix& g = t.nodes_[i].grad;
      std::size_t off = 0;
      for (std::size_t idx : indices) {
        const Matrix& v = t.nodes_[idx].value;
        if (t.nodes_[idx].requires_grad) {
          Matrix part(v.rows(), v.cols());
          for (std::size_t r = 0; r < v.rows(); ++r)
            for (std::size_t c = 0; c < v.cols(); ++c) part(r, c) = g(r, off + c);
          t.accumulate(idx, part);
        }
        off += v.cols();
      }
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    std::vector<Matrix> values;
    values.reserve(parts.size());
    bool needs_grad = false;
    std::vector<std::size_t> indices;
    for (Var p : parts) {
      values.push_back(value(p));
      needs_grad |= nodes_[p.index].requires_grad;
      indices.push_back(p.index);
    }
    Matrix out = phasekit::concat_rows(values);
    if (!needs_grad) return push(std::move(out), false, nullptr);
    return push(std::move(out), true, [indices](Tape& t, std::size_t i) {
      const Matrix& g = t.nodes_[i].grad;
      std::size_t off = 0;
      for (std::size_t idx : indices) {
        const Matrix& v = t.nodes_[idx].value;
        if (t.nodes_[idx].requires_grad) t.accumulate(idx, slice_rows_matrix(g, off, v.rows()));
        off += v.rows();
      }
    });
  }

  Var slice_rows(Var a, std::size_t first, std::size_t count) {
    Matrix out = phasekit::slice_rows(value(a), first, count);
    return unary(std::move(out), a, [first, count](Tape& t, std::size_t i, std::size_t ia) {
      const Matrix& g = t.nodes_[i].grad;
      Matrix dx(t.nodes_[ia].value.rows(), t.nodes_[ia].value.cols());
      for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) dx(first + r, c) = g(r, c);
      t.accumulate(ia, dx);
    });
  }

  /// Causal dilated convolution (see tcn.hpp for the value-path kernel and
  /// weight layout: w is C_out x (C_in * kernel), column index ci*kernel + j).
  Var causal_conv(Var x, Var w, Var b, int kernel, int dilation) {
    Matrix out = phasekit::causal_dilated_conv(value(x), value(w), value(b), kernel, dilation);
    const std::size_t ix = x.index, iw = w.index, ib = b.index;
    const bool needs_grad = nodes_[ix].requires_grad || nodes_[iw].requires_grad ||
                          nodes_[ib].requires_grad;
    if (!needs_grad) return push(std::move(out), false, nullptr);
    return push(std::move(out), true, [ix, iw, ib, kernel, dilation](Tape& t, std::size_t i) {
      const Matrix& g = t.nodes_[i].grad;        // T x C_out
      const Matrix& xin = t.nodes_[ix].value;    // T x C_in
      const Matrix& wv = t.nodes_[iw].value;     // C_out x (C_in * kernel)
      const std::size_t frames = xin.rows();
      const std::size_t c_in = xin.cols();
      const std::size_t c_out = wv.rows();
      Matrix dx(frames, c_in);
      Matrix dw(wv.rows(), wv.cols());
      Matrix db(1, c_out);
      for (std::size_t tt = 0; tt < frames; ++tt) {
        for (std::size_t co = 0; co < c_out; ++co) {
          const double go = g(tt, co);
          db(0, co) += go;
          for (int j = 0; j < kernel; ++j) {
            const long src = static_cast<long>(tt) - static_cast<long>(j) * dilation;
            if (src < 0) continue;
            for (std::size_t ci = 0; ci < c_in; ++ci) {
              const std::size_t wcol =
                  ci * static_cast<std::size_t>(kernel) + static_cast<std::size_t>(j);
              dw(co, wcol) += go * xin(static_cast<std::size_t>(src), ci);
              dx(static_cast<std::size_t>(src), ci) += go * wv(co, wcol);
            }
          }
        }
      }
      if (t.nodes_[ix].requires_grad) t.accumulate(ix, dx);
      if (t.nodes_[iw].requires_grad) t.accumulate(iw, dw);
      if (t.nodes_[ib].requires_grad) t.accumulate(ib, db);
    });
  }

  /// -sum_t log(max(probs[t, labels[t]], floor)) as a 1x1 node.
  Var cross_entropy(Var probs, std::vector<int> labels, double floor = 1e-12) {
    const Matrix& p = value(probs);
    if (labels.size() != p.rows())
      throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels vs " +
                       p.shape_str() + " probabilities");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= p.cols())
        throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(p.cols()) + ")");
    Matrix out(1, 1);
    double acc = 0.0;
    for (std::size_t t = 0; t < p.rows(); ++t)
      acc -= std::log(std::max(p(t, static_cast<std::size_t>(labels[t])), floor));
    out(0, 0) = acc;
    const std::size_t ip = probs.index;
    if (!nodes_[ip].requires_grad) return push(std::move(out), false, nullptr);
    return push(std::move(out), true,
                [ip, labels = std::move(labels), floor](Tape& t, std::size_t i) {
                  const double go = t.nodes_[i].grad(0, 0);
                  const Matrix& p = t.nodes_[ip].value;
                  Matrix dp(p.rows(), p.cols());
                  for (std::size_t tt = 0; tt < p.rows(); ++tt) {
                    const std::size_t y = static_cast<std::size_t>(labels[tt]);
                    if (p(tt, y) > floor) dp(tt, y) = -go / p(tt, y);
                  }
                  t.accumulate(ip, dp);
                });
  }

  Var sum_all(Var a) {
    const Matrix& v = value(a);
    Matrix out(1, 1);
    double acc = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) acc += v.data()[k];
    out(0, 0) = acc;
    return unary(std::move(out), a, [](Tape& t, std::size_t i, std::size_t ia) {
      const double go = t.nodes_[i].grad(0, 0);
      const Matrix& v = t.nodes_[ia].value;
      t.accumulate(ia, Matrix(v.rows(), v.cols(), go));
    });
  }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded adjoint in reverse
  /// order. loss must be 1x1.
  void backward(Var loss) {
    if (value(loss).rows() != 1 || value(loss).cols() != 1)
      throw ShapeError("backward: loss must be 1x1, got " + value(loss).shape_str());
    for (Node& n : nodes_) {
      if (n.requires_grad) n.grad = Matrix(n.value.rows(), n.value.cols());
    }
    nodes_[loss.index].grad = Matrix(1, 1, 1.0);
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
  };

  static Matrix slice_rows_matrix(const Matrix& m, std::size_t first, std::size_t count) {
    return phasekit::slice_rows(m, first, count);
  }

  Var push(Matrix value, bool needs_grad, std::function<void(Tape&, std::size_t)> backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  template <typename Fn>
  Var unary(Matrix out, Var a, Fn&& fn) {
    const std::size_t ia = a.index;
    if (!nodes_[ia].requires_grad) return push(std::move(out), false, nullptr);
    return push(std::move(out), true,
                [ia, fn = std::forward<Fn>(fn)](Tape& t, std::size_t i) { fn(t, i, ia); });
  }

  template <typename Fn>
  Var binary(Matrix out, Var a, Var b, Fn&& fn) {
    const std::size_t ia = a.index, ib = b.index;
    if (!nodes_[ia].requires_grad && !nodes_[ib].requires_grad)
      return push(std::move(out), false, nullptr);
    return push(std::move(out), true,
                [ia, ib, fn = std::forward<Fn>(fn)](Tape& t, std::size_t i) { fn(t, i, ia, ib); });
  }

  void accumulate(std::size_t index, const Matrix& contribution) {
    Matrix& g = nodes_[index].grad;
    if (g.size() == 0) g = Matrix(nodes_[index].value.rows(), nodes_[index].value.cols());
    for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] += contribution.data()[k];
  }

  std::vector<Node> nodes_;
};

using Var = Tape::Var;

}  // namespace phasekit
