// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_NN_GRAPH_HPP_
#define VCDESK_NN_GRAPH_HPP_

#include <complex>
#include <functional>
#include <memory>
#include <vector>

#include "vcdesk/dsp.hpp"
#include "vcdesk/nn/ctc.hpp"
#include "vcdesk/nn/tensor.hpp"

namespace vcdesk::nn {

// Define-by-run reverse-mode tape over 2-D tensors. One tape is built per
// training example and discarded after Backward; parameter gradients
// accumulate into their ParamStore entries, so batching is gradient
// accumulation across tapes.
template <class T>
class Graph {
 public:
  struct Var {
    int32_t i = -1;
    bool valid() const { return i >= 0; }
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const Mat<T>& Value(Var v) const { return nodes_[v.i].value; }

  // Gradient after Backward; zeros if nothing flowed into the node.
  const Mat<T>& Grad(Var v) {
    EnsureGrad(v.i);
    return nodes_[v.i].grad;
  }

  Var Input(Mat<T> v) { return MakeNode(std::move(v), false, {}, nullptr); }

  // Leaf that wants a gradient (tests, adversarial probes).
  Var Leaf(Mat<T> v) { return MakeNode(std::move(v), true, {}, nullptr); }

  Var Parameter(Param<T>& p) {
    return MakeNode(p.value, p.trainable, {}, &p);
  }

  // ---- arithmetic ----

  Var MatMul(Var a, Var b) {
    const Mat<T>&A = V(a), &B = V(b);
    Require(A.cols == B.rows, "matmul: inner dims differ");
    Mat<T> out(A.rows, B.cols);
    Em(out).noalias() = Em(A) * Em(B);
    return MakeNode(std::move(out), Needs(a, b), [a, b](Graph& g, int self) {
      const Mat<T>& gr = g.nodes_[self].grad;
      if (g.NodeNeeds(a)) {
        g.EnsureGrad(a.i);
        Em(g.nodes_[a.i].grad).noalias() += Em(gr) * Em(g.V(b)).transpose();
      }
      if (g.NodeNeeds(b)) {
        g.EnsureGrad(b.i);
        Em(g.nodes_[b.i].grad).noalias() += Em(g.V(a)).transpose() * Em(gr);
      }
    });
  }

  Var Add(Var a, Var b) {
    const Mat<T>&A = V(a), &B = V(b);
    Require(A.same_shape(B), "add: shape mismatch");
    Mat<T> out = A;
    Em(out) += Em(B);
    return MakeNode(std::move(out), Needs(a, b), [a, b](Graph& g, int self) {
      const Mat<T>& gr = g.nodes_[self].grad;
      g.Accum(a, gr);
      g.Accum(b, gr);
    });
  }

  // Broadcast a 1 x n row over every row of a.
  Var AddRow(Var a, Var row) {
    const Mat<T>&A = V(a), &R = V(row);
    Require(R.rows == 1 && R.cols == A.cols, "add_row: need 1 x cols row");
    Mat<T> out = A;
    Em(out).rowwise() += Em(R).row(0);
    return MakeNode(std::move(out), Needs(a, row), [a, row](Graph& g, int self) {
      const Mat<T>& gr = g.nodes_[self].grad;
      g.Accum(a, gr);
      if (g.NodeNeeds(row)) {
        g.EnsureGrad(row.i);
        Em(g.nodes_[row.i].grad).row(0) += Em(gr).colwise().sum();
      }
    });
  }

  Var Sub(Var a, Var b) {
    const Mat<T>&A = V(a), &B = V(b);
    Require(A.same_shape(B), "sub: shape mismatch");
    Mat<T> out = A;
    Em(out) -= Em(B);
    return MakeNode(std::move(out), Needs(a, b), [a, b](Graph& g, int self) {
      const Mat<T>& gr = g.nodes_[self].grad;
      g.Accum(a, gr);
      if (g.NodeNeeds(b)) {
        g.EnsureGrad(b.i);
        Em(g.nodes_[b.i].grad) -= Em(gr);
      }
    });
  }

  Var Mul(Var a, Var b) {
    const Mat<T>&A = V(a), &B = V(b);
    Require(A.same_shape(B), "mul: shape mismatch");
    Mat<T> out = A;
    Em(out).array() *= Em(B).array();
    return MakeNode(std::move(out), Needs(a, b), [a, b](Graph& g, int self) {
      const Mat<T>& gr = g.nodes_[self].grad;
      if (g.NodeNeeds(a)) {
        g.EnsureGrad(a.i);
        Em(g.nodes_[a.i].grad).array() += Em(gr).array() * Em(g.V(b)).array();
      }
      if (g.NodeNeeds(b)) {
        g.EnsureGrad(b.i);
        Em(g.nodes_[b.i].grad).array() += Em(gr).array() * Em(g.V(a)).array();
      }
    });
  }

  Var Scale(Var a, T c) {
    Mat<T> out = V(a);
    Em(out) *= c;
    return MakeNode(std::move(out), Needs(a), [a, c](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      Em(g.nodes_[a.i].grad) += c * Em(g.nodes_[self].grad);
    });
  }

  Var AddConst(Var a, T c) {
    Mat<T> out = V(a);
    Em(out).array() += c;
    return MakeNode(std::move(out), Needs(a), [a](Graph& g, int self) {
      g.Accum(a, g.nodes_[self].grad);
    });
  }

  // ---- elementwise nonlinearities ----

  Var Relu(Var a) {
    return UnaryOp(a, [](T x) { return x > T(0) ? x : T(0); },
                   [](T x, T) { return x > T(0) ? T(1) : T(0); });
  }

  Var LeakyRelu(Var a, T slope) {
    return UnaryOp(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                   [slope](T x, T) { return x > T(0) ? T(1) : slope; });
  }

  Var Tanh(Var a) {
    return UnaryOp(a, [](T x) { return std::tanh(x); },
                   [](T, T y) { return T(1) - y * y; });
  }

  Var Sigmoid(Var a) {
    return UnaryOp(a, [](T x) { return StableSigmoid(x); },
                   [](T, T y) { return y * (T(1) - y); });
  }

  Var Exp(Var a) {
    return UnaryOp(a, [](T x) { return std::exp(x); },
                   [](T, T y) { return y; });
  }

  Var Log(Var a) {
    return UnaryOp(a, [](T x) { return std::log(x); },
                   [](T x, T) { return T(1) / x; });
  }

  Var Sqrt(Var a) {
    return UnaryOp(a, [](T x) { return std::sqrt(x); },
                   [](T, T y) { return T(0.5) / std::max(y, T(1e-12)); });
  }

  Var Abs(Var a) {
    return UnaryOp(a, [](T x) { return std::abs(x); },
                   [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
  }

  // ---- reductions ----

  Var SumAll(Var a) {
    Mat<T> out = Mat<T>::Scalar(Em(V(a)).sum());
    return MakeNode(std::move(out), Needs(a), [a](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      Em(g.nodes_[a.i].grad).array() += g.nodes_[self].grad.d[0];
    });
  }

  Var MeanAll(Var a) {
    const T inv = T(1) / static_cast<T>(V(a).numel());
    Mat<T> out = Mat<T>::Scalar(Em(V(a)).sum() * inv);
    return MakeNode(std::move(out), Needs(a), [a, inv](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      Em(g.nodes_[a.i].grad).array() += g.nodes_[self].grad.d[0] * inv;
    });
  }

  Var MeanRows(Var a) {
    const Mat<T>& A = V(a);
    Mat<T> out(1, A.cols);
    Em(out).row(0) = Em(A).colwise().mean();
    const T inv = T(1) / static_cast<T>(A.rows);
    return MakeNode(std::move(out), Needs(a), [a, inv](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      Em(g.nodes_[a.i].grad).rowwise() +=
          (Em(g.nodes_[self].grad).row(0) * inv);
    });
  }

  // Population standard deviation per column. Exact sqrt forward; the
  // backward denominator is clamped so constant inputs stay finite.
  Var StdRows(Var a) {
    const Mat<T>& A = V(a);
    const int64_t m = A.rows, n = A.cols;
    Mat<T> out(1, n);
    Mat<T> mu(1, n);
    Em(mu).row(0) = Em(A).colwise().mean();
    for (int64_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (int64_t i = 0; i < m; ++i) {
        const T d = A.at(i, j) - mu.at(0, j);
        acc += d * d;
      }
      out.at(0, j) = std::sqrt(acc / static_cast<T>(m));
    }
    Mat<T> sigma = out;
    return MakeNode(std::move(out), Needs(a),
                    [a, mu, sigma, m, n](Graph& g, int self) {
                      if (!g.NodeNeeds(a)) return;
                      g.EnsureGrad(a.i);
                      Mat<T>& ga = g.nodes_[a.i].grad;
                      const Mat<T>& gr = g.nodes_[self].grad;
                      const Mat<T>& x = g.V(a);
                      for (int64_t j = 0; j < n; ++j) {
                        const T denom =
                            static_cast<T>(m) * std::max(sigma.at(0, j), T(1e-6));
                        for (int64_t i = 0; i < m; ++i) {
                          ga.at(i, j) +=
                              gr.at(0, j) * (x.at(i, j) - mu.at(0, j)) / denom;
                        }
                      }
                    });
  }

  // ---- softmax family ----

  Var SoftmaxRows(Var a) {
    const Mat<T>& A = V(a);
    Mat<T> out(A.rows, A.cols);
    for (int64_t i = 0; i < A.rows; ++i) {
      T mx = A.at(i, 0);
      for (int64_t j = 1; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
      T sum = T(0);
      for (int64_t j = 0; j < A.cols; ++j) {
        const T e = std::exp(A.at(i, j) - mx);
        out.at(i, j) = e;
        sum += e;
      }
      for (int64_t j = 0; j < A.cols; ++j) out.at(i, j) /= sum;
    }
    return MakeNode(std::move(out), Needs(a), [a](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      const Mat<T>& y = g.nodes_[self].value;
      const Mat<T>& gr = g.nodes_[self].grad;
      Mat<T>& ga = g.nodes_[a.i].grad;
      for (int64_t i = 0; i < y.rows; ++i) {
        T dot = T(0);
        for (int64_t j = 0; j < y.cols; ++j) dot += gr.at(i, j) * y.at(i, j);
        for (int64_t j = 0; j < y.cols; ++j) {
          ga.at(i, j) += y.at(i, j) * (gr.at(i, j) - dot);
        }
      }
    });
  }

  Var LogSoftmaxRows(Var a) {
    const Mat<T>& A = V(a);
    Mat<T> out(A.rows, A.cols);
    for (int64_t i = 0; i < A.rows; ++i) {
      T mx = A.at(i, 0);
      for (int64_t j = 1; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
      T sum = T(0);
      for (int64_t j = 0; j < A.cols; ++j) sum += std::exp(A.at(i, j) - mx);
      const T lse = mx + std::log(sum);
      for (int64_t j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j) - lse;
    }
    return MakeNode(std::move(out), Needs(a), [a](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      const Mat<T>& y = g.nodes_[self].value;  // log-softmax
      const Mat<T>& gr = g.nodes_[self].grad;
      Mat<T>& ga = g.nodes_[a.i].grad;
      for (int64_t i = 0; i < y.rows; ++i) {
        T gsum = T(0);
        for (int64_t j = 0; j < y.cols; ++j) gsum += gr.at(i, j);
        for (int64_t j = 0; j < y.cols; ++j) {
          ga.at(i, j) += gr.at(i, j) - std::exp(y.at(i, j)) * gsum;
        }
      }
    });
  }

  Var LayerNormRows(Var a, Var gain, Var bias, T eps = T(1e-5)) {
    const Mat<T>& A = V(a);
    Require(V(gain).rows == 1 && V(gain).cols == A.cols, "layer_norm: bad gain");
    Require(V(bias).rows == 1 && V(bias).cols == A.cols, "layer_norm: bad bias");
    const int64_t m = A.rows, n = A.cols;
    Mat<T> xhat(m, n);
    Mat<T> istd(m, 1);
    for (int64_t i = 0; i < m; ++i) {
      T mu = T(0);
      for (int64_t j = 0; j < n; ++j) mu += A.at(i, j);
      mu /= static_cast<T>(n);
      T var = T(0);
      for (int64_t j = 0; j < n; ++j) {
        const T d = A.at(i, j) - mu;
        var += d * d;
      }
      var /= static_cast<T>(n);
      const T is = T(1) / std::sqrt(var + eps);
      istd.at(i, 0) = is;
      for (int64_t j = 0; j < n; ++j) xhat.at(i, j) = (A.at(i, j) - mu) * is;
    }
    Mat<T> out(m, n);
    const Mat<T>&G = V(gain), &B = V(bias);
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        out.at(i, j) = xhat.at(i, j) * G.at(0, j) + B.at(0, j);
      }
    }
    return MakeNode(
        std::move(out), Needs(a, gain, bias),
        [a, gain, bias, xhat, istd, m, n](Graph& g, int self) {
          const Mat<T>& gr = g.nodes_[self].grad;
          const Mat<T>& gn = g.V(gain);
          if (g.NodeNeeds(gain)) {
            g.EnsureGrad(gain.i);
            Mat<T>& gg = g.nodes_[gain.i].grad;
            for (int64_t i = 0; i < m; ++i)
              for (int64_t j = 0; j < n; ++j)
                gg.at(0, j) += gr.at(i, j) * xhat.at(i, j);
          }
          if (g.NodeNeeds(bias)) {
            g.EnsureGrad(bias.i);
            Mat<T>& gb = g.nodes_[bias.i].grad;
            for (int64_t i = 0; i < m; ++i)
              for (int64_t j = 0; j < n; ++j) gb.at(0, j) += gr.at(i, j);
          }
          if (g.NodeNeeds(a)) {
            g.EnsureGrad(a.i);
            Mat<T>& ga = g.nodes_[a.i].grad;
            for (int64_t i = 0; i < m; ++i) {
              T sum_g = T(0), sum_gx = T(0);
              for (int64_t j = 0; j < n; ++j) {
                const T gh = gr.at(i, j) * gn.at(0, j);
                sum_g += gh;
                sum_gx += gh * xhat.at(i, j);
              }
              const T inv_n = T(1) / static_cast<T>(n);
              for (int64_t j = 0; j < n; ++j) {
                const T gh = gr.at(i, j) * gn.at(0, j);
                ga.at(i, j) += istd.at(i, 0) *
                               (gh - inv_n * sum_g - xhat.at(i, j) * inv_n * sum_gx);
              }
            }
          }
        });
  }

  // ---- gather / reshape ----

  // Row gather from an embedding table; backward scatter-adds into rows.
  Var EmbedLookup(Var table, const std::vector<int>& ids) {
    const Mat<T>& Tb = V(table);
    for (int id : ids) {
      Require(id >= 0 && id < Tb.rows,
              "embedding id " + std::to_string(id) + " out of range [0, " +
                  std::to_string(Tb.rows) + ")");
    }
    Mat<T> out(static_cast<int64_t>(ids.size()), Tb.cols);
    for (size_t i = 0; i < ids.size(); ++i) {
      Em(out).row(static_cast<int64_t>(i)) = Em(Tb).row(ids[i]);
    }
    return MakeNode(std::move(out), Needs(table), [table, ids](Graph& g, int self) {
      if (!g.NodeNeeds(table)) return;
      g.EnsureGrad(table.i);
      Mat<T>& gt = g.nodes_[table.i].grad;
      const Mat<T>& gr = g.nodes_[self].grad;
      for (size_t i = 0; i < ids.size(); ++i) {
        Em(gt).row(ids[i]) += Em(gr).row(static_cast<int64_t>(i));
      }
    });
  }

  Var SliceCols(Var a, int64_t c0, int64_t c1) {
    const Mat<T>& A = V(a);
    Require(0 <= c0 && c0 < c1 && c1 <= A.cols, "slice_cols: bad range");
    Mat<T> out(A.rows, c1 - c0);
    Em(out) = Em(A).middleCols(c0, c1 - c0);
    return MakeNode(std::move(out), Needs(a), [a, c0, c1](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      Em(g.nodes_[a.i].grad).middleCols(c0, c1 - c0) +=
          Em(g.nodes_[self].grad);
    });
  }

  Var SliceRows(Var a, int64_t r0, int64_t r1) {
    const Mat<T>& A = V(a);
    Require(0 <= r0 && r0 < r1 && r1 <= A.rows, "slice_rows: bad range");
    Mat<T> out(r1 - r0, A.cols);
    Em(out) = Em(A).middleRows(r0, r1 - r0);
    return MakeNode(std::move(out), Needs(a), [a, r0, r1](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      Em(g.nodes_[a.i].grad).middleRows(r0, r1 - r0) +=
          Em(g.nodes_[self].grad);
    });
  }

  Var ConcatCols(const std::vector<Var>& vs) {
    Require(!vs.empty(), "concat_cols: empty list");
    const int64_t rows = V(vs[0]).rows;
    int64_t cols = 0;
    bool needs = false;
    for (Var v : vs) {
      Require(V(v).rows == rows, "concat_cols: row mismatch");
      cols += V(v).cols;
      needs = needs || NodeNeeds(v);
    }
    Mat<T> out(rows, cols);
    int64_t off = 0;
    for (Var v : vs) {
      Em(out).middleCols(off, V(v).cols) = Em(V(v));
      off += V(v).cols;
    }
    return MakeNode(std::move(out), needs, [vs](Graph& g, int self) {
      int64_t off = 0;
      for (Var v : vs) {
        const int64_t c = g.V(v).cols;
        if (g.NodeNeeds(v)) {
          g.EnsureGrad(v.i);
          Em(g.nodes_[v.i].grad) += Em(g.nodes_[self].grad).middleCols(off, c);
        }
        off += c;
      }
    });
  }

  Var ConcatRows(const std::vector<Var>& vs) {
    Require(!vs.empty(), "concat_rows: empty list");
    const int64_t cols = V(vs[0]).cols;
    int64_t rows = 0;
    bool needs = false;
    for (Var v : vs) {
      Require(V(v).cols == cols, "concat_rows: col mismatch");
      rows += V(v).rows;
      needs = needs || NodeNeeds(v);
    }
    Mat<T> out(rows, cols);
    int64_t off = 0;
    for (Var v : vs) {
      Em(out).middleRows(off, V(v).rows) = Em(V(v));
      off += V(v).rows;
    }
    return MakeNode(std::move(out), needs, [vs](Graph& g, int self) {
      int64_t off = 0;
      for (Var v : vs) {
        const int64_t r = g.V(v).rows;
        if (g.NodeNeeds(v)) {
          g.EnsureGrad(v.i);
          Em(g.nodes_[v.i].grad) += Em(g.nodes_[self].grad).middleRows(off, r);
        }
        off += r;
      }
    });
  }

  Var Transpose(Var a) {
    const Mat<T>& A = V(a);
    Mat<T> out(A.cols, A.rows);
    Em(out) = Em(A).transpose();
    return MakeNode(std::move(out), Needs(a), [a](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      Em(g.nodes_[a.i].grad) += Em(g.nodes_[self].grad).transpose();
    });
  }

  // Inverted dropout; p = 0 is the identity.
  Var Dropout(Var a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    Require(p < 1.0, "dropout: p must be < 1");
    const Mat<T>& A = V(a);
    Mat<T> mask(A.rows, A.cols);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (auto& v : mask.d) v = rng.uniform() < p ? T(0) : keep_scale;
    Mat<T> out = A;
    Em(out).array() *= Em(mask).array();
    return MakeNode(std::move(out), Needs(a), [a, mask](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      Em(g.nodes_[a.i].grad).array() +=
          Em(g.nodes_[self].grad).array() * Em(mask).array();
    });
  }

  // ---- convolution ----

  // 1-D convolution over time. x: T_in x Cin, w: (kernel*Cin) x Cout,
  // b: 1 x Cout (or invalid Var for none). Padding is zero-filled, 'same'
  // (kernel odd) or causal. Output: ceil(T_in/stride) x Cout.
  Var Conv1d(Var x, Var w, Var b, int kernel, int dilation, bool causal,
             int stride = 1) {
    const Mat<T>& X = V(x);
    const Mat<T>& W = V(w);
    Require(kernel >= 1 && dilation >= 1 && stride >= 1, "conv1d: bad hyper");
    Require(causal || kernel % 2 == 1, "conv1d: same-padding needs odd kernel");
    const int64_t cin = X.cols;
    Require(W.rows == static_cast<int64_t>(kernel) * cin,
            "conv1d: weight rows != kernel*cin");
    const int64_t t_in = X.rows;
    const int64_t t_out = (t_in + stride - 1) / stride;
    Mat<T> patches(t_out, static_cast<int64_t>(kernel) * cin);
    for (int64_t t = 0; t < t_out; ++t) {
      for (int k = 0; k < kernel; ++k) {
        const int64_t src = SrcIndex(t, k, kernel, dilation, causal, stride);
        if (src < 0 || src >= t_in) continue;
        for (int64_t c = 0; c < cin; ++c) {
          patches.at(t, static_cast<int64_t>(k) * cin + c) = X.at(src, c);
        }
      }
    }
    Mat<T> out(t_out, W.cols);
    Em(out).noalias() = Em(patches) * Em(W);
    if (b.valid()) {
      Require(V(b).rows == 1 && V(b).cols == W.cols, "conv1d: bad bias");
      Em(out).rowwise() += Em(V(b)).row(0);
    }
    const bool needs = Needs(x, w) || (b.valid() && NodeNeeds(b));
    return MakeNode(
        std::move(out), needs,
        [x, w, b, kernel, dilation, causal, stride, patches, t_in,
         cin](Graph& g, int self) {
          const Mat<T>& gr = g.nodes_[self].grad;
          if (g.NodeNeeds(w)) {
            g.EnsureGrad(w.i);
            Em(g.nodes_[w.i].grad).noalias() +=
                Em(patches).transpose() * Em(gr);
          }
          if (b.valid() && g.NodeNeeds(b)) {
            g.EnsureGrad(b.i);
            Em(g.nodes_[b.i].grad).row(0) += Em(gr).colwise().sum();
          }
          if (g.NodeNeeds(x)) {
            g.EnsureGrad(x.i);
            Mat<T>& gx = g.nodes_[x.i].grad;
            Mat<T> gpatch(gr.rows, patches.cols);
            Em(gpatch).noalias() = Em(gr) * Em(g.V(w)).transpose();
            for (int64_t t = 0; t < gr.rows; ++t) {
              for (int k = 0; k < kernel; ++k) {
                const int64_t src =
                    SrcIndex(t, k, kernel, dilation, causal, stride);
                if (src < 0 || src >= t_in) continue;
                for (int64_t c = 0; c < cin; ++c) {
                  gx.at(src, c) +=
                      gpatch.at(t, static_cast<int64_t>(k) * cin + c);
                }
              }
            }
          }
        });
  }

  // ---- losses ----

  // Mean over rows with id >= 0 of -log softmax(logits)[id].
  Var CrossEntropyRows(Var logits, const std::vector<int>& ids) {
    const Mat<T>& L = V(logits);
    Require(static_cast<int64_t>(ids.size()) == L.rows,
            "cross_entropy: ids length != rows");
    int64_t valid = 0;
    for (int id : ids) {
      Require(id < static_cast<int>(L.cols), "cross_entropy: id out of range");
      if (id >= 0) ++valid;
    }
    Require(valid > 0, "cross_entropy: empty mask");
    Mat<T> sm(L.rows, L.cols);
    double loss = 0.0;
    for (int64_t i = 0; i < L.rows; ++i) {
      T mx = L.at(i, 0);
      for (int64_t j = 1; j < L.cols; ++j) mx = std::max(mx, L.at(i, j));
      T sum = T(0);
      for (int64_t j = 0; j < L.cols; ++j) {
        const T e = std::exp(L.at(i, j) - mx);
        sm.at(i, j) = e;
        sum += e;
      }
      for (int64_t j = 0; j < L.cols; ++j) sm.at(i, j) /= sum;
      if (ids[i] >= 0) {
        loss -= std::log(std::max(static_cast<double>(sm.at(i, ids[i])), 1e-300));
      }
    }
    Mat<T> out = Mat<T>::Scalar(static_cast<T>(loss / valid));
    return MakeNode(std::move(out), Needs(logits),
                    [logits, ids, sm, valid](Graph& g, int self) {
                      if (!g.NodeNeeds(logits)) return;
                      g.EnsureGrad(logits.i);
                      Mat<T>& gl = g.nodes_[logits.i].grad;
                      const T s = g.nodes_[self].grad.d[0] / static_cast<T>(valid);
                      for (int64_t i = 0; i < sm.rows; ++i) {
                        if (ids[i] < 0) continue;
                        for (int64_t j = 0; j < sm.cols; ++j) {
                          const T onehot = (j == ids[i]) ? T(1) : T(0);
                          gl.at(i, j) += s * (sm.at(i, j) - onehot);
                        }
                      }
                    });
  }

  // Weighted mean absolute error; nullptr weights = uniform over all elements.
  Var L1Loss(Var pred, const Mat<T>& target, const Mat<T>* weights = nullptr) {
    const Mat<T>& P = V(pred);
    Require(P.same_shape(target), "l1: shape mismatch");
    double wsum = 0.0, loss = 0.0;
    if (weights) {
      Require(P.same_shape(*weights), "l1: weight shape mismatch");
      for (int64_t i = 0; i < P.numel(); ++i) {
        wsum += static_cast<double>(weights->d[i]);
        loss += static_cast<double>(weights->d[i]) *
                std::abs(static_cast<double>(P.d[i] - target.d[i]));
      }
      Require(wsum > 0, "l1: empty mask");
    } else {
      wsum = static_cast<double>(P.numel());
      for (int64_t i = 0; i < P.numel(); ++i) {
        loss += std::abs(static_cast<double>(P.d[i] - target.d[i]));
      }
    }
    Mat<T> out = Mat<T>::Scalar(static_cast<T>(loss / wsum));
    Mat<T> wcopy = weights ? *weights : Mat<T>();
    Mat<T> tcopy = target;
    return MakeNode(std::move(out), Needs(pred),
                    [pred, tcopy, wcopy, wsum](Graph& g, int self) {
                      if (!g.NodeNeeds(pred)) return;
                      g.EnsureGrad(pred.i);
                      Mat<T>& gp = g.nodes_[pred.i].grad;
                      const Mat<T>& P = g.V(pred);
                      const T s = g.nodes_[self].grad.d[0] / static_cast<T>(wsum);
                      for (int64_t i = 0; i < P.numel(); ++i) {
                        const T d = P.d[i] - tcopy.d[i];
                        const T sign = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                        const T w = wcopy.empty() ? T(1) : wcopy.d[i];
                        gp.d[i] += s * w * sign;
                      }
                    });
  }

  // Numerically-stable binary cross-entropy on logits, weighted mean.
  Var BceLogits(Var logits, const Mat<T>& targets, const Mat<T>* weights = nullptr) {
    const Mat<T>& Z = V(logits);
    Require(Z.same_shape(targets), "bce: shape mismatch");
    double wsum = 0.0, loss = 0.0;
    for (int64_t i = 0; i < Z.numel(); ++i) {
      const double w = weights ? static_cast<double>(weights->d[i]) : 1.0;
      const double z = static_cast<double>(Z.d[i]);
      const double y = static_cast<double>(targets.d[i]);
      loss += w * (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))));
      wsum += w;
    }
    Require(wsum > 0, "bce: empty mask");
    Mat<T> out = Mat<T>::Scalar(static_cast<T>(loss / wsum));
    Mat<T> wcopy = weights ? *weights : Mat<T>();
    Mat<T> tcopy = targets;
    return MakeNode(std::move(out), Needs(logits),
                    [logits, tcopy, wcopy, wsum](Graph& g, int self) {
                      if (!g.NodeNeeds(logits)) return;
                      g.EnsureGrad(logits.i);
                      Mat<T>& gl = g.nodes_[logits.i].grad;
                      const Mat<T>& Z = g.V(logits);
                      const T s = g.nodes_[self].grad.d[0] / static_cast<T>(wsum);
                      for (int64_t i = 0; i < Z.numel(); ++i) {
                        const T w = wcopy.empty() ? T(1) : wcopy.d[i];
                        gl.d[i] += s * w * (StableSigmoid(Z.d[i]) - tcopy.d[i]);
                      }
                    });
  }

  // CTC loss over per-frame log-softmax rows; see CtcLoss for the contract.
  Var Ctc(Var logp, const std::vector<int>& labels, int blank) {
    CtcResult<T> res = CtcLoss(V(logp), labels, blank);
    Mat<T> out = Mat<T>::Scalar(static_cast<T>(res.loss));
    Mat<T> grad = std::move(res.grad);
    return MakeNode(std::move(out), Needs(logp), [logp, grad](Graph& g, int self) {
      if (!g.NodeNeeds(logp)) return;
      g.EnsureGrad(logp.i);
      Em(g.nodes_[logp.i].grad) += g.nodes_[self].grad.d[0] * Em(grad);
    });
  }

  // ---- differentiable STFT magnitude (for spectrogram losses) ----

  // x is 1 x N. Frames start at t*hop, Hann-windowed over win_length samples,
  // zero-padded to fft_size. No centering. Output: frames x (fft_size/2+1)
  // magnitudes; backward applies the adjoint DFT.
  Var SpectrogramMag(Var x, int fft_size, int hop, int win_length) {
    const Mat<T>& X = V(x);
    Require(X.rows == 1, "spectrogram: x must be 1 x N");
    Require((fft_size & (fft_size - 1)) == 0, "spectrogram: fft must be pow2");
    Require(win_length <= fft_size && hop >= 1, "spectrogram: bad framing");
    const int64_t n = X.cols;
    const int64_t frames = n >= win_length ? 1 + (n - win_length) / hop : 0;
    const int bins = fft_size / 2 + 1;
    Require(frames > 0, "spectrogram: signal shorter than window");

    auto window = std::make_shared<std::vector<double>>(win_length);
    for (int i = 0; i < win_length; ++i) {
      (*window)[i] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i /
                                          win_length);
    }
    auto spectra = std::make_shared<std::vector<std::complex<double>>>(
        static_cast<size_t>(frames) * bins);
    Mat<T> out(frames, bins);
    std::vector<std::complex<double>> buf(fft_size);
    for (int64_t t = 0; t < frames; ++t) {
      std::fill(buf.begin(), buf.end(), std::complex<double>(0, 0));
      for (int i = 0; i < win_length; ++i) {
        buf[i] = static_cast<double>(X.at(0, t * hop + i)) * (*window)[i];
      }
      dsp::Fft(buf, false);
      for (int k = 0; k < bins; ++k) {
        (*spectra)[static_cast<size_t>(t) * bins + k] = buf[k];
        out.at(t, k) = static_cast<T>(std::abs(buf[k]));
      }
    }
    return MakeNode(
        std::move(out), Needs(x),
        [x, fft_size, hop, win_length, frames, bins, window,
         spectra](Graph& g, int self) {
          if (!g.NodeNeeds(x)) return;
          g.EnsureGrad(x.i);
          Mat<T>& gx = g.nodes_[x.i].grad;
          const Mat<T>& gr = g.nodes_[self].grad;
          std::vector<std::complex<double>> buf(fft_size);
          for (int64_t t = 0; t < frames; ++t) {
            std::fill(buf.begin(), buf.end(), std::complex<double>(0, 0));
            for (int k = 0; k < bins; ++k) {
              const std::complex<double> z =
                  (*spectra)[static_cast<size_t>(t) * bins + k];
              const double mag = std::max(std::abs(z), 1e-12);
              buf[k] = z / mag * static_cast<double>(gr.at(t, k));
            }
            // dL/dx_n = Re(sum_k G_k e^{i 2 pi k n / N}) over rfft bins only.
            dsp::Fft(buf, true);
            for (int i = 0; i < win_length; ++i) {
              gx.at(0, t * hop + i) += static_cast<T>(
                  buf[i].real() * fft_size * (*window)[i]);
            }
          }
        });
  }

  // ---- backward ----

  void Backward(Var loss) {
    Require(V(loss).rows == 1 && V(loss).cols == 1, "backward: loss not scalar");
    EnsureGrad(loss.i);
    nodes_[loss.i].grad.d[0] = T(1);
    for (int i = loss.i; i >= 0; --i) {
      Node& nd = nodes_[i];
      if (!nd.needs || !nd.back || nd.grad.empty()) continue;
      nd.back(*this, i);
    }
    for (int i = 0; i <= loss.i; ++i) {
      Node& nd = nodes_[i];
      if (nd.param && nd.param->trainable && !nd.grad.empty()) {
        Em(nd.param->grad) += Em(nd.grad);
      }
    }
  }

  size_t NumNodes() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<T> value;
    Mat<T> grad;
    bool needs = false;
    std::function<void(Graph&, int)> back;
    Param<T>* param = nullptr;
  };

  const Mat<T>& V(Var v) const { return nodes_[v.i].value; }
  bool NodeNeeds(Var v) const { return nodes_[v.i].needs; }
  bool Needs(Var a) const { return NodeNeeds(a); }
  bool Needs(Var a, Var b) const { return NodeNeeds(a) || NodeNeeds(b); }
  bool Needs(Var a, Var b, Var c) const {
    return NodeNeeds(a) || NodeNeeds(b) || NodeNeeds(c);
  }

  void EnsureGrad(int i) {
    Node& nd = nodes_[i];
    if (nd.grad.empty() && !nd.value.empty()) {
      nd.grad = Mat<T>::Zeros(nd.value.rows, nd.value.cols);
    }
  }

  void Accum(Var v, const Mat<T>& g) {
    if (!NodeNeeds(v)) return;
    EnsureGrad(v.i);
    Em(nodes_[v.i].grad) += Em(g);
  }

  Var MakeNode(Mat<T> value, bool needs, std::function<void(Graph&, int)> back,
               Param<T>* param = nullptr) {
    Node nd;
    nd.value = std::move(value);
    nd.needs = needs;
    nd.back = std::move(back);
    nd.param = param;
    nodes_.push_back(std::move(nd));
    Var v;
    v.i = static_cast<int32_t>(nodes_.size()) - 1;
    return v;
  }

  template <class F, class DF>
  Var UnaryOp(Var a, F f, DF df) {
    const Mat<T>& A = V(a);
    Mat<T> out(A.rows, A.cols);
    for (int64_t i = 0; i < A.numel(); ++i) out.d[i] = f(A.d[i]);
    return MakeNode(std::move(out), Needs(a), [a, df](Graph& g, int self) {
      if (!g.NodeNeeds(a)) return;
      g.EnsureGrad(a.i);
      const Mat<T>& A = g.V(a);
      const Mat<T>& y = g.nodes_[self].value;
      const Mat<T>& gr = g.nodes_[self].grad;
      Mat<T>& ga = g.nodes_[a.i].grad;
      for (int64_t i = 0; i < A.numel(); ++i) {
        ga.d[i] += gr.d[i] * df(A.d[i], y.d[i]);
      }
    });
  }

  static T StableSigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  }

  static int64_t SrcIndex(int64_t t_out, int k, int kernel, int dilation,
                          bool causal, int stride) {
    const int64_t center = t_out * stride;
    if (causal) return center - static_cast<int64_t>(kernel - 1 - k) * dilation;
    return center + static_cast<int64_t>(k - kernel / 2) * dilation;
  }

  std::vector<Node> nodes_;
};

}  // namespace vcdesk::nn

#endif  // VCDESK_NN_GRAPH_HPP_
