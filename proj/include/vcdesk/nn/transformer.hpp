// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_NN_TRANSFORMER_HPP_
#define VCDESK_NN_TRANSFORMER_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "vcdesk/nn/graph.hpp"

namespace vcdesk::nn {

struct TransformerConfig {
  int layers = 2;
  int heads = 2;
  int d_model = 64;
  int d_ff = 128;
  double dropout = 0.0;

  void Validate() const {
    Require(layers >= 1 && heads >= 1 && d_model >= 1 && d_ff >= 1,
            "transformer: bad sizes");
    Require(d_model % heads == 0, "transformer: d_model not divisible by heads");
    Require(dropout >= 0.0 && dropout < 1.0, "transformer: bad dropout");
  }
};

template <class T>
Mat<T> SinusoidalPositions(int len, int d_model) {
  Mat<T> pe(len, d_model);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      const double angle =
          pos / std::pow(10000.0, static_cast<double>(i) / d_model);
      pe.at(pos, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d_model) pe.at(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

// Additive causal mask: 0 at or below the diagonal, -1e30 above. The huge
// negative logit underflows to an exact zero attention weight.
template <class T>
Mat<T> CausalMask(int len) {
  Mat<T> m(len, len);
  for (int i = 0; i < len; ++i) {
    for (int j = i + 1; j < len; ++j) m.at(i, j) = T(-1e30);
  }
  return m;
}

// Pre-layer-norm Transformer stack. Encoder mode is self-attention only;
// decoder mode adds a causal self-attention mask and cross-attention over a
// memory sequence. Sinusoidal positions are added to the input.
template <class T>
class TransformerStack {
 public:
  enum class Mode { kEncoder, kDecoder };
  using Var = typename Graph<T>::Var;

  // Per-call attention collection, one head-averaged matrix per layer.
  struct AttnRecord {
    std::vector<Var> self_probs;
    std::vector<Var> cross_probs;
  };

  TransformerStack(ParamStore<T>& store, const std::string& prefix,
                   const TransformerConfig& cfg, Mode mode, Rng& rng)
      : cfg_(cfg), mode_(mode) {
    cfg.Validate();
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string lp = prefix + ".l" + std::to_string(l);
      layers_.push_back(Layer{
          MakeNorm(store, lp + ".ln_self", rng),
          MakeAttn(store, lp + ".self", rng),
          mode == Mode::kDecoder ? MakeNorm(store, lp + ".ln_cross", rng)
                                 : Norm{},
          mode == Mode::kDecoder ? MakeAttn(store, lp + ".cross", rng)
                                 : AttnParams{},
          MakeNorm(store, lp + ".ln_ff", rng),
          MakeFf(store, lp + ".ff", rng),
      });
    }
    final_norm_ = MakeNorm(store, prefix + ".ln_out", rng);
  }

  // x: T x d_model. memory: S x d_model (decoder mode only). extra_self_mask
  // is an optional additive T x T matrix on self-attention logits.
  Var Apply(Graph<T>& g, Var x, Var memory = {},
            const Mat<T>* extra_self_mask = nullptr,
            AttnRecord* attn = nullptr, Rng* dropout_rng = nullptr) {
    const int len = static_cast<int>(g.Value(x).rows);
    Require(g.Value(x).cols == cfg_.d_model, "transformer: input dim mismatch");
    Require((mode_ == Mode::kDecoder) == memory.valid(),
            "transformer: memory required iff decoder mode");

    Var h = g.Add(x, g.Input(SinusoidalPositions<T>(len, cfg_.d_model)));
    h = MaybeDropout(g, h, dropout_rng);

    Mat<T> self_mask;
    if (mode_ == Mode::kDecoder) {
      self_mask = CausalMask<T>(len);
      if (extra_self_mask) {
        Require(extra_self_mask->rows == len && extra_self_mask->cols == len,
                "transformer: bad self mask shape");
        Em(self_mask) += Em(*extra_self_mask);
      }
    } else if (extra_self_mask) {
      self_mask = *extra_self_mask;
    }
    Var mask_var = self_mask.empty() ? Var{} : g.Input(self_mask);

    for (Layer& layer : layers_) {
      Var n1 = ApplyNorm(g, layer.ln_self, h);
      Var self_probs{};
      Var att = Mha(g, n1, n1, mask_var, layer.self_attn,
                    attn ? &self_probs : nullptr);
      if (attn) attn->self_probs.push_back(self_probs);
      h = g.Add(h, MaybeDropout(g, att, dropout_rng));

      if (mode_ == Mode::kDecoder) {
        Var n2 = ApplyNorm(g, layer.ln_cross, h);
        Var cross_probs{};
        Var catt = Mha(g, n2, memory, Var{}, layer.cross_attn,
                       attn ? &cross_probs : nullptr);
        if (attn) attn->cross_probs.push_back(cross_probs);
        h = g.Add(h, MaybeDropout(g, catt, dropout_rng));
      }

      Var n3 = ApplyNorm(g, layer.ln_ff, h);
      Var ff = g.AddRow(
          g.MatMul(g.Relu(g.AddRow(g.MatMul(n3, g.Parameter(*layer.ff.w1)),
                                   g.Parameter(*layer.ff.b1))),
                   g.Parameter(*layer.ff.w2)),
          g.Parameter(*layer.ff.b2));
      h = g.Add(h, MaybeDropout(g, ff, dropout_rng));
    }
    return ApplyNorm(g, final_norm_, h);
  }

  const TransformerConfig& config() const { return cfg_; }

 private:
  struct Norm {
    Param<T>* gain = nullptr;
    Param<T>* bias = nullptr;
  };
  struct AttnParams {
    Param<T>*wq = nullptr, *bq = nullptr, *wk = nullptr, *bk = nullptr;
    Param<T>*wv = nullptr, *bv = nullptr, *wo = nullptr, *bo = nullptr;
  };
  struct FfParams {
    Param<T>*w1 = nullptr, *b1 = nullptr, *w2 = nullptr, *b2 = nullptr;
  };
  struct Layer {
    Norm ln_self;
    AttnParams self_attn;
    Norm ln_cross;
    AttnParams cross_attn;
    Norm ln_ff;
    FfParams ff;
  };

  Norm MakeNorm(ParamStore<T>& store, const std::string& p, Rng&) {
    Norm n;
    n.gain = &store.Create(p + ".gain", 1, cfg_.d_model);
    std::fill(n.gain->value.d.begin(), n.gain->value.d.end(), T(1));
    n.bias = &store.Create(p + ".bias", 1, cfg_.d_model);
    return n;
  }

  AttnParams MakeAttn(ParamStore<T>& store, const std::string& p, Rng& rng) {
    AttnParams a;
    auto mk = [&](const std::string& nm, int64_t r, int64_t c, bool xavier) {
      Param<T>* q = &store.Create(p + nm, r, c);
      if (xavier) InitXavier(q->value, rng);
      return q;
    };
    a.wq = mk(".wq", cfg_.d_model, cfg_.d_model, true);
    a.bq = mk(".bq", 1, cfg_.d_model, false);
    a.wk = mk(".wk", cfg_.d_model, cfg_.d_model, true);
    a.bk = mk(".bk", 1, cfg_.d_model, false);
    a.wv = mk(".wv", cfg_.d_model, cfg_.d_model, true);
    a.bv = mk(".bv", 1, cfg_.d_model, false);
    a.wo = mk(".wo", cfg_.d_model, cfg_.d_model, true);
    a.bo = mk(".bo", 1, cfg_.d_model, false);
    return a;
  }

  FfParams MakeFf(ParamStore<T>& store, const std::string& p, Rng& rng) {
    FfParams f;
    f.w1 = &store.Create(p + ".w1", cfg_.d_model, cfg_.d_ff);
    InitXavier(f.w1->value, rng);
    f.b1 = &store.Create(p + ".b1", 1, cfg_.d_ff);
    f.w2 = &store.Create(p + ".w2", cfg_.d_ff, cfg_.d_model);
    InitXavier(f.w2->value, rng);
    f.b2 = &store.Create(p + ".b2", 1, cfg_.d_model);
    return f;
  }

  Var ApplyNorm(Graph<T>& g, Norm& n, Var x) {
    return g.LayerNormRows(x, g.Parameter(*n.gain), g.Parameter(*n.bias));
  }

  Var MaybeDropout(Graph<T>& g, Var x, Rng* rng) {
    if (!rng || cfg_.dropout <= 0.0) return x;
    return g.Dropout(x, cfg_.dropout, *rng);
  }

  // Multi-head attention; optionally emits head-averaged probabilities.
  Var Mha(Graph<T>& g, Var q_in, Var kv_in, Var add_mask, AttnParams& p,
          Var* probs_out) {
    const int dh = cfg_.d_model / cfg_.heads;
    Var q = g.AddRow(g.MatMul(q_in, g.Parameter(*p.wq)), g.Parameter(*p.bq));
    Var k = g.AddRow(g.MatMul(kv_in, g.Parameter(*p.wk)), g.Parameter(*p.bk));
    Var v = g.AddRow(g.MatMul(kv_in, g.Parameter(*p.wv)), g.Parameter(*p.bv));
    std::vector<Var> ctx;
    Var probs_sum{};
    for (int h = 0; h < cfg_.heads; ++h) {
      Var qh = g.SliceCols(q, static_cast<int64_t>(h) * dh,
                           static_cast<int64_t>(h + 1) * dh);
      Var kh = g.SliceCols(k, static_cast<int64_t>(h) * dh,
                           static_cast<int64_t>(h + 1) * dh);
      Var vh = g.SliceCols(v, static_cast<int64_t>(h) * dh,
                           static_cast<int64_t>(h + 1) * dh);
      Var scores = g.Scale(g.MatMul(qh, g.Transpose(kh)),
                           static_cast<T>(1.0 / std::sqrt(double(dh))));
      if (add_mask.valid()) scores = g.Add(scores, add_mask);
      Var probs = g.SoftmaxRows(scores);
      if (probs_out) {
        probs_sum = probs_sum.valid() ? g.Add(probs_sum, probs) : probs;
      }
      ctx.push_back(g.MatMul(probs, vh));
    }
    if (probs_out) {
      *probs_out = g.Scale(probs_sum, static_cast<T>(1.0 / cfg_.heads));
    }
    return g.AddRow(g.MatMul(g.ConcatCols(ctx), g.Parameter(*p.wo)),
                    g.Parameter(*p.bo));
  }

  TransformerConfig cfg_;
  Mode mode_;
  std::vector<Layer> layers_;
  Norm final_norm_;
};

}  // namespace vcdesk::nn

#endif  // VCDESK_NN_TRANSFORMER_HPP_
