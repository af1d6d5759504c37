// Copyright 2026 The boxlm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Tiny decoder-only transformer over the multimodal sequence
//   [grid cells 0..G*G-1] [system preamble + user prompt] [bos response eos]
// with a language-modeling head (drives decoding) and an auxiliary box
// regression head (training-time only). Everything runs in fp64 with
// hand-written reverse-mode gradients; the layout follows pre-LN residual
// blocks with learned absolute positions and no final layer norm, so zeroing
// every block weight makes the network an identity over the embeddings.
//
// All computations keep a fixed accumulation order, which together with the
// seeded init makes training bitwise reproducible.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "boxlm/codec.hpp"
#include "boxlm/common.hpp"
#include "boxlm/geometry.hpp"
#include "boxlm/scenegen.hpp"

namespace boxlm {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

enum class HeadVariant {
  kTwoLayerRelu,  // default
  kOneLayer,
  kTwoLayerGelu,
  kTwoLayerSigmoid,
};

inline std::string_view head_variant_name(HeadVariant h) {
  switch (h) {
    case HeadVariant::kTwoLayerRelu: return "two_layer_relu";
    case HeadVariant::kOneLayer: return "one_layer";
    case HeadVariant::kTwoLayerGelu: return "two_layer_gelu";
    case HeadVariant::kTwoLayerSigmoid: return "two_layer_sigmoid";
  }
  return "?";
}

inline HeadVariant head_variant_from_name(std::string_view n) {
  for (HeadVariant h :
       {HeadVariant::kTwoLayerRelu, HeadVariant::kOneLayer,
        HeadVariant::kTwoLayerGelu, HeadVariant::kTwoLayerSigmoid})
    if (head_variant_name(h) == n) return h;
  throw SchemaViolation("unknown head variant: '" + std::string(n) + "'");
}

inline std::string_view prompt_variant_name(PromptVariant p) {
  return p == PromptVariant::kSimple ? "simple" : "concrete";
}

inline PromptVariant prompt_variant_from_name(std::string_view n) {
  if (n == "simple") return PromptVariant::kSimple;
  if (n == "concrete") return PromptVariant::kConcrete;
  throw SchemaViolation("unknown prompt variant: '" + std::string(n) + "'");
}

// Room reserved for text positions after the grid prefix; large enough for
// the concrete preamble, the longest user turn, and a full-length response.
inline constexpr int kMaxTextPositions = 192;

struct ModelConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int max_response_len = 64;  // decode cap, bos and eos included
  int grid_size = 16;
  HeadVariant head_variant = HeadVariant::kTwoLayerRelu;
  PromptVariant prompt_variant = PromptVariant::kSimple;
  int vocab_size = 0;  // filled from the vocabulary

  int head_dim() const { return d_model / n_heads; }
  int ffn_width() const { return 2 * d_model; }  // FFN expansion factor 2
  int arl_hidden() const { return d_model / 2; }
  int n_grid_cells() const { return grid_size * grid_size; }
  int n_positions() const { return n_grid_cells() + kMaxTextPositions; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void validate(const ModelConfig& c) {
  if (c.d_model < 4 || c.d_model % 2 != 0)
    throw ConfigError("d_model must be an even number >= 4");
  if (c.n_layers < 1) throw ConfigError("n_layers must be positive");
  if (c.n_heads < 1 || c.d_model % c.n_heads != 0)
    throw ConfigError("n_heads must divide d_model");
  if (c.max_response_len < 8 || c.max_response_len > kMaxTextPositions / 2)
    throw ConfigError("max_response_len out of range");
  if (c.grid_size < 2 || c.grid_size > 64)
    throw ConfigError("grid_size must be in [2, 64]");
  if (c.vocab_size <= Vocab::kSep)
    throw ConfigError("vocab_size not set");
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"max_response_len", c.max_response_len},
          {"grid_size", c.grid_size},
          {"head_variant", head_variant_name(c.head_variant)},
          {"prompt_variant", prompt_variant_name(c.prompt_variant)},
          {"vocab_size", c.vocab_size}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.max_response_len = j.at("max_response_len").get<int>();
    c.grid_size = j.at("grid_size").get<int>();
    c.head_variant =
        head_variant_from_name(j.at("head_variant").get<std::string>());
    c.prompt_variant =
        prompt_variant_from_name(j.at("prompt_variant").get<std::string>());
    c.vocab_size = j.at("vocab_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("model config: ") + e.what());
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Parameters. Every tensor is a named MatrixXd (vectors are n x 1); visit()
// walks them in one fixed order used for init, optimizer state, checkpoint
// layout, and gradient probing alike.
// ---------------------------------------------------------------------------

struct ParamSet {
  struct Layer {
    Mat ln1_g, ln1_b;
    Mat wq, bq, wk, bk, wv, bv, wo, bo;
    Mat ln2_g, ln2_b;
    Mat w1, b1, w2, b2;
  };

  Mat tok_embed;          // V x d
  Mat vis_w, vis_b;       // feature projection: kFeatureDim x d, d x 1
  Mat pos_embed;          // n_positions x d
  std::vector<Layer> layers;
  Mat lm_w;               // d x V, no bias
  Mat arl_w1, arl_b1;     // d x m, m x 1 (one_layer: d x 4, 4 x 1)
  Mat arl_w2, arl_b2;     // m x 4, 4 x 1 (one_layer: empty)

  template <typename Self, typename F>
  static void visit_impl(Self& p, F&& f) {
    f("embed.token", p.tok_embed);
    f("embed.visual.w", p.vis_w);
    f("embed.visual.b", p.vis_b);
    f("embed.pos", p.pos_embed);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto& L = p.layers[l];
      std::string pre = "layer" + std::to_string(l) + ".";
      f(pre + "ln1.g", L.ln1_g);
      f(pre + "ln1.b", L.ln1_b);
      f(pre + "attn.wq", L.wq);
      f(pre + "attn.bq", L.bq);
      f(pre + "attn.wk", L.wk);
      f(pre + "attn.bk", L.bk);
      f(pre + "attn.wv", L.wv);
      f(pre + "attn.bv", L.bv);
      f(pre + "attn.wo", L.wo);
      f(pre + "attn.bo", L.bo);
      f(pre + "ln2.g", L.ln2_g);
      f(pre + "ln2.b", L.ln2_b);
      f(pre + "ffn.w1", L.w1);
      f(pre + "ffn.b1", L.b1);
      f(pre + "ffn.w2", L.w2);
      f(pre + "ffn.b2", L.b2);
    }
    f("lm.w", p.lm_w);
    f("arl.w1", p.arl_w1);
    f("arl.b1", p.arl_b1);
    f("arl.w2", p.arl_w2);
    f("arl.b2", p.arl_b2);
  }

  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, std::forward<F>(f));
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, std::forward<F>(f));
  }

  // Allocates all tensors with the right shapes, zero-filled.
  static ParamSet zeros(const ModelConfig& c) {
    ParamSet p;
    int d = c.d_model, f = c.ffn_width(), v = c.vocab_size;
    int m = c.head_variant == HeadVariant::kOneLayer ? 4 : c.arl_hidden();
    p.tok_embed = Mat::Zero(v, d);
    p.vis_w = Mat::Zero(kFeatureDim, d);
    p.vis_b = Mat::Zero(d, 1);
    p.pos_embed = Mat::Zero(c.n_positions(), d);
    p.layers.resize(static_cast<std::size_t>(c.n_layers));
    for (auto& L : p.layers) {
      L.ln1_g = Mat::Zero(d, 1);
      L.ln1_b = Mat::Zero(d, 1);
      L.wq = Mat::Zero(d, d);
      L.bq = Mat::Zero(d, 1);
      L.wk = Mat::Zero(d, d);
      L.bk = Mat::Zero(d, 1);
      L.wv = Mat::Zero(d, d);
      L.bv = Mat::Zero(d, 1);
      L.wo = Mat::Zero(d, d);
      L.bo = Mat::Zero(d, 1);
      L.ln2_g = Mat::Zero(d, 1);
      L.ln2_b = Mat::Zero(d, 1);
      L.w1 = Mat::Zero(d, f);
      L.b1 = Mat::Zero(f, 1);
      L.w2 = Mat::Zero(f, d);
      L.b2 = Mat::Zero(d, 1);
    }
    p.lm_w = Mat::Zero(d, v);
    p.arl_w1 = Mat::Zero(d, m);
    p.arl_b1 = Mat::Zero(m, 1);
    if (c.head_variant == HeadVariant::kOneLayer) {
      p.arl_w2 = Mat::Zero(0, 0);
      p.arl_b2 = Mat::Zero(0, 0);
    } else {
      p.arl_w2 = Mat::Zero(m, 4);
      p.arl_b2 = Mat::Zero(4, 1);
    }
    return p;
  }

  void set_zero() {
    visit([](const std::string&, Mat& m) { m.setZero(); });
  }

  std::size_t count() const {
    std::size_t n = 0;
    visit([&n](const std::string&, const Mat& m) {
      n += static_cast<std::size_t>(m.size());
    });
    return n;
  }
};

// ---------------------------------------------------------------------------
// Activation helpers.
// ---------------------------------------------------------------------------

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476));
}

inline double gelu_grad(double x) {
  double phi_cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
  double phi_pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
  return phi_cdf + x * phi_pdf;
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

// ---------------------------------------------------------------------------
// Forward cache: everything backward() needs, for one sample.
// ---------------------------------------------------------------------------

struct LayerCache {
  Mat ln1_xhat;  // T x d
  Vec ln1_inv;   // T
  Mat n1;        // T x d
  Mat q, k, v;   // T x d
  std::vector<Mat> attn;  // n_heads lower-triangular T x T
  Mat attn_concat;        // T x d, heads side by side, pre-output-projection
  Mat x_attn;             // residual stream after the attention block
  Mat ln2_xhat;
  Vec ln2_inv;
  Mat n2;
  Mat f1;  // T x f preactivation
  Mat fa;  // T x f activated
  Mat x_out;
};

struct ForwardCache {
  int t_total = 0;
  int bos_row = 0;  // row index of the response's first token
  Mat x0;           // embedded inputs
  std::vector<LayerCache> layers;
  Mat h;            // final hidden states (== layers.back().x_out)
  // ARL head
  Vec pooled;
  Vec arl_u, arl_a;  // hidden pre/post activation (two-layer variants)
  Eigen::Vector4d arl_v = Eigen::Vector4d::Zero();
  BoxN pred;
  // LM head at supervised rows only (rows bos_row .. T-2)
  Mat lm_logits;     // n_supervised x V
  double clm = 0.0;  // sum over supervised positions
  double arl = 0.0;
};

// ---------------------------------------------------------------------------
// Model.
// ---------------------------------------------------------------------------

class Model {
 public:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    validate(cfg_);
    params_ = ParamSet::zeros(cfg_);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Deterministic init: visit order, row-major element order. Weight
  // matrices ~ N(0, 1/sqrt(d_model)); biases and layer-norm shifts zero;
  // layer-norm gains one. The ARL final layer starts at exactly zero with a
  // bias placing the initial box at [0.25, 0.25, 0.75, 0.75] regardless of
  // input (logit(0.25) = -ln 3, logit(0.75) = ln 3).
  void init(std::uint64_t seed) {
    Rng rng(seed);
    double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    params_.visit([&](const std::string& name, Mat& m) {
      if (name.ends_with("ln1.g") || name.ends_with("ln2.g")) {
        m.setOnes();
        return;
      }
      if (m.cols() <= 1) {  // biases (and ln shifts) are n x 1
        m.setZero();
        return;
      }
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
          m(r, c) = rng.normal(0.0, scale);
    });
    const double kLogit3 = std::log(3.0);
    if (cfg_.head_variant == HeadVariant::kOneLayer) {
      params_.arl_w1.setZero();
      params_.arl_b1 << -kLogit3, -kLogit3, kLogit3, kLogit3;
    } else {
      params_.arl_w2.setZero();
      params_.arl_b2 << -kLogit3, -kLogit3, kLogit3, kLogit3;
    }
  }

  // -------------------------------------------------------------------------
  // Embedding: grid cells through the visual projection, tokens through the
  // embedding table, plus learned absolute positions on every row.
  // -------------------------------------------------------------------------
  Mat embed_inputs(const FeatureGrid& grid, std::span<const TokenId> prompt,
                   std::span<const TokenId> response) const {
    if (grid.size != cfg_.grid_size)
      throw ConfigError("grid size " + std::to_string(grid.size) +
                        " does not match model grid " +
                        std::to_string(cfg_.grid_size));
    int n_cells = cfg_.n_grid_cells();
    int t_total =
        n_cells + static_cast<int>(prompt.size() + response.size());
    if (t_total > cfg_.n_positions())
      throw ConfigError("sequence length " + std::to_string(t_total) +
                        " exceeds position table");
    Mat x(t_total, cfg_.d_model);
    for (int c = 0; c < n_cells; ++c) {
      Eigen::Map<const Eigen::RowVectorXd> feat(
          grid.cells.data() + static_cast<std::size_t>(c) * kFeatureDim,
          kFeatureDim);
      x.row(c) = feat * params_.vis_w + params_.vis_b.transpose() +
                 params_.pos_embed.row(c);
    }
    int r = n_cells;
    for (TokenId t : prompt) {
      check_token(t);
      x.row(r) = params_.tok_embed.row(t) + params_.pos_embed.row(r);
      ++r;
    }
    for (TokenId t : response) {
      check_token(t);
      x.row(r) = params_.tok_embed.row(t) + params_.pos_embed.row(r);
      ++r;
    }
    return x;
  }

  // Full training forward: hidden states, LM loss over the supervised span,
  // ARL prediction and loss. `response` must start with bos; rows
  // bos_row..T-2 are supervised to predict response[1..].
  ForwardCache forward(const FeatureGrid& grid, std::span<const TokenId> prompt,
                       std::span<const TokenId> response, const BoxN& gold,
                       const RegWeights& reg) const {
    if (response.size() < 2 || response.front() != Vocab::kBos)
      throw ConfigError("response must start with bos and be non-trivial");
    ForwardCache cache;
    cache.x0 = embed_inputs(grid, prompt, response);
    cache.t_total = static_cast<int>(cache.x0.rows());
    cache.bos_row = cache.t_total - static_cast<int>(response.size());
    cache.layers.resize(static_cast<std::size_t>(cfg_.n_layers));

    Mat x = cache.x0;
    for (int l = 0; l < cfg_.n_layers; ++l) {
      run_layer(x, params_.layers[static_cast<std::size_t>(l)],
                &cache.layers[static_cast<std::size_t>(l)]);
      if (!x.allFinite())
        throw NonFiniteActivationError("non-finite activation in layer " +
                                       std::to_string(l));
    }
    cache.h = x;

    // LM head on supervised rows only (the lone rows whose logits receive
    // gradient); everything else would be wasted work.
    int n_sup = static_cast<int>(response.size()) - 1;
    cache.lm_logits.resize(n_sup, cfg_.vocab_size);
    cache.clm = 0.0;
    for (int i = 0; i < n_sup; ++i) {
      int row = cache.bos_row + i;
      cache.lm_logits.row(i) = cache.h.row(row) * params_.lm_w;
      TokenId target = response[static_cast<std::size_t>(i) + 1];
      cache.clm += logsumexp_row(cache.lm_logits.row(i)) -
                   cache.lm_logits(i, target);
    }
    if (!std::isfinite(cache.clm))
      throw NonFiniteActivationError("non-finite language-model loss");

    arl_forward(cache);
    cache.arl = arl_loss(cache.pred, gold, reg);
    if (!std::isfinite(cache.arl))
      throw NonFiniteActivationError("non-finite regression loss");
    return cache;
  }

  // Reverse pass. Accumulates into `grads` (no zeroing) so a batch can sum
  // sample gradients in a fixed order. clm_scale / arl_scale are the factors
  // applied to each component (loss weight / batch size); arl_scale == 0
  // skips regression backprop entirely, which is what makes the pure-CLM
  // regime the same code path with beta = 0.
  void backward(const ForwardCache& cache, const FeatureGrid& grid,
                std::span<const TokenId> prompt,
                std::span<const TokenId> response, const BoxN& gold,
                const RegWeights& reg, double clm_scale, double arl_scale,
                ParamSet& grads) const {
    Mat dh = Mat::Zero(cache.t_total, cfg_.d_model);

    // LM head.
    if (clm_scale != 0.0) {
      int n_sup = static_cast<int>(response.size()) - 1;
      for (int i = 0; i < n_sup; ++i) {
        int row = cache.bos_row + i;
        Eigen::RowVectorXd p = softmax_row(cache.lm_logits.row(i));
        p(response[static_cast<std::size_t>(i) + 1]) -= 1.0;
        p *= clm_scale;
        grads.lm_w.noalias() += cache.h.row(row).transpose() * p;
        dh.row(row).noalias() += p * params_.lm_w.transpose();
      }
    }

    // ARL head.
    if (arl_scale != 0.0) {
      auto g4 = grad_arl(cache.pred, gold, reg);
      Eigen::Vector4d dv;
      const double pc[4] = {cache.pred.x1, cache.pred.y1, cache.pred.x2,
                            cache.pred.y2};
      for (int i = 0; i < 4; ++i)
        dv(i) = arl_scale * g4[static_cast<std::size_t>(i)] * pc[i] *
                (1.0 - pc[i]);
      Vec dpooled;
      if (cfg_.head_variant == HeadVariant::kOneLayer) {
        grads.arl_w1.noalias() += cache.pooled * dv.transpose();
        grads.arl_b1 += dv;
        dpooled = params_.arl_w1 * dv;
      } else {
        grads.arl_w2.noalias() += cache.arl_a * dv.transpose();
        grads.arl_b2 += dv;
        Vec da = params_.arl_w2 * dv;
        Vec du = da.cwiseProduct(arl_hidden_grad(cache.arl_u));
        grads.arl_w1.noalias() += cache.pooled * du.transpose();
        grads.arl_b1 += du;
        dpooled = params_.arl_w1 * du;
      }
      double inv_t = 1.0 / static_cast<double>(cache.t_total);
      dh.rowwise() += (dpooled * inv_t).transpose();
    }

    // Backbone, layers in reverse.
    for (int l = cfg_.n_layers - 1; l >= 0; --l)
      layer_backward(cache, static_cast<std::size_t>(l), dh,
                     grads.layers[static_cast<std::size_t>(l)]);

    // Embeddings.
    int n_cells = cfg_.n_grid_cells();
    for (int r = 0; r < cache.t_total; ++r)
      grads.pos_embed.row(r) += dh.row(r);
    for (int r = n_cells; r < cache.t_total; ++r) {
      int text_index = r - n_cells;
      TokenId t =
          text_index < static_cast<int>(prompt.size())
              ? prompt[static_cast<std::size_t>(text_index)]
              : response[static_cast<std::size_t>(
                    text_index - static_cast<int>(prompt.size()))];
      grads.tok_embed.row(t) += dh.row(r);
    }
    grads.vis_b.col(0) += dh.topRows(n_cells).colwise().sum().transpose();
    for (int c = 0; c < n_cells; ++c) {
      Eigen::Map<const Eigen::VectorXd> feat(
          grid.cells.data() + static_cast<std::size_t>(c) * kFeatureDim,
          kFeatureDim);
      grads.vis_w.noalias() += feat * dh.row(c);
    }
  }

  // Greedy decoding: feeds grid + prompt + the growing response, emitting the
  // argmax token (lowest id wins ties) until eos or the length cap. No KV
  // cache: each step recomputes the full forward pass.
  std::vector<TokenId> decode(const FeatureGrid& grid,
                              std::span<const TokenId> prompt) const {
    std::vector<TokenId> response = {Vocab::kBos};
    while (static_cast<int>(response.size()) < cfg_.max_response_len) {
      Mat x = embed_inputs(grid, prompt, response);
      for (const auto& layer : params_.layers) run_layer(x, layer, nullptr);
      if (!x.row(x.rows() - 1).allFinite())
        throw NonFiniteActivationError("non-finite activation while decoding");
      Eigen::RowVectorXd logits = x.row(x.rows() - 1) * params_.lm_w;
      TokenId best = 0;
      double best_v = logits(0);
      for (int t = 1; t < cfg_.vocab_size; ++t)
        if (logits(t) > best_v) {  // strict: ties keep the lowest id
          best_v = logits(t);
          best = t;
        }
      response.push_back(best);
      if (best == Vocab::kEos) break;
    }
    return response;
  }

  // Backbone only: embeddings pushed through every layer, no heads.
  Mat hidden_states(const FeatureGrid& grid, std::span<const TokenId> prompt,
                    std::span<const TokenId> response) const {
    Mat x = embed_inputs(grid, prompt, response);
    for (const auto& layer : params_.layers) run_layer(x, layer, nullptr);
    return x;
  }

  // ARL prediction alone (used by head-ablation checks).
  BoxN predict_box(const FeatureGrid& grid, std::span<const TokenId> prompt,
                   std::span<const TokenId> response) const {
    ForwardCache cache;
    cache.h = hidden_states(grid, prompt, response);
    cache.t_total = static_cast<int>(cache.h.rows());
    arl_forward(cache);
    return cache.pred;
  }

  // -------------------------------------------------------------------------
  // Checkpoints: "BXLM" magic, version, config JSON (with the vocabulary
  // fingerprint), then raw little-endian fp64 tensors in visit order, then
  // optionally Adam state (step count + paired moment tensors).
  // -------------------------------------------------------------------------

  struct AdamState {
    std::uint64_t step = 0;
    ParamSet m, v;
  };

  std::string serialize(const AdamState* adam = nullptr) const {
    std::string out;
    out += "BXLM";
    append_u32(out, 1);
    nlohmann::json meta = to_json(cfg_);
    meta["vocab_fingerprint"] = hex64(Vocab::instance().fingerprint());
    std::string cfg = meta.dump();
    append_u64(out, cfg.size());
    out += cfg;
    std::uint32_t n_tensors = 0;
    params_.visit([&](const std::string&, const Mat&) { ++n_tensors; });
    append_u32(out, n_tensors);
    params_.visit([&](const std::string& name, const Mat& m) {
      append_u32(out, static_cast<std::uint32_t>(name.size()));
      out += name;
      append_u64(out, static_cast<std::uint64_t>(m.rows()));
      append_u64(out, static_cast<std::uint64_t>(m.cols()));
      append_doubles(out, m);
    });
    out += adam ? '\x01' : '\x00';
    if (adam) {
      append_u64(out, adam->step);
      adam->m.visit(
          [&](const std::string&, const Mat& m) { append_doubles(out, m); });
      adam->v.visit(
          [&](const std::string&, const Mat& m) { append_doubles(out, m); });
    }
    return out;
  }

  void save_checkpoint(const std::filesystem::path& path,
                       const AdamState* adam = nullptr) const {
    write_file(path, serialize(adam));
  }

  // Loads a checkpoint; returns the model and, when present and requested,
  // the optimizer state.
  static Model load_checkpoint(const std::filesystem::path& path,
                               AdamState* adam_out = nullptr) {
    std::string data = read_file(path);
    std::size_t off = 0;
    auto need = [&](std::size_t n) {
      if (off + n > data.size())
        throw CheckpointMismatchError("checkpoint truncated: " +
                                      path.string());
    };
    need(8);
    if (std::memcmp(data.data(), "BXLM", 4) != 0)
      throw CheckpointMismatchError("bad checkpoint magic: " + path.string());
    off = 4;
    std::uint32_t version = read_u32(data, off);
    if (version != 1)
      throw CheckpointMismatchError("unsupported checkpoint version " +
                                    std::to_string(version));
    need(8);
    std::uint64_t cfg_len = read_u64(data, off);
    need(cfg_len);
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(data.substr(off, cfg_len));
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointMismatchError(std::string("checkpoint config: ") +
                                    e.what());
    }
    off += cfg_len;
    std::string fp = meta.value("vocab_fingerprint", "");
    if (fp != hex64(Vocab::instance().fingerprint()))
      throw CheckpointMismatchError(
          "checkpoint was trained with a different vocabulary");
    Model model(model_config_from_json(meta));

    need(4);
    std::uint32_t n_tensors = read_u32(data, off);
    std::uint32_t expected = 0;
    model.params_.visit([&](const std::string&, const Mat&) { ++expected; });
    if (n_tensors != expected)
      throw CheckpointMismatchError("checkpoint tensor count mismatch");
    model.params_.visit([&](const std::string& name, Mat& m) {
      need(4);
      std::uint32_t name_len = read_u32(data, off);
      need(name_len);
      std::string got = data.substr(off, name_len);
      off += name_len;
      if (got != name)
        throw CheckpointMismatchError("tensor order mismatch: expected " +
                                      name + ", found " + got);
      need(16);
      auto rows = static_cast<Eigen::Index>(read_u64(data, off));
      auto cols = static_cast<Eigen::Index>(read_u64(data, off));
      if (rows != m.rows() || cols != m.cols())
        throw CheckpointMismatchError("tensor shape mismatch for " + name);
      need(static_cast<std::size_t>(m.size()) * sizeof(double));
      std::memcpy(m.data(), data.data() + off,
                  static_cast<std::size_t>(m.size()) * sizeof(double));
      off += static_cast<std::size_t>(m.size()) * sizeof(double);
    });
    need(1);
    bool has_adam = data[off++] != '\x00';
    if (adam_out) {
      if (!has_adam)
        throw CheckpointMismatchError(
            "checkpoint has no optimizer state to resume from");
      need(8);
      adam_out->step = read_u64(data, off);
      adam_out->m = ParamSet::zeros(model.cfg_);
      adam_out->v = ParamSet::zeros(model.cfg_);
      for (ParamSet* s : {&adam_out->m, &adam_out->v})
        s->visit([&](const std::string& name, Mat& m) {
          need(static_cast<std::size_t>(m.size()) * sizeof(double));
          std::memcpy(m.data(), data.data() + off,
                      static_cast<std::size_t>(m.size()) * sizeof(double));
          off += static_cast<std::size_t>(m.size()) * sizeof(double);
          (void)name;
        });
    }
    return model;
  }

 private:
  void check_token(TokenId t) const {
    if (t < 0 || t >= cfg_.vocab_size)
      throw ConfigError("token id out of vocabulary: " + std::to_string(t));
  }

  static double logsumexp_row(const Eigen::RowVectorXd& z) {
    double mx = z.maxCoeff();
    return mx + std::log((z.array() - mx).exp().sum());
  }

  static Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& z) {
    double mx = z.maxCoeff();
    Eigen::ArrayXd e = (z.transpose().array() - mx).exp();
    return (e / e.sum()).matrix().transpose();
  }

  // Pre-LN residual layer, in place; optionally fills a cache.
  void run_layer(Mat& x, const ParamSet::Layer& L, LayerCache* cache) const {
    int T = static_cast<int>(x.rows());
    int d = cfg_.d_model, n_heads = cfg_.n_heads, dh = cfg_.head_dim();
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat xhat(T, d);
    Vec inv(T);
    layer_norm(x, xhat, inv);
    Mat n1 = xhat;
    n1.array().rowwise() *= L.ln1_g.col(0).transpose().array();
    n1.rowwise() += L.ln1_b.col(0).transpose();

    Mat q = (n1 * L.wq).rowwise() + L.bq.col(0).transpose();
    Mat k = (n1 * L.wk).rowwise() + L.bk.col(0).transpose();
    Mat v = (n1 * L.wv).rowwise() + L.bv.col(0).transpose();

    Mat concat(T, d);
    std::vector<Mat> attn;
    if (cache) attn.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
      auto qh = q.middleCols(h * dh, dh);
      auto kh = k.middleCols(h * dh, dh);
      auto vh = v.middleCols(h * dh, dh);
      Mat s = qh * kh.transpose() * scale;
      Mat a = Mat::Zero(T, T);
      for (int i = 0; i < T; ++i) {
        auto row = s.row(i).head(i + 1);
        double mx = row.maxCoeff();
        Eigen::ArrayXd e = (row.transpose().array() - mx).exp();
        a.row(i).head(i + 1) = (e / e.sum()).matrix().transpose();
      }
      concat.middleCols(h * dh, dh).noalias() = a * vh;
      if (cache) attn.push_back(std::move(a));
    }
    Mat x_attn = x + ((concat * L.wo).rowwise() + L.bo.col(0).transpose());

    Mat xhat2(T, d);
    Vec inv2(T);
    layer_norm(x_attn, xhat2, inv2);
    Mat n2 = xhat2;
    n2.array().rowwise() *= L.ln2_g.col(0).transpose().array();
    n2.rowwise() += L.ln2_b.col(0).transpose();

    Mat f1 = (n2 * L.w1).rowwise() + L.b1.col(0).transpose();
    Mat fa = f1.unaryExpr([](double t) { return gelu(t); });
    Mat x_out = x_attn + ((fa * L.w2).rowwise() + L.b2.col(0).transpose());

    if (cache) {
      cache->ln1_xhat = std::move(xhat);
      cache->ln1_inv = std::move(inv);
      cache->n1 = std::move(n1);
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->attn = std::move(attn);
      cache->attn_concat = std::move(concat);
      cache->x_attn = x_attn;
      cache->ln2_xhat = std::move(xhat2);
      cache->ln2_inv = std::move(inv2);
      cache->n2 = std::move(n2);
      cache->f1 = std::move(f1);
      cache->fa = std::move(fa);
      cache->x_out = x_out;
    }
    x = std::move(x_out);
  }

  static void layer_norm(const Mat& x, Mat& xhat, Vec& inv) {
    constexpr double kEps = 1e-5;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double mu = x.row(r).mean();
      double var = (x.row(r).array() - mu).square().mean();
      double iv = 1.0 / std::sqrt(var + kEps);
      inv(r) = iv;
      xhat.row(r) = (x.row(r).array() - mu) * iv;
    }
  }

  // d(loss)/dx for y = xhat * g + b given dn = d(loss)/dy.
  static Mat layer_norm_backward(const Mat& dn, const Mat& xhat,
                                 const Vec& inv, const Mat& g, Mat& dg,
                                 Mat& db) {
    Mat dxhat = dn;
    dxhat.array().rowwise() *= g.col(0).transpose().array();
    dg.col(0) += dn.cwiseProduct(xhat).colwise().sum().transpose();
    db.col(0) += dn.colwise().sum().transpose();
    Mat dx(dn.rows(), dn.cols());
    double d = static_cast<double>(dn.cols());
    for (Eigen::Index r = 0; r < dn.rows(); ++r) {
      double m1 = dxhat.row(r).sum() / d;
      double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).sum() / d;
      dx.row(r) = ((dxhat.row(r).array() - m1 -
                    xhat.row(r).array() * m2) *
                   inv(r))
                      .matrix();
    }
    return dx;
  }

  void layer_backward(const ForwardCache& cache, std::size_t l, Mat& dh,
                      ParamSet::Layer& g) const {
    const LayerCache& c = cache.layers[l];
    const ParamSet::Layer& L = params_.layers[l];
    int n_heads = cfg_.n_heads, dh_dim = cfg_.head_dim();
    double scale = 1.0 / std::sqrt(static_cast<double>(dh_dim));

    // FFN block: x_out = x_attn + fa * w2 + b2.
    Mat dfa = dh * L.w2.transpose();
    g.w2.noalias() += c.fa.transpose() * dh;
    g.b2.col(0) += dh.colwise().sum().transpose();
    Mat df1 = dfa.cwiseProduct(
        c.f1.unaryExpr([](double t) { return gelu_grad(t); }));
    g.w1.noalias() += c.n2.transpose() * df1;
    g.b1.col(0) += df1.colwise().sum().transpose();
    Mat dn2 = df1 * L.w1.transpose();
    dh += layer_norm_backward(dn2, c.ln2_xhat, c.ln2_inv, L.ln2_g, g.ln2_g,
                              g.ln2_b);

    // Attention block: x_attn = x_in + concat * wo + bo.
    Mat dconcat = dh * L.wo.transpose();
    g.wo.noalias() += c.attn_concat.transpose() * dh;
    g.bo.col(0) += dh.colwise().sum().transpose();

    Mat dq = Mat::Zero(dh.rows(), cfg_.d_model);
    Mat dk = Mat::Zero(dh.rows(), cfg_.d_model);
    Mat dv = Mat::Zero(dh.rows(), cfg_.d_model);
    for (int h = 0; h < n_heads; ++h) {
      const Mat& a = c.attn[static_cast<std::size_t>(h)];
      auto qh = c.q.middleCols(h * dh_dim, dh_dim);
      auto kh = c.k.middleCols(h * dh_dim, dh_dim);
      auto vh = c.v.middleCols(h * dh_dim, dh_dim);
      auto doh = dconcat.middleCols(h * dh_dim, dh_dim);
      Mat da = doh * vh.transpose();
      dv.middleCols(h * dh_dim, dh_dim).noalias() = a.transpose() * doh;
      // Softmax backward; rows of `a` are zero beyond the causal prefix, so
      // the full-matrix expression stays exact.
      Vec rowdot = da.cwiseProduct(a).rowwise().sum();
      Mat ds = a.cwiseProduct(da.colwise() - rowdot) * scale;
      dq.middleCols(h * dh_dim, dh_dim).noalias() = ds * kh;
      dk.middleCols(h * dh_dim, dh_dim).noalias() = ds.transpose() * qh;
    }
    g.wq.noalias() += c.n1.transpose() * dq;
    g.bq.col(0) += dq.colwise().sum().transpose();
    g.wk.noalias() += c.n1.transpose() * dk;
    g.bk.col(0) += dk.colwise().sum().transpose();
    g.wv.noalias() += c.n1.transpose() * dv;
    g.bv.col(0) += dv.colwise().sum().transpose();
    Mat dn1 = dq * L.wq.transpose() + dk * L.wk.transpose() +
              dv * L.wv.transpose();
    dh += layer_norm_backward(dn1, c.ln1_xhat, c.ln1_inv, L.ln1_g, g.ln1_g,
                              g.ln1_b);
  }

  void arl_forward(ForwardCache& cache) const {
    cache.pooled = cache.h.colwise().mean().transpose();
    if (cfg_.head_variant == HeadVariant::kOneLayer) {
      cache.arl_v =
          params_.arl_w1.transpose() * cache.pooled + params_.arl_b1.col(0);
    } else {
      cache.arl_u =
          params_.arl_w1.transpose() * cache.pooled + params_.arl_b1.col(0);
      cache.arl_a = arl_hidden_act(cache.arl_u);
      cache.arl_v =
          params_.arl_w2.transpose() * cache.arl_a + params_.arl_b2.col(0);
    }
    cache.pred = BoxN{sigmoid(cache.arl_v(0)), sigmoid(cache.arl_v(1)),
                      sigmoid(cache.arl_v(2)), sigmoid(cache.arl_v(3))};
  }

  Vec arl_hidden_act(const Vec& u) const {
    switch (cfg_.head_variant) {
      case HeadVariant::kTwoLayerRelu:
        return u.cwiseMax(0.0);
      case HeadVariant::kTwoLayerGelu:
        return u.unaryExpr([](double t) { return gelu(t); });
      case HeadVariant::kTwoLayerSigmoid:
        return u.unaryExpr([](double t) { return sigmoid(t); });
      case HeadVariant::kOneLayer:
        break;
    }
    throw ConfigError("one-layer head has no hidden activation");
  }

  Vec arl_hidden_grad(const Vec& u) const {
    switch (cfg_.head_variant) {
      case HeadVariant::kTwoLayerRelu:
        return u.unaryExpr([](double t) { return t > 0.0 ? 1.0 : 0.0; });
      case HeadVariant::kTwoLayerGelu:
        return u.unaryExpr([](double t) { return gelu_grad(t); });
      case HeadVariant::kTwoLayerSigmoid:
        return u.unaryExpr([](double t) {
          double s = sigmoid(t);
          return s * (1.0 - s);
        });
      case HeadVariant::kOneLayer:
        break;
    }
    throw ConfigError("one-layer head has no hidden activation");
  }

  static void append_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
  }
  static void append_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
  }
  static void append_doubles(std::string& out, const Mat& m) {
    out.append(reinterpret_cast<const char*>(m.data()),
               static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  static std::uint32_t read_u32(const std::string& d, std::size_t& off) {
    std::uint32_t v;
    std::memcpy(&v, d.data() + off, 4);
    off += 4;
    return v;
  }
  static std::uint64_t read_u64(const std::string& d, std::size_t& off) {
    std::uint64_t v;
    std::memcpy(&v, d.data() + off, 8);
    off += 8;
    return v;
  }

  ModelConfig cfg_;
  ParamSet params_;
};

}  // namespace boxlm
