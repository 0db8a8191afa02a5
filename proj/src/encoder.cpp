#include "magfuse/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace magfuse {

namespace {

// Finite but far below every real logit, so exp() underflows to exactly 0
// after max-subtraction and padded keys get zero attention weight.
constexpr double kMaskLogit = -1e9;

Tensor mask_bias_matrix(std::size_t L, const PaddingMask& mask) {
  if (mask.size() != L)
    throw ShapeError("attention: mask length " + std::to_string(mask.size()) +
                     " != sequence length " + std::to_string(L));
  bool any_real = false;
  std::vector<double> bias(L * L, 0.0);
  for (std::size_t j = 0; j < L; ++j) {
    if (mask[j]) {
      any_real = true;
      continue;
    }
    for (std::size_t i = 0; i < L; ++i) bias[i * L + j] = kMaskLogit;
  }
  if (!any_real) throw DataError("attention: mask has no real positions");
  return Tensor::from_data({L, L}, std::move(bias));
}

Tensor relative_bias_matrix(Graph& g, const Tensor& rel_bias, std::size_t L,
                            std::size_t max_seq_len) {
  const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(max_seq_len);
  std::vector<std::size_t> ids(L * L);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      const std::ptrdiff_t rel = std::clamp(
          static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j), -m, m);
      ids[i * L + j] = static_cast<std::size_t>(rel + m);
    }
  const Tensor table = g.reshape(rel_bias, {2 * max_seq_len + 1, 1});
  return g.reshape(g.gather_rows(table, ids), {L, L});
}

Tensor attention_impl(Graph& g, const Tensor& x, const PaddingMask& mask,
                      const EncoderLayerWeights& layer, const EncoderConfig& cfg,
                      std::optional<std::size_t> probe_head, Tensor* probs_out) {
  if (x.rank() != 2 || x.cols() != cfg.d_model)
    throw ShapeError("attention: input must be [L x d_model], got " +
                     shape_str(x.shape()));
  const std::size_t L = x.rows();
  const std::size_t d_head = cfg.d_model / cfg.n_heads;

  const Tensor q = g.add(g.matmul(x, layer.wq), layer.bq);
  const Tensor k = g.add(g.matmul(x, layer.wk), layer.bk);
  const Tensor v = g.add(g.matmul(x, layer.wv), layer.bv);

  const Tensor mask_bias = mask_bias_matrix(L, mask);
  const bool relative = cfg.variant == PositionEncoding::relative_bias;
  Tensor rel_matrix;
  if (relative) rel_matrix = relative_bias_matrix(g, layer.rel_bias, L, cfg.max_seq_len);

  Tensor heads;
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const Tensor qh = g.slice_cols(q, h * d_head, d_head);
    const Tensor kh = g.slice_cols(k, h * d_head, d_head);
    const Tensor vh = g.slice_cols(v, h * d_head, d_head);
    Tensor logits =
        g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(d_head)));
    if (relative) logits = g.add(logits, rel_matrix);
    logits = g.add(logits, mask_bias);
    const Tensor probs = g.softmax_rows(logits);
    if (probe_head && *probe_head == h && probs_out) *probs_out = probs;
    const Tensor oh = g.matmul(probs, vh);
    heads = heads.defined() ? g.concat_last(heads, oh) : oh;
  }
  return g.add(g.matmul(heads, layer.wo), layer.bo);
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("encoder: vocab_size must be >= 1");
  if (d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1 || max_seq_len < 1)
    throw ConfigError("encoder: dims and layer counts must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("encoder: d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw ConfigError("encoder: dropout_p must be in [0, 1)");
}

EncoderWeights init_encoder_weights(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  EncoderWeights w;
  w.token_embed = xavier_uniform({cfg.vocab_size, d}, cfg.vocab_size, d, rng);
  if (cfg.variant == PositionEncoding::absolute)
    w.pos_embed = xavier_uniform({cfg.max_seq_len, d}, cfg.max_seq_len, d, rng);
  w.layers.resize(cfg.n_layers);
  for (auto& layer : w.layers) {
    layer.wq = xavier_uniform({d, d}, d, d, rng);
    layer.bq = zeros_param({d});
    layer.wk = xavier_uniform({d, d}, d, d, rng);
    layer.bk = zeros_param({d});
    layer.wv = xavier_uniform({d, d}, d, d, rng);
    layer.bv = zeros_param({d});
    layer.wo = xavier_uniform({d, d}, d, d, rng);
    layer.bo = zeros_param({d});
    layer.ln1_gain = full_param({d}, 1.0);
    layer.ln1_bias = zeros_param({d});
    layer.w1 = xavier_uniform({d, cfg.d_ff}, d, cfg.d_ff, rng);
    layer.b1 = zeros_param({cfg.d_ff});
    layer.w2 = xavier_uniform({cfg.d_ff, d}, cfg.d_ff, d, rng);
    layer.b2 = zeros_param({d});
    layer.ln2_gain = full_param({d}, 1.0);
    layer.ln2_bias = zeros_param({d});
    if (cfg.variant == PositionEncoding::relative_bias)
      layer.rel_bias = zeros_param({2 * cfg.max_seq_len + 1});
  }
  return w;
}

Tensor embed(Graph& g, std::span<const std::size_t> token_ids,
             const EncoderWeights& w, const EncoderConfig& cfg) {
  if (token_ids.empty()) throw DataError("embed: empty token sequence");
  if (token_ids.size() > cfg.max_seq_len)
    throw DataError("embed: sequence length " + std::to_string(token_ids.size()) +
                    " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  for (std::size_t id : token_ids)
    if (id >= cfg.vocab_size)
      throw DataError("embed: token id " + std::to_string(id) +
                      " out of range for vocab_size " + std::to_string(cfg.vocab_size));
  std::vector<std::size_t> ids(token_ids.begin(), token_ids.end());
  Tensor x = g.gather_rows(w.token_embed, ids);
  if (cfg.variant == PositionEncoding::absolute) {
    std::vector<std::size_t> positions(token_ids.size());
    std::iota(positions.begin(), positions.end(), 0);
    x = g.add(x, g.gather_rows(w.pos_embed, positions));
  }
  return x;
}

Tensor attention(Graph& g, const Tensor& x, const PaddingMask& mask,
                 const EncoderLayerWeights& layer, const EncoderConfig& cfg) {
  return attention_impl(g, x, mask, layer, cfg, std::nullopt, nullptr);
}

Tensor attention_head_probs(Graph& g, const Tensor& x, const PaddingMask& mask,
                            const EncoderLayerWeights& layer, const EncoderConfig& cfg,
                            std::size_t head) {
  Tensor probs;
  attention_impl(g, x, mask, layer, cfg, head, &probs);
  return probs;
}

Tensor encoder_layer(Graph& g, const Tensor& x, const PaddingMask& mask,
                     const EncoderLayerWeights& layer, const EncoderConfig& cfg,
                     bool training, Rng& rng) {
  Tensor attn = attention(g, x, mask, layer, cfg);
  attn = g.dropout(attn, cfg.dropout_p, rng, training);
  Tensor h = g.layer_norm(g.add(x, attn), layer.ln1_gain, layer.ln1_bias, kLayerNormEps);
  Tensor ff = g.add(g.matmul(g.relu(g.add(g.matmul(h, layer.w1), layer.b1)), layer.w2),
                    layer.b2);
  ff = g.dropout(ff, cfg.dropout_p, rng, training);
  return g.layer_norm(g.add(h, ff), layer.ln2_gain, layer.ln2_bias, kLayerNormEps);
}

Tensor encoder_forward(Graph& g, std::span<const std::size_t> token_ids,
                       const Tensor& visual, const Tensor& acoustic,
                       const PaddingMask& mask, const EncoderWeights& w,
                       const EncoderConfig& cfg, const MagWeights* mag_weights,
                       const MagConfig* mag_cfg, bool training, Rng& rng) {
  Tensor x = embed(g, token_ids, w, cfg);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    if (mag_weights && mag_cfg &&
        std::find(mag_cfg->apply_at_layers.begin(), mag_cfg->apply_at_layers.end(), l) !=
            mag_cfg->apply_at_layers.end())
      x = mag_forward(g, x, visual, acoustic, *mag_weights, *mag_cfg, training, rng);
    x = encoder_layer(g, x, mask, w.layers[l], cfg, training, rng);
  }
  return x;
}

}  // namespace magfuse
