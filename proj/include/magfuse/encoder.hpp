#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "magfuse/mag.hpp"
#include "magfuse/rng.hpp"
#include "magfuse/tensor.hpp"

namespace magfuse {

// Two position-encoding variants: learned absolute position embeddings added
// at the embedding layer, or a learned relative attention-logit bias b[i-j]
// (clipped to +-max_seq_len) with no absolute positions.
enum class PositionEncoding { absolute, relative_bias };

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 64;
  std::size_t max_seq_len = 64;
  PositionEncoding variant = PositionEncoding::absolute;
  double dropout_p = 0.5;

  void validate() const;
};

// true = real token, false = padding.
using PaddingMask = std::vector<bool>;

struct EncoderLayerWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gain, ln1_bias;
  Tensor w1, b1, w2, b2;
  Tensor ln2_gain, ln2_bias;
  Tensor rel_bias;  // [2*max_seq_len + 1], relative_bias variant only
};

struct EncoderWeights {
  Tensor token_embed;  // [vocab_size x d_model]
  Tensor pos_embed;    // [max_seq_len x d_model], absolute variant only
  std::vector<EncoderLayerWeights> layers;
};

EncoderWeights init_encoder_weights(const EncoderConfig& cfg, Rng& rng);

// Embedding lookup; the absolute variant adds position rows here.
Tensor embed(Graph& g, std::span<const std::size_t> token_ids,
             const EncoderWeights& w, const EncoderConfig& cfg);

// Multi-head scaled dot-product self-attention. Padding positions receive
// exactly zero attention weight.
Tensor attention(Graph& g, const Tensor& x, const PaddingMask& mask,
                 const EncoderLayerWeights& layer, const EncoderConfig& cfg);

// Attention weights of one head, for inspection in tests.
Tensor attention_head_probs(Graph& g, const Tensor& x, const PaddingMask& mask,
                            const EncoderLayerWeights& layer, const EncoderConfig& cfg,
                            std::size_t head);

// One post-norm block: attention, add & norm, feed-forward, add & norm.
Tensor encoder_layer(Graph& g, const Tensor& x, const PaddingMask& mask,
                     const EncoderLayerWeights& layer, const EncoderConfig& cfg,
                     bool training, Rng& rng);

// Full stack. When mag_weights/mag_cfg are given, the adaptation gate is
// applied to the hidden state immediately before each layer listed in
// mag_cfg->apply_at_layers; visual/acoustic must then be word-aligned with
// the token sequence. Without them the nonlexical streams are ignored.
Tensor encoder_forward(Graph& g, std::span<const std::size_t> token_ids,
                       const Tensor& visual, const Tensor& acoustic,
                       const PaddingMask& mask, const EncoderWeights& w,
                       const EncoderConfig& cfg, const MagWeights* mag_weights,
                       const MagConfig* mag_cfg, bool training, Rng& rng);

}  // namespace magfuse
