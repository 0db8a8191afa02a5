#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "magfuse/rng.hpp"
#include "magfuse/tensor.hpp"

namespace magfuse {

// Epsilon shared by every layer norm in the model.
inline constexpr double kLayerNormEps = 1e-5;

// Multimodal Adaptation Gate: per token, visual and acoustic features are
// gated into a displacement vector that shifts the lexical hidden state. The
// shift is norm-capped so the lexical vector always dominates:
//
//   g_v = relu([h ; v] W_gv + b_gv)         g_a = relu([h ; a] W_ga + b_ga)
//   H   = g_v (*) (v W_v) + g_a (*) (a W_a) + b_h
//   alpha = min(beta * |h| / (|H| + eps), 1)
//   out = dropout(layer_norm(h + alpha * H))
//
// With lexical_in_gate false the gates see zeros in place of h.
struct MagConfig {
  std::size_t d_model = 32;
  std::size_t d_visual = 0;
  std::size_t d_acoustic = 0;
  double beta = 1.0;
  double eps = 1e-6;
  double dropout_p = 0.5;
  std::vector<std::size_t> apply_at_layers = {0};
  bool lexical_in_gate = true;

  void validate(std::size_t n_layers) const;
};

struct MagWeights {
  Tensor w_gv;     // [(d_model + d_visual) x d_model]
  Tensor b_gv;     // [d_model]
  Tensor w_ga;     // [(d_model + d_acoustic) x d_model]
  Tensor b_ga;     // [d_model]
  Tensor w_v;      // [d_visual x d_model]
  Tensor w_a;      // [d_acoustic x d_model]
  Tensor b_h;      // [d_model]
  Tensor ln_gain;  // [d_model]
  Tensor ln_bias;  // [d_model]
};

MagWeights init_mag_weights(const MagConfig& cfg, Rng& rng);

// Intermediate values, exposed so tests (and the gate ablation checks) can
// inspect the gates, displacement and cap directly.
struct MagParts {
  Tensor gate_v;        // [L x d_model]
  Tensor gate_a;        // [L x d_model]
  Tensor displacement;  // [L x d_model]
  Tensor alpha;         // [L x 1]
};

MagParts mag_parts(Graph& g, const Tensor& h, const Tensor& v, const Tensor& a,
                   const MagWeights& w, const MagConfig& cfg);

Tensor mag_forward(Graph& g, const Tensor& h, const Tensor& v, const Tensor& a,
                   const MagWeights& w, const MagConfig& cfg, bool training, Rng& rng);

// Closed-form cap for a single position; the graph path computes the same
// quantity through differentiable ops.
double shift_magnitude(std::span<const double> h_row, std::span<const double> disp_row,
                       const MagConfig& cfg);

}  // namespace magfuse
