#include "magfuse/mag.hpp"

#include <algorithm>
#include <cmath>

namespace magfuse {

void MagConfig::validate(std::size_t n_layers) const {
  if (d_model < 1 || d_visual < 1 || d_acoustic < 1)
    throw ConfigError("mag: dims must be positive");
  if (beta < 0.0) throw ConfigError("mag: beta must be >= 0");
  if (eps <= 0.0) throw ConfigError("mag: eps must be > 0");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw ConfigError("mag: dropout_p must be in [0, 1)");
  if (apply_at_layers.empty())
    throw ConfigError("mag: apply_at_layers must name at least one layer");
  for (std::size_t l : apply_at_layers)
    if (l >= n_layers)
      throw ConfigError("mag: apply_at_layers entry " + std::to_string(l) +
                        " out of range for " + std::to_string(n_layers) + " layers");
}

MagWeights init_mag_weights(const MagConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model, dv = cfg.d_visual, da = cfg.d_acoustic;
  MagWeights w;
  w.w_gv = xavier_uniform({d + dv, d}, d + dv, d, rng);
  w.b_gv = zeros_param({d});
  w.w_ga = xavier_uniform({d + da, d}, d + da, d, rng);
  w.b_ga = zeros_param({d});
  w.w_v = xavier_uniform({dv, d}, dv, d, rng);
  w.w_a = xavier_uniform({da, d}, da, d, rng);
  w.b_h = zeros_param({d});
  w.ln_gain = full_param({d}, 1.0);
  w.ln_bias = zeros_param({d});
  return w;
}

namespace {

void check_mag_shapes(const Tensor& h, const Tensor& v, const Tensor& a,
                      const MagConfig& cfg) {
  if (h.rank() != 2 || v.rank() != 2 || a.rank() != 2)
    throw ShapeError("mag: h, v, a must be matrices");
  if (h.rows() != v.rows() || h.rows() != a.rows())
    throw ShapeError("mag: sequence lengths differ: h " + shape_str(h.shape()) +
                     ", v " + shape_str(v.shape()) + ", a " + shape_str(a.shape()));
  if (h.cols() != cfg.d_model)
    throw ShapeError("mag: hidden dim " + std::to_string(h.cols()) +
                     " != configured d_model " + std::to_string(cfg.d_model));
  if (v.cols() != cfg.d_visual)
    throw ShapeError("mag: visual dim " + std::to_string(v.cols()) +
                     " != configured d_visual " + std::to_string(cfg.d_visual));
  if (a.cols() != cfg.d_acoustic)
    throw ShapeError("mag: acoustic dim " + std::to_string(a.cols()) +
                     " != configured d_acoustic " + std::to_string(cfg.d_acoustic));
}

}  // namespace

MagParts mag_parts(Graph& g, const Tensor& h, const Tensor& v, const Tensor& a,
                   const MagWeights& w, const MagConfig& cfg) {
  check_mag_shapes(h, v, a, cfg);
  const Tensor gate_lex = cfg.lexical_in_gate ? h : Tensor::zeros(h.shape());

  MagParts parts;
  parts.gate_v = g.relu(g.add(g.matmul(g.concat_last(gate_lex, v), w.w_gv), w.b_gv));
  parts.gate_a = g.relu(g.add(g.matmul(g.concat_last(gate_lex, a), w.w_ga), w.b_ga));
  parts.displacement = g.add(g.add(g.mul(parts.gate_v, g.matmul(v, w.w_v)),
                                   g.mul(parts.gate_a, g.matmul(a, w.w_a))),
                             w.b_h);
  const Tensor h_norms = g.row_l2_norms(h);
  const Tensor disp_norms = g.row_l2_norms(parts.displacement);
  parts.alpha = g.clamp_max(
      g.scale(g.div(h_norms, g.shift(disp_norms, cfg.eps)), cfg.beta), 1.0);
  return parts;
}

Tensor mag_forward(Graph& g, const Tensor& h, const Tensor& v, const Tensor& a,
                   const MagWeights& w, const MagConfig& cfg, bool training, Rng& rng) {
  const MagParts parts = mag_parts(g, h, v, a, w, cfg);
  const Tensor shifted = g.add(h, g.scale_rows(parts.displacement, parts.alpha));
  const Tensor normed = g.layer_norm(shifted, w.ln_gain, w.ln_bias, kLayerNormEps);
  return g.dropout(normed, cfg.dropout_p, rng, training);
}

double shift_magnitude(std::span<const double> h_row, std::span<const double> disp_row,
                       const MagConfig& cfg) {
  double hh = 0.0, dd = 0.0;
  for (double x : h_row) hh += x * x;
  for (double x : disp_row) dd += x * x;
  const double ratio = cfg.beta * std::sqrt(hh) / (std::sqrt(dd) + cfg.eps);
  return std::min(ratio, 1.0);
}

}  // namespace magfuse
