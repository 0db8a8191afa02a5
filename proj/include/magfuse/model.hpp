#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "magfuse/data.hpp"
#include "magfuse/encoder.hpp"
#include "magfuse/mag.hpp"
#include "magfuse/metrics.hpp"

namespace magfuse {

// Everything that fixes the architecture: encoder dims and variant, the
// adaptation-gate configuration and placement, and the optional emotion head.
struct ModelConfig {
  EncoderConfig encoder;
  MagConfig mag;
  bool mag_enabled = true;
  bool emotion_head = false;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// A corpus instance mapped into model inputs: vocabulary ids plus the
// word-aligned feature matrices. The mask is all-real unless the caller pads.
struct EncodedInstance {
  std::vector<std::size_t> token_ids;
  Tensor visual;    // [L x d_visual]
  Tensor acoustic;  // [L x d_acoustic]
  PaddingMask mask;
  double label = 0.0;
  std::optional<std::array<double, 6>> emotions;
};

EncodedInstance encode_instance(const MultimodalInstance& inst, const Vocabulary& vocab);

// Mean over unmasked rows -> [1 x d].
Tensor mean_pool(Graph& g, const Tensor& x, const PaddingMask& mask);

struct Prediction {
  Tensor intensity;                 // scalar
  std::optional<Tensor> emotions;   // [1 x 6], nonnegative
};

struct PredictedValues {
  double intensity = 0.0;
  std::optional<std::array<double, 6>> emotions;
};

class SentimentModel {
 public:
  SentimentModel(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }

  // Named parameters in a fixed registration order; the optimizer, the
  // checkpoint format and gradient checks all iterate this order.
  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }

  Prediction forward(Graph& g, const EncodedInstance& inst, bool training,
                     Rng& dropout_rng) const;

  // Mean-pool over unmasked positions, then the affine intensity head.
  Tensor pool_and_head(Graph& g, const Tensor& encoded, const PaddingMask& mask) const;

  // Eval-mode prediction on a no-grad graph.
  PredictedValues predict(const EncodedInstance& inst) const;

  void zero_grads();

  // Copies checkpoint values into this model's parameters; names and shapes
  // must match exactly.
  void restore(const std::vector<std::pair<std::string, Tensor>>& saved);

  const EncoderWeights& encoder_weights() const { return enc_; }
  const MagWeights& mag_weights() const { return mag_; }

 private:
  void register_params();

  ModelConfig cfg_;
  EncoderWeights enc_;
  MagWeights mag_;  // only populated when cfg_.mag_enabled
  Tensor head_w_, head_b_;
  Tensor emo_w_, emo_b_;  // only populated when cfg_.emotion_head
  std::vector<std::pair<std::string, Tensor>> params_;
};

// Eval-mode metrics of a model over a corpus (predictions vs labels, plus
// per-emotion MAE when both the head and the data carry emotions).
MetricsReport evaluate_model(const SentimentModel& model, const Corpus& corpus,
                             const Vocabulary& vocab);

}  // namespace magfuse
