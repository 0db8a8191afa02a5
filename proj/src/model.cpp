#include "magfuse/model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace magfuse {

using nlohmann::json;

void ModelConfig::validate() const {
  encoder.validate();
  if (mag_enabled) mag.validate(encoder.n_layers);
  if (mag.d_model != encoder.d_model)
    throw ConfigError("model: mag.d_model " + std::to_string(mag.d_model) +
                      " != encoder d_model " + std::to_string(encoder.d_model));
}

json ModelConfig::to_json() const {
  json j;
  j["vocab_size"] = encoder.vocab_size;
  j["d_model"] = encoder.d_model;
  j["n_heads"] = encoder.n_heads;
  j["n_layers"] = encoder.n_layers;
  j["d_ff"] = encoder.d_ff;
  j["max_seq_len"] = encoder.max_seq_len;
  j["variant"] =
      encoder.variant == PositionEncoding::absolute ? "absolute" : "relative_bias";
  j["dropout_p"] = encoder.dropout_p;
  j["emotion_head"] = emotion_head;
  json m;
  m["enabled"] = mag_enabled;
  m["d_visual"] = mag.d_visual;
  m["d_acoustic"] = mag.d_acoustic;
  m["beta"] = mag.beta;
  m["eps"] = mag.eps;
  m["dropout_p"] = mag.dropout_p;
  m["apply_at_layers"] = mag.apply_at_layers;
  m["lexical_in_gate"] = mag.lexical_in_gate;
  j["mag"] = m;
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig cfg;
  try {
    cfg.encoder.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.encoder.d_model = j.at("d_model").get<std::size_t>();
    cfg.encoder.n_heads = j.at("n_heads").get<std::size_t>();
    cfg.encoder.n_layers = j.at("n_layers").get<std::size_t>();
    cfg.encoder.d_ff = j.at("d_ff").get<std::size_t>();
    cfg.encoder.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    const std::string variant = j.at("variant").get<std::string>();
    if (variant == "absolute") cfg.encoder.variant = PositionEncoding::absolute;
    else if (variant == "relative_bias") cfg.encoder.variant = PositionEncoding::relative_bias;
    else throw ConfigError("model: unknown variant '" + variant + "'");
    cfg.encoder.dropout_p = j.at("dropout_p").get<double>();
    cfg.emotion_head = j.at("emotion_head").get<bool>();
    const json& m = j.at("mag");
    cfg.mag_enabled = m.at("enabled").get<bool>();
    cfg.mag.d_model = cfg.encoder.d_model;
    cfg.mag.d_visual = m.at("d_visual").get<std::size_t>();
    cfg.mag.d_acoustic = m.at("d_acoustic").get<std::size_t>();
    cfg.mag.beta = m.at("beta").get<double>();
    cfg.mag.eps = m.at("eps").get<double>();
    cfg.mag.dropout_p = m.at("dropout_p").get<double>();
    cfg.mag.apply_at_layers = m.at("apply_at_layers").get<std::vector<std::size_t>>();
    cfg.mag.lexical_in_gate = m.at("lexical_in_gate").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

EncodedInstance encode_instance(const MultimodalInstance& inst, const Vocabulary& vocab) {
  EncodedInstance enc;
  enc.token_ids.reserve(inst.words.size());
  for (const auto& w : inst.words) enc.token_ids.push_back(vocab.id_of(w));

  const std::size_t L = inst.words.size();
  const std::size_t dv = inst.visual.empty() ? 0 : inst.visual[0].size();
  const std::size_t da = inst.acoustic.empty() ? 0 : inst.acoustic[0].size();
  std::vector<double> vis(L * dv), aco(L * da);
  for (std::size_t i = 0; i < L; ++i) {
    std::copy(inst.visual[i].begin(), inst.visual[i].end(), vis.begin() + i * dv);
    std::copy(inst.acoustic[i].begin(), inst.acoustic[i].end(), aco.begin() + i * da);
  }
  enc.visual = Tensor::from_data({L, dv}, std::move(vis));
  enc.acoustic = Tensor::from_data({L, da}, std::move(aco));
  enc.mask.assign(L, true);
  enc.label = inst.label;
  enc.emotions = inst.emotions;
  return enc;
}

Tensor mean_pool(Graph& g, const Tensor& x, const PaddingMask& mask) {
  if (x.rank() != 2 || mask.size() != x.rows())
    throw ShapeError("mean_pool: mask length " + std::to_string(mask.size()) +
                     " != rows of " + shape_str(x.shape()));
  std::size_t n_real = 0;
  for (bool b : mask)
    if (b) ++n_real;
  if (n_real == 0) throw DataError("mean_pool: mask has no real positions");
  std::vector<double> row(mask.size(), 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) row[i] = 1.0 / static_cast<double>(n_real);
  return g.matmul(Tensor::from_data({1, mask.size()}, std::move(row)), x);
}

SentimentModel::SentimentModel(ModelConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(init_seed);
  enc_ = init_encoder_weights(cfg_.encoder, rng);
  if (cfg_.mag_enabled) mag_ = init_mag_weights(cfg_.mag, rng);
  const std::size_t d = cfg_.encoder.d_model;
  head_w_ = xavier_uniform({d, 1}, d, 1, rng);
  head_b_ = zeros_param({1});
  if (cfg_.emotion_head) {
    emo_w_ = xavier_uniform({d, 6}, d, 6, rng);
    emo_b_ = zeros_param({6});
  }
  register_params();
}

void SentimentModel::register_params() {
  params_.clear();
  auto put = [this](std::string name, const Tensor& t) {
    params_.emplace_back(std::move(name), t);
  };
  put("embed.token", enc_.token_embed);
  if (cfg_.encoder.variant == PositionEncoding::absolute) put("embed.pos", enc_.pos_embed);
  for (std::size_t l = 0; l < enc_.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    auto& lw = enc_.layers[l];
    put(p + "attn.wq", lw.wq);
    put(p + "attn.bq", lw.bq);
    put(p + "attn.wk", lw.wk);
    put(p + "attn.bk", lw.bk);
    put(p + "attn.wv", lw.wv);
    put(p + "attn.bv", lw.bv);
    put(p + "attn.wo", lw.wo);
    put(p + "attn.bo", lw.bo);
    if (cfg_.encoder.variant == PositionEncoding::relative_bias)
      put(p + "attn.rel_bias", lw.rel_bias);
    put(p + "ln1.gain", lw.ln1_gain);
    put(p + "ln1.bias", lw.ln1_bias);
    put(p + "ffn.w1", lw.w1);
    put(p + "ffn.b1", lw.b1);
    put(p + "ffn.w2", lw.w2);
    put(p + "ffn.b2", lw.b2);
    put(p + "ln2.gain", lw.ln2_gain);
    put(p + "ln2.bias", lw.ln2_bias);
  }
  if (cfg_.mag_enabled) {
    put("mag.w_gv", mag_.w_gv);
    put("mag.b_gv", mag_.b_gv);
    put("mag.w_ga", mag_.w_ga);
    put("mag.b_ga", mag_.b_ga);
    put("mag.w_v", mag_.w_v);
    put("mag.w_a", mag_.w_a);
    put("mag.b_h", mag_.b_h);
    put("mag.ln.gain", mag_.ln_gain);
    put("mag.ln.bias", mag_.ln_bias);
  }
  put("head.w", head_w_);
  put("head.b", head_b_);
  if (cfg_.emotion_head) {
    put("emotion.w", emo_w_);
    put("emotion.b", emo_b_);
  }
}

Prediction SentimentModel::forward(Graph& g, const EncodedInstance& inst, bool training,
                                   Rng& dropout_rng) const {
  const Tensor encoded = encoder_forward(
      g, inst.token_ids, inst.visual, inst.acoustic, inst.mask, enc_, cfg_.encoder,
      cfg_.mag_enabled ? &mag_ : nullptr, cfg_.mag_enabled ? &cfg_.mag : nullptr,
      training, dropout_rng);
  Prediction pred;
  const Tensor pooled = mean_pool(g, encoded, inst.mask);
  pred.intensity = g.reshape(g.add(g.matmul(pooled, head_w_), head_b_), {1});
  if (cfg_.emotion_head)
    pred.emotions = g.relu(g.add(g.matmul(pooled, emo_w_), emo_b_));
  return pred;
}

Tensor SentimentModel::pool_and_head(Graph& g, const Tensor& encoded,
                                     const PaddingMask& mask) const {
  const Tensor pooled = mean_pool(g, encoded, mask);
  return g.reshape(g.add(g.matmul(pooled, head_w_), head_b_), {1});
}

PredictedValues SentimentModel::predict(const EncodedInstance& inst) const {
  Graph g(Graph::Mode::no_grad);
  Rng unused(0);
  const Prediction p = forward(g, inst, /*training=*/false, unused);
  PredictedValues out;
  out.intensity = p.intensity.value();
  if (p.emotions) {
    std::array<double, 6> e{};
    for (std::size_t i = 0; i < 6; ++i) e[i] = p.emotions->data()[i];
    out.emotions = e;
  }
  return out;
}

void SentimentModel::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void SentimentModel::restore(const std::vector<std::pair<std::string, Tensor>>& saved) {
  if (saved.size() != params_.size())
    throw ShapeError("restore: checkpoint has " + std::to_string(saved.size()) +
                     " parameters, model has " + std::to_string(params_.size()));
  for (std::size_t i = 0; i < saved.size(); ++i) {
    auto& [name, target] = params_[i];
    const auto& [saved_name, source] = saved[i];
    if (saved_name != name)
      throw DataError("restore: parameter order mismatch: expected '" + name +
                      "', checkpoint has '" + saved_name + "'");
    if (!(source.shape() == target.shape()))
      throw ShapeError("parameter '" + name + "': checkpoint shape " +
                       shape_str(source.shape()) + " does not match model shape " +
                       shape_str(target.shape()));
    auto& dst = target.mutable_data();
    auto src = source.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

MetricsReport evaluate_model(const SentimentModel& model, const Corpus& corpus,
                             const Vocabulary& vocab) {
  std::vector<double> preds, labels;
  preds.reserve(corpus.instances.size());
  labels.reserve(corpus.instances.size());
  std::array<double, 6> emo_err{};
  std::size_t emo_count = 0;
  for (const auto& inst : corpus.instances) {
    const EncodedInstance enc = encode_instance(inst, vocab);
    const PredictedValues pv = model.predict(enc);
    preds.push_back(pv.intensity);
    labels.push_back(inst.label);
    if (pv.emotions && inst.emotions) {
      for (std::size_t k = 0; k < 6; ++k)
        emo_err[k] += std::fabs((*pv.emotions)[k] - (*inst.emotions)[k]);
      ++emo_count;
    }
  }
  MetricsReport report = compute_metrics(preds, labels);
  if (emo_count > 0) {
    for (auto& e : emo_err) e /= static_cast<double>(emo_count);
    report.emotion_mae = emo_err;
  }
  return report;
}

}  // namespace magfuse
