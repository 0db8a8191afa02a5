#include "magfuse/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace magfuse {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw ConfigError("train: dropout_p must be in [0, 1)");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
    throw ConfigError("train: adam betas must be in [0, 1)");
  if (adam_eps <= 0.0) throw ConfigError("train: adam_eps must be > 0");
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
               const TrainConfig& cfg) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].second.size(), 0.0);
      state.v[i].assign(params[i].second.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    auto& w = p.mutable_data();
    if (state.m[i].size() != w.size())
      throw ShapeError("adam_step: parameter '" + name + "' changed size");
    const auto g = p.grad();
    if (!g.empty() && g.size() != w.size())
      throw ShapeError("adam_step: gradient size mismatch for '" + name + "'");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * gk;
      v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * gk * gk;
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

namespace {

Tensor instance_loss(Graph& g, const SentimentModel& model, const EncodedInstance& inst,
                     const TrainConfig& cfg, Rng& rng) {
  const Prediction pred = model.forward(g, inst, /*training=*/true, rng);
  const Tensor diff = g.sub(pred.intensity, Tensor::scalar(inst.label));
  Tensor loss = cfg.loss == LossKind::mae ? g.abs(diff) : g.mul(diff, diff);
  if (pred.emotions && inst.emotions) {
    std::vector<double> target(inst.emotions->begin(), inst.emotions->end());
    const Tensor ediff =
        g.sub(*pred.emotions, Tensor::from_data({1, 6}, std::move(target)));
    const Tensor eloss =
        cfg.loss == LossKind::mae ? g.mean(g.abs(ediff)) : g.mean(g.mul(ediff, ediff));
    loss = g.add(loss, eloss);
  }
  return loss;
}

std::vector<double> snapshot(const std::vector<std::pair<std::string, Tensor>>& params) {
  std::vector<double> flat;
  for (const auto& [name, p] : params) {
    auto d = p.data();
    flat.insert(flat.end(), d.begin(), d.end());
  }
  return flat;
}

void restore_flat(std::vector<std::pair<std::string, Tensor>>& params,
                  const std::vector<double>& flat) {
  std::size_t off = 0;
  for (auto& [name, p] : params) {
    auto& w = p.mutable_data();
    std::copy(flat.begin() + off, flat.begin() + off + w.size(), w.begin());
    off += w.size();
  }
}

}  // namespace

TrainResult train(SentimentModel& model, const Corpus& train_corpus,
                  const Corpus& val_corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (train_corpus.instances.empty() || val_corpus.instances.empty())
    throw DataError("train: train and val splits must be nonempty");

  const Vocabulary& vocab = train_corpus.vocab;
  std::vector<EncodedInstance> encoded;
  encoded.reserve(train_corpus.instances.size());
  for (const auto& inst : train_corpus.instances)
    encoded.push_back(encode_instance(inst, vocab));

  Rng rng(cfg.seed);
  AdamState adam;
  TrainResult result;
  std::vector<double> best_weights;
  double best_mae = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Graph g;
      Tensor batch_loss;
      try {
        for (std::size_t i = start; i < end; ++i) {
          const Tensor li = instance_loss(g, model, encoded[order[i]], cfg, rng);
          batch_loss = batch_loss.defined() ? g.add(batch_loss, li) : li;
        }
        batch_loss = g.scale(batch_loss, 1.0 / static_cast<double>(end - start));
        g.backward(batch_loss);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      adam_step(model.parameters(), adam, cfg);
      ++result.optimizer_steps;
      model.zero_grads();
      loss_sum += batch_loss.value() * static_cast<double>(end - start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val = evaluate_model(model, val_corpus, vocab);
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
            .count();
    result.log.epochs.push_back(rec);

    if (rec.val.mae < best_mae) {
      best_mae = rec.val.mae;
      result.best_epoch = epoch;
      best_weights = snapshot(model.parameters());
    }
  }

  restore_flat(model.parameters(), best_weights);
  result.best_val_mae = best_mae;
  return result;
}

namespace {

json epoch_to_json(const EpochRecord& rec) {
  json j;
  j["epoch"] = rec.epoch;
  j["train_loss"] = rec.train_loss;
  j["val"] = json::parse(rec.val.to_json());
  j["wall_time_s"] = rec.wall_time_s;
  return j;
}

}  // namespace

void RunLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& rec : epochs) out << epoch_to_json(rec).dump() << "\n";
}

void RunLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,train_loss,val_accuracy,val_f1,val_mae,val_corr,wall_time_s\n";
  std::ostringstream oss;
  oss.precision(17);
  for (const auto& rec : epochs) {
    oss.str("");
    oss << rec.epoch << "," << rec.train_loss << "," << rec.val.accuracy << ","
        << rec.val.f1 << "," << rec.val.mae << ",";
    if (rec.val.corr) oss << *rec.val.corr;
    oss << "," << rec.wall_time_s << "\n";
    out << oss.str();
  }
}

void save_checkpoint(const SentimentModel& model, const Vocabulary& vocab,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format_version"] = 1;
  manifest["model_config"] = model.config().to_json();
  manifest["vocabulary"] = vocab.tokens();
  json params = json::array();
  for (const auto& [name, p] : model.parameters())
    params.push_back({{"name", name}, {"shape", p.shape()}});
  manifest["params"] = params;

  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw DataError("cannot write " + (dir / "manifest.json").string());
  mf << manifest.dump(2) << "\n";

  std::ofstream wf(dir / "weights.bin", std::ios::binary);
  if (!wf) throw DataError("cannot write " + (dir / "weights.bin").string());
  for (const auto& [name, p] : model.parameters()) {
    auto d = p.data();
    wf.write(reinterpret_cast<const char*>(d.data()),
             static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw DataError("cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw DataError("checkpoint manifest: " + std::string(e.what()));
  }
  if (!manifest.contains("format_version") || manifest["format_version"] != 1)
    throw DataError("checkpoint: unknown format version");

  LoadedCheckpoint loaded;
  loaded.config = ModelConfig::from_json(manifest.at("model_config"));

  const auto tokens = manifest.at("vocabulary").get<std::vector<std::string>>();
  if (tokens.empty() || tokens[0] != "<unk>")
    throw DataError("checkpoint: vocabulary must start with <unk>");
  for (std::size_t i = 1; i < tokens.size(); ++i) loaded.vocab.add(tokens[i]);

  std::size_t total = 0;
  std::vector<std::pair<std::string, Shape>> entries;
  for (const auto& pj : manifest.at("params")) {
    const std::string name = pj.at("name").get<std::string>();
    const Shape shape = pj.at("shape").get<Shape>();
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    total += n;
    entries.emplace_back(name, shape);
  }

  std::ifstream wf(dir / "weights.bin", std::ios::binary | std::ios::ate);
  if (!wf) throw DataError("cannot open " + (dir / "weights.bin").string());
  const std::size_t bytes = static_cast<std::size_t>(wf.tellg());
  if (bytes != total * sizeof(double))
    throw DataError("checkpoint payload length mismatch: expected " +
                    std::to_string(total * sizeof(double)) + " bytes, found " +
                    std::to_string(bytes));
  wf.seekg(0);
  std::vector<double> payload(total);
  wf.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(bytes));
  if (!wf) throw DataError("checkpoint: failed to read weights.bin");

  std::size_t off = 0;
  for (auto& [name, shape] : entries) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> values(payload.begin() + off, payload.begin() + off + n);
    loaded.params.emplace_back(name, Tensor::from_data(shape, std::move(values)));
    off += n;
  }
  return loaded;
}

SentimentModel model_from_checkpoint(const LoadedCheckpoint& loaded) {
  SentimentModel model(loaded.config, /*init_seed=*/0);
  model.restore(loaded.params);
  return model;
}

}  // namespace magfuse
