#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "magfuse/data.hpp"
#include "magfuse/metrics.hpp"
#include "magfuse/model.hpp"

namespace magfuse {

enum class LossKind { mae, mse };

struct TrainConfig {
  int epochs = 40;
  double learning_rate = 1e-5;  // fine-tuning default; toy recipes use 1e-3
  double dropout_p = 0.5;
  int batch_size = 8;
  std::uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LossKind loss = LossKind::mae;

  void validate() const;
};

// First/second moment buffers per parameter, in registry order.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

// One bias-corrected Adam update over all parameters. A parameter without a
// populated gradient is treated as having gradient zero.
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
               const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  MetricsReport val;
  double wall_time_s = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;

  void write_jsonl(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  RunLog log;
  int best_epoch = 0;  // epoch whose weights the model ends up holding
  double best_val_mae = 0.0;
  std::size_t optimizer_steps = 0;
};

// Runs the full loop: deterministic per-epoch shuffling from cfg.seed,
// per-epoch validation metrics, and best-val-MAE weight selection (the model
// is left holding the best epoch's weights).
TrainResult train(SentimentModel& model, const Corpus& train_corpus,
                  const Corpus& val_corpus, const TrainConfig& cfg);

// Checkpoint directory: manifest.json (format version, config snapshot,
// vocabulary, ordered parameter names + shapes) plus weights.bin (the raw
// parameter payload, 64-bit little-endian reals in manifest order).
void save_checkpoint(const SentimentModel& model, const Vocabulary& vocab,
                     const std::filesystem::path& dir);

struct LoadedCheckpoint {
  ModelConfig config;
  Vocabulary vocab;
  std::vector<std::pair<std::string, Tensor>> params;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

SentimentModel model_from_checkpoint(const LoadedCheckpoint& loaded);

}  // namespace magfuse
