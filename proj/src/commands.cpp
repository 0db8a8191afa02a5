#include "magfuse/commands.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "magfuse/highlight.hpp"
#include "magfuse/train.hpp"

namespace magfuse {

using nlohmann::json;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_resolved_config(const std::filesystem::path& dir, const json& j) {
  write_text(dir / "resolved_config.json", j.dump(2) + "\n");
}

void require_exists(const std::filesystem::path& path, const char* what) {
  if (!std::filesystem::exists(path))
    throw DataError(std::string(what) + " not found: " + path.string());
}

void check_feature_dims(const Corpus& corpus, const ModelConfig& cfg) {
  if (!cfg.mag_enabled) return;
  if (corpus.d_visual != cfg.mag.d_visual || corpus.d_acoustic != cfg.mag.d_acoustic)
    throw DataError("data feature dims (visual " + std::to_string(corpus.d_visual) +
                    ", acoustic " + std::to_string(corpus.d_acoustic) +
                    ") do not match checkpoint dims (visual " +
                    std::to_string(cfg.mag.d_visual) + ", acoustic " +
                    std::to_string(cfg.mag.d_acoustic) + ")");
}

}  // namespace

std::string cmd_gen(const GenOptions& opts) {
  if (opts.n < 1) throw ConfigError("gen: --n must be >= 1");
  opts.gen.validate();
  const std::uint64_t seed = resolve_seed(opts.seed, std::nullopt);
  const Corpus corpus = generate_synthetic(opts.n, seed, opts.gen);

  std::filesystem::create_directories(opts.out_dir);
  const auto corpus_path = opts.out_dir / "corpus.jsonl";
  write_jsonl(corpus, corpus_path);

  json gen_cfg;
  gen_cfg["l_min"] = opts.gen.l_min;
  gen_cfg["l_max"] = opts.gen.l_max;
  gen_cfg["d_visual"] = opts.gen.d_visual;
  gen_cfg["d_acoustic"] = opts.gen.d_acoustic;
  gen_cfg["w_text"] = opts.gen.w_text;
  gen_cfg["w_visual"] = opts.gen.w_visual;
  gen_cfg["w_acoustic"] = opts.gen.w_acoustic;
  gen_cfg["sigma"] = opts.gen.sigma;

  json manifest;
  manifest["n"] = opts.n;
  manifest["seed"] = seed;
  manifest["config"] = gen_cfg;
  manifest["checksum"] = file_checksum(corpus_path);
  manifest["corpus"] = "corpus.jsonl";
  write_text(opts.out_dir / "manifest.json", manifest.dump(2) + "\n");

  json resolved;
  resolved["command"] = "gen";
  resolved["n"] = opts.n;
  resolved["seed"] = seed;
  resolved["gen"] = gen_cfg;
  write_resolved_config(opts.out_dir, resolved);

  return manifest.dump();
}

std::string cmd_train(const TrainOptions& opts) {
  require_exists(opts.data, "data file");
  if (opts.config_file) require_exists(*opts.config_file, "config file");
  RunSettings settings = load_run_settings(opts.config_file, opts.overrides, opts.seed);

  const Corpus corpus = parse_jsonl(opts.data);
  const Splits splits = split(corpus, settings.split);

  settings.model.encoder.vocab_size = splits.train.vocab.size();
  settings.model.mag.d_visual = corpus.d_visual;
  settings.model.mag.d_acoustic = corpus.d_acoustic;
  settings.model.validate();

  std::filesystem::create_directories(opts.out_dir);
  json resolved = run_settings_to_json(settings);
  resolved["command"] = "train";
  resolved["data"] = opts.data.string();
  resolved["derived"] = {{"vocab_size", settings.model.encoder.vocab_size},
                         {"d_visual", corpus.d_visual},
                         {"d_acoustic", corpus.d_acoustic},
                         {"n_train", splits.train.instances.size()},
                         {"n_val", splits.val.instances.size()},
                         {"n_test", splits.test.instances.size()}};
  write_resolved_config(opts.out_dir, resolved);

  SentimentModel model(settings.model, settings.train.seed ^ 0x9e3779b97f4a7c15ULL);
  const TrainResult result = train(model, splits.train, splits.val, settings.train);

  result.log.write_jsonl(opts.out_dir / "runlog.jsonl");
  result.log.write_csv(opts.out_dir / "runlog.csv");
  save_checkpoint(model, splits.train.vocab, opts.out_dir / "checkpoint");

  json summary;
  summary["best_epoch"] = result.best_epoch;
  summary["best_val_mae"] = result.best_val_mae;
  summary["epochs_run"] = result.log.epochs.size();
  summary["checkpoint"] = (opts.out_dir / "checkpoint").string();
  if (!result.log.epochs.empty()) {
    const auto& best = result.log.epochs[static_cast<std::size_t>(result.best_epoch - 1)];
    summary["val"] = json::parse(best.val.to_json());
  }
  return summary.dump();
}

std::string cmd_eval(const EvalOptions& opts) {
  require_exists(opts.checkpoint_dir, "checkpoint");
  require_exists(opts.data, "data file");
  const LoadedCheckpoint loaded = load_checkpoint(opts.checkpoint_dir);
  const SentimentModel model = model_from_checkpoint(loaded);
  const Corpus corpus = parse_jsonl(opts.data);
  check_feature_dims(corpus, model.config());

  const MetricsReport report = evaluate_model(model, corpus, loaded.vocab);
  const std::string report_json = report.to_json();

  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    write_text(*opts.out_dir / "metrics.json", report_json + "\n");
    json resolved;
    resolved["command"] = "eval";
    resolved["checkpoint"] = opts.checkpoint_dir.string();
    resolved["data"] = opts.data.string();
    write_resolved_config(*opts.out_dir, resolved);
  }
  return report_json;
}

std::string cmd_highlight(const HighlightOptions& opts) {
  require_exists(opts.checkpoint_dir, "checkpoint");
  require_exists(opts.stream, "stream file");
  if (opts.threshold.has_value() == opts.quantile.has_value())
    throw ConfigError("highlight: give exactly one of --threshold or --quantile");

  const LoadedCheckpoint loaded = load_checkpoint(opts.checkpoint_dir);
  const SentimentModel model = model_from_checkpoint(loaded);
  const Corpus corpus = parse_jsonl(opts.stream);
  check_feature_dims(corpus, model.config());
  const Stream stream = Stream::concatenate(corpus);

  const std::vector<WindowScore> raw =
      score_stream(stream, model, loaded.vocab, opts.window_len, opts.stride);

  std::vector<ScoredWindow> windows(raw.size());
  std::vector<double> scores(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double s = opts.positive_only ? raw[i].intensity : std::fabs(raw[i].intensity);
    windows[i] = {raw[i].start_step, raw[i].end_step, s};
    scores[i] = s;
  }
  const double threshold =
      opts.threshold ? *opts.threshold : quantile_threshold(scores, *opts.quantile);

  std::vector<HighlightSegment> segments =
      segment(windows, threshold, opts.min_gap, opts.min_len);
  attach_times(segments, stream);
  const std::string segments_json = segments_to_json(segments);

  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    write_text(*opts.out_dir / "segments.json", segments_json + "\n");
    write_text(*opts.out_dir / "segments.csv", segments_to_csv(segments));
    json resolved;
    resolved["command"] = "highlight";
    resolved["checkpoint"] = opts.checkpoint_dir.string();
    resolved["stream"] = opts.stream.string();
    resolved["window"] = opts.window_len;
    resolved["stride"] = opts.stride;
    if (opts.threshold) resolved["threshold"] = *opts.threshold;
    if (opts.quantile) resolved["quantile"] = *opts.quantile;
    resolved["resolved_threshold"] = threshold;
    resolved["min_gap"] = opts.min_gap;
    resolved["min_len"] = opts.min_len;
    resolved["positive_only"] = opts.positive_only;
    write_resolved_config(*opts.out_dir, resolved);
  }
  return segments_json;
}

}  // namespace magfuse
