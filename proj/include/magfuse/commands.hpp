#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "magfuse/data.hpp"
#include "magfuse/runconfig.hpp"

namespace magfuse {

// Subcommand implementations shared by the CLI binary and the python module.
// Each writes every artifact under its output directory (when one is given)
// including a resolved_config.json snapshot, and returns the primary result
// as a JSON string for printing.

struct GenOptions {
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  GenConfig gen;
  std::filesystem::path out_dir;
};

// Writes corpus.jsonl plus manifest.json (seed, config, checksum).
std::string cmd_gen(const GenOptions& opts);

struct TrainOptions {
  std::optional<std::filesystem::path> config_file;
  std::vector<std::string> overrides;  // dotted.key=value
  std::optional<std::uint64_t> seed;
  std::filesystem::path data;
  std::filesystem::path out_dir;
};

// Writes checkpoint/, runlog.jsonl, runlog.csv, resolved_config.json; returns
// a summary (best epoch and its validation metrics).
std::string cmd_train(const TrainOptions& opts);

struct EvalOptions {
  std::filesystem::path checkpoint_dir;
  std::filesystem::path data;
  std::optional<std::filesystem::path> out_dir;
};

// Returns the MetricsReport JSON; also writes metrics.json when out_dir is given.
std::string cmd_eval(const EvalOptions& opts);

struct HighlightOptions {
  std::filesystem::path checkpoint_dir;
  std::filesystem::path stream;
  std::size_t window_len = 16;
  std::size_t stride = 1;
  std::optional<double> threshold;  // exactly one of threshold/quantile
  std::optional<double> quantile;
  std::size_t min_gap = 0;
  std::size_t min_len = 0;
  bool positive_only = false;  // score = intensity instead of |intensity|
  std::optional<std::filesystem::path> out_dir;
};

// Returns the segments JSON array; also writes segments.json/segments.csv
// when out_dir is given.
std::string cmd_highlight(const HighlightOptions& opts);

}  // namespace magfuse
