#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "magfuse/commands.hpp"
#include "magfuse/errors.hpp"

namespace {

// CLI11 stores into concrete fields; optionals are detected via ->count().
struct SeedFlag {
  std::uint64_t value = 0;
  CLI::Option* opt = nullptr;
  std::optional<std::uint64_t> get() const {
    return opt->count() ? std::optional<std::uint64_t>(value) : std::nullopt;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MAG-fusion multimodal sentiment toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic multimodal corpus");
  magfuse::GenOptions gen_opts;
  SeedFlag gen_seed;
  gen->add_option("--n", gen_opts.n, "Number of instances")->required();
  gen_seed.opt = gen->add_option("--seed", gen_seed.value, "Generation seed");
  gen->add_option("-o,--out", gen_opts.out_dir, "Output directory")->required();
  gen->add_option("--l-min", gen_opts.gen.l_min, "Minimum sequence length");
  gen->add_option("--l-max", gen_opts.gen.l_max, "Maximum sequence length");
  gen->add_option("--d-visual", gen_opts.gen.d_visual, "Visual feature dim");
  gen->add_option("--d-acoustic", gen_opts.gen.d_acoustic, "Acoustic feature dim");
  gen->add_option("--w-text", gen_opts.gen.w_text, "Text modality weight");
  gen->add_option("--w-visual", gen_opts.gen.w_visual, "Visual modality weight");
  gen->add_option("--w-acoustic", gen_opts.gen.w_acoustic, "Acoustic modality weight");
  gen->add_option("--sigma", gen_opts.gen.sigma, "Feature noise stddev");

  // train
  auto* train = app.add_subcommand("train", "Train a model on a JSONL corpus");
  magfuse::TrainOptions train_opts;
  SeedFlag train_seed;
  std::string train_config;
  train->add_option("--config", train_config, "JSON config file");
  train->add_option("--set", train_opts.overrides,
                    "Config override as dotted.key=value (repeatable)");
  train_seed.opt = train->add_option("--seed", train_seed.value, "Seed override");
  train->add_option("--data", train_opts.data, "Corpus JSONL")->required();
  train->add_option("-o,--out", train_opts.out_dir, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a JSONL corpus");
  magfuse::EvalOptions eval_opts;
  std::string eval_out;
  eval->add_option("--checkpoint", eval_opts.checkpoint_dir, "Checkpoint directory")
      ->required();
  eval->add_option("--data", eval_opts.data, "Corpus JSONL")->required();
  eval->add_option("-o,--out", eval_out, "Output directory (optional)");

  // highlight
  auto* highlight =
      app.add_subcommand("highlight", "Locate high-intensity segments in a stream");
  magfuse::HighlightOptions hl_opts;
  std::string hl_out;
  double hl_threshold = 0.0, hl_quantile = 0.0;
  CLI::Option* hl_threshold_opt;
  CLI::Option* hl_quantile_opt;
  highlight->add_option("--checkpoint", hl_opts.checkpoint_dir, "Checkpoint directory")
      ->required();
  highlight->add_option("--stream", hl_opts.stream, "Stream JSONL")->required();
  highlight->add_option("--window", hl_opts.window_len, "Window length in steps")
      ->required();
  highlight->add_option("--stride", hl_opts.stride, "Window stride in steps");
  hl_threshold_opt =
      highlight->add_option("--threshold", hl_threshold, "Absolute score threshold");
  hl_quantile_opt = highlight->add_option(
      "--quantile", hl_quantile, "Derive the threshold from this score quantile");
  highlight->add_option("--min-gap", hl_opts.min_gap,
                        "Merge segments separated by fewer steps than this");
  highlight->add_option("--min-len", hl_opts.min_len,
                        "Drop segments shorter than this many steps");
  highlight->add_flag("--positive-only", hl_opts.positive_only,
                      "Score by signed intensity instead of |intensity|");
  highlight->add_option("-o,--out", hl_out, "Output directory (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      gen_opts.seed = gen_seed.get();
      std::cout << magfuse::cmd_gen(gen_opts) << "\n";
    } else if (train->parsed()) {
      if (!train_config.empty()) train_opts.config_file = train_config;
      train_opts.seed = train_seed.get();
      std::cout << magfuse::cmd_train(train_opts) << "\n";
    } else if (eval->parsed()) {
      if (!eval_out.empty()) eval_opts.out_dir = eval_out;
      std::cout << magfuse::cmd_eval(eval_opts) << "\n";
    } else if (highlight->parsed()) {
      if (!hl_out.empty()) hl_opts.out_dir = hl_out;
      if (hl_threshold_opt->count()) hl_opts.threshold = hl_threshold;
      if (hl_quantile_opt->count()) hl_opts.quantile = hl_quantile;
      std::cout << magfuse::cmd_highlight(hl_opts) << "\n";
    }
  } catch (const magfuse::Error& e) {
    std::cerr << e.class_name() << ": " << e.what() << "\n";
    return static_cast<int>(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
