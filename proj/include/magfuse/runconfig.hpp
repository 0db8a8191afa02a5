#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "magfuse/data.hpp"
#include "magfuse/model.hpp"
#include "magfuse/train.hpp"

namespace magfuse {

// A fully merged training run configuration. Precedence: command-line
// overrides > config file > built-in defaults; the seed additionally falls
// back to the MAGFUSE_SEED environment variable before the default of 42.
// model.encoder.vocab_size and the mag feature dims stay 0 here; they are
// derived from the data at train time.
struct RunSettings {
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;
};

RunSettings load_run_settings(const std::optional<std::filesystem::path>& config_file,
                              const std::vector<std::string>& overrides,
                              std::optional<std::uint64_t> cli_seed);

// The merged values as JSON, for the resolved_config.json snapshot.
nlohmann::json run_settings_to_json(const RunSettings& settings);

// Applies one "dotted.key=value" override; value is parsed as JSON when
// possible and kept as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Seed precedence shared by all subcommands.
std::uint64_t resolve_seed(std::optional<std::uint64_t> cli_seed,
                           std::optional<std::uint64_t> file_seed);

// FNV-1a 64-bit digest of a file, as "fnv1a64:<hex>"; used for corpus
// manifests.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace magfuse
