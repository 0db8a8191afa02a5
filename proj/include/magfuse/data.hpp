#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "magfuse/errors.hpp"

namespace magfuse {

// One word-aligned multimodal utterance: every token has exactly one visual
// and one acoustic feature vector. Sentiment intensity lives in [-3, +3];
// the optional emotion vector holds {happiness, sadness, anger, fear,
// disgust, surprise}, each in [0, 3].
struct MultimodalInstance {
  std::string id;
  std::vector<std::string> words;
  std::vector<std::vector<double>> visual;
  std::vector<std::vector<double>> acoustic;
  double label = 0.0;
  std::optional<std::array<double, 6>> emotions;
  std::optional<double> start_time;  // seconds, for highlight streams
  std::optional<double> end_time;

  bool operator==(const MultimodalInstance&) const = default;
};

class Vocabulary {
 public:
  static constexpr std::size_t kUnknownId = 0;

  Vocabulary() : id_to_token_{"<unk>"} { token_to_id_["<unk>"] = 0; }

  static Vocabulary build(const std::vector<MultimodalInstance>& instances);

  std::size_t size() const { return id_to_token_.size(); }
  std::size_t id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnknownId : it->second;
  }
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  void add(const std::string& token);

  bool operator==(const Vocabulary& other) const {
    return id_to_token_ == other.id_to_token_;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::size_t> token_to_id_;
};

struct Corpus {
  std::vector<MultimodalInstance> instances;
  Vocabulary vocab;  // rebuilt from the train split only after split()
  std::size_t d_visual = 0;
  std::size_t d_acoustic = 0;
};

// Reads one JSON object per line; every schema invariant is enforced and
// violations carry the 1-based line number.
Corpus parse_jsonl(const std::filesystem::path& path);

std::string instance_to_json_line(const MultimodalInstance& inst);
void write_jsonl(const Corpus& corpus, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic corpus generation.
//
// Each instance carries a latent intensity u ~ uniform[-3,3]. The latent is
// split across the active modalities (those with weight > 0): channel k
// contributes c_k = w_k*u + d_k, where the decoys d_k are zero-sum across
// active channels, so the label (the sum of the contributions) is exact from
// all channels jointly while any single channel reads it only up to its
// weight. The text contribution is snapped to the sentiment-lexicon grid and
// spelled with sentiment words; the visual/acoustic contributions are planted
// in feature channel 0 with per-position Gaussian noise sigma on every
// channel.
// ---------------------------------------------------------------------------
struct GenConfig {
  std::size_t l_min = 4;
  std::size_t l_max = 12;
  std::size_t d_visual = 3;
  std::size_t d_acoustic = 3;
  double w_text = 1.0 / 3.0;
  double w_visual = 1.0 / 3.0;
  double w_acoustic = 1.0 / 3.0;
  double sigma = 0.1;

  void validate() const;
};

// Word -> planted intensity, a 0.25-spaced grid over [-3, +3].
const std::vector<std::pair<std::string, double>>& sentiment_lexicon();

// Feature channel that carries the planted visual/acoustic contribution.
inline constexpr std::size_t kSyntheticSignalChannel = 0;

// Pure function of its arguments: identical (n, seed, config) give
// byte-identical corpora.
Corpus generate_synthetic(std::size_t n, std::uint64_t seed, const GenConfig& config);

struct SplitSpec {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
  std::uint64_t seed = 42;

  void validate() const;
};

struct Splits {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Disjoint, exhaustive, deterministic under spec.seed. The train split's
// vocabulary is rebuilt from train instances only and shared with val/test;
// unseen val/test tokens map to the reserved unknown id.
Splits split(const Corpus& corpus, const SplitSpec& spec);

}  // namespace magfuse
