#include "magfuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "magfuse/rng.hpp"

namespace magfuse {

using nlohmann::json;

namespace {

[[noreturn]] void line_error(std::size_t line_no, const std::string& msg) {
  throw DataError("line " + std::to_string(line_no) + ": " + msg);
}

double finite_number(const json& j, std::size_t line_no, const char* field) {
  if (!j.is_number()) line_error(line_no, std::string(field) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) line_error(line_no, std::string(field) + " is not finite");
  return v;
}

std::vector<std::vector<double>> feature_stream(const json& j, std::size_t line_no,
                                                const char* field) {
  if (!j.is_array()) line_error(line_no, std::string(field) + " must be an array");
  std::vector<std::vector<double>> out;
  out.reserve(j.size());
  for (const auto& row : j) {
    if (!row.is_array())
      line_error(line_no, std::string(field) + " must be an array of vectors");
    std::vector<double> v;
    v.reserve(row.size());
    for (const auto& x : row) v.push_back(finite_number(x, line_no, field));
    if (v.empty()) line_error(line_no, std::string(field) + " vectors must be non-empty");
    out.push_back(std::move(v));
  }
  return out;
}

MultimodalInstance instance_from_json(const json& j, std::size_t line_no) {
  if (!j.is_object()) line_error(line_no, "expected a JSON object");
  static const std::vector<std::string> known = {
      "id", "words", "visual", "acoustic", "label", "emotions", "start_time", "end_time"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      line_error(line_no, "unknown field '" + it.key() + "'");
  for (const char* req : {"id", "words", "visual", "acoustic", "label"})
    if (!j.contains(req)) line_error(line_no, std::string("missing field '") + req + "'");

  MultimodalInstance inst;
  if (!j["id"].is_string()) line_error(line_no, "id must be a string");
  inst.id = j["id"].get<std::string>();

  if (!j["words"].is_array() || j["words"].empty())
    line_error(line_no, "words must be a non-empty array");
  for (const auto& w : j["words"]) {
    if (!w.is_string()) line_error(line_no, "words must be strings");
    inst.words.push_back(w.get<std::string>());
  }

  inst.visual = feature_stream(j["visual"], line_no, "visual");
  inst.acoustic = feature_stream(j["acoustic"], line_no, "acoustic");

  if (inst.visual.size() != inst.words.size())
    line_error(line_no, std::to_string(inst.words.size()) + " words but " +
                            std::to_string(inst.visual.size()) + " visual vectors");
  if (inst.acoustic.size() != inst.words.size())
    line_error(line_no, std::to_string(inst.words.size()) + " words but " +
                            std::to_string(inst.acoustic.size()) + " acoustic vectors");

  inst.label = finite_number(j["label"], line_no, "label");
  if (inst.label < -3.0 || inst.label > 3.0)
    line_error(line_no, "label " + std::to_string(inst.label) + " outside [-3, +3]");

  if (j.contains("emotions")) {
    const auto& e = j["emotions"];
    if (!e.is_array() || e.size() != 6)
      line_error(line_no, "emotions must be an array of 6 numbers");
    std::array<double, 6> em{};
    for (std::size_t i = 0; i < 6; ++i) {
      em[i] = finite_number(e[i], line_no, "emotions");
      if (em[i] < 0.0 || em[i] > 3.0)
        line_error(line_no, "emotion value " + std::to_string(em[i]) + " outside [0, 3]");
    }
    inst.emotions = em;
  }

  const bool has_start = j.contains("start_time"), has_end = j.contains("end_time");
  if (has_start != has_end)
    line_error(line_no, "start_time and end_time must be given together");
  if (has_start) {
    inst.start_time = finite_number(j["start_time"], line_no, "start_time");
    inst.end_time = finite_number(j["end_time"], line_no, "end_time");
    if (*inst.start_time < 0.0 || *inst.end_time < 0.0)
      line_error(line_no, "timestamps must be nonnegative");
    if (*inst.end_time < *inst.start_time)
      line_error(line_no, "end_time precedes start_time");
  }
  return inst;
}

void check_dims(const MultimodalInstance& inst, std::size_t line_no,
                std::size_t& d_visual, std::size_t& d_acoustic) {
  for (const auto& v : inst.visual) {
    if (d_visual == 0) d_visual = v.size();
    if (v.size() != d_visual)
      line_error(line_no, "visual dim " + std::to_string(v.size()) +
                              " inconsistent with corpus dim " + std::to_string(d_visual));
  }
  for (const auto& a : inst.acoustic) {
    if (d_acoustic == 0) d_acoustic = a.size();
    if (a.size() != d_acoustic)
      line_error(line_no, "acoustic dim " + std::to_string(a.size()) +
                              " inconsistent with corpus dim " + std::to_string(d_acoustic));
  }
}

}  // namespace

void Vocabulary::add(const std::string& token) {
  if (token_to_id_.emplace(token, id_to_token_.size()).second)
    id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<MultimodalInstance>& instances) {
  Vocabulary v;
  for (const auto& inst : instances)
    for (const auto& w : inst.words) v.add(w);
  return v;
}

Corpus parse_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      line_error(line_no, std::string("malformed JSON: ") + e.what());
    }
    MultimodalInstance inst = instance_from_json(j, line_no);
    check_dims(inst, line_no, corpus.d_visual, corpus.d_acoustic);
    corpus.instances.push_back(std::move(inst));
  }
  if (corpus.instances.empty()) throw DataError(path.string() + ": no instances");
  corpus.vocab = Vocabulary::build(corpus.instances);
  return corpus;
}

std::string instance_to_json_line(const MultimodalInstance& inst) {
  json j;
  j["id"] = inst.id;
  j["words"] = inst.words;
  j["visual"] = inst.visual;
  j["acoustic"] = inst.acoustic;
  j["label"] = inst.label;
  if (inst.emotions) j["emotions"] = *inst.emotions;
  if (inst.start_time) {
    j["start_time"] = *inst.start_time;
    j["end_time"] = *inst.end_time;
  }
  return j.dump();
}

void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& inst : corpus.instances) out << instance_to_json_line(inst) << "\n";
}

void GenConfig::validate() const {
  if (l_min < 1 || l_max < l_min)
    throw ConfigError("gen: need 1 <= l_min <= l_max");
  if (d_visual < 1 || d_acoustic < 1)
    throw ConfigError("gen: feature dims must be >= 1");
  if (w_text < 0.0 || w_visual < 0.0 || w_acoustic < 0.0)
    throw ConfigError("gen: modality weights must be nonnegative");
  const double s = w_text + w_visual + w_acoustic;
  if (std::fabs(s - 1.0) > 1e-9)
    throw ConfigError("gen: modality weights must sum to 1, got " + std::to_string(s));
  if (sigma < 0.0) throw ConfigError("gen: sigma must be nonnegative");
}

const std::vector<std::pair<std::string, double>>& sentiment_lexicon() {
  // 25 words on a 0.25 grid from -3 (strongly negative) to +3.
  static const std::vector<std::pair<std::string, double>> lex = {
      {"abysmal", -3.0},  {"horrible", -2.75}, {"terrible", -2.5}, {"awful", -2.25},
      {"dreadful", -2.0}, {"bad", -1.75},      {"poor", -1.5},     {"weak", -1.25},
      {"lacking", -1.0},  {"meh", -0.75},      {"dull", -0.5},     {"soso", -0.25},
      {"plain", 0.0},     {"okay", 0.25},      {"fine", 0.5},      {"decent", 0.75},
      {"nice", 1.0},      {"good", 1.25},      {"solid", 1.5},     {"great", 1.75},
      {"strong", 2.0},    {"super", 2.25},     {"excellent", 2.5}, {"amazing", 2.75},
      {"perfect", 3.0}};
  return lex;
}

namespace {

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> fillers = {
      "the", "a",  "it",    "this", "movie", "scene", "was", "is",
      "and", "so", "quite", "very", "um",    "oh",    "well", "really"};
  return fillers;
}

// Spread of the zero-sum decoys that hide part of the latent from any single
// modality. Sized so a 0.4-weight channel alone predicts the label's sign
// clearly worse than all channels jointly.
constexpr double kChannelJitter = 1.5;

std::size_t nearest_lexicon_index(double value) {
  const auto& lex = sentiment_lexicon();
  std::size_t best = 0;
  double best_dist = std::fabs(lex[0].second - value);
  for (std::size_t i = 1; i < lex.size(); ++i) {
    const double d = std::fabs(lex[i].second - value);
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

Corpus generate_synthetic(std::size_t n, std::uint64_t seed, const GenConfig& cfg) {
  if (n < 1) throw ConfigError("gen: n must be >= 1");
  cfg.validate();
  Rng rng(seed);
  const bool text_on = cfg.w_text > 0.0;
  const bool vis_on = cfg.w_visual > 0.0;
  const bool aco_on = cfg.w_acoustic > 0.0;
  const double weights[3] = {cfg.w_text, cfg.w_visual, cfg.w_acoustic};
  const bool active[3] = {text_on, vis_on, aco_on};
  std::size_t n_active = 0;
  for (bool a : active)
    if (a) ++n_active;

  Corpus corpus;
  corpus.d_visual = cfg.d_visual;
  corpus.d_acoustic = cfg.d_acoustic;
  corpus.instances.reserve(n);

  for (std::size_t idx = 0; idx < n; ++idx) {
    double contrib[3];
    std::size_t lex_index = 0;
    double label = 0.0;
    while (true) {
      const double u = rng.uniform(-3.0, 3.0);
      double decoy[3] = {0.0, 0.0, 0.0};
      double decoy_mean = 0.0;
      for (std::size_t k = 0; k < 3; ++k)
        if (active[k]) {
          decoy[k] = rng.uniform(-kChannelJitter, kChannelJitter);
          decoy_mean += decoy[k];
        }
      decoy_mean /= static_cast<double>(n_active);
      label = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        contrib[k] = active[k] ? weights[k] * u + (decoy[k] - decoy_mean) : 0.0;
        if (k == 0 && text_on) {
          lex_index = nearest_lexicon_index(std::clamp(contrib[0], -3.0, 3.0));
          contrib[0] = sentiment_lexicon()[lex_index].second;
        }
        label += contrib[k];
      }
      if (std::fabs(label) <= 3.0) break;
    }

    MultimodalInstance inst;
    inst.id = "syn-" + std::to_string(idx);
    inst.label = label;
    const std::size_t len = cfg.l_min + rng.below(cfg.l_max - cfg.l_min + 1);

    std::vector<std::size_t> positions(len);
    std::iota(positions.begin(), positions.end(), 0);
    rng.shuffle(positions);
    const std::size_t n_signal = text_on ? std::max<std::size_t>(1, len / 3) : 0;
    std::vector<bool> is_signal(len, false);
    for (std::size_t i = 0; i < n_signal; ++i) is_signal[positions[i]] = true;

    inst.words.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      if (is_signal[i])
        inst.words.push_back(sentiment_lexicon()[lex_index].first);
      else
        inst.words.push_back(filler_words()[rng.below(filler_words().size())]);
    }

    inst.visual.resize(len);
    inst.acoustic.resize(len);
    for (std::size_t i = 0; i < len; ++i) {
      inst.visual[i].resize(cfg.d_visual);
      for (std::size_t c = 0; c < cfg.d_visual; ++c)
        inst.visual[i][c] = (c == kSyntheticSignalChannel ? contrib[1] : 0.0) +
                            cfg.sigma * rng.normal();
      inst.acoustic[i].resize(cfg.d_acoustic);
      for (std::size_t c = 0; c < cfg.d_acoustic; ++c)
        inst.acoustic[i][c] = (c == kSyntheticSignalChannel ? contrib[2] : 0.0) +
                              cfg.sigma * rng.normal();
    }
    corpus.instances.push_back(std::move(inst));
  }
  corpus.vocab = Vocabulary::build(corpus.instances);
  return corpus;
}

void SplitSpec::validate() const {
  if (train <= 0.0 || val <= 0.0 || test <= 0.0)
    throw ConfigError("split: every fraction must be > 0");
  if (std::fabs(train + val + test - 1.0) > 1e-9)
    throw ConfigError("split: fractions must sum to 1");
}

Splits split(const Corpus& corpus, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = corpus.instances.size();
  if (n < 3) throw DataError("split: corpus must have at least 3 instances, got " +
                             std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(order);

  // Largest-remainder apportionment; every split keeps at least one instance.
  const double fracs[3] = {spec.train, spec.val, spec.test};
  std::size_t counts[3];
  double remainders[3];
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double quota = fracs[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(quota);
    remainders[k] = quota - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (remainders[k] > remainders[best]) best = k;
    ++counts[best];
    remainders[best] = -1.0;
    ++assigned;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    while (counts[k] == 0) {
      std::size_t biggest = 0;
      for (std::size_t j = 1; j < 3; ++j)
        if (counts[j] > counts[biggest]) biggest = j;
      --counts[biggest];
      ++counts[k];
    }
  }

  Splits out;
  Corpus* parts[3] = {&out.train, &out.val, &out.test};
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    parts[k]->d_visual = corpus.d_visual;
    parts[k]->d_acoustic = corpus.d_acoustic;
    for (std::size_t i = 0; i < counts[k]; ++i)
      parts[k]->instances.push_back(corpus.instances[order[cursor++]]);
  }
  out.train.vocab = Vocabulary::build(out.train.instances);
  out.val.vocab = out.train.vocab;
  out.test.vocab = out.train.vocab;
  return out;
}

}  // namespace magfuse
