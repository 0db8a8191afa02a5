#include "magfuse/runconfig.hpp"

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

namespace magfuse {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError("config: unknown key '" + where + it.key() + "'");
  }
}

template <class T>
void read_into(const json& obj, const char* key, T& target, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + where + key + "'");
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* env = std::getenv("MAGFUSE_SEED");
  if (!env || !*env) return std::nullopt;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(env, &pos);
    if (env[pos] != '\0') throw std::invalid_argument("trailing");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(std::string("MAGFUSE_SEED is not a valid unsigned integer: ") + env);
  }
}

}  // namespace

std::uint64_t resolve_seed(std::optional<std::uint64_t> cli_seed,
                           std::optional<std::uint64_t> file_seed) {
  if (cli_seed) return *cli_seed;
  if (file_seed) return *file_seed;
  if (auto env = env_seed()) return *env;
  return 42;
}

void apply_override(json& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like dotted.key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings pass through
  }

  json* cursor = &config;
  std::size_t begin = 0;
  while (true) {
    const std::size_t dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot - begin);
    if (key.empty()) throw ConfigError("override has an empty path segment: '" + path + "'");
    if (dot == std::string::npos) {
      (*cursor)[key] = value;
      return;
    }
    cursor = &(*cursor)[key];
    begin = dot + 1;
  }
}

RunSettings load_run_settings(const std::optional<std::filesystem::path>& config_file,
                              const std::vector<std::string>& overrides,
                              std::optional<std::uint64_t> cli_seed) {
  json cfg = json::object();
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw ConfigError("cannot open config file " + config_file->string());
    try {
      in >> cfg;
    } catch (const json::exception& e) {
      throw ConfigError("config file " + config_file->string() + ": " + e.what());
    }
    if (!cfg.is_object()) throw ConfigError("config file must hold a JSON object");
  }
  for (const auto& ov : overrides) apply_override(cfg, ov);

  reject_unknown_keys(cfg, {"model", "train", "split"}, "");
  const json model_j = cfg.value("model", json::object());
  const json train_j = cfg.value("train", json::object());
  const json split_j = cfg.value("split", json::object());
  reject_unknown_keys(model_j,
                      {"d_model", "n_heads", "n_layers", "d_ff", "max_seq_len", "variant",
                       "dropout_p", "emotion_head", "mag"},
                      "model.");
  reject_unknown_keys(train_j,
                      {"epochs", "learning_rate", "dropout_p", "batch_size", "seed",
                       "loss", "adam_beta1", "adam_beta2", "adam_eps"},
                      "train.");
  reject_unknown_keys(split_j, {"train", "val", "test", "seed"}, "split.");

  RunSettings s;

  read_into(train_j, "epochs", s.train.epochs, "train.");
  read_into(train_j, "learning_rate", s.train.learning_rate, "train.");
  read_into(train_j, "dropout_p", s.train.dropout_p, "train.");
  read_into(train_j, "batch_size", s.train.batch_size, "train.");
  read_into(train_j, "adam_beta1", s.train.adam_beta1, "train.");
  read_into(train_j, "adam_beta2", s.train.adam_beta2, "train.");
  read_into(train_j, "adam_eps", s.train.adam_eps, "train.");
  if (train_j.contains("loss")) {
    const std::string loss = train_j.at("loss").get<std::string>();
    if (loss == "mae") s.train.loss = LossKind::mae;
    else if (loss == "mse") s.train.loss = LossKind::mse;
    else throw ConfigError("config: train.loss must be 'mae' or 'mse', got '" + loss + "'");
  }
  std::optional<std::uint64_t> file_seed;
  if (train_j.contains("seed")) file_seed = train_j.at("seed").get<std::uint64_t>();
  s.train.seed = resolve_seed(cli_seed, file_seed);
  s.train.validate();

  read_into(model_j, "d_model", s.model.encoder.d_model, "model.");
  read_into(model_j, "n_heads", s.model.encoder.n_heads, "model.");
  read_into(model_j, "n_layers", s.model.encoder.n_layers, "model.");
  read_into(model_j, "d_ff", s.model.encoder.d_ff, "model.");
  read_into(model_j, "max_seq_len", s.model.encoder.max_seq_len, "model.");
  if (model_j.contains("variant")) {
    const std::string variant = model_j.at("variant").get<std::string>();
    if (variant == "absolute") s.model.encoder.variant = PositionEncoding::absolute;
    else if (variant == "relative_bias")
      s.model.encoder.variant = PositionEncoding::relative_bias;
    else
      throw ConfigError("config: model.variant must be 'absolute' or 'relative_bias'");
  }
  read_into(model_j, "emotion_head", s.model.emotion_head, "model.");
  // Model-level dropouts default to the train-time dropout when not given.
  s.model.encoder.dropout_p = s.train.dropout_p;
  read_into(model_j, "dropout_p", s.model.encoder.dropout_p, "model.");

  const json mag_j = model_j.value("mag", json::object());
  reject_unknown_keys(
      mag_j, {"enabled", "beta", "eps", "dropout_p", "apply_at_layers", "lexical_in_gate"},
      "model.mag.");
  read_into(mag_j, "enabled", s.model.mag_enabled, "model.mag.");
  read_into(mag_j, "beta", s.model.mag.beta, "model.mag.");
  read_into(mag_j, "eps", s.model.mag.eps, "model.mag.");
  s.model.mag.dropout_p = s.train.dropout_p;
  read_into(mag_j, "dropout_p", s.model.mag.dropout_p, "model.mag.");
  read_into(mag_j, "apply_at_layers", s.model.mag.apply_at_layers, "model.mag.");
  read_into(mag_j, "lexical_in_gate", s.model.mag.lexical_in_gate, "model.mag.");
  s.model.mag.d_model = s.model.encoder.d_model;

  read_into(split_j, "train", s.split.train, "split.");
  read_into(split_j, "val", s.split.val, "split.");
  read_into(split_j, "test", s.split.test, "split.");
  std::optional<std::uint64_t> split_seed;
  if (split_j.contains("seed")) split_seed = split_j.at("seed").get<std::uint64_t>();
  s.split.seed = split_seed.value_or(s.train.seed);
  s.split.validate();

  return s;
}

json run_settings_to_json(const RunSettings& s) {
  json j;
  json model = s.model.to_json();
  model.erase("vocab_size");  // data-derived
  model["mag"].erase("d_visual");
  model["mag"].erase("d_acoustic");
  j["model"] = model;
  json train;
  train["epochs"] = s.train.epochs;
  train["learning_rate"] = s.train.learning_rate;
  train["dropout_p"] = s.train.dropout_p;
  train["batch_size"] = s.train.batch_size;
  train["seed"] = s.train.seed;
  train["loss"] = s.train.loss == LossKind::mae ? "mae" : "mse";
  train["adam_beta1"] = s.train.adam_beta1;
  train["adam_beta2"] = s.train.adam_beta2;
  train["adam_eps"] = s.train.adam_eps;
  j["train"] = train;
  json split;
  split["train"] = s.split.train;
  split["val"] = s.split.val;
  split["test"] = s.split.test;
  split["seed"] = s.split.seed;
  j["split"] = split;
  return j;
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
  return std::string("fnv1a64:") + hex;
}

}  // namespace magfuse
