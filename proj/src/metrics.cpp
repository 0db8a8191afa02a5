#include "magfuse/metrics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace magfuse {

namespace {

void require_same_nonempty(const char* op, std::span<const double> a,
                           std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size())
    throw ShapeError(std::string(op) + ": length mismatch: " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  if (a.size() < min_len)
    throw DataError(std::string(op) + ": needs at least " + std::to_string(min_len) +
                    " pairs, got " + std::to_string(a.size()));
}

bool predicted_positive(double pred) { return pred >= 0.0; }  // 0 counts as positive

}  // namespace

double binary_accuracy(std::span<const double> preds, std::span<const double> labels) {
  require_same_nonempty("binary_accuracy", preds, labels, 1);
  std::size_t n_eval = 0, correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 0.0) continue;
    ++n_eval;
    if (predicted_positive(preds[i]) == (labels[i] > 0.0)) ++correct;
  }
  if (n_eval == 0)
    throw DataError("binary_accuracy: no instances left after excluding zero labels");
  return static_cast<double>(correct) / static_cast<double>(n_eval);
}

double f1_binary(std::span<const double> preds, std::span<const double> labels) {
  require_same_nonempty("f1_binary", preds, labels, 1);
  std::size_t n_eval = 0, tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 0.0) continue;
    ++n_eval;
    const bool pred_pos = predicted_positive(preds[i]);
    const bool label_pos = labels[i] > 0.0;
    if (pred_pos && label_pos) ++tp;
    else if (pred_pos && !label_pos) ++fp;
    else if (!pred_pos && label_pos) ++fn;
  }
  if (n_eval == 0)
    throw DataError("f1_binary: no instances left after excluding zero labels");
  const double denom = static_cast<double>(2 * tp + fp + fn);
  if (denom == 0.0) return 0.0;
  return 2.0 * static_cast<double>(tp) / denom;
}

double mae(std::span<const double> preds, std::span<const double> labels) {
  require_same_nonempty("mae", preds, labels, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) acc += std::fabs(preds[i] - labels[i]);
  return acc / static_cast<double>(preds.size());
}

double pearson(std::span<const double> preds, std::span<const double> labels) {
  require_same_nonempty("pearson", preds, labels, 2);
  const double n = static_cast<double>(preds.size());
  double mean_p = 0.0, mean_l = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    mean_p += preds[i];
    mean_l += labels[i];
  }
  mean_p /= n;
  mean_l /= n;
  double spp = 0.0, sll = 0.0, spl = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double dp = preds[i] - mean_p;
    const double dl = labels[i] - mean_l;
    spp += dp * dp;
    sll += dl * dl;
    spl += dp * dl;
  }
  if (spp == 0.0 || sll == 0.0)
    throw DataError("pearson: correlation undefined for a constant input vector");
  return spl / std::sqrt(spp * sll);
}

MetricsReport compute_metrics(std::span<const double> preds,
                              std::span<const double> labels) {
  MetricsReport r;
  r.accuracy = binary_accuracy(preds, labels);
  r.f1 = f1_binary(preds, labels);
  r.mae = mae(preds, labels);
  std::size_t zeros = 0;
  for (double l : labels)
    if (l == 0.0) ++zeros;
  r.n_excluded_zero_labels = zeros;
  r.n_evaluated = labels.size() - zeros;
  try {
    r.corr = pearson(preds, labels);
  } catch (const DataError&) {
    r.corr.reset();  // undefined on constant vectors; reported as absent
  }
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  j["f1"] = f1;
  j["mae"] = mae;
  if (corr) j["corr"] = *corr;
  j["n_evaluated"] = n_evaluated;
  j["n_excluded_zero_labels"] = n_excluded_zero_labels;
  if (emotion_mae) {
    nlohmann::json e;
    for (std::size_t i = 0; i < kEmotionNames.size(); ++i)
      e[kEmotionNames[i]] = (*emotion_mae)[i];
    j["emotion_mae"] = e;
  }
  return j.dump();
}

}  // namespace magfuse
