#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>

#include "magfuse/errors.hpp"

namespace magfuse {

// The evaluation columns reported for sentiment-intensity regression:
// sign-agreement accuracy and F1 (zero labels excluded), MAE and Pearson
// correlation over the raw intensities, plus optional per-emotion MAE.
struct MetricsReport {
  double accuracy = 0.0;
  double f1 = 0.0;
  double mae = 0.0;
  // Absent when the correlation is undefined (a constant vector); it is
  // never silently reported as 0.
  std::optional<double> corr;
  std::size_t n_evaluated = 0;
  std::size_t n_excluded_zero_labels = 0;
  std::optional<std::array<double, 6>> emotion_mae;

  std::string to_json() const;
};

inline constexpr std::array<const char*, 6> kEmotionNames = {
    "happiness", "sadness", "anger", "fear", "disgust", "surprise"};

// Sign-agreement accuracy. Instances with label == 0 are excluded; a
// prediction of exactly 0 counts as positive.
double binary_accuracy(std::span<const double> preds, std::span<const double> labels);

// F1 of the positive class (label > 0), same zero-label exclusion and tie
// rule as binary_accuracy. Returns 0 when 2TP + FP + FN == 0.
double f1_binary(std::span<const double> preds, std::span<const double> labels);

// Mean absolute error; no exclusions.
double mae(std::span<const double> preds, std::span<const double> labels);

// Sample Pearson correlation, two-pass form. A constant input vector makes
// the correlation undefined and raises DataError.
double pearson(std::span<const double> preds, std::span<const double> labels);

MetricsReport compute_metrics(std::span<const double> preds,
                              std::span<const double> labels);

}  // namespace magfuse
